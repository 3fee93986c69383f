// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pfmce/channel/dataset.hpp"
#include "pfmce/cli/report.hpp"
#include "pfmce/cli/run_config.hpp"
#include "pfmce/core/weights.hpp"

namespace fs = std::filesystem;
using namespace pfmce;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the tool with stderr folded into stdout.
Outcome tool(const std::string& args) {
  const std::string cmd = std::string(PFMCE_BIN) + " " + args + " 2>&1";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pfmce_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "run.ini") << "seed = 5\n"
                                       "[channel]\nn_t = 1\nk = 12\nslots = 4\ntrajectories = 6\n"
                                       "calibration_samples = 20\n"
                                       "[pfm]\nd = 16\nheads = 2\n"
                                       "[vit]\nlayers = 1\nheads = 2\nd_m = 8\nffn = 16\nchannels = 4\ncond_hidden = 4\n"
                                       "[train]\nepochs = 3\nbatch = 4\nval_fraction = 0.2\n"
                                       "[eval]\ntrajectories = 2\nsnrs_db = 15\nspeeds_kmh = 90\npatterns = 2P\n"
                                       "profiles = A30\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string cfg() const { return "-c " + path("run.ini"); }
  static std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST(RunConfig, UnknownKeyNamesTheKey) {
  RunConfig rc;
  try {
    rc.set("pfm.depth", "3");
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "pfm.depth");
  }
  std::istringstream ini("[train]\nepoch = 3\n");
  try {
    rc.load(ini);
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "train.epoch");
  }
}

TEST(RunConfig, BadValueNamesTheKey) {
  RunConfig rc;
  try {
    rc.set("train.batch", "many");
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "train.batch");
  }
}

TEST(RunConfig, IniAndOverrides) {
  RunConfig rc;
  std::istringstream ini("# comment\nseed = 9\n[channel]\nk = 48\nsnrs_db = 5, 25\n[train]\nphase2_lr = 3e-4\n");
  rc.load(ini);
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.channel.k, 48u);
  EXPECT_EQ(rc.channel.snrs_db, (std::vector<Real>{5, 25}));
  EXPECT_DOUBLE_EQ(rc.phase2.learning_rate, 3e-4);
  rc.set("channel.k", "24");
  EXPECT_EQ(rc.channel.k, 24u);
  EXPECT_EQ(rc.train_config(Stage::Phase2).learning_rate, 3e-4);
}

TEST(RunConfig, DigestTracksEffectiveValues) {
  RunConfig a, b;
  EXPECT_EQ(a.digest(), b.digest());
  b.set("train.epochs", "20");  // default value
  EXPECT_EQ(a.digest(), b.digest());
  b.set("train.epochs", "21");
  EXPECT_NE(a.digest(), b.digest());
  std::istringstream ini(a.canonical());
  RunConfig c;
  // canonical() is "section.key=value"; feed it back through set().
  std::string line;
  while (std::getline(ini, line)) {
    const auto eq = line.find('=');
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  EXPECT_EQ(c.digest(), a.digest());
}

TEST(RunConfig, KeyReferenceCoversEverySettableKey) {
  RunConfig rc;
  const std::string ref = RunConfig::key_reference();
  std::istringstream canon(rc.canonical());
  std::string line;
  std::size_t n = 0;
  while (std::getline(canon, line)) {
    const std::string key = line.substr(0, line.find('='));
    const std::string leaf = key.substr(key.find('.') + 1);
    EXPECT_NE(ref.find(leaf + " ="), std::string::npos) << key;
    ++n;
  }
  EXPECT_GT(n, 40u);
}

TEST(SweepCsv, HeaderPrecisionAndRoundTrip) {
  std::vector<SweepRow> rows{{"lmmse", 15, 90, "2P", "A30", 0, -13.123456789, 40},
                             {"lmmse", 15, 90, "2P", "A30", 1, -12.5, 20}};
  std::ostringstream os;
  write_sweep_csv(os, rows, "abc");
  std::istringstream is(os.str());
  std::string l0, l1, l2;
  std::getline(is, l0);
  std::getline(is, l1);
  std::getline(is, l2);
  EXPECT_EQ(l0, "# digest=abc");
  EXPECT_EQ(l1, "method,snr_db,speed_kmh,pattern,profile,slot,nmse_db,n");
  EXPECT_EQ(l2, "lmmse,15,90,2P,A30,0,-13.1235,40");
  std::istringstream back(os.str());
  const auto rr = read_sweep_csv(back);
  ASSERT_EQ(rr.size(), 2u);
  EXPECT_NEAR(rr[0].nmse_db, -13.1235, 1e-12);
  EXPECT_EQ(rr[1].slot, 1u);
}

TEST(SweepCsv, JsonMirrorMatchesCsv) {
  std::vector<SweepRow> rows{{"vit", 5, 30, "4P", "B100", 2, -7.25, 12}};
  std::ostringstream js;
  write_sweep_json(js, rows, "abc");
  const auto j = nlohmann::json::parse(js.str());
  EXPECT_EQ(j["digest"], "abc");
  ASSERT_EQ(j["columns"].size(), 8u);
  EXPECT_EQ(j["columns"][6], "nmse_db");
  ASSERT_EQ(j["rows"].size(), 1u);
  const auto& row = j["rows"][0];
  EXPECT_EQ(row["method"], "vit");
  EXPECT_EQ(row["pattern"], "4P");
  EXPECT_DOUBLE_EQ(row["nmse_db"].get<double>(), -7.25);
  EXPECT_EQ(row["n"].get<std::size_t>(), 12u);
  EXPECT_EQ(row["slot"].get<std::size_t>(), 2u);
}

TEST(SweepCsv, PooledNmseWeightsByCount) {
  // 10 dB at n=1 and 0 dB at n=3 pool to 10 log10((10 + 3) / 4).
  std::vector<SweepRow> rows{{"lmmse", 15, 90, "2P", "A30", 0, 10, 1}, {"lmmse", 15, 90, "2P", "B100", 0, 0, 3}};
  EXPECT_NEAR(pooled_nmse_db(rows, "lmmse", 15, 90, "2P"), 10 * std::log10(13.0 / 4), 1e-12);
  EXPECT_THROW(pooled_nmse_db(rows, "vit", 15, 90, "2P"), std::exception);
}

TEST(Report, PivotsMethodsIntoColumns) {
  std::vector<SweepRow> rows{{"lmmse", 15, 90, "2P", "A30", 0, -10, 4},
                             {"vit", 15, 90, "2P", "A30", 0, -12, 4},
                             {"lmmse", 15, 90, "2P", "A30", 0, -10, 4}};
  const auto tables = build_report(rows);
  ASSERT_EQ(tables.size(), 3u);
  EXPECT_EQ(tables[0].name, "nmse_vs_snr");
  EXPECT_NE(tables[0].csv.find("speed_kmh,pattern,snr_db,lmmse,vit"), std::string::npos);
  EXPECT_NE(tables[0].csv.find("90,2P,15,-10,-12"), std::string::npos);
  rows.push_back({"vit", 15, 90, "2P", "A30", 0, -11, 4});
  EXPECT_THROW(build_report(rows), std::invalid_argument);
}

TEST_F(Scratch, UnknownKeyExitsTwoAndNamesIt) {
  const Outcome r = tool("gen " + cfg() + " -o " + path("d.chds") + " --set pfm.depth=2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("pfm.depth"), std::string::npos) << r.out;
  std::ofstream(path("bad.ini")) << "[eval]\nsnr = 5\n";
  const Outcome f = tool("eval -c " + path("bad.ini") + " -o " + path("e.csv"));
  EXPECT_EQ(f.code, 2);
  EXPECT_NE(f.out.find("eval.snr"), std::string::npos) << f.out;
}

TEST_F(Scratch, GenRecordCountAndDeterminism) {
  const Outcome a = tool("gen " + cfg() + " -o " + path("a.chds") + " --slots 10 --trajectories 100");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("records 900"), std::string::npos) << a.out;
  EXPECT_EQ(load_dataset(path("a.chds")).records.size(), 900u);
  const Outcome b = tool("gen " + cfg() + " -o " + path("b.chds") + " --slots 10 --trajectories 100");
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(path("a.chds")), slurp(path("b.chds")));
  EXPECT_EQ(slurp(path("a.chds")).rfind("CHDS1\n", 0), 0u);
}

TEST_F(Scratch, MissingPredecessorExitsThree) {
  ASSERT_EQ(tool("gen " + cfg() + " -o " + path("d.chds")).code, 0);
  const Outcome none = tool("train " + cfg() + " -d " + path("d.chds") + " -s phase1 -o " + path("p1.pfmw"));
  EXPECT_EQ(none.code, 3) << none.out;
  const Outcome gone = tool("train " + cfg() + " -d " + path("d.chds") + " -s phase2 -i " + path("nope.pfmw") + " -o " +
                         path("p2.pfmw"));
  EXPECT_EQ(gone.code, 3) << gone.out;
  ASSERT_EQ(tool("train " + cfg() + " -d " + path("d.chds") + " -s adapt -o " + path("a.pfmw")).code, 0);
  const Outcome wrong = tool("train " + cfg() + " -d " + path("d.chds") + " -s phase2 -i " + path("a.pfmw") + " -o " +
                          path("p2.pfmw"));
  EXPECT_EQ(wrong.code, 3) << wrong.out;
  EXPECT_FALSE(fs::exists(path("p2.pfmw")));
}

TEST_F(Scratch, PipelineOutputsCarryTheDigest) {
  ASSERT_EQ(tool("gen " + cfg() + " -o " + path("d.chds")).code, 0);
  const std::string d = " -d " + path("d.chds");
  Outcome r = tool("train " + cfg() + d + " -s adapt -o " + path("a.pfmw"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = tool("train " + cfg() + d + " -s phase1 -i " + path("a.pfmw") + " -o " + path("p1.pfmw"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = tool("train " + cfg() + d + " -s phase2 -i " + path("p1.pfmw") + " -o " + path("p2.pfmw") + " --epochs 2");
  ASSERT_EQ(r.code, 0) << r.out;
  r = tool("train " + cfg() + d + " -s vit -o " + path("v.pfmw"));
  ASSERT_EQ(r.code, 0) << r.out;

  RunConfig rc;
  rc.load_file(path("run.ini"));
  const std::string hex = to_hex(rc.digest());
  rc.set("train.epochs", "2");  // --epochs is part of the effective config
  const std::string hex2 = to_hex(rc.digest());
  EXPECT_NE(hex, hex2);

  // Loss CSV: one row per epoch, digest line, JSON mirror.
  std::istringstream loss(slurp(path("p2.pfmw") + ".loss.csv"));
  std::string line;
  std::size_t rows = 0;
  bool has_digest = false;
  while (std::getline(loss, line)) {
    if (line.rfind("# digest=" + hex2, 0) == 0) has_digest = true;
    if (!line.empty() && line[0] != '#') ++rows;
  }
  EXPECT_TRUE(has_digest);
  EXPECT_EQ(rows, 1u + 2u);  // header + epochs
  const auto lj = nlohmann::json::parse(slurp(path("p2.pfmw") + ".loss.json"));
  EXPECT_EQ(lj["digest"], hex2);
  EXPECT_EQ(lj["rows"].size(), 2u);

  const NamedTensors w = load_weights(path("p2.pfmw"));
  const auto it = std::find_if(w.begin(), w.end(), [](const auto& e) { return e.first == "meta/digest"; });
  ASSERT_NE(it, w.end());
  const Tensor& md = it->second;
  Digest got{};
  for (std::size_t i = 0; i < got.size(); ++i) got[i] = static_cast<std::uint8_t>(md[i]);
  EXPECT_EQ(to_hex(got), hex2);

  r = tool("eval " + cfg() + " -m lmmse,vit,pfm-ce -w " + path("p2.pfmw") + " --vit-weights " + path("v.pfmw") +
            " -o " + path("e.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(path("e.csv"));
  EXPECT_EQ(csv.rfind("# digest=" + hex + "\nmethod,snr_db,speed_kmh,pattern,profile,slot,nmse_db,n\n", 0), 0u);
  std::istringstream cs(csv);
  const auto sweep = read_sweep_csv(cs);
  EXPECT_EQ(sweep.size(), 3u * (1u + 4u));  // methods x (pooled + slots)
  const auto ej = nlohmann::json::parse(slurp(path("e.json")));
  EXPECT_EQ(ej["digest"], hex);
  EXPECT_EQ(ej["rows"].size(), sweep.size());

  r = tool("report " + path("e.csv") + " -o " + path("rep"));
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* t : {"nmse_vs_snr", "nmse_vs_slot", "nmse_by_profile"}) {
    EXPECT_TRUE(fs::exists(path("rep/") + t + ".csv")) << t;
    EXPECT_TRUE(fs::exists(path("rep/") + t + ".json")) << t;
    EXPECT_NE(slurp(path("rep/") + t + ".csv").find(hex), std::string::npos) << t;
  }
}

TEST_F(Scratch, ThreadCountDoesNotChangeResults) {
  ASSERT_EQ(tool("gen " + cfg() + " -o " + path("d1.chds")).code, 0);
  ASSERT_EQ(tool("train " + cfg() + " -d " + path("d1.chds") + " -s adapt -o " + path("a1.pfmw")).code, 0);
  ASSERT_EQ(setenv("PFMCE_THREADS", "3", 1), 0);
  const Outcome g = tool("gen " + cfg() + " -o " + path("d3.chds"));
  const Outcome t = tool("train " + cfg() + " -d " + path("d3.chds") + " -s adapt -o " + path("a3.pfmw"));
  unsetenv("PFMCE_THREADS");
  ASSERT_EQ(g.code, 0);
  ASSERT_EQ(t.code, 0);
  EXPECT_EQ(slurp(path("d1.chds")), slurp(path("d3.chds")));
  EXPECT_EQ(slurp(path("a1.pfmw")), slurp(path("a3.pfmw")));
}
