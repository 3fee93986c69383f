// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

// pfmce: dataset generation, staged training, evaluation sweeps, reports.
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad configuration or usage,
// 3 missing or mismatched predecessor checkpoint, 4 training diverged.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "pfmce/cli/report.hpp"
#include "pfmce/cli/run_config.hpp"

namespace fs = std::filesystem;
using namespace pfmce;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kPredecessor = 3, kDiverged = 4 };

struct PredecessorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t env_threads() {
  if (const char* v = std::getenv("PFMCE_THREADS")) {
    try {
      const auto n = std::stoul(v);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError("PFMCE_THREADS", std::string("expected a positive integer, got '") + v + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config, "INI run config");
    app->add_option("--set", sets, "override one key, section.key=value (repeatable)");
    app->add_option("--seed", seed, "run seed (run.seed)");
  }

  RunConfig load() const {
    RunConfig rc;
    if (!config.empty()) rc.load_file(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(s, "expected section.key=value");
      rc.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) rc.seed = *seed;
    return rc;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

// CSV plus its JSON mirror next to it
void write_csv_pair(const fs::path& csv_path, const std::string& csv) {
  write_text(csv_path, csv);
  std::ostringstream js;
  write_json_mirror(js, csv);
  auto json_path = csv_path;
  write_text(json_path.replace_extension(".json"), js.str());
}

Tensor digest_tensor(const Digest& d) {
  Tensor t({d.size()});
  for (std::size_t i = 0; i < d.size(); ++i) t[i] = d[i];
  return t;
}

// Loads weights into a model built from rc for the given grid; returns the tag.
Stage load_model(PfmCe& model, const fs::path& path) {
  if (!fs::exists(path)) throw PredecessorError("weights not found: " + path.string());
  return restore(model, load_weights(path));
}

int cmd_gen(const Common& common, const std::string& out, std::optional<std::size_t> slots,
            std::optional<std::size_t> trajectories) {
  RunConfig rc = common.load();
  if (slots) rc.channel.slots = *slots;
  if (trajectories) rc.channel.trajectories = *trajectories;
  rc.channel.validate();
  const std::size_t threads = env_threads();
  const auto bank = calibrate_covariances(rc.channel, rc.seed, threads);
  const Dataset ds = build_dataset(rc.channel, rc.seed, bank, threads);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_dataset(out, ds);
  std::cout << "records " << ds.records.size() << "\ndigest " << to_hex(ds.header.digest) << '\n';
  return kOk;
}

int cmd_train(const Common& common, const std::string& data, const std::string& stage_name_arg,
              const std::string& init, const std::string& out, std::string loss_csv,
              std::optional<std::size_t> epochs) {
  RunConfig rc = common.load();
  if (epochs) rc.epochs = *epochs;
  const Stage stage = [&] {
    try {
      return parse_stage(stage_name_arg);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("--stage", e.what());
    }
  }();
  const Dataset ds = load_dataset(data);
  const auto& h = ds.header;
  std::mt19937_64 rng(mix_seed(rc.seed, 0x1417));
  PfmCe model(rc.model_for(h.n_t, h.k, h.t), rng);
  if (const auto pre = predecessor(stage)) {
    if (init.empty())
      throw PredecessorError(stage_name(stage) + " needs a " + stage_name(*pre) + " checkpoint (--init)");
    const Stage got = load_model(model, init);
    if (got != *pre)
      throw PredecessorError(init + " holds a checkpoint of stage " + stage_name(got) + "; " + stage_name(stage) + " needs " +
                             stage_name(*pre));
  } else if (!init.empty()) {
    load_model(model, init);
  }
  TrainConfig tc = rc.train_config(stage);
  tc.threads = env_threads();
  tc.records_per_trajectory = rc.channel.records_per_trajectory();
  if (h.count % tc.records_per_trajectory != 0)
    throw ConfigError("channel.slots", "dataset record count is not a multiple of slots - 1");
  tc.checkpoint_path = out;
  const LossReport rep = train_stage(model, ds, tc);
  auto ck = checkpoint(model, stage);
  ck.emplace_back("meta/digest", digest_tensor(rc.digest()));
  save_weights(out, ck);
  if (loss_csv.empty()) loss_csv = out + ".loss.csv";
  std::ostringstream csv;
  csv << "# digest=" << to_hex(rc.digest()) << '\n' << "# dataset=" << to_hex(h.digest) << '\n';
  rep.write_csv(csv);
  write_csv_pair(loss_csv, csv.str());
  const auto& last = rep.epochs.empty() ? EpochLoss{} : rep.epochs.back();
  std::cout << "stage " << stage_name(stage) << "\nepochs " << rep.epochs.size() << "\nval_nmse_db "
            << (rep.epochs.empty() ? rep.initial_val_nmse_db : last.val_nmse_db) << '\n';
  return kOk;
}

int cmd_eval(const Common& common, std::vector<std::string> methods, const std::string& weights,
             const std::string& vit_weights, const std::string& out, std::optional<std::size_t> trajectories) {
  RunConfig rc = common.load();
  if (!methods.empty()) {
    std::string joined;
    for (const auto& m : methods) joined += (joined.empty() ? "" : ",") + m;
    rc.set("eval.methods", joined);
  }
  if (trajectories) rc.eval.trajectories = *trajectories;
  EvalConfig ec = rc.eval_config();
  ec.threads = env_threads();
  const auto mc = rc.model_for(rc.channel.n_t, rc.channel.k, rc.channel.t);
  std::mt19937_64 rng(0);
  std::optional<PfmCe> fused, vit;
  ModelSet models;
  for (auto m : rc.methods) {
    if (m == Method::PfmCe && !fused) {
      if (weights.empty()) throw PredecessorError("pfm-ce needs --weights");
      fused.emplace(mc, rng);
      load_model(*fused, weights);
      models[m] = &*fused;
    }
    if (m == Method::Vit && !vit) {
      const auto& path = vit_weights.empty() ? weights : vit_weights;
      if (path.empty()) throw PredecessorError("vit needs --vit-weights");
      vit.emplace(mc, rng);
      load_model(*vit, path);
      models[m] = &*vit;
    }
  }
  const auto bank = calibrate_covariances(rc.channel, rc.seed, ec.threads);
  const auto rows = run_sweep(ec, rc.methods, models, bank);
  std::ostringstream csv;
  write_sweep_csv(csv, rows, to_hex(rc.digest()));
  write_csv_pair(out, csv.str());
  std::cout << "rows " << rows.size() << "\ndigest " << to_hex(rc.digest()) << '\n';
  return kOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
  std::vector<SweepRow> rows;
  std::set<std::string> digests;
  for (const auto& in : inputs) {
    std::ifstream is(in);
    if (!is) throw std::runtime_error("cannot open " + in);
    std::string first;
    std::getline(is, first);
    if (first.rfind("# digest=", 0) == 0) digests.insert(first.substr(9));
    is.seekg(0);
    auto part = read_sweep_csv(is);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::string digest;
  for (const auto& d : digests) digest += (digest.empty() ? "" : ";") + d;
  for (const auto& table : build_report(rows)) {
    std::ostringstream csv;
    if (!digest.empty()) csv << "# digest=" << digest << '\n';
    csv << table.csv;
    write_csv_pair(fs::path(out_dir) / (table.name + ".csv"), csv.str());
    std::cout << table.name << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel estimation with a predictive foundation model and a pilot network"};
  app.require_subcommand(1);
  bool show_keys = false;
  app.add_flag("--keys", show_keys, "print every config key with its default and exit");

  Common gen_c, train_c, eval_c;
  std::string gen_out, data, stage, init, train_out, loss_csv, weights, vit_weights, eval_out, report_out = ".";
  std::optional<std::size_t> slots, trajectories, epochs, eval_traj;
  std::vector<std::string> methods, inputs;

  auto* gen = app.add_subcommand("gen", "generate a dataset file");
  gen_c.add(gen);
  gen->add_option("-o,--out", gen_out, "dataset path")->required();
  gen->add_option("--slots", slots, "slots per trajectory (channel.slots)");
  gen->add_option("--trajectories", trajectories, "trajectories (channel.trajectories)");

  auto* train = app.add_subcommand("train", "run one training stage");
  train_c.add(train);
  train->add_option("-d,--data", data, "dataset path")->required();
  train->add_option("-s,--stage", stage, "adapt, phase1, phase2 or vit")->required();
  train->add_option("-i,--init", init, "incoming checkpoint (required for phase1 and phase2)");
  train->add_option("-o,--out", train_out, "output checkpoint")->required();
  train->add_option("--loss-csv", loss_csv, "loss CSV path (default <out>.loss.csv)");
  train->add_option("--epochs", epochs, "epochs (train.epochs)");

  auto* ev = app.add_subcommand("eval", "evaluation sweep");
  eval_c.add(ev);
  ev->add_option("-m,--methods", methods, "linear, lmmse, vit, pfm-ce (eval.methods)")->delimiter(',');
  ev->add_option("-w,--weights", weights, "pfm-ce checkpoint");
  ev->add_option("--vit-weights", vit_weights, "standalone pilot-net checkpoint");
  ev->add_option("-o,--out", eval_out, "CSV path; the JSON mirror is written next to it")->required();
  ev->add_option("--trajectories", eval_traj, "trajectories per grid point (eval.trajectories)");

  auto* rep = app.add_subcommand("report", "aggregate sweep CSVs into per-figure tables");
  rep->add_option("inputs", inputs, "sweep CSV files")->required();
  rep->add_option("-o,--out", report_out, "output directory");

  if (argc == 2 && std::string(argv[1]) == "--keys") {
    std::cout << RunConfig::key_reference();
    return kOk;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  try {
    if (*gen) return cmd_gen(gen_c, gen_out, slots, trajectories);
    if (*train) return cmd_train(train_c, data, stage, init, train_out, loss_csv, epochs);
    if (*ev) return cmd_eval(eval_c, methods, weights, vit_weights, eval_out, eval_traj);
    if (*rep) return cmd_report(inputs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const PredecessorError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPredecessor;
  } catch (const TrainingDiverged& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
