// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace pfmce {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

Real to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  Real x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
  if (pos != v.size() || !std::isfinite(x)) throw ConfigError(key, "expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

template <class T, class Parse>
std::vector<T> to_list(const std::string& key, const std::string& v, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    try {
      out.push_back(parse(item));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key, e.what());
    }
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

std::string num(Real v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <class T, class Name>
std::string join(const std::vector<T>& v, Name name) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + name(v[i]);
  return s;
}

struct Key {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PFMCE_SIZE(section, key, field, help)                                                              \
  Key {                                                                                                    \
    section "." key, help, [](RunConfig& c, const std::string& k, const std::string& v) { field = to_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(field); }                                          \
  }
#define PFMCE_REAL(section, key, field, help)                                                              \
  Key {                                                                                                    \
    section "." key, help, [](RunConfig& c, const std::string& k, const std::string& v) { field = to_real(k, v); }, \
        [](const RunConfig& c) { return num(field); }                                                      \
  }

Real parse_real_item(const std::string& s) { return to_real("list", s); }
std::string real_name(Real v) { return num(v); }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      PFMCE_SIZE("run", "seed", c.seed, "seed for data generation, initialization and training"),
      PFMCE_SIZE("channel", "n_t", c.channel.n_t, "transmit antennas"),
      PFMCE_SIZE("channel", "k", c.channel.k, "subcarriers"),
      PFMCE_SIZE("channel", "t", c.channel.t, "OFDM symbols per slot"),
      PFMCE_SIZE("channel", "slots", c.channel.slots, "slots per trajectory"),
      PFMCE_SIZE("channel", "trajectories", c.channel.trajectories, "trajectories in a generated dataset"),
      {"channel.profiles", "delay profiles (A30, B100, C300, D-LOS)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channel.profiles = to_list<ProfileId>(k, v, parse_profile);
       },
       [](const RunConfig& c) { return join(c.channel.profiles, profile_name); }},
      {"channel.speeds_kmh", "UE speeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channel.speeds_kmh = to_list<Real>(k, v, parse_real_item);
       },
       [](const RunConfig& c) { return join(c.channel.speeds_kmh, real_name); }},
      {"channel.snrs_db", "per-RE SNRs",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channel.snrs_db = to_list<Real>(k, v, parse_real_item);
       },
       [](const RunConfig& c) { return join(c.channel.snrs_db, real_name); }},
      {"channel.correlations", "spatial correlation levels (Low, Medium, Medium-A, High)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channel.correlations = to_list<std::string>(k, v, [&](const std::string& s) {
           SpatialCorrelation::make(s, 1);
           return s;
         });
       },
       [](const RunConfig& c) { return join(c.channel.correlations, [](const std::string& s) { return s; }); }},
      {"channel.scs_khz", "subcarrier spacings",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channel.scs_khz = to_list<Real>(k, v, parse_real_item);
       },
       [](const RunConfig& c) { return join(c.channel.scs_khz, real_name); }},
      PFMCE_REAL("channel", "carrier_ghz", c.channel.carrier_ghz, "carrier frequency"),
      PFMCE_SIZE("channel", "calibration_samples", c.channel.calibration_samples,
                 "realizations per covariance bucket"),
      {"pilot.patterns", "pilot patterns (2P, 4P)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channel.patterns = to_list<PatternId>(k, v, parse_pattern);
       },
       [](const RunConfig& c) { return join(c.channel.patterns, pattern_name); }},
      PFMCE_SIZE("pilot", "seed", c.channel.pilot_seed, "seed of the QPSK pilot values"),
      PFMCE_SIZE("pfm", "layers", c.model.pfm.layers, "transformer layers"),
      PFMCE_SIZE("pfm", "d", c.model.pfm.d, "latent width"),
      PFMCE_SIZE("pfm", "heads", c.model.pfm.heads, "attention heads"),
      PFMCE_SIZE("pfm", "patch", c.model.pfm.patch, "patch length"),
      PFMCE_SIZE("pfm", "ffn", c.model.pfm.ffn, "FFN width, 0 = 4 d"),
      {"pfm.fusion_denormalize", "rescale the fusion output with the history statistics",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.fusion_denormalize = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.model.fusion_denormalize ? "true" : "false"); }},
      PFMCE_SIZE("vit", "layers", c.model.vit.layers, "encoder layers"),
      PFMCE_SIZE("vit", "heads", c.model.vit.heads, "attention heads"),
      PFMCE_SIZE("vit", "d_m", c.model.vit.d_m, "token width"),
      PFMCE_SIZE("vit", "ffn", c.model.vit.ffn, "enhanced FFN width"),
      PFMCE_SIZE("vit", "r_t", c.model.vit.r_t, "despreading factor in time"),
      PFMCE_SIZE("vit", "r_f", c.model.vit.r_f, "despreading factor in frequency"),
      PFMCE_SIZE("vit", "channels", c.model.vit.channels, "decoder channels"),
      PFMCE_SIZE("vit", "cond_hidden", c.model.vit.cond_hidden, "AdaLN conditioning hidden width"),
      {"vit.norm", "FFN normalization (ada, ln, none)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.vit.norm = parse_norm_mode(v);
         } catch (const std::exception& e) {
           throw ConfigError(k, e.what());
         }
       },
       [](const RunConfig& c) { return norm_mode_name(c.model.vit.norm); }},
      {"vit.coarse_skip", "networks output a correction added to the coarse estimate",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.vit.coarse_skip = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.model.vit.coarse_skip ? "true" : "false"); }},
      PFMCE_SIZE("train", "epochs", c.epochs, "epochs per stage"),
      PFMCE_SIZE("train", "batch", c.batch, "records per step"),
      PFMCE_REAL("train", "val_fraction", c.val_fraction, "share of trajectories held out"),
      PFMCE_SIZE("train", "checkpoint_every", c.checkpoint_every, "checkpoint period in epochs, 0 = end only"),
      PFMCE_REAL("train", "adapt_lr", c.adapt.learning_rate, "adapt learning rate"),
      PFMCE_REAL("train", "adapt_wd", c.adapt.weight_decay, "adapt weight decay"),
      PFMCE_REAL("train", "phase1_lr", c.phase1.learning_rate, "phase-1 learning rate"),
      PFMCE_REAL("train", "phase1_wd", c.phase1.weight_decay, "phase-1 weight decay"),
      PFMCE_REAL("train", "phase2_lr", c.phase2.learning_rate, "phase-2 learning rate"),
      PFMCE_REAL("train", "phase2_wd", c.phase2.weight_decay, "phase-2 weight decay"),
      PFMCE_REAL("train", "vit_lr", c.vit.learning_rate, "standalone pilot-net learning rate"),
      PFMCE_REAL("train", "vit_wd", c.vit.weight_decay, "standalone pilot-net weight decay"),
      PFMCE_SIZE("eval", "trajectories", c.eval.trajectories, "fresh trajectories per grid point"),
      PFMCE_SIZE("eval", "seed", c.eval.seed, "seed of the evaluation trajectories"),
      {"eval.profiles", "evaluated delay profiles",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eval.channel.profiles = to_list<ProfileId>(k, v, parse_profile);
       },
       [](const RunConfig& c) { return join(c.eval.channel.profiles, profile_name); }},
      {"eval.speeds_kmh", "evaluated speeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eval.channel.speeds_kmh = to_list<Real>(k, v, parse_real_item);
       },
       [](const RunConfig& c) { return join(c.eval.channel.speeds_kmh, real_name); }},
      {"eval.snrs_db", "evaluated SNRs",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eval.channel.snrs_db = to_list<Real>(k, v, parse_real_item);
       },
       [](const RunConfig& c) { return join(c.eval.channel.snrs_db, real_name); }},
      {"eval.patterns", "evaluated pilot patterns",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eval.channel.patterns = to_list<PatternId>(k, v, parse_pattern);
       },
       [](const RunConfig& c) { return join(c.eval.channel.patterns, pattern_name); }},
      {"eval.methods", "methods (linear, lmmse, vit, pfm-ce)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.methods = to_list<Method>(k, v, parse_method);
       },
       [](const RunConfig& c) { return join(c.methods, method_name); }},
      {"eval.interp", "coarse interpolation fed to the networks (linear, lmmse)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "linear")
           c.eval.interp = Interpolation::Linear;
         else if (v == "lmmse")
           c.eval.interp = Interpolation::Lmmse;
         else
           throw ConfigError(k, "expected linear or lmmse, got '" + v + "'");
       },
       [](const RunConfig& c) { return std::string(c.eval.interp == Interpolation::Linear ? "linear" : "lmmse"); }},
  };
  return k;
}

#undef PFMCE_SIZE
#undef PFMCE_REAL

}  // namespace

RunConfig::RunConfig() {
  model = ModelConfig::desk(channel.n_t, channel.k, channel.t);
  eval.channel = channel;
  eval.channel.profiles = {ProfileId::A30, ProfileId::B100, ProfileId::C300};
  eval.channel.speeds_kmh = {30, 90, 300};
  eval.channel.snrs_db = {5, 10, 15, 20, 25};
  eval.channel.patterns = {PatternId::P2, PatternId::P4};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (k.name == key) {
      k.set(*this, key, trim(value));
      return;
    }
  throw ConfigError(key, "unknown key");
}

void RunConfig::load(std::istream& is) {
  namespace pt = boost::property_tree;
  // '#' comments are accepted alongside the parser's native ';'
  std::stringstream text;
  for (std::string line; std::getline(is, line);) {
    const auto t = trim(line);
    text << (!t.empty() && t[0] == '#' ? "" : line) << '\n';
  }
  pt::ptree tree;
  try {
    pt::read_ini(text, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()), e.message());
  }
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set("run." + name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigError(name + "." + key, "nested keys are not supported");
      set(name + "." + key, leaf.data());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string(), "cannot open config file");
  load(is);
}

TrainConfig RunConfig::train_config(Stage s) const {
  TrainConfig t = TrainConfig::defaults(s);
  const StageSchedule& sch = s == Stage::Adapt ? adapt : s == Stage::Phase1 ? phase1 : s == Stage::Phase2 ? phase2 : vit;
  t.learning_rate = sch.learning_rate;
  t.weight_decay = sch.weight_decay;
  t.epochs = epochs;
  t.batch = batch;
  t.seed = seed;
  t.val_fraction = val_fraction;
  t.records_per_trajectory = channel.records_per_trajectory();
  t.checkpoint_every = checkpoint_every;
  return t;
}

ModelConfig RunConfig::model_for(std::size_t n_t, std::size_t k, std::size_t t) const {
  ModelConfig m = model;
  m.n_t = n_t;
  m.k = k;
  m.t = t;
  m.pfm.context = m.pfm.horizon = t;
  return m;
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig e = eval;
  const auto axes = eval.channel;
  e.channel = channel;
  e.channel.profiles = axes.profiles;
  e.channel.speeds_kmh = axes.speeds_kmh;
  e.channel.snrs_db = axes.snrs_db;
  e.channel.patterns = axes.patterns;
  return e;
}

std::string RunConfig::canonical() const {
  std::vector<std::string> lines;
  for (const auto& k : keys()) lines.push_back(k.name + "=" + k.get(*this));
  std::sort(lines.begin(), lines.end());
  std::string s;
  for (const auto& l : lines) s += l + '\n';
  return s;
}

Digest RunConfig::digest() const { return sha256(canonical()); }

std::string RunConfig::key_reference() {
  const RunConfig def;
  std::ostringstream os;
  std::string section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const auto sec = k.name.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n");
      if (sec != "run") os << '[' << sec << "]\n";
      section = sec;
    }
    os << "# " << k.help << '\n' << k.name.substr(dot + 1) << " = " << k.get(def) << '\n';
  }
  return os.str();
}

}  // namespace pfmce
