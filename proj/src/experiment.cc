// Copyright 2026 The mobpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "mobpriv/experiment.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <limits>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <utility>

#include "json.hpp"
#include "mobpriv/errors.h"
#include "mobpriv/random.h"

extern char** environ;

namespace mobpriv {

using nlohmann::json;
namespace fs = std::filesystem;

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kOptimal:
      return "optimal";
    case ModelKind::kMopaeOne:
      return "mopae-I";
    case ModelKind::kMopaeTwo:
      return "mopae-II";
    case ModelKind::kGiDp:
      return "gidp";
  }
  return "?";
}

ModelKind parse_model(const std::string& name) {
  for (ModelKind k : {ModelKind::kOptimal, ModelKind::kMopaeOne,
                      ModelKind::kMopaeTwo, ModelKind::kGiDp}) {
    if (model_name(k) == name) return k;
  }
  throw ConfigError("unknown model '" + name +
                    "' (expected optimal, mopae-I, mopae-II or gidp)");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

struct Section {
  const char* env;  // upper-case env prefix
  std::vector<std::string> path;
};

const std::vector<Section>& sections() {
  static const std::vector<Section> s = {
      {"SYNTHETIC", {"data", "synthetic"}},
      {"CSV", {"data", "csv"}},
      {"DATA", {"data"}},
      {"WEIGHTS", {"weights"}},
      {"SWEEP", {"sweep"}},
      {"TRAIN", {"train"}},
      {"NET", {"net"}},
      {"GIDP", {"gidp"}},
  };
  return s;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(c));
  return s;
}

std::string dotted(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
  return out;
}

class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string source)
      : text_(text), source_(std::move(source)) {}

  void note_override(const std::vector<std::string>& path,
                     const std::string& env) {
    overrides_[dotted(path)] = env;
  }

  [[noreturn]] void fail(const std::vector<std::string>& path,
                         const std::string& msg) const {
    const std::string key = dotted(path);
    for (auto p = path; !p.empty(); p.pop_back()) {
      auto it = overrides_.find(dotted(p));
      if (it != overrides_.end()) {
        throw ConfigError("env " + it->second + ": " + key + ": " + msg);
      }
    }
    const std::size_t line = line_of(path);
    if (line > 0) {
      throw ConfigError(source_ + ":" + std::to_string(line) + ": " + key +
                        ": " + msg);
    }
    throw ConfigError(source_ + ": " + key + ": " + msg);
  }

  // Line of the last key of `path`, searching each key after the previous.
  std::size_t line_of(const std::vector<std::string>& path) const {
    std::size_t pos = 0;
    for (const auto& key : path) {
      if (!key.empty() && std::isdigit(static_cast<unsigned char>(key[0]))) {
        continue;  // array index
      }
      const std::size_t at = text_.find("\"" + key + "\"", pos);
      if (at == std::string::npos) return 0;
      pos = at;
    }
    if (path.empty()) return 0;
    return 1 + std::count(text_.begin(), text_.begin() + pos, '\n');
  }

  void check_keys(const json& obj, const std::vector<std::string>& path,
                  const std::set<std::string>& allowed) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : obj.items()) {
      if (!allowed.count(k)) {
        auto p = path;
        p.push_back(k);
        fail(p, "unknown key");
      }
    }
  }

  double number(const json& obj, std::vector<std::string> path,
                const std::string& key, double fallback) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "must be finite");
    return d;
  }

  std::int64_t integer(const json& obj, std::vector<std::string> path,
                       const std::string& key, std::int64_t fallback,
                       std::int64_t min) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(path, "expected an integer");
    const auto i = v.get<std::int64_t>();
    if (i < min) fail(path, "must be >= " + std::to_string(min));
    return i;
  }

  std::string string(const json& obj, std::vector<std::string> path,
                     const std::string& key,
                     const std::string& fallback) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const json& obj, std::vector<std::string> path,
               const std::string& key, bool fallback) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(path, "expected true or false");
    return v.get<bool>();
  }

  const std::string& source() const { return source_; }

 private:
  const std::string& text_;
  std::string source_;
  std::map<std::string, std::string> overrides_;
};

json& at_path(json& doc, const std::vector<std::string>& path) {
  json* node = &doc;
  for (const auto& key : path) {
    if (!node->is_object()) throw ConfigError(dotted(path) + ": not an object");
    node = &(*node)[key];
  }
  return *node;
}

void apply_overrides(json& doc, ConfigReader& reader,
                     const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    if (name.rfind("MOPAE_", 0) != 0) continue;
    const std::string suffix = name.substr(6);
    std::vector<std::string> path;
    for (const Section& s : sections()) {
      const std::string prefix = std::string(s.env) + "_";
      if (suffix.rfind(prefix, 0) == 0 && suffix.size() > prefix.size()) {
        path = s.path;
        path.push_back(lower(suffix.substr(prefix.size())));
        break;
      }
    }
    if (path.empty()) path.push_back(lower(suffix));
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    // A single weights entry may be written as a one-element list.
    if (path.front() == "weights" && path.size() == 2 &&
        doc.contains("weights") && doc["weights"].is_array()) {
      if (doc["weights"].size() != 1) {
        throw ConfigError("env " + name +
                          ": weights holds several entries; edit the file");
      }
      path.insert(path.begin() + 1, "0");
      doc["weights"][0][path.back()] = parsed;
    } else {
      try {
        at_path(doc, path) = parsed;
      } catch (const ConfigError& e) {
        throw ConfigError("env " + name + ": " + e.what());
      }
    }
    reader.note_override(path, name);
  }
}

std::vector<double> number_list(const ConfigReader& r, const json& obj,
                                std::vector<std::string> path,
                                const std::string& key,
                                std::vector<double> fallback) {
  path.push_back(key);
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.empty()) {
    r.fail(path, "expected a non-empty list of numbers");
  }
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number()) r.fail(path, "expected a list of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

LossWeights read_weights(const ConfigReader& r, const json& obj,
                         const std::vector<std::string>& path) {
  r.check_keys(obj, path, {"lambda1", "lambda2", "lambda3"});
  LossWeights w;
  w.lambda1 = r.number(obj, path, "lambda1", 0.1);
  w.lambda2 = r.number(obj, path, "lambda2", 0.8);
  w.lambda3 = r.number(obj, path, "lambda3", 0.1);
  for (const char* k : {"lambda1", "lambda2", "lambda3"}) {
    auto p = path;
    p.push_back(k);
    if (r.number(obj, path, k, 0.0) < 0.0) r.fail(p, "must be >= 0");
  }
  return w;
}

SyntheticConfig read_synthetic(const ConfigReader& r, const json& obj) {
  const std::vector<std::string> path = {"data", "synthetic"};
  r.check_keys(obj, path,
               {"num_users", "rows", "cols", "lat_min", "lon_min",
                "granularity", "anchors", "home_pool", "work_pool", "kappa",
                "neighbor_weight", "records_per_user", "time_step",
                "start_time", "work_start_hour", "work_end_hour"});
  SyntheticConfig c;
  c.num_users = r.integer(obj, path, "num_users", c.num_users, 2);
  c.n_rows = r.integer(obj, path, "rows", c.n_rows, 1);
  c.n_cols = r.integer(obj, path, "cols", c.n_cols, 1);
  c.lat_min = r.number(obj, path, "lat_min", c.lat_min);
  c.lon_min = r.number(obj, path, "lon_min", c.lon_min);
  c.granularity = r.number(obj, path, "granularity", c.granularity);
  if (!(c.granularity > 0.0)) r.fail({"data", "synthetic", "granularity"},
                                     "must be > 0");
  c.home_pool = r.integer(obj, path, "home_pool", c.home_pool, 0);
  c.work_pool = r.integer(obj, path, "work_pool", c.work_pool, 0);
  c.kappa = r.number(obj, path, "kappa", c.kappa);
  if (!(c.kappa > 0.0)) r.fail({"data", "synthetic", "kappa"}, "must be > 0");
  c.neighbor_weight = r.number(obj, path, "neighbor_weight", c.neighbor_weight);
  if (c.neighbor_weight < 0.0) {
    r.fail({"data", "synthetic", "neighbor_weight"}, "must be >= 0");
  }
  c.records_per_user =
      r.integer(obj, path, "records_per_user", c.records_per_user, 1);
  c.time_step = r.integer(obj, path, "time_step", c.time_step, 1);
  c.start_time = r.integer(obj, path, "start_time", c.start_time,
                           std::numeric_limits<std::int64_t>::min());
  c.work_start_hour =
      r.integer(obj, path, "work_start_hour", c.work_start_hour, 0);
  c.work_end_hour = r.integer(obj, path, "work_end_hour", c.work_end_hour, 0);
  if (c.work_start_hour > 24 || c.work_end_hour > 24 ||
      c.work_start_hour > c.work_end_hour) {
    r.fail({"data", "synthetic", "work_end_hour"},
           "work hours must satisfy 0 <= start <= end <= 24");
  }
  if (obj.contains("anchors")) {
    const json& a = obj.at("anchors");
    const std::vector<std::string> p = {"data", "synthetic", "anchors"};
    if (!a.is_array()) r.fail(p, "expected a list of [home, work] pairs");
    const int cells = static_cast<int>(c.n_rows * c.n_cols);
    for (const json& pair : a) {
      if (!pair.is_array() || pair.size() != 2 ||
          !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
        r.fail(p, "expected a list of [home, work] pairs");
      }
      const Anchors an{pair[0].get<int>(), pair[1].get<int>()};
      if (an.home < 0 || an.home >= cells || an.work < 0 || an.work >= cells) {
        r.fail(p, "anchor cell outside the grid");
      }
      c.anchors.push_back(an);
    }
    if (c.anchors.size() != c.num_users) {
      r.fail(p, "need one pair per user");
    }
  }
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (models.empty()) throw ConfigError("models: at least one model");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed");
  if (weights.empty()) throw ConfigError("weights: at least one entry");
  if (sweep.lambda2.empty() || sweep.sl.empty() || sweep.dt.empty()) {
    throw ConfigError("sweep: grids must be non-empty");
  }
  if (sl < 1) throw ConfigError("sl: must be >= 1");
  if (dt < 0) throw ConfigError("dt: must be >= 0");
  if (jobs < 1) throw ConfigError("jobs: must be >= 1");
  for (const LossWeights& w : weights) {
    try {
      w.validate();
    } catch (const ContractError& e) {
      throw ConfigError(std::string("weights: ") + e.what());
    }
  }
  try {
    train.validate();
    gidp.validate();
    if (data.kind == DataSource::Kind::kSynthetic) data.synthetic.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (data.kind == DataSource::Kind::kCsv && !data.csv_grid) {
    throw ConfigError("data.csv: missing grid");
  }
}

std::map<std::string, std::string> mopae_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    if (kv.rfind("MOPAE_", 0) != 0) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

ExperimentConfig parse_config(const std::string& text,
                              const std::string& source,
                              const std::map<std::string, std::string>& env) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto line =
        1 + std::count(text.begin(), text.begin() + byte, '\n');
    throw ConfigError(source + ":" + std::to_string(line) +
                      ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(source + ":1: expected an object");
  ConfigReader r(text, source);
  apply_overrides(doc, r, env);
  r.check_keys(doc, {},
               {"data", "sl", "dt", "train_fraction", "models", "weights",
                "sweep", "train", "net", "gidp", "seeds", "jobs",
                "checkpoints", "out"});

  ExperimentConfig c;
  // data
  if (doc.contains("data")) {
    const json& d = doc.at("data");
    r.check_keys(d, {"data"}, {"source", "synthetic", "csv"});
    const std::string src = r.string(d, {"data"}, "source", "synthetic");
    if (src == "synthetic") {
      c.data.kind = DataSource::Kind::kSynthetic;
      if (d.contains("synthetic")) {
        c.data.synthetic = read_synthetic(r, d.at("synthetic"));
      }
    } else if (src == "csv") {
      c.data.kind = DataSource::Kind::kCsv;
      const std::vector<std::string> p = {"data", "csv"};
      if (!d.contains("csv")) r.fail(p, "required when source is csv");
      const json& cj = d.at("csv");
      r.check_keys(cj, p,
                   {"path", "lat_min", "lat_max", "lon_min", "lon_max",
                    "granularity"});
      c.data.csv_path = r.string(cj, p, "path", "");
      if (c.data.csv_path.empty()) r.fail({"data", "csv", "path"}, "required");
      for (const char* k :
           {"lat_min", "lat_max", "lon_min", "lon_max", "granularity"}) {
        if (!cj.contains(k)) r.fail({"data", "csv", k}, "required");
      }
      try {
        c.data.csv_grid = GridSpec::create(
            r.number(cj, p, "lat_min", 0), r.number(cj, p, "lat_max", 0),
            r.number(cj, p, "lon_min", 0), r.number(cj, p, "lon_max", 0),
            r.number(cj, p, "granularity", 0));
      } catch (const std::logic_error& e) {
        r.fail({"data", "csv", "granularity"}, e.what());
      }
    } else {
      r.fail({"data", "source"}, "expected synthetic or csv");
    }
  }
  c.sl = r.integer(doc, {}, "sl", 10, 1);
  c.dt = r.integer(doc, {}, "dt", 0, 0);
  c.train_fraction = r.number(doc, {}, "train_fraction", 0.8);
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    r.fail({"train_fraction"}, "must be in (0, 1)");
  }
  // models
  if (doc.contains("models")) {
    const json& m = doc.at("models");
    if (!m.is_array() || m.empty()) {
      r.fail({"models"}, "expected a non-empty list");
    }
    c.models.clear();
    for (const json& name : m) {
      if (!name.is_string()) r.fail({"models"}, "expected model names");
      try {
        const ModelKind k = parse_model(name.get<std::string>());
        if (std::find(c.models.begin(), c.models.end(), k) == c.models.end()) {
          c.models.push_back(k);
        }
      } catch (const ConfigError& e) {
        r.fail({"models"}, e.what());
      }
    }
  }
  // weights
  if (doc.contains("weights")) {
    const json& w = doc.at("weights");
    c.weights.clear();
    if (w.is_array()) {
      if (w.empty()) r.fail({"weights"}, "expected at least one entry");
      for (std::size_t i = 0; i < w.size(); ++i) {
        c.weights.push_back(
            read_weights(r, w[i], {"weights", std::to_string(i)}));
      }
    } else {
      c.weights.push_back(read_weights(r, w, {"weights"}));
    }
  }
  // sweep
  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    const std::vector<std::string> p = {"sweep"};
    r.check_keys(s, p, {"lambda1", "lambda2", "sl", "dt"});
    c.sweep.lambda1 = r.number(s, p, "lambda1", c.sweep.lambda1);
    if (c.sweep.lambda1 < 0.0 || c.sweep.lambda1 > 1.0) {
      r.fail({"sweep", "lambda1"}, "must be in [0, 1]");
    }
    c.sweep.lambda2 = number_list(r, s, p, "lambda2", c.sweep.lambda2);
    for (double l2 : c.sweep.lambda2) {
      if (l2 < 0.0 || c.sweep.lambda1 + l2 > 1.0 + 1e-9) {
        r.fail({"sweep", "lambda2"},
               "each value must be >= 0 with lambda1 + lambda2 <= 1");
      }
    }
    std::vector<double> sl_default(c.sweep.sl.begin(), c.sweep.sl.end());
    c.sweep.sl.clear();
    for (double v : number_list(r, s, p, "sl", sl_default)) {
      if (v < 1 || v != std::floor(v)) {
        r.fail({"sweep", "sl"}, "SL values must be integers >= 1");
      }
      c.sweep.sl.push_back(static_cast<std::size_t>(v));
    }
    std::vector<double> dt_default(c.sweep.dt.begin(), c.sweep.dt.end());
    c.sweep.dt.clear();
    for (double v : number_list(r, s, p, "dt", dt_default)) {
      if (v <= 0 || v != std::floor(v)) {
        r.fail({"sweep", "dt"}, "dt values must be integers > 0");
      }
      c.sweep.dt.push_back(static_cast<std::int64_t>(v));
    }
  }
  // train
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    const std::vector<std::string> p = {"train"};
    r.check_keys(t, p,
                 {"batch_size", "epochs", "inner_steps", "lr",
                  "log_eval_limit"});
    c.train.batch_size = r.integer(t, p, "batch_size", c.train.batch_size, 1);
    c.train.epochs = r.integer(t, p, "epochs", c.train.epochs, 1);
    c.train.inner_steps =
        r.integer(t, p, "inner_steps", c.train.inner_steps, 0);
    c.train.lr = r.number(t, p, "lr", c.train.lr);
    if (!(c.train.lr > 0.0)) r.fail({"train", "lr"}, "must be > 0");
    c.train.log_eval_limit =
        r.integer(t, p, "log_eval_limit", c.train.log_eval_limit, 0);
  }
  // net
  if (doc.contains("net")) {
    const json& n = doc.at("net");
    const std::vector<std::string> p = {"net"};
    r.check_keys(n, p,
                 {"encoder_hidden", "decoder_hidden", "head_hidden", "pooling",
                  "init_scale", "forget_bias"});
    c.net.encoder_hidden =
        r.integer(n, p, "encoder_hidden", c.net.encoder_hidden, 1);
    c.net.decoder_hidden =
        r.integer(n, p, "decoder_hidden", c.net.decoder_hidden, 1);
    c.net.head_hidden = r.integer(n, p, "head_hidden", c.net.head_hidden, 1);
    try {
      c.net.pooling = parse_pooling(
          r.string(n, p, "pooling", pooling_name(c.net.pooling)));
    } catch (const std::exception& e) {
      r.fail({"net", "pooling"}, "expected last or mean");
    }
    c.net.init_scale = r.number(n, p, "init_scale", c.net.init_scale);
    if (!(c.net.init_scale > 0.0)) r.fail({"net", "init_scale"}, "must be > 0");
    c.net.forget_bias = r.number(n, p, "forget_bias", c.net.forget_bias);
  }
  // gidp
  if (doc.contains("gidp")) {
    const json& g = doc.at("gidp");
    const std::vector<std::string> p = {"gidp"};
    r.check_keys(g, p, {"epsilon", "dilation"});
    c.gidp.epsilon = r.number(g, p, "epsilon", c.gidp.epsilon);
    if (!(c.gidp.epsilon > 0.0)) r.fail({"gidp", "epsilon"}, "must be > 0");
    c.gidp.dilation = r.number(g, p, "dilation", c.gidp.dilation);
    if (!(c.gidp.dilation >= 1.0)) r.fail({"gidp", "dilation"}, "must be >= 1");
  }
  // seeds
  if (doc.contains("seeds")) {
    const json& s = doc.at("seeds");
    if (!s.is_array() || s.empty()) {
      r.fail({"seeds"}, "expected a non-empty list of integers");
    }
    c.seeds.clear();
    for (const json& x : s) {
      if (!x.is_number_unsigned()) {
        r.fail({"seeds"}, "expected non-negative integers");
      }
      c.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  c.jobs = r.integer(doc, {}, "jobs", 1, 1);
  c.checkpoints = r.boolean(doc, {}, "checkpoints", true);
  c.out = r.string(doc, {}, "out", "out");
  c.validate();
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json doc;
  if (c.data.kind == DataSource::Kind::kSynthetic) {
    const SyntheticConfig& s = c.data.synthetic;
    json syn = {{"num_users", s.num_users},
                {"rows", s.n_rows},
                {"cols", s.n_cols},
                {"lat_min", s.lat_min},
                {"lon_min", s.lon_min},
                {"granularity", s.granularity},
                {"home_pool", s.home_pool},
                {"work_pool", s.work_pool},
                {"kappa", s.kappa},
                {"neighbor_weight", s.neighbor_weight},
                {"records_per_user", s.records_per_user},
                {"time_step", s.time_step},
                {"start_time", s.start_time},
                {"work_start_hour", s.work_start_hour},
                {"work_end_hour", s.work_end_hour}};
    if (!s.anchors.empty()) {
      json a = json::array();
      for (const Anchors& an : s.anchors) a.push_back({an.home, an.work});
      syn["anchors"] = std::move(a);
    }
    doc["data"] = {{"source", "synthetic"}, {"synthetic", std::move(syn)}};
  } else {
    const GridSpec& g = *c.data.csv_grid;
    doc["data"] = {{"source", "csv"},
                   {"csv",
                    {{"path", c.data.csv_path.string()},
                     {"lat_min", g.lat_min()},
                     {"lat_max", g.lat_max()},
                     {"lon_min", g.lon_min()},
                     {"lon_max", g.lon_max()},
                     {"granularity", g.granularity()}}}};
  }
  doc["sl"] = c.sl;
  doc["dt"] = c.dt;
  doc["train_fraction"] = c.train_fraction;
  json models = json::array();
  for (ModelKind m : c.models) models.push_back(model_name(m));
  doc["models"] = std::move(models);
  json weights = json::array();
  for (const LossWeights& w : c.weights) {
    weights.push_back({{"lambda1", w.lambda1},
                       {"lambda2", w.lambda2},
                       {"lambda3", w.lambda3}});
  }
  doc["weights"] = std::move(weights);
  doc["sweep"] = {{"lambda1", c.sweep.lambda1},
                  {"lambda2", c.sweep.lambda2},
                  {"sl", c.sweep.sl},
                  {"dt", c.sweep.dt}};
  doc["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"inner_steps", c.train.inner_steps},
                  {"lr", c.train.lr},
                  {"log_eval_limit", c.train.log_eval_limit}};
  doc["net"] = {{"encoder_hidden", c.net.encoder_hidden},
                {"decoder_hidden", c.net.decoder_hidden},
                {"head_hidden", c.net.head_hidden},
                {"pooling", pooling_name(c.net.pooling)},
                {"init_scale", c.net.init_scale},
                {"forget_bias", c.net.forget_bias}};
  doc["gidp"] = {{"epsilon", c.gidp.epsilon}, {"dilation", c.gidp.dilation}};
  doc["seeds"] = c.seeds;
  doc["jobs"] = c.jobs;
  doc["checkpoints"] = c.checkpoints;
  doc["out"] = c.out.string();
  return doc.dump(2);
}

ExperimentConfig load_config(const fs::path& path,
                             const std::map<std::string, std::string>& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot read config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), env);
}

// ---------------------------------------------------------------------------
// Planning

namespace {

std::string fmt_lambda(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

// Rounds away float noise from 1 - l1 - l2.
double clean(double x) {
  const double r = std::round(x * 1e9) / 1e9;
  return r == 0.0 ? 0.0 : r;
}

}  // namespace

std::string RunSpec::id() const {
  std::string s = model_name(model);
  if (model == ModelKind::kMopaeOne || model == ModelKind::kMopaeTwo) {
    s += "_l" + fmt_lambda(weights.lambda1) + "-" +
         fmt_lambda(weights.lambda2) + "-" + fmt_lambda(weights.lambda3);
  }
  s += "_sl" + std::to_string(sl) + "_dt" + std::to_string(dt) + "_s" +
       std::to_string(seed);
  return s;
}

std::vector<RunSpec> plan_runs(const ExperimentConfig& config, Sweep sweep) {
  std::vector<std::size_t> sls = {config.sl};
  std::vector<std::int64_t> dts = {config.dt};
  std::vector<LossWeights> weights = config.weights;
  if (sweep == Sweep::kSl) sls = config.sweep.sl;
  if (sweep == Sweep::kGranularity) dts = config.sweep.dt;
  if (sweep == Sweep::kLambda) {
    weights.clear();
    for (double l2 : config.sweep.lambda2) {
      weights.push_back({config.sweep.lambda1, clean(l2),
                         clean(1.0 - config.sweep.lambda1 - l2)});
    }
  }
  std::vector<RunSpec> runs;
  for (ModelKind m : config.models) {
    for (std::size_t sl : sls) {
      for (std::int64_t dt : dts) {
        for (std::uint64_t seed : config.seeds) {
          RunSpec r{m, {0.0, 0.0, 0.0}, sl, dt, seed};
          if (m == ModelKind::kMopaeTwo) {
            for (const LossWeights& w : weights) {
              r.weights = w;
              runs.push_back(r);
            }
            continue;
          }
          if (m == ModelKind::kMopaeOne) r.weights = LossWeights::model_one();
          runs.push_back(r);
        }
      }
    }
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Data

PreparedData prepare_data(const ExperimentConfig& config, std::size_t sl,
                          std::int64_t dt, std::uint64_t seed) {
  PreparedData d{{}, config.data.kind == DataSource::Kind::kCsv
                         ? *config.data.csv_grid
                         : config.data.synthetic.grid(),
                 {}};
  if (config.data.kind == DataSource::Kind::kSynthetic) {
    SyntheticConfig sc = config.data.synthetic;
    sc.seed = seed;
    d.streams = generate_synthetic(sc);
  } else {
    d.streams = load_csv(config.data.csv_path, d.grid).streams;
  }
  if (dt > 0) d.streams = resample(d.streams, dt);
  const auto windows = make_windows(d.streams, sl);
  d.split = split_windows(windows, d.streams.size(), config.train_fraction);
  if (d.split.train.empty() || d.split.test.empty()) {
    throw ConfigError("sl=" + std::to_string(sl) + " dt=" +
                      std::to_string(dt) +
                      ": dataset yields no train or no test windows");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

auto provenance(const EvalReport& r) {
  return std::make_tuple(r.model, r.lambda1, r.lambda2, r.lambda3, r.sl, r.dt,
                         r.seed);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Trace> traces_of(const std::vector<TraceWindow>& windows,
                             const GridSpec& grid) {
  std::vector<Trace> out;
  out.reserve(windows.size());
  for (const TraceWindow& w : windows) {
    Trace t;
    for (int c : w.cells) t.push_back(grid.cell_center(c));
    out.push_back(std::move(t));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const char* sweep_name(Sweep s) {
  switch (s) {
    case Sweep::kNone:
      return "run";
    case Sweep::kLambda:
      return "sweep-lambda";
    case Sweep::kSl:
      return "sweep-sl";
    case Sweep::kGranularity:
      return "sweep-granularity";
  }
  return "?";
}

}  // namespace

void sort_by_provenance(std::vector<EvalReport>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const EvalReport& a, const EvalReport& b) {
                     return provenance(a) < provenance(b);
                   });
}

std::vector<EvalReport> median_reports(const std::vector<EvalReport>& rows) {
  std::vector<EvalReport> sorted = rows;
  sort_by_provenance(sorted);
  std::vector<EvalReport> out;
  auto key = [](const EvalReport& r) {
    return std::make_tuple(r.model, r.lambda1, r.lambda2, r.lambda3, r.sl,
                           r.dt);
  };
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && key(sorted[j]) == key(sorted[i])) ++j;
    EvalReport m = sorted[i];
    m.seed = j - i;
    auto med = [&](auto field) {
      std::vector<double> v;
      for (std::size_t k = i; k < j; ++k) v.push_back(field(sorted[k]));
      return median(std::move(v));
    };
    m.euc = med([](const EvalReport& r) { return r.euc; });
    m.man = med([](const EvalReport& r) { return r.man; });
    for (std::size_t n = 0; n < 3; ++n) {
      m.utility[n] = med([n](const EvalReport& r) { return r.utility[n]; });
      m.privacy[n] = med([n](const EvalReport& r) { return r.privacy[n]; });
      m.utility_loss_pct[n] =
          med([n](const EvalReport& r) { return r.utility_loss_pct[n]; });
      m.privacy_gain_pct[n] =
          med([n](const EvalReport& r) { return r.privacy_gain_pct[n]; });
    }
    m.tradeoff_pct = med([](const EvalReport& r) { return r.tradeoff_pct; });
    out.push_back(m);
    i = j;
  }
  return out;
}

std::string point_label(const EvalReport& r) {
  std::string s = r.model;
  if (r.model.rfind("mopae", 0) == 0) {
    s += "/l=" + fmt_lambda(r.lambda1) + ":" + fmt_lambda(r.lambda2) + ":" +
         fmt_lambda(r.lambda3);
  }
  return s + "/SL=" + std::to_string(r.sl) + "/dt=" + std::to_string(r.dt);
}

std::vector<ParetoPoint> pareto_of(const std::vector<EvalReport>& rows) {
  std::vector<ParetoPoint> points;
  for (const EvalReport& r : rows) {
    points.push_back({r.utility[0], 1.0 - r.privacy[0], point_label(r)});
  }
  return pareto_front(points);
}

std::vector<EvalReport> read_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != report_csv_header()) {
    throw FormatError(path.string() + ": missing results header");
  }
  std::vector<EvalReport> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_report_csv_row(line));
  }
  return rows;
}

void write_results_csv(const fs::path& path,
                       const std::vector<EvalReport>& rows) {
  std::string text = report_csv_header() + "\n";
  for (const EvalReport& r : rows) text += report_csv_row(r) + "\n";
  write_text(path, text);
}

void write_medians_csv(const fs::path& path,
                       const std::vector<EvalReport>& medians) {
  std::string header = report_csv_header();
  header.replace(header.find(",seed,"), 6, ",seeds,");
  std::string text = header + "\n";
  for (const EvalReport& r : medians) text += report_csv_row(r) + "\n";
  write_text(path, text);
}

void write_pareto_csv(const fs::path& path,
                      const std::vector<ParetoPoint>& front) {
  std::string text = "label,utility,privacy\n";
  char buf[64];
  for (const ParetoPoint& p : front) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", p.utility, p.privacy);
    text += p.label + buf;
  }
  write_text(path, text);
}

ExperimentResult merge_reports(const std::vector<fs::path>& inputs,
                               const fs::path& out) {
  ExperimentResult res;
  for (const fs::path& p : inputs) {
    auto rows = read_results_csv(p);
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  }
  sort_by_provenance(res.rows);
  res.medians = median_reports(res.rows);
  res.front = pareto_of(res.medians);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  write_results_csv(out / "results.csv", res.rows);
  write_medians_csv(out / "medians.csv", res.medians);
  write_pareto_csv(out / "pareto.csv", res.front);
  return res;
}

std::vector<fs::path> generate_data(const ExperimentConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out, ec);
  if (ec) {
    throw IoError("cannot create " + config.out.string() + ": " +
                  ec.message());
  }
  std::vector<fs::path> files;
  for (std::uint64_t seed : config.seeds) {
    PreparedData d = prepare_data(config, config.sl, config.dt, seed);
    const fs::path p = config.out / ("data_seed" + std::to_string(seed) +
                                     ".csv");
    write_csv(p, d.streams, d.grid);
    files.push_back(p);
  }
  return files;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Reference {
  TopN utility{};
  TopN privacy{};
};

struct RunOutput {
  EvalReport report;
  TrainLog log;
  double seconds = 0.0;
  fs::path checkpoint;
  fs::path log_path;
  DatasetInfo dataset;
  Reference reference;  // set for optimal runs
};

// Runs tasks on `jobs` threads; each task's exception is kept by index and
// the first one in task order is rethrown.
void run_pool(std::size_t n, std::size_t jobs,
              const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t width = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < width; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class ResultWriter {
 public:
  ResultWriter(const fs::path& partial, std::ostream* progress,
               std::size_t total)
      : out_(partial, std::ios::binary), progress_(progress), total_(total) {
    if (!out_) throw IoError("cannot write " + partial.string());
    out_ << report_csv_header() << "\n";
  }

  void append(const RunSpec& spec, const RunOutput& r) {
    std::lock_guard<std::mutex> lock(mu_);
    out_ << report_csv_row(r.report) << "\n" << std::flush;
    ++done_;
    if (progress_) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), " %.1fs", r.seconds);
      *progress_ << "[" << done_ << "/" << total_ << "] " << spec.id() << buf
                 << "\n"
                 << std::flush;
    }
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::ostream* progress_;
  std::size_t total_;
  std::size_t done_ = 0;
};

NetConfig net_for(const ExperimentConfig& config, const PreparedData& d) {
  NetConfig net = config.net;
  net.locations = d.grid.num_cells();
  net.users = d.streams.size();
  net.time_slots = kDefaultTimeSlots;
  return net;
}

RunOutput execute(const ExperimentConfig& config, const RunSpec& spec,
                  const Reference* reference) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  PreparedData d = prepare_data(config, spec.sl, spec.dt, spec.seed);
  out.dataset = {spec.sl,
                 spec.dt,
                 spec.seed,
                 d.streams.size(),
                 total_records(d.streams),
                 observed_locations(d.streams),
                 d.split.train.size(),
                 d.split.test.size()};
  const NetConfig net = net_for(config, d);
  TrainConfig train = config.train;
  train.seed = spec.seed;

  EvalReport& rep = out.report;
  rep.model = model_name(spec.model);
  rep.lambda1 = spec.weights.lambda1;
  rep.lambda2 = spec.weights.lambda2;
  rep.lambda3 = spec.weights.lambda3;
  rep.sl = spec.sl;
  rep.dt = spec.dt;
  rep.seed = spec.seed;

  if (config.checkpoints) {
    out.checkpoint = config.out / "checkpoints" / (spec.id() + ".json");
  }
  out.log_path = config.out / "logs" / (spec.id() + ".csv");

  TaskMetrics m;
  try {
    switch (spec.model) {
      case ModelKind::kOptimal: {
        OptimalImsResult r = train_optimal_ims(d.split, d.grid, net, train);
        m = r.test;
        out.log = std::move(r.log);
        if (config.checkpoints) {
          save_checkpoint(out.checkpoint, net, r.models.named_tensors());
        }
        break;
      }
      case ModelKind::kMopaeOne:
      case ModelKind::kMopaeTwo: {
        train.variant = spec.model == ModelKind::kMopaeOne
                            ? ModelVariant::kUnweighted
                            : ModelVariant::kWeighted;
        TrainResult r =
            train_adversarial(d.split, d.grid, net, train, spec.weights);
        m = evaluate_networks(networks_of(r.bundle), d.split.test, d.grid,
                              net.time_slots);
        out.log = std::move(r.log);
        if (config.checkpoints) save_checkpoint(out.checkpoint, r.bundle);
        break;
      }
      case ModelKind::kGiDp: {
        const Streams released = perturb_dataset(
            d.streams, d.grid, config.gidp, derive_seed(spec.seed, 0x61D9));
        const DatasetSplit rs =
            split_windows(make_windows(released, spec.sl), released.size(),
                          config.train_fraction);
        OptimalImsResult r = train_optimal_ims(rs, d.grid, net, train);
        m.utility = r.test.utility;
        m.privacy = r.test.privacy;
        const auto original = traces_of(d.split.test, d.grid);
        const auto perturbed = traces_of(rs.test, d.grid);
        m.euc = avg_euclidean(original, perturbed);
        m.man = avg_manhattan(original, perturbed);
        out.log = std::move(r.log);
        if (config.checkpoints) {
          save_checkpoint(out.checkpoint, net, r.models.named_tensors());
        }
        break;
      }
    }
  } catch (const DivergenceError& e) {
    throw DivergenceError("run " + spec.id() + ": " + e.what());
  }
  out.log.write_csv(out.log_path);

  rep.euc = m.euc;
  rep.man = m.man;
  rep.utility = m.utility;
  rep.privacy = m.privacy;
  if (spec.model == ModelKind::kOptimal) {
    out.reference = {m.utility, m.privacy};
    rep.compare_to(m.utility, m.privacy);
  } else {
    rep.compare_to(reference->utility, reference->privacy);
  }
  out.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, Sweep sweep,
                                std::ostream* progress) {
  config.validate();
  const std::string started = utc_now();
  const std::vector<RunSpec> planned = plan_runs(config, sweep);

  std::error_code ec;
  for (const fs::path& dir :
       {config.out, config.out / "logs", config.out / "checkpoints"}) {
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }

  // Phase 1: one Optimal-IMs reference per (SL, dt, seed).
  using Key = std::tuple<std::size_t, std::int64_t, std::uint64_t>;
  std::vector<RunSpec> refs;
  std::set<Key> seen;
  for (const RunSpec& r : planned) {
    if (seen.insert({r.sl, r.dt, r.seed}).second) {
      refs.push_back({ModelKind::kOptimal, {0.0, 0.0, 0.0}, r.sl, r.dt, r.seed});
    }
  }
  std::vector<RunSpec> rest;
  for (const RunSpec& r : planned) {
    if (r.model != ModelKind::kOptimal) rest.push_back(r);
  }
  const bool emit_optimal =
      std::find(config.models.begin(), config.models.end(),
                ModelKind::kOptimal) != config.models.end();

  ResultWriter writer(config.out / "results.csv.partial", progress,
                      refs.size() + rest.size());
  std::vector<RunOutput> ref_out(refs.size());
  run_pool(refs.size(), config.jobs, [&](std::size_t i) {
    ref_out[i] = execute(config, refs[i], nullptr);
    writer.append(refs[i], ref_out[i]);
  });
  std::map<Key, Reference> reference;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    reference[{refs[i].sl, refs[i].dt, refs[i].seed}] = ref_out[i].reference;
  }

  // Phase 2: everything else against its cached reference.
  std::vector<RunOutput> rest_out(rest.size());
  run_pool(rest.size(), config.jobs, [&](std::size_t i) {
    const Reference& ref = reference.at({rest[i].sl, rest[i].dt, rest[i].seed});
    rest_out[i] = execute(config, rest[i], &ref);
    writer.append(rest[i], rest_out[i]);
  });

  ExperimentResult res;
  std::vector<std::pair<RunSpec, const RunOutput*>> all;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    all.emplace_back(refs[i], &ref_out[i]);
    res.datasets.push_back(ref_out[i].dataset);
  }
  for (std::size_t i = 0; i < rest.size(); ++i) {
    all.emplace_back(rest[i], &rest_out[i]);
  }
  for (const auto& [spec, o] : all) {
    if (spec.model != ModelKind::kOptimal || emit_optimal) {
      res.rows.push_back(o->report);
    }
  }
  sort_by_provenance(res.rows);
  res.medians = median_reports(res.rows);
  res.front = pareto_of(res.medians);

  const fs::path results = config.out / "results.csv";
  write_results_csv(results, res.rows);
  fs::remove(config.out / "results.csv.partial", ec);
  write_medians_csv(config.out / "medians.csv", res.medians);
  write_pareto_csv(config.out / "pareto.csv", res.front);

  std::string datasets =
      "SL,dt,seed,users,records,observed_locations,train_windows,"
      "test_windows\n";
  for (const DatasetInfo& d : res.datasets) {
    datasets += std::to_string(d.sl) + "," + std::to_string(d.dt) + "," +
                std::to_string(d.seed) + "," + std::to_string(d.users) + "," +
                std::to_string(d.records) + "," +
                std::to_string(d.observed_locations) + "," +
                std::to_string(d.train_windows) + "," +
                std::to_string(d.test_windows) + "\n";
  }
  write_text(config.out / "datasets.csv", datasets);

  std::string timings = "run,seconds\n";
  json runs = json::array();
  for (const auto& [spec, o] : all) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ",%.3f\n", o->seconds);
    timings += spec.id() + buf;
    json entry = {{"id", spec.id()},
                  {"model", model_name(spec.model)},
                  {"seed", spec.seed},
                  {"sl", spec.sl},
                  {"dt", spec.dt},
                  {"log", o->log_path.string()}};
    if (!o->checkpoint.empty()) entry["checkpoint"] = o->checkpoint.string();
    runs.push_back(std::move(entry));
  }
  write_text(config.out / "timings.csv", timings);

  json outputs = json::array();
  for (const char* f : {"results.csv", "medians.csv", "pareto.csv",
                        "datasets.csv", "timings.csv", "manifest.json"}) {
    outputs.push_back((config.out / f).string());
  }
  json manifest = {{"software", "mobpriv"},
                   {"version", MOBPRIV_VERSION},
                   {"command", sweep_name(sweep)},
                   {"config", json::parse(config_to_json(config))},
                   {"seeds", config.seeds},
                   {"jobs", config.jobs},
                   {"started", started},
                   {"finished", utc_now()},
                   {"runs", std::move(runs)},
                   {"outputs", std::move(outputs)}};
  write_text(config.out / "manifest.json", manifest.dump(2) + "\n");
  return res;
}

}  // namespace mobpriv
