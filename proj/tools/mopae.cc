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


// Command-line front end: mopae <verb> --config FILE [--out DIR]
// [--seeds a,b,c] [--jobs N].
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 training
// diverged, 4 I/O failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mobpriv/errors.h"
#include "mobpriv/experiment.h"

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 2;
constexpr int kDiverged = 3;
constexpr int kIoFailure = 4;

struct Options {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 0;
  std::vector<std::string> inputs;
};

mobpriv::ExperimentConfig resolve(const Options& o) {
  mobpriv::ExperimentConfig c =
      mobpriv::load_config(o.config, mobpriv::mopae_environment());
  if (!o.out.empty()) c.out = o.out;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.jobs > 0) c.jobs = o.jobs;
  c.validate();
  return c;
}

int dispatch(const std::string& verb, const Options& o) {
  using mobpriv::Sweep;
  if (verb == "report") {
    if (o.out.empty()) throw mobpriv::ConfigError("report: --out is required");
    std::vector<std::filesystem::path> inputs(o.inputs.begin(),
                                              o.inputs.end());
    const auto res = mobpriv::merge_reports(inputs, o.out);
    std::cout << res.rows.size() << " rows, " << res.front.size()
              << " Pareto points -> " << o.out << "\n";
    return kOk;
  }
  const mobpriv::ExperimentConfig c = resolve(o);
  if (verb == "gen-data") {
    for (const auto& p : mobpriv::generate_data(c)) {
      std::cout << p.string() << "\n";
    }
    return kOk;
  }
  Sweep sweep = Sweep::kNone;
  if (verb == "sweep-lambda") sweep = Sweep::kLambda;
  if (verb == "sweep-sl") sweep = Sweep::kSl;
  if (verb == "sweep-granularity") sweep = Sweep::kGranularity;
  const auto res = mobpriv::run_experiment(c, sweep, &std::cerr);
  std::cout << res.rows.size() << " rows -> " << (c.out / "results.csv")
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-aware mobility representation experiments"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* cfg = sub->add_option("--config", o.config, "JSON config file");
    if (needs_config) cfg->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seeds", o.seeds, "comma-separated seeds")
        ->delimiter(',');
    sub->add_option("--jobs", o.jobs, "parallel runs")
        ->check(CLI::PositiveNumber);
  };
  for (const char* verb :
       {"run", "sweep-lambda", "sweep-sl", "sweep-granularity", "gen-data"}) {
    add_common(app.add_subcommand(verb, std::string(verb) + " experiments"),
               true);
  }
  CLI::App* report =
      app.add_subcommand("report", "merge results CSVs and emit Pareto front");
  add_common(report, false);
  report->add_option("inputs", o.inputs, "results.csv files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return dispatch(verb, o);
  } catch (const mobpriv::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const mobpriv::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
}
