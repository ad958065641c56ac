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

#include "mobpriv/baselines.h"

#include <cmath>
#include <limits>
#include <numbers>

#include "mobpriv/errors.h"

namespace mobpriv {

// ---------------------------------------------------------------------------
// Optimal-IMs

OptimalIms OptimalIms::create(const NetConfig& config, std::uint64_t seed) {
  // Each task model starts from the initialization the adversarial bundle
  // would give the same unit, drawn from disjoint streams.
  Rng ae_enc(derive_seed(seed, 11)), dec(derive_seed(seed, 2)),
      pred_enc(derive_seed(seed, 13)), pred(derive_seed(seed, 3)),
      reid_enc(derive_seed(seed, 14)), reid(derive_seed(seed, 4));
  OptimalIms m;
  m.reconstruction_encoder = make_encoder(config, ae_enc);
  m.decoder = make_decoder(config, dec);
  m.prediction_encoder = make_encoder(config, pred_enc);
  m.predictor = make_head(config, config.locations, pred);
  m.reid_encoder = make_encoder(config, reid_enc);
  m.reidentifier = make_head(config, config.users, reid);
  return m;
}

TaskNetworks OptimalIms::networks() const {
  return {&reconstruction_encoder, &decoder,      &prediction_encoder,
          &predictor,              &reid_encoder, &reidentifier};
}

std::vector<std::pair<std::string, Tensor>> OptimalIms::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add = [&](const std::string& prefix, const std::vector<Tensor>& ts) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      out.emplace_back(prefix + "." + std::to_string(i), ts[i]);
    }
  };
  add("reconstruction_encoder", reconstruction_encoder.tensors());
  add("decoder", decoder.tensors());
  add("prediction_encoder", prediction_encoder.tensors());
  add("predictor", predictor.tensors());
  add("reid_encoder", reid_encoder.tensors());
  add("reidentifier", reidentifier.tensors());
  return out;
}

namespace {

std::vector<Tensor> concat(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

OptimalImsResult train_optimal_ims(const DatasetSplit& split,
                                   const GridSpec& grid, const NetConfig& net,
                                   const TrainConfig& config) {
  config.validate();
  if (split.train.empty()) throw ContractError("empty train set");
  OptimalImsResult result{OptimalIms::create(net, config.seed), {}, {}};
  OptimalIms& m = result.models;
  Adam ae_opt(concat(m.reconstruction_encoder.tensors(), m.decoder.tensors()),
              config.adam());
  Adam pred_opt(concat(m.prediction_encoder.tensors(), m.predictor.tensors()),
                config.adam());
  Adam reid_opt(concat(m.reid_encoder.tensors(), m.reidentifier.tensors()),
                config.adam());

  BatchSampler sampler(split.train.size(), config.batch_size,
                       derive_seed(config.seed, 0x5A3D));
  const std::size_t steps = config.inner_steps > 0 ? config.inner_steps
                                                   : sampler.batches_per_pass();
  const std::vector<TraceWindow> log_windows =
      evenly_spaced(split.test, config.log_eval_limit);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch;
    for (std::size_t k = 0; k < steps; ++k) {
      const EncodedBatch batch =
          encode_batch(split.train, sampler.next(), grid, net.time_slots);
      Tape tape;
      const Tensor x_hat = decode(
          tape, m.decoder,
          encode(tape, m.reconstruction_encoder, batch.steps));
      const Tensor l_r = loss_reconstruction(tape, batch.stacked, x_hat);
      const Tensor l_u = loss_utility(
          tape,
          predict_next(tape, m.predictor,
                       encode(tape, m.prediction_encoder, batch.steps)),
          batch.next_locations);
      const Tensor l_p = loss_reid(
          tape,
          reidentify(tape, m.reidentifier,
                     encode(tape, m.reid_encoder, batch.steps)),
          batch.users);
      // Disjoint parameter sets: the gradient of the plain sum restricted to
      // one model is the gradient of that model's own loss.
      const Tensor terms[] = {l_r, l_u, l_p};
      const double ones[] = {1.0, 1.0, 1.0};
      const Tensor total = weighted_sum(tape, terms, ones);
      if (!std::isfinite(total.item())) {
        throw DivergenceError("non-finite loss at epoch " +
                              std::to_string(epoch) + " batch " +
                              std::to_string(k));
      }
      ae_opt.zero_grad();
      pred_opt.zero_grad();
      reid_opt.zero_grad();
      tape.backward(total);
      ae_opt.step();
      pred_opt.step();
      reid_opt.step();
      row.loss_reconstruction += l_r.item() / steps;
      row.loss_utility += l_u.item() / steps;
      row.loss_reid += l_p.item() / steps;
    }
    row.loss_sum =
        row.loss_reconstruction + row.loss_utility + row.loss_reid;
    if (!log_windows.empty()) {
      TaskNetworks nets = m.networks();
      nets.decoder = nullptr;
      const TaskMetrics tm =
          evaluate_networks(nets, log_windows, grid, net.time_slots);
      row.acc_utility_top1 = tm.utility[0];
      row.acc_reid_top1 = tm.privacy[0];
    }
    result.log.epochs.push_back(row);
  }
  result.test =
      evaluate_networks(m.networks(), split.test, grid, net.time_slots);
  return result;
}

// ---------------------------------------------------------------------------
// Dilation

std::vector<std::vector<double>> shortest_paths(const SpannerGraph& g) {
  const std::size_t n = g.vertices.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, kInf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const SpannerEdge& e : g.edges) {
    if (e.u >= n || e.v >= n) {
      throw IndexError("spanner edge references a missing vertex");
    }
    if (!(e.weight >= 0.0)) {
      throw ContractError("spanner edge weights must be non-negative");
    }
    d[e.u][e.v] = std::min(d[e.u][e.v], e.weight);
    d[e.v][e.u] = std::min(d[e.v][e.u], e.weight);
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (d[i][k] == kInf) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double via = d[i][k] + d[k][j];
        if (via < d[i][j]) d[i][j] = via;
      }
    }
  }
  return d;
}

double dilation(const SpannerGraph& g) {
  const std::size_t n = g.vertices.size();
  if (n < 2) throw ContractError("dilation needs at least two vertices");
  const auto d = shortest_paths(g);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::isinf(d[i][j])) {
        throw ContractError("spanner is disconnected: no path between " +
                            std::to_string(i) + " and " + std::to_string(j));
      }
      const double dx = std::hypot(g.vertices[i].x - g.vertices[j].x,
                                   g.vertices[i].y - g.vertices[j].y);
      if (dx == 0.0) {
        throw ContractError("spanner vertices " + std::to_string(i) + " and " +
                            std::to_string(j) + " coincide");
      }
      worst = std::max(worst, d[i][j] / dx);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Planar Laplace

void PlanarLaplaceConfig::validate() const {
  if (!(epsilon > 0.0)) throw ContractError("epsilon must be > 0");
  if (!(dilation >= 1.0)) throw ContractError("dilation must be >= 1");
}

double planar_laplace_radius(double epsilon, double p) {
  if (!(epsilon > 0.0)) throw ContractError("epsilon must be > 0");
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("quantile must be in [0,1)");
  // Solve 1 - (1 + u)e^(-u) = p for u = εr.
  auto cdf = [](double u) { return 1.0 - (1.0 + u) * std::exp(-u); };
  double lo = 0.0, hi = 1.0;
  while (cdf(hi) < p) hi *= 2.0;
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) / epsilon;
}

LatLon planar_laplace_perturb(const LatLon& loc,
                              const PlanarLaplaceConfig& config, Rng& rng) {
  config.validate();
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  const double r =
      planar_laplace_radius(config.effective_epsilon(), rng.uniform());
  return {loc.lat + r * std::sin(theta), loc.lon + r * std::cos(theta)};
}

Streams perturb_dataset(const Streams& streams, const GridSpec& grid,
                        const PlanarLaplaceConfig& config,
                        std::uint64_t seed) {
  config.validate();
  Streams out;
  out.reserve(streams.size());
  for (std::size_t u = 0; u < streams.size(); ++u) {
    Rng rng(derive_seed(seed, 0x6D00 + u));
    UserStream s{streams[u].user, {}};
    s.records.reserve(streams[u].records.size());
    for (const LocationRecord& r : streams[u].records) {
      const LatLon p =
          planar_laplace_perturb(grid.cell_center(r.cell), config, rng);
      s.records.push_back(
          {r.user, r.timestamp, grid.discretize_clamped(p.lat, p.lon)});
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mobpriv
