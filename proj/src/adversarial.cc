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

#include "mobpriv/adversarial.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mobpriv/errors.h"

namespace mobpriv {

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3}) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw ContractError("loss weights must be finite and non-negative");
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ContractError("learning rate must be > 0");
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,L_R,L_U,L_P,L_sum,acc_U_top1,acc_P_top1\n";
  char buf[256];
  for (const EpochLog& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.8f,%.8f,%.8f,%.8f,%.6f,%.6f\n",
                  e.epoch, e.loss_reconstruction, e.loss_utility, e.loss_reid,
                  e.loss_sum, e.acc_utility_top1, e.acc_reid_top1);
    out += buf;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
}

Tensor loss_reconstruction(Tape& tape, const Tensor& x, const Tensor& x_hat) {
  return mse(tape, x, x_hat);
}

Tensor loss_utility(Tape& tape, const Tensor& pred_dist,
                    std::span<const int> next_locations) {
  return cross_entropy(tape, pred_dist, next_locations);
}

Tensor loss_reid(Tape& tape, const Tensor& reid_dist,
                 std::span<const int> users) {
  return cross_entropy(tape, reid_dist, users);
}

Tensor sum_loss(Tape& tape, const Tensor& l_r, const Tensor& l_u,
                const Tensor& l_p, const LossWeights& w) {
  const Tensor terms[] = {l_r, l_u, l_p};
  const double coeffs[] = {-w.lambda1, w.lambda2, -w.lambda3};
  return weighted_sum(tape, terms, coeffs);
}

double sum_loss(double l_r, double l_u, double l_p, const LossWeights& w) {
  return -w.lambda1 * l_r + w.lambda2 * l_u - w.lambda3 * l_p;
}

// ---------------------------------------------------------------------------
// AdversarialTrainer

AdversarialTrainer::AdversarialTrainer(ModelBundle bundle,
                                       LossWeights weights,
                                       const AdamConfig& adam)
    : bundle_(std::move(bundle)),
      weights_(weights),
      encoder_opt_(bundle_.encoder.tensors(), adam),
      decoder_opt_(bundle_.decoder.tensors(), adam),
      predictor_opt_(bundle_.predictor.tensors(), adam),
      reid_opt_(bundle_.reidentifier.tensors(), adam) {
  weights_.validate();
}

BatchLosses AdversarialTrainer::encoder_step(const EncodedBatch& batch) {
  set_trainable(encoder_opt_.params(), true);
  set_trainable(decoder_opt_.params(), false);
  set_trainable(predictor_opt_.params(), false);
  set_trainable(reid_opt_.params(), false);

  Tape tape;
  const Sequence f = encode(tape, bundle_.encoder, batch.steps);
  const Tensor l_r = loss_reconstruction(tape, batch.stacked,
                                         decode(tape, bundle_.decoder, f));
  const Tensor l_u = loss_utility(
      tape, predict_next(tape, bundle_.predictor, f), batch.next_locations);
  const Tensor l_p = loss_reid(tape, reidentify(tape, bundle_.reidentifier, f),
                               batch.users);
  const Tensor total = sum_loss(tape, l_r, l_u, l_p, weights_);
  BatchLosses out{l_r.item(), l_u.item(), l_p.item(), total.item()};
  if (!std::isfinite(out.sum)) return out;  // caller reports divergence

  encoder_opt_.zero_grad();
  tape.backward(total);
  encoder_opt_.step();
  return out;
}

BatchLosses AdversarialTrainer::discriminator_step(const EncodedBatch& batch) {
  set_trainable(encoder_opt_.params(), false);
  set_trainable(decoder_opt_.params(), true);
  set_trainable(predictor_opt_.params(), true);
  set_trainable(reid_opt_.params(), true);

  Tape tape;
  const Sequence f = encode(tape, bundle_.encoder, batch.steps);
  const Tensor l_r = loss_reconstruction(tape, batch.stacked,
                                         decode(tape, bundle_.decoder, f));
  const Tensor l_u = loss_utility(
      tape, predict_next(tape, bundle_.predictor, f), batch.next_locations);
  const Tensor l_p = loss_reid(tape, reidentify(tape, bundle_.reidentifier, f),
                               batch.users);
  // The three parameter sets are disjoint and the features are constant
  // here, so one backward pass through the plain sum yields each head the
  // gradient of its own loss.
  const Tensor terms[] = {l_r, l_u, l_p};
  const double ones[] = {1.0, 1.0, 1.0};
  const Tensor total = weighted_sum(tape, terms, ones);
  BatchLosses out{l_r.item(), l_u.item(), l_p.item(),
                  sum_loss(l_r.item(), l_u.item(), l_p.item(), weights_)};
  if (!std::isfinite(total.item())) return out;

  decoder_opt_.zero_grad();
  predictor_opt_.zero_grad();
  reid_opt_.zero_grad();
  tape.backward(total);
  decoder_opt_.step();
  predictor_opt_.step();
  reid_opt_.step();
  set_trainable(encoder_opt_.params(), true);
  return out;
}

// ---------------------------------------------------------------------------
// BatchSampler

BatchSampler::BatchSampler(std::size_t num_items, std::size_t batch_size,
                           std::uint64_t seed)
    : order_(num_items), batch_size_(batch_size), rng_(seed) {
  if (num_items == 0) throw ContractError("cannot sample from an empty set");
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  for (std::size_t i = 0; i < num_items; ++i) order_[i] = i;
  reshuffle();
}

void BatchSampler::reshuffle() {
  rng_.shuffle(order_);
  cursor_ = 0;
}

std::size_t BatchSampler::batches_per_pass() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ >= order_.size()) reshuffle();
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<std::size_t> out(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_finite(const BatchLosses& l, std::size_t epoch, std::size_t batch) {
  if (std::isfinite(l.reconstruction) && std::isfinite(l.utility) &&
      std::isfinite(l.reid) && std::isfinite(l.sum)) {
    return;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "non-finite loss at epoch %zu batch %zu (L_R=%g L_U=%g "
                "L_P=%g L_sum=%g)",
                epoch, batch, l.reconstruction, l.utility, l.reid, l.sum);
  throw DivergenceError(buf);
}

}  // namespace

std::vector<TraceWindow> evenly_spaced(const std::vector<TraceWindow>& windows,
                                       std::size_t limit) {
  if (limit == 0 || limit >= windows.size()) return windows;
  std::vector<TraceWindow> out;
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) {
    out.push_back(windows[i * windows.size() / limit]);
  }
  return out;
}

TrainResult train_adversarial(const DatasetSplit& split, const GridSpec& grid,
                              const NetConfig& net, const TrainConfig& config,
                              const LossWeights& weights) {
  config.validate();
  if (split.train.empty()) throw ContractError("empty train set");
  const LossWeights w = config.variant == ModelVariant::kUnweighted
                            ? LossWeights::model_one()
                            : weights;
  AdversarialTrainer trainer(ModelBundle::create(net, config.seed), w,
                             config.adam());
  BatchSampler sampler(split.train.size(), config.batch_size,
                       derive_seed(config.seed, 0x5A3D));
  const std::size_t steps = config.inner_steps > 0 ? config.inner_steps
                                                   : sampler.batches_per_pass();
  const std::vector<TraceWindow> log_windows =
      evenly_spaced(split.test, config.log_eval_limit);

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch;
    for (std::size_t k = 0; k < steps; ++k) {
      const auto idx = sampler.next();
      const EncodedBatch batch =
          encode_batch(split.train, idx, grid, net.time_slots);
      const BatchLosses enc = trainer.encoder_step(batch);
      check_finite(enc, epoch, k);
      check_finite(trainer.discriminator_step(batch), epoch, k);
      row.loss_reconstruction += enc.reconstruction / steps;
      row.loss_utility += enc.utility / steps;
      row.loss_reid += enc.reid / steps;
      row.loss_sum += enc.sum / steps;
    }
    if (!log_windows.empty()) {
      TaskNetworks nets = networks_of(trainer.bundle());
      nets.decoder = nullptr;  // accuracies only
      const TaskMetrics m =
          evaluate_networks(nets, log_windows, grid, net.time_slots);
      row.acc_utility_top1 = m.utility[0];
      row.acc_reid_top1 = m.privacy[0];
    }
    log.epochs.push_back(row);
  }
  set_trainable(trainer.bundle().encoder.tensors(), true);
  return {trainer.bundle(), std::move(log)};
}

// ---------------------------------------------------------------------------
// Evaluation

TaskNetworks networks_of(const ModelBundle& bundle) {
  return {&bundle.encoder,   &bundle.decoder,      &bundle.encoder,
          &bundle.predictor, &bundle.encoder,      &bundle.reidentifier};
}

std::vector<std::vector<int>> decoded_cells(const Tensor& decoded,
                                            std::size_t sl, std::size_t batch,
                                            std::size_t locations) {
  if (decoded.rank() != 2 || decoded.rows() != sl * batch ||
      decoded.cols() < locations) {
    throw ShapeError("decoded_cells: unexpected shape " +
                     shape_string(decoded.shape()));
  }
  std::vector<std::vector<int>> cells(batch, std::vector<int>(sl));
  for (std::size_t t = 0; t < sl; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = t * batch + b;
      std::size_t best = 0;
      for (std::size_t j = 1; j < locations; ++j) {
        if (decoded.at(row, j) > decoded.at(row, best)) best = j;
      }
      cells[b][t] = static_cast<int>(best);
    }
  }
  return cells;
}

TaskMetrics evaluate_networks(const TaskNetworks& nets,
                              std::span<const TraceWindow> windows,
                              const GridSpec& grid, std::size_t time_slots,
                              std::size_t chunk) {
  TaskMetrics m;
  if (windows.empty()) return m;
  const std::size_t n = windows.size();
  TopN util_hits{}, reid_hits{};
  std::vector<Trace> original, rebuilt;
  if (nets.decoder) {
    original.reserve(n);
    rebuilt.reserve(n);
  }
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const auto part = windows.subspan(begin, end - begin);
    const EncodedBatch batch = encode_batch(part, grid, time_slots);
    const double weight = static_cast<double>(part.size());
    Tape tape(Tape::Mode::kNoGrad);

    auto features = [&](const Encoder* enc, const Sequence* cached_for,
                        const Encoder* cached_enc) -> Sequence {
      if (cached_for && cached_enc == enc) return *cached_for;
      return encode(tape, *enc, batch.steps);
    };
    Sequence f_pred, f_reid, f_rec;
    if (nets.predictor) {
      f_pred = encode(tape, *nets.prediction_encoder, batch.steps);
      const TopN acc = topn_profile(
          predict_next(tape, *nets.predictor, f_pred), batch.next_locations);
      for (int i = 0; i < 3; ++i) util_hits[i] += acc[i] * weight;
    }
    if (nets.reidentifier) {
      f_reid = features(nets.reid_encoder, nets.predictor ? &f_pred : nullptr,
                        nets.prediction_encoder);
      const TopN acc = topn_profile(
          reidentify(tape, *nets.reidentifier, f_reid), batch.users);
      for (int i = 0; i < 3; ++i) reid_hits[i] += acc[i] * weight;
    }
    if (nets.decoder) {
      f_rec = features(nets.reconstruction_encoder,
                       nets.predictor ? &f_pred : nullptr,
                       nets.prediction_encoder);
      const Tensor x_hat = decode(tape, *nets.decoder, f_rec);
      const auto cells = decoded_cells(x_hat, batch.steps.size(), part.size(),
                                       grid.num_locations());
      for (std::size_t b = 0; b < part.size(); ++b) {
        Trace a, r;
        for (std::size_t t = 0; t < part[b].length(); ++t) {
          a.push_back(grid.cell_center(part[b].cells[t]));
          r.push_back(grid.cell_center(cells[b][t]));
        }
        original.push_back(std::move(a));
        rebuilt.push_back(std::move(r));
      }
    }
  }
  for (int i = 0; i < 3; ++i) {
    m.utility[i] = util_hits[i] / static_cast<double>(n);
    m.privacy[i] = reid_hits[i] / static_cast<double>(n);
  }
  if (nets.decoder) {
    m.euc = avg_euclidean(original, rebuilt);
    m.man = avg_manhattan(original, rebuilt);
  }
  return m;
}

}  // namespace mobpriv
