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

#ifndef MOBPRIV_ADVERSARIAL_H_
#define MOBPRIV_ADVERSARIAL_H_

// Adversarial training of a privacy-preserving feature encoder. The encoder
// minimizes
//
//   L_sum = -λ1·L_R + λ2·L_U - λ3·L_P
//
// while the reconstruction decoder, next-location head and
// re-identification head each minimize their own loss on the current
// features. Updates alternate per mini-batch: encoder first (heads frozen),
// then the three heads (encoder frozen).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mobpriv/adam.h"
#include "mobpriv/eval.h"
#include "mobpriv/nets.h"
#include "mobpriv/tensor.h"
#include "mobpriv/trajdata.h"

namespace mobpriv {

// Multipliers on the reconstruction (λ1), utility (λ2) and
// re-identification (λ3) losses.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;

  // Unweighted variant: every unit counts equally.
  static LossWeights model_one() { return {1.0, 1.0, 1.0}; }
  void validate() const;
};

enum class ModelVariant { kUnweighted, kWeighted };

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  // Mini-batches per epoch; 0 means one full pass over the train set.
  std::size_t inner_steps = 0;
  double lr = 0.001;
  std::uint64_t seed = 1;
  ModelVariant variant = ModelVariant::kWeighted;
  // Test windows scored for the per-epoch log; 0 scores all of them.
  std::size_t log_eval_limit = 0;

  AdamConfig adam() const {
    AdamConfig c;
    c.lr = lr;
    return c;
  }
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_reconstruction = 0.0;
  double loss_utility = 0.0;
  double loss_reid = 0.0;
  double loss_sum = 0.0;
  double acc_utility_top1 = 0.0;
  double acc_reid_top1 = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

// L_R: mean squared reconstruction error.
Tensor loss_reconstruction(Tape& tape, const Tensor& x, const Tensor& x_hat);
// L_U: cross entropy of the next-location distribution.
Tensor loss_utility(Tape& tape, const Tensor& pred_dist,
                    std::span<const int> next_locations);
// L_P: cross entropy of the user distribution.
Tensor loss_reid(Tape& tape, const Tensor& reid_dist,
                 std::span<const int> users);
Tensor sum_loss(Tape& tape, const Tensor& l_r, const Tensor& l_u,
                const Tensor& l_p, const LossWeights& w);
double sum_loss(double l_r, double l_u, double l_p, const LossWeights& w);

struct BatchLosses {
  double reconstruction = 0.0;
  double utility = 0.0;
  double reid = 0.0;
  double sum = 0.0;
};

// Owns a bundle and one Adam state per parameter set.
class AdversarialTrainer {
 public:
  AdversarialTrainer(ModelBundle bundle, LossWeights weights,
                     const AdamConfig& adam);

  // Updates the encoder on L_sum; decoder and heads stay fixed.
  BatchLosses encoder_step(const EncodedBatch& batch);
  // Updates decoder, prediction head and re-identification head on their
  // own losses over features of the current encoder; the encoder stays
  // fixed.
  BatchLosses discriminator_step(const EncodedBatch& batch);

  const ModelBundle& bundle() const { return bundle_; }
  const LossWeights& weights() const { return weights_; }

 private:
  ModelBundle bundle_;
  LossWeights weights_;
  Adam encoder_opt_;
  Adam decoder_opt_;
  Adam predictor_opt_;
  Adam reid_opt_;
};

// Shuffled mini-batch positions; reshuffles on every pass.
class BatchSampler {
 public:
  BatchSampler(std::size_t num_items, std::size_t batch_size,
               std::uint64_t seed);
  std::vector<std::size_t> next();
  std::size_t batches_per_pass() const;

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct TrainResult {
  ModelBundle bundle;
  TrainLog log;
};

TrainResult train_adversarial(const DatasetSplit& split, const GridSpec& grid,
                              const NetConfig& net, const TrainConfig& config,
                              const LossWeights& weights);

// Accuracy and reconstruction distance of a set of task networks on
// `windows`. The three pipelines may share one encoder.
struct TaskMetrics {
  TopN utility{};
  TopN privacy{};
  double euc = 0.0;
  double man = 0.0;
};

struct TaskNetworks {
  const Encoder* reconstruction_encoder = nullptr;
  const Decoder* decoder = nullptr;
  const Encoder* prediction_encoder = nullptr;
  const Head* predictor = nullptr;
  const Encoder* reid_encoder = nullptr;
  const Head* reidentifier = nullptr;
};

TaskNetworks networks_of(const ModelBundle& bundle);

TaskMetrics evaluate_networks(const TaskNetworks& nets,
                              std::span<const TraceWindow> windows,
                              const GridSpec& grid, std::size_t time_slots,
                              std::size_t chunk = 512);

// Up to `limit` windows at an even stride; 0 keeps all of them.
std::vector<TraceWindow> evenly_spaced(const std::vector<TraceWindow>& windows,
                                       std::size_t limit);

// Argmax cells of the location block of a decoded [(SL·B) × (Y+T)] output.
std::vector<std::vector<int>> decoded_cells(const Tensor& decoded,
                                            std::size_t sl,
                                            std::size_t batch,
                                            std::size_t locations);

}  // namespace mobpriv

#endif  // MOBPRIV_ADVERSARIAL_H_
