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

#ifndef MOBPRIV_NETS_H_
#define MOBPRIV_NETS_H_

// LSTM building blocks and the four networks of the adversarial encoder:
// the shared feature encoder, the reconstruction decoder, the next-location
// head and the user re-identification head.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mobpriv/random.h"
#include "mobpriv/tensor.h"

namespace mobpriv {

// One [batch × dim] tensor per time step.
using Sequence = std::vector<Tensor>;

// Gate weights are packed column-wise in the order input, forget,
// candidate, output: w_input [in × 4h], w_hidden [h × 4h], bias [1 × 4h].
// Column block k of [w_input; w_hidden] is that gate's (in+h) × h matrix.
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor w_input;
  Tensor w_hidden;
  Tensor bias;

  // Uniform(-init_scale, init_scale) weights, zero biases except the forget
  // gate which starts at forget_bias.
  static LstmParams create(std::size_t input_dim, std::size_t hidden_dim,
                           Rng& rng, double init_scale = 0.08,
                           double forget_bias = 1.0);
  static std::size_t parameter_count(std::size_t input_dim,
                                     std::size_t hidden_dim) {
    return 4 * hidden_dim * (input_dim + hidden_dim) + 4 * hidden_dim;
  }
  std::vector<Tensor> tensors() const { return {w_input, w_hidden, bias}; }
};

// Runs the recurrence from zero hidden and cell state over `steps` and
// returns the hidden state of every step.
Sequence lstm_forward(Tape& tape, const LstmParams& params,
                      std::span<const Tensor> steps);

enum class Pooling { kLastState, kMeanPool };

std::string pooling_name(Pooling pooling);
Pooling parse_pooling(const std::string& name);

struct NetConfig {
  std::size_t locations = 0;   // Y
  std::size_t time_slots = 24;  // T
  std::size_t users = 0;       // Z
  std::size_t encoder_hidden = 100;
  std::size_t decoder_hidden = 100;
  std::size_t head_hidden = 100;
  Pooling pooling = Pooling::kLastState;
  double init_scale = 0.08;
  double forget_bias = 1.0;

  std::size_t input_dim() const { return locations + time_slots; }
  std::size_t feature_dim() const { return encoder_hidden; }
};

struct Encoder {
  LstmParams lstm;
  std::vector<Tensor> tensors() const { return lstm.tensors(); }
};

struct Decoder {
  LstmParams lstm;
  Tensor w_out;  // [decoder_hidden × input_dim]
  Tensor b_out;  // [1 × input_dim]
  std::vector<Tensor> tensors() const {
    return {lstm.w_input, lstm.w_hidden, lstm.bias, w_out, b_out};
  }
};

// Sequence model over features followed by a softmax classifier.
struct Head {
  LstmParams lstm;
  Tensor w_out;  // [head_hidden × classes]
  Tensor b_out;  // [1 × classes]
  Pooling pooling = Pooling::kLastState;
  std::vector<Tensor> tensors() const {
    return {lstm.w_input, lstm.w_hidden, lstm.bias, w_out, b_out};
  }
};

Encoder make_encoder(const NetConfig& config, Rng& rng);
Decoder make_decoder(const NetConfig& config, Rng& rng);
Head make_head(const NetConfig& config, std::size_t classes, Rng& rng);

std::size_t encoder_parameter_count(const NetConfig& config);
std::size_t decoder_parameter_count(const NetConfig& config);
std::size_t head_parameter_count(const NetConfig& config,
                                 std::size_t classes);

// Per-step hidden states of the encoder LSTM: the shared features.
Sequence encode(Tape& tape, const Encoder& encoder, std::span<const Tensor> x);
// LSTM over the features, per-step affine projection and sigmoid. Output is
// [(SL·B) × input_dim], step-major like EncodedBatch::stacked.
Tensor decode(Tape& tape, const Decoder& decoder, const Sequence& features);
// Softmax distribution [B × classes] from the pooled head LSTM state.
Tensor classify(Tape& tape, const Head& head, const Sequence& features);
inline Tensor predict_next(Tape& tape, const Head& head,
                           const Sequence& features) {
  return classify(tape, head, features);
}
inline Tensor reidentify(Tape& tape, const Head& head,
                         const Sequence& features) {
  return classify(tape, head, features);
}

// Parameter sets of the encoder, decoder, prediction head and
// re-identification head.
struct ModelBundle {
  NetConfig config;
  Encoder encoder;
  Decoder decoder;
  Head predictor;
  Head reidentifier;

  static ModelBundle create(const NetConfig& config, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::size_t parameter_count() const;
};

void set_trainable(std::span<const Tensor> params, bool on);

// JSON container of named parameter arrays; doubles round-trip exactly.
void save_checkpoint(const std::filesystem::path& path,
                     const ModelBundle& bundle);
// Any named tensor set built from `config`; only bundles can be loaded back.
void save_checkpoint(const std::filesystem::path& path, const NetConfig& config,
                     const std::vector<std::pair<std::string, Tensor>>& named);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace mobpriv

#endif  // MOBPRIV_NETS_H_
