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

#include "mobpriv/nets.h"

#include <fstream>

#include "json.hpp"
#include "mobpriv/errors.h"

namespace mobpriv {

namespace {

Tensor uniform_tensor(Shape shape, double scale, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from(std::move(shape), std::move(v), true);
}

constexpr int kCheckpointVersion = 1;

}  // namespace

LstmParams LstmParams::create(std::size_t input_dim, std::size_t hidden_dim,
                              Rng& rng, double init_scale,
                              double forget_bias) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw ShapeError("LSTM dimensions must be positive");
  }
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_input = uniform_tensor({input_dim, 4 * hidden_dim}, init_scale, rng);
  p.w_hidden = uniform_tensor({hidden_dim, 4 * hidden_dim}, init_scale, rng);
  std::vector<double> b(4 * hidden_dim, 0.0);
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) b[j] = forget_bias;
  p.bias = Tensor::from({1, 4 * hidden_dim}, std::move(b), true);
  return p;
}

Sequence lstm_forward(Tape& tape, const LstmParams& params,
                      std::span<const Tensor> steps) {
  if (steps.empty()) throw ShapeError("lstm_forward: empty sequence");
  const std::size_t h = params.hidden_dim;
  Sequence hidden;
  hidden.reserve(steps.size());
  Tensor h_prev, c_prev;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Tensor& x = steps[t];
    if (x.rank() != 2 || x.cols() != params.input_dim) {
      throw ShapeError("lstm_forward: step " + std::to_string(t) + " has shape " +
                       shape_string(x.shape()) + ", expected [B x " +
                       std::to_string(params.input_dim) + "]");
    }
    Tensor z = affine(tape, x, params.w_input, params.bias);
    if (t > 0) z = add(tape, z, matmul(tape, h_prev, params.w_hidden));
    Tensor in_gate = sigmoid(tape, slice_cols(tape, z, 0, h));
    Tensor forget_gate = sigmoid(tape, slice_cols(tape, z, h, 2 * h));
    Tensor candidate = tanh(tape, slice_cols(tape, z, 2 * h, 3 * h));
    Tensor out_gate = sigmoid(tape, slice_cols(tape, z, 3 * h, 4 * h));
    Tensor c = mul(tape, in_gate, candidate);
    if (t > 0) c = add(tape, mul(tape, forget_gate, c_prev), c);
    h_prev = mul(tape, out_gate, tanh(tape, c));
    c_prev = c;
    hidden.push_back(h_prev);
  }
  return hidden;
}

std::string pooling_name(Pooling pooling) {
  return pooling == Pooling::kLastState ? "last" : "mean";
}

Pooling parse_pooling(const std::string& name) {
  if (name == "last") return Pooling::kLastState;
  if (name == "mean") return Pooling::kMeanPool;
  throw ContractError("unknown pooling '" + name + "' (expected last|mean)");
}

Encoder make_encoder(const NetConfig& config, Rng& rng) {
  return {LstmParams::create(config.input_dim(), config.encoder_hidden, rng,
                             config.init_scale, config.forget_bias)};
}

Decoder make_decoder(const NetConfig& config, Rng& rng) {
  Decoder d;
  d.lstm = LstmParams::create(config.feature_dim(), config.decoder_hidden, rng,
                              config.init_scale, config.forget_bias);
  d.w_out = uniform_tensor({config.decoder_hidden, config.input_dim()},
                           config.init_scale, rng);
  d.b_out = Tensor::zeros({1, config.input_dim()}, true);
  return d;
}

Head make_head(const NetConfig& config, std::size_t classes, Rng& rng) {
  if (classes == 0) throw ShapeError("classifier head needs >= 1 class");
  Head head;
  head.lstm = LstmParams::create(config.feature_dim(), config.head_hidden, rng,
                                 config.init_scale, config.forget_bias);
  head.w_out =
      uniform_tensor({config.head_hidden, classes}, config.init_scale, rng);
  head.b_out = Tensor::zeros({1, classes}, true);
  head.pooling = config.pooling;
  return head;
}

std::size_t encoder_parameter_count(const NetConfig& config) {
  return LstmParams::parameter_count(config.input_dim(), config.encoder_hidden);
}

std::size_t decoder_parameter_count(const NetConfig& config) {
  return LstmParams::parameter_count(config.feature_dim(),
                                     config.decoder_hidden) +
         config.decoder_hidden * config.input_dim() + config.input_dim();
}

std::size_t head_parameter_count(const NetConfig& config,
                                 std::size_t classes) {
  return LstmParams::parameter_count(config.feature_dim(), config.head_hidden) +
         config.head_hidden * classes + classes;
}

Sequence encode(Tape& tape, const Encoder& encoder,
                std::span<const Tensor> x) {
  return lstm_forward(tape, encoder.lstm, x);
}

Tensor decode(Tape& tape, const Decoder& decoder, const Sequence& features) {
  Sequence hidden = lstm_forward(tape, decoder.lstm, features);
  Tensor stacked = stack_rows(tape, hidden);
  return sigmoid(tape, affine(tape, stacked, decoder.w_out, decoder.b_out));
}

Tensor classify(Tape& tape, const Head& head, const Sequence& features) {
  Sequence hidden = lstm_forward(tape, head.lstm, features);
  Tensor pooled = head.pooling == Pooling::kLastState
                      ? hidden.back()
                      : mean_of(tape, hidden);
  return softmax(tape, affine(tape, pooled, head.w_out, head.b_out));
}

ModelBundle ModelBundle::create(const NetConfig& config, std::uint64_t seed) {
  if (config.locations == 0 || config.users == 0) {
    throw ShapeError("network config needs location and user class counts");
  }
  // One stream per network so widths of one network do not shift the
  // initialization of the others.
  ModelBundle b;
  b.config = config;
  Rng enc_rng(derive_seed(seed, 1)), dec_rng(derive_seed(seed, 2)),
      pred_rng(derive_seed(seed, 3)), reid_rng(derive_seed(seed, 4));
  b.encoder = make_encoder(config, enc_rng);
  b.decoder = make_decoder(config, dec_rng);
  b.predictor = make_head(config, config.locations, pred_rng);
  b.reidentifier = make_head(config, config.users, reid_rng);
  return b;
}

std::vector<std::pair<std::string, Tensor>> ModelBundle::named_tensors()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_lstm = [&](const std::string& prefix, const LstmParams& p) {
    out.emplace_back(prefix + ".w_input", p.w_input);
    out.emplace_back(prefix + ".w_hidden", p.w_hidden);
    out.emplace_back(prefix + ".bias", p.bias);
  };
  add_lstm("encoder.lstm", encoder.lstm);
  add_lstm("decoder.lstm", decoder.lstm);
  out.emplace_back("decoder.w_out", decoder.w_out);
  out.emplace_back("decoder.b_out", decoder.b_out);
  add_lstm("predictor.lstm", predictor.lstm);
  out.emplace_back("predictor.w_out", predictor.w_out);
  out.emplace_back("predictor.b_out", predictor.b_out);
  add_lstm("reidentifier.lstm", reidentifier.lstm);
  out.emplace_back("reidentifier.w_out", reidentifier.w_out);
  out.emplace_back("reidentifier.b_out", reidentifier.b_out);
  return out;
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t.size();
  return n;
}

void set_trainable(std::span<const Tensor> params, bool on) {
  for (Tensor t : params) t.set_requires_grad(on);
}

void save_checkpoint(const std::filesystem::path& path, const NetConfig& c,
                     const std::vector<std::pair<std::string, Tensor>>& named) {
  using nlohmann::json;
  json doc;
  doc["format"] = "mobpriv-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["config"] = {{"locations", c.locations},
                   {"time_slots", c.time_slots},
                   {"users", c.users},
                   {"encoder_hidden", c.encoder_hidden},
                   {"decoder_hidden", c.decoder_hidden},
                   {"head_hidden", c.head_hidden},
                   {"pooling", pooling_name(c.pooling)},
                   {"init_scale", c.init_scale},
                   {"forget_bias", c.forget_bias}};
  json tensors = json::array();
  for (const auto& [name, t] : named) {
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"data", std::vector<double>(t.values().begin(),
                                                    t.values().end())}});
  }
  doc["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << doc.dump();
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

void save_checkpoint(const std::filesystem::path& path,
                     const ModelBundle& bundle) {
  save_checkpoint(path, bundle.config, bundle.named_tensors());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "mobpriv-checkpoint" ||
      doc.value("version", 0) != kCheckpointVersion) {
    throw FormatError(path.string() + ": not a version " +
                      std::to_string(kCheckpointVersion) + " checkpoint");
  }
  try {
    const json& jc = doc.at("config");
    NetConfig c;
    c.locations = jc.at("locations");
    c.time_slots = jc.at("time_slots");
    c.users = jc.at("users");
    c.encoder_hidden = jc.at("encoder_hidden");
    c.decoder_hidden = jc.at("decoder_hidden");
    c.head_hidden = jc.at("head_hidden");
    c.pooling = parse_pooling(jc.at("pooling"));
    c.init_scale = jc.at("init_scale");
    c.forget_bias = jc.at("forget_bias");
    ModelBundle bundle = ModelBundle::create(c, 0);
    auto named = bundle.named_tensors();
    const json& tensors = doc.at("tensors");
    if (tensors.size() != named.size()) {
      throw FormatError(path.string() + ": expected " +
                        std::to_string(named.size()) + " tensors");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      const json& jt = tensors[i];
      auto& [name, t] = named[i];
      if (jt.at("name") != name || jt.at("shape").get<Shape>() != t.shape()) {
        throw FormatError(path.string() + ": tensor " + name +
                          " missing or mis-shaped");
      }
      const auto data = jt.at("data").get<std::vector<double>>();
      if (data.size() != t.size()) {
        throw FormatError(path.string() + ": tensor " + name +
                          " has wrong length");
      }
      std::copy(data.begin(), data.end(), t.mutable_values().begin());
    }
    return bundle;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mobpriv
