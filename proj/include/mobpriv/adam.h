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

#ifndef MOBPRIV_ADAM_H_
#define MOBPRIV_ADAM_H_

#include <cstdint>
#include <vector>

#include "mobpriv/tensor.h"

namespace mobpriv {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers for one parameter set, zero until the first
// step.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `params` from their accumulated
// gradients. Parameters without a gradient are treated as having zero
// gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state,
               const AdamConfig& config);

// Binds a parameter set to its optimizer state.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config)
      : params_(std::move(params)), config_(config) {}

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }
  void step() { adam_step(params_, state_, config_); }

  const AdamState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace mobpriv

#endif  // MOBPRIV_ADAM_H_
