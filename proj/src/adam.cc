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

#include "mobpriv/adam.h"

#include <cmath>

#include "mobpriv/errors.h"

namespace mobpriv {

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const AdamConfig& config) {
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " +
                     std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size()) {
      throw ShapeError("adam_step: moment buffer size mismatch for " +
                       shape_string(p.shape()));
    }
    if (!p.has_grad()) {
      // Zero gradient still decays the moments.
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] *= config.beta1;
        v[i] *= config.beta2;
      }
    } else {
      const auto g = p.grad();
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      }
    }
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace mobpriv
