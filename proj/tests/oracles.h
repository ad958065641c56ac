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

#ifndef MOBPRIV_TESTS_ORACLES_H_
#define MOBPRIV_TESTS_ORACLES_H_

// Brute-force reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "mobpriv/baselines.h"
#include "mobpriv/eval.h"
#include "mobpriv/random.h"
#include "mobpriv/tensor.h"

namespace mobpriv::testing {

// Sorts each row's class indices by (probability desc, index asc) and
// checks the label's position.
inline double topn_oracle(const Tensor& probs, std::span<const int> labels,
                          std::size_t n) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    std::vector<std::size_t> order(probs.cols());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double pa = probs.at(r, a), pb = probs.at(r, b);
      return pa != pb ? pa > pb : a < b;
    });
    for (std::size_t k = 0; k < n; ++k) {
      if (order[k] == static_cast<std::size_t>(labels[r])) ++hits;
    }
  }
  return static_cast<double>(hits) / probs.rows();
}

inline double distance_oracle(std::span<const Trace> x,
                              std::span<const Trace> y, bool l1) {
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> diff;
    for (std::size_t t = 0; t < x[i].size(); ++t) {
      diff.push_back(x[i][t].lat - y[i][t].lat);
      diff.push_back(x[i][t].lon - y[i][t].lon);
    }
    double norm = 0;
    for (double d : diff) norm += l1 ? std::abs(d) : d * d;
    total += l1 ? norm : std::sqrt(norm);
  }
  return total / x.size();
}

inline double dilation_oracle(const SpannerGraph& g) {
  const std::size_t n = g.vertices.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const SpannerEdge& e : g.edges) {
    adj[e.u].push_back({e.v, e.weight});
    adj[e.v].push_back({e.u, e.weight});
  }
  double worst = 0;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
    d[s] = 0;
    q.push({0, s});
    while (!q.empty()) {
      auto [dist, u] = q.top();
      q.pop();
      if (dist > d[u]) continue;
      for (auto [v, w] : adj[u]) {
        if (d[u] + w < d[v]) {
          d[v] = d[u] + w;
          q.push({d[v], v});
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s) continue;
      const Point2 a = g.vertices[s], b = g.vertices[t];
      worst = std::max(worst, d[t] / std::hypot(a.x - b.x, a.y - b.y));
    }
  }
  return worst;
}

// Keeps points no other point beats in one coordinate while matching it in
// the other; sorted by (utility, privacy, label).
inline std::vector<ParetoPoint> pareto_oracle(
    std::span<const ParetoPoint> pts) {
  std::vector<ParetoPoint> out;
  for (const ParetoPoint& p : pts) {
    bool beaten = false;
    for (const ParetoPoint& q : pts) {
      const bool ge = q.utility >= p.utility && q.privacy >= p.privacy;
      const bool gt = q.utility > p.utility || q.privacy > p.privacy;
      beaten = beaten || (ge && gt);
    }
    if (!beaten) out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.utility, a.privacy, a.label) <
           std::tie(b.utility, b.privacy, b.label);
  });
  return out;
}

inline SpannerGraph random_spanner(Rng& rng) {
  SpannerGraph g;
  const std::size_t n = 2 + rng.uniform_int(11);
  for (std::size_t i = 0; i < n; ++i) {
    g.vertices.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  }
  auto dist = [&](std::size_t a, std::size_t b) {
    return std::hypot(g.vertices[a].x - g.vertices[b].x,
                      g.vertices[a].y - g.vertices[b].y);
  };
  // A random tree keeps it connected; extra edges vary the structure.
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t j = rng.uniform_int(i);
    g.edges.push_back({i, j, dist(i, j)});
  }
  const std::size_t extra = rng.uniform_int(n + 1);
  for (std::size_t k = 0; k < extra; ++k) {
    const std::size_t a = rng.uniform_int(n), b = rng.uniform_int(n);
    if (a != b) g.edges.push_back({a, b, dist(a, b) * rng.uniform(1, 2)});
  }
  return g;
}

// Probabilities with deliberate ties: values on a coarse lattice.
inline Tensor random_probs(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = static_cast<double>(rng.uniform_int(6)) / 5;
  return Tensor::from({rows, cols}, std::move(v));
}

inline std::vector<Trace> random_traces(std::size_t n, std::size_t len,
                                        Rng& rng) {
  std::vector<Trace> out(n);
  for (Trace& t : out) {
    for (std::size_t i = 0; i < len; ++i) {
      t.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
    }
  }
  return out;
}

inline std::vector<ParetoPoint> random_points(std::size_t n, Rng& rng) {
  std::vector<ParetoPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    // A coarse lattice produces duplicates and shared coordinates.
    pts.push_back({static_cast<double>(rng.uniform_int(8)) / 7,
                   static_cast<double>(rng.uniform_int(8)) / 7,
                   "p" + std::to_string(i)});
  }
  return pts;
}

}  // namespace mobpriv::testing

#endif  // MOBPRIV_TESTS_ORACLES_H_
