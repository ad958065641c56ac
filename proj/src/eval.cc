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

#include "mobpriv/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mobpriv/errors.h"

namespace mobpriv {

double topn_accuracy(const Tensor& probs, std::span<const int> labels,
                     std::size_t n) {
  if (probs.rank() != 2) {
    throw ShapeError("topn_accuracy expects [batch x classes], got " +
                     shape_string(probs.shape()));
  }
  const std::size_t batch = probs.rows(), classes = probs.cols();
  if (n < 1 || n > classes) {
    throw ContractError("top-n needs 1 <= n <= " + std::to_string(classes) +
                        ", got n = " + std::to_string(n));
  }
  if (labels.size() != batch) {
    throw ShapeError("topn_accuracy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(batch) + " rows");
  }
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw IndexError("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const double p = probs.at(r, label);
    // Rank of the label under (probability desc, index asc).
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < classes && ahead < n; ++j) {
      const double q = probs.at(r, j);
      if (q > p || (q == p && j < static_cast<std::size_t>(label))) ++ahead;
    }
    if (ahead < n) ++hits;
  }
  return batch == 0 ? 0.0 : static_cast<double>(hits) / batch;
}

TopN topn_profile(const Tensor& probs, std::span<const int> labels) {
  TopN out{};
  for (std::size_t i = 0; i < kTopN.size(); ++i) {
    out[i] = topn_accuracy(probs, labels, std::min(kTopN[i], probs.cols()));
  }
  return out;
}

namespace {

template <typename Norm>
double average_trace_distance(std::span<const Trace> x,
                              std::span<const Trace> x_hat, Norm norm) {
  if (x.size() != x_hat.size()) {
    throw ShapeError("distance: " + std::to_string(x.size()) + " vs " +
                     std::to_string(x_hat.size()) + " traces");
  }
  if (x.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != x_hat[i].size()) {
      throw ShapeError("distance: trace " + std::to_string(i) +
                       " lengths differ");
    }
    total += norm(x[i], x_hat[i]);
  }
  return total / static_cast<double>(x.size());
}

}  // namespace

double avg_euclidean(std::span<const Trace> x, std::span<const Trace> x_hat) {
  return average_trace_distance(x, x_hat, [](const Trace& a, const Trace& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double dl = a[k].lat - b[k].lat, dn = a[k].lon - b[k].lon;
      s += dl * dl + dn * dn;
    }
    return std::sqrt(s);
  });
}

double avg_manhattan(std::span<const Trace> x, std::span<const Trace> x_hat) {
  return average_trace_distance(x, x_hat, [](const Trace& a, const Trace& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      s += std::abs(a[k].lat - b[k].lat) + std::abs(a[k].lon - b[k].lon);
    }
    return s;
  });
}

double utility_loss_pct(double optimal, double model) {
  if (!(optimal > 0.0)) {
    throw ContractError("relative change undefined for reference accuracy " +
                        std::to_string(optimal));
  }
  return (model - optimal) / optimal * 100.0;
}

double privacy_gain_pct(double optimal, double model) {
  if (!(optimal > 0.0)) {
    throw ContractError("relative change undefined for reference accuracy " +
                        std::to_string(optimal));
  }
  return (optimal - model) / optimal * 100.0;
}

void EvalReport::compare_to(const TopN& optimal_utility,
                            const TopN& optimal_privacy) {
  for (std::size_t i = 0; i < 3; ++i) {
    utility_loss_pct[i] =
        mobpriv::utility_loss_pct(optimal_utility[i], utility[i]);
    privacy_gain_pct[i] =
        mobpriv::privacy_gain_pct(optimal_privacy[i], privacy[i]);
  }
  tradeoff_pct = tradeoff(*this);
}

double tradeoff(const EvalReport& report) {
  return report.utility_loss_pct[0] + report.privacy_gain_pct[0];
}

std::string report_csv_header() {
  return "model,lambda1,lambda2,lambda3,SL,dt,seed,euc,man,u_top1,u_top3,"
         "u_top5,p_top1,p_top3,p_top5,u_loss_pct,p_gain_pct,tradeoff_pct";
}

std::string report_csv_row(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%.4f,%.4f,%.4f,%zu,%lld,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,"
                "%.6f,%.6f,%.6f,%.4f,%.4f,%.4f",
                r.model.c_str(), r.lambda1, r.lambda2, r.lambda3, r.sl,
                static_cast<long long>(r.dt),
                static_cast<unsigned long long>(r.seed), r.euc, r.man,
                r.utility[0], r.utility[1], r.utility[2], r.privacy[0],
                r.privacy[1], r.privacy[2], r.utility_loss_pct[0],
                r.privacy_gain_pct[0], r.tradeoff_pct);
  return buf;
}

EvalReport parse_report_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) f.push_back(cell);
  if (f.size() != 18) {
    throw FormatError("results row has " + std::to_string(f.size()) +
                      " fields, expected 18: " + line);
  }
  try {
    EvalReport r;
    r.model = f[0];
    r.lambda1 = std::stod(f[1]);
    r.lambda2 = std::stod(f[2]);
    r.lambda3 = std::stod(f[3]);
    r.sl = std::stoul(f[4]);
    r.dt = std::stoll(f[5]);
    r.seed = std::stoull(f[6]);
    r.euc = std::stod(f[7]);
    r.man = std::stod(f[8]);
    for (int i = 0; i < 3; ++i) {
      r.utility[i] = std::stod(f[9 + i]);
      r.privacy[i] = std::stod(f[12 + i]);
    }
    r.utility_loss_pct[0] = std::stod(f[15]);
    r.privacy_gain_pct[0] = std::stod(f[16]);
    r.tradeoff_pct = std::stod(f[17]);
    return r;
  } catch (const std::exception& e) {
    throw FormatError("unparseable results row: " + line);
  }
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.utility >= b.utility && a.privacy >= b.privacy &&
         (a.utility > b.utility || a.privacy > b.privacy);
}

std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points) {
  for (const ParetoPoint& p : points) {
    if (p.utility < 0.0 || p.utility > 1.0 || p.privacy < 0.0 ||
        p.privacy > 1.0) {
      throw ContractError("Pareto coordinates must lie in [0, 1]");
    }
  }
  // Sort by utility desc (privacy desc on ties); a point survives when its
  // privacy beats every point of higher or equal utility seen so far.
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].utility != points[b].utility) {
      return points[a].utility > points[b].utility;
    }
    return points[a].privacy > points[b].privacy;
  });
  std::vector<ParetoPoint> front;
  double best_privacy = -1.0;
  double best_utility = 2.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const ParetoPoint& p = points[order[k]];
    const bool duplicate_of_kept =
        !front.empty() && p.utility == best_utility &&
        p.privacy == best_privacy;
    if (p.privacy > best_privacy || duplicate_of_kept) {
      front.push_back(p);
      best_privacy = p.privacy;
      best_utility = p.utility;
    }
  }
  std::reverse(front.begin(), front.end());
  return front;
}

}  // namespace mobpriv
