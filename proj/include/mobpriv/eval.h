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

#ifndef MOBPRIV_EVAL_H_
#define MOBPRIV_EVAL_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mobpriv/tensor.h"
#include "mobpriv/trajdata.h"

namespace mobpriv {

// Fraction of rows whose label is among the n most probable classes. Ties
// rank the lower class index first.
double topn_accuracy(const Tensor& probs, std::span<const int> labels,
                     std::size_t n);

// Top-1/3/5 accuracies; n is capped at the class count.
using TopN = std::array<double, 3>;
inline constexpr std::array<std::size_t, 3> kTopN = {1, 3, 5};
TopN topn_profile(const Tensor& probs, std::span<const int> labels);

// A trace as a sequence of coordinates.
using Trace = std::vector<LatLon>;

// Mean over traces of the L2 norm of the flattened coordinate difference.
double avg_euclidean(std::span<const Trace> x, std::span<const Trace> x_hat);
// Same aggregation with the L1 norm.
double avg_manhattan(std::span<const Trace> x, std::span<const Trace> x_hat);

// Relative change against the unprotected reference, in percent. Utility
// loss is negative when accuracy drops; privacy gain is positive when
// re-identification accuracy drops.
double utility_loss_pct(double optimal, double model);
double privacy_gain_pct(double optimal, double model);

struct EvalReport {
  std::string model;
  double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0;
  std::size_t sl = 0;
  std::int64_t dt = 0;
  std::uint64_t seed = 0;
  double euc = 0.0;
  double man = 0.0;
  TopN utility{};
  TopN privacy{};  // re-identification accuracy
  TopN utility_loss_pct{};
  TopN privacy_gain_pct{};
  double tradeoff_pct = 0.0;

  // Fills the percentage columns from the reference accuracies.
  void compare_to(const TopN& optimal_utility, const TopN& optimal_privacy);
};

// utility_loss_pct(top-1) + privacy_gain_pct(top-1).
double tradeoff(const EvalReport& report);

// Fixed column order of results.csv.
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);
EvalReport parse_report_csv_row(const std::string& line);

struct ParetoPoint {
  double utility = 0.0;  // top-1 prediction accuracy
  double privacy = 0.0;  // 1 - top-1 re-identification accuracy
  std::string label;
};

// Points not strictly dominated by another, sorted by utility ascending.
std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points);

// true when a is >= b in both coordinates and > in at least one.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

}  // namespace mobpriv

#endif  // MOBPRIV_EVAL_H_
