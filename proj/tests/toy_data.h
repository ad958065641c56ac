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

#ifndef MOBPRIV_TESTS_TOY_DATA_H_
#define MOBPRIV_TESTS_TOY_DATA_H_

#include <cstdint>
#include <vector>

#include "mobpriv/adversarial.h"
#include "mobpriv/nets.h"
#include "mobpriv/trajdata.h"

namespace mobpriv::testing {

struct ToyData {
  SyntheticConfig synthetic;
  GridSpec grid;
  DatasetSplit split;
  NetConfig net;
};

inline ToyData make_toy(const SyntheticConfig& synthetic, std::size_t sl,
                        std::size_t hidden = 8) {
  const Streams streams = generate_synthetic(synthetic);
  const GridSpec grid = synthetic.grid();
  DatasetSplit split =
      split_windows(make_windows(streams, sl), streams.size(), 0.8);
  NetConfig net;
  net.locations = grid.num_locations();
  net.users = streams.size();
  net.encoder_hidden = net.decoder_hidden = net.head_hidden = hidden;
  return {synthetic, grid, std::move(split), net};
}

// Two users on a 4×4 grid who never share a cell.
inline SyntheticConfig two_disjoint_users(std::size_t records = 300) {
  SyntheticConfig c;
  c.num_users = 2;
  c.n_rows = c.n_cols = 4;
  c.anchors = {{0, 1}, {15, 14}};
  c.kappa = 1e12;
  c.neighbor_weight = 0.0;
  c.records_per_user = records;
  return c;
}

inline TrainConfig quick_train(std::size_t epochs, std::size_t inner,
                               std::uint64_t seed = 1) {
  TrainConfig t;
  t.batch_size = 32;
  t.epochs = epochs;
  t.inner_steps = inner;
  t.lr = 0.01;
  t.seed = seed;
  return t;
}

}  // namespace mobpriv::testing

#endif  // MOBPRIV_TESTS_TOY_DATA_H_
