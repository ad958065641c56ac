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

#ifndef MOBPRIV_ERRORS_H_
#define MOBPRIV_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mobpriv {

// Tensor shapes disagree with an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An index (class label, cell id, ...) is outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A precondition on the caller was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A coordinate falls outside the grid bounding box.
class OutOfBoundsError : public std::out_of_range {
 public:
  OutOfBoundsError(const std::string& what, double lat, double lon)
      : std::out_of_range(what), lat_(lat), lon_(lon) {}
  double lat() const { return lat_; }
  double lon() const { return lon_; }

 private:
  double lat_;
  double lon_;
};

// Malformed input file or document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mobpriv

#endif  // MOBPRIV_ERRORS_H_
