#pragma once

#include <stdexcept>
#include <string>

namespace visa {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// All component densities underflowed for one input point.
struct DegeneratePointError : std::runtime_error {
  explicit DegeneratePointError(int index)
      : std::runtime_error("degenerate point: all component densities vanish at index " +
                           std::to_string(index)),
        point_index(index) {}
  int point_index;
};

// Alignment or least-squares problem is rank deficient.
struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fewer than three active, non-collinear correspondences.
struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace visa
