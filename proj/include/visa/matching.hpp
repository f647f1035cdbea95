#pragma once

#include <utility>
#include <vector>

#include "visa/psa.hpp"
#include "visa/types.hpp"

namespace visa::matching {

// Bijection on {0..K-1}. map[i] = j reads "base slot i pairs with slot j".
struct Permutation {
  std::vector<int> map;

  static Permutation identity(int k) {
    Permutation p;
    p.map.resize(k);
    for (int i = 0; i < k; ++i) p.map[i] = i;
    return p;
  }
  int size() const { return static_cast<int>(map.size()); }
  bool is_identity() const {
    for (int i = 0; i < size(); ++i)
      if (map[i] != i) return false;
    return true;
  }
  Permutation inverse() const {
    Permutation p;
    p.map.assign(map.size(), 0);
    for (int i = 0; i < size(); ++i) p.map[map[i]] = i;
    return p;
  }
  void validate() const;
};

// Exact minimum-cost assignment on a square cost matrix (shortest
// augmenting path, O(K^3)). Ties resolve to the lowest column index.
std::pair<Permutation, double> hungarian(const Mat& cost);

enum class CostKind { squared_euclidean, symmetric_kl };

inline constexpr double kInactivePenalty = 1e12;

// Pairwise slot-matching costs between two states. Pairs touching an
// inactive slot cost kInactivePenalty so active slots match first.
Mat slot_cost(const psa::SlotState& base, const psa::SlotState& other,
              CostKind kind = CostKind::squared_euclidean);

// Slot i of the result is slot p.map[i] of the input.
psa::SlotState permute(const psa::SlotState& s, const Permutation& p);

struct AlignResult {
  std::vector<psa::SlotState> states;     // same order as input, base untouched
  std::vector<Permutation> permutations;  // applied permutation per state
};

// Permutes every state so its slots line up with the base state's.
AlignResult align_to_base(const std::vector<psa::SlotState>& states, int base_index,
                          CostKind kind = CostKind::squared_euclidean);

}  // namespace visa::matching
