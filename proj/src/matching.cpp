#include "visa/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "visa/error.hpp"

namespace visa::matching {

void Permutation::validate() const {
  std::vector<int> sorted = map;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < size(); ++i)
    if (sorted[i] != i) throw DimensionError("not a permutation");
}

std::pair<Permutation, double> hungarian(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DimensionError("cost matrix must be square");
  if (!cost.allFinite()) throw DimensionError("cost matrix must be finite");

  // Shortest augmenting path with potentials; 1-based internal indexing.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  Permutation perm;
  perm.map.assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j]) perm.map[p[j] - 1] = j - 1;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost(i, perm.map[i]);
  return {perm, total};
}

namespace {

double sym_kl(const psa::SlotState& a, int i, const psa::SlotState& b, int j) {
  double acc = 0.0;
  for (int c = 0; c < a.dim(); ++c) {
    const double va = a.sigma2(i, c), vb = b.sigma2(j, c);
    const double diff = a.mu(i, c) - b.mu(j, c);
    acc += 0.5 * (va / vb + vb / va - 2.0) + 0.5 * diff * diff * (1.0 / va + 1.0 / vb);
  }
  return acc;
}

}  // namespace

Mat slot_cost(const psa::SlotState& base, const psa::SlotState& other, CostKind kind) {
  if (base.k() != other.k() || base.dim() != other.dim())
    throw DimensionError("slot states disagree on K or d");
  const int k = base.k();
  Mat cost(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (base.is_inactive(i) || other.is_inactive(j)) {
        cost(i, j) = kInactivePenalty;
      } else if (kind == CostKind::squared_euclidean) {
        cost(i, j) = (base.mu.row(i) - other.mu.row(j)).squaredNorm();
      } else {
        cost(i, j) = sym_kl(base, i, other, j);
      }
    }
  }
  return cost;
}

psa::SlotState permute(const psa::SlotState& s, const Permutation& p) {
  if (p.size() != s.k()) throw DimensionError("permutation size mismatch");
  psa::SlotState out;
  out.mu.resize(s.k(), s.dim());
  out.sigma2.resize(s.k(), s.dim());
  out.pi.resize(s.k());
  out.inactive.assign(s.k(), 0);
  for (int i = 0; i < s.k(); ++i) {
    const int j = p.map[i];
    out.mu.row(i) = s.mu.row(j);
    out.sigma2.row(i) = s.sigma2.row(j);
    out.pi[i] = s.pi[j];
    out.inactive[i] = s.is_inactive(j) ? 1 : 0;
  }
  return out;
}

AlignResult align_to_base(const std::vector<psa::SlotState>& states, int base_index,
                          CostKind kind) {
  if (states.empty()) throw DimensionError("no states to align");
  if (base_index < 0 || base_index >= static_cast<int>(states.size()))
    throw DimensionError("base index out of range");
  const auto& base = states[base_index];
  AlignResult res;
  res.states.reserve(states.size());
  res.permutations.reserve(states.size());
  for (int v = 0; v < static_cast<int>(states.size()); ++v) {
    if (v == base_index) {
      res.states.push_back(states[v]);
      res.permutations.push_back(Permutation::identity(base.k()));
      continue;
    }
    auto [perm, total] = hungarian(slot_cost(base, states[v], kind));
    (void)total;
    res.states.push_back(permute(states[v], perm));
    res.permutations.push_back(perm);
  }
  return res;
}

}  // namespace visa::matching
