#pragma once

#include <vector>

#include "visa/matching.hpp"
#include "visa/types.hpp"

namespace visa::metrics {

struct AffineFit {
  Mat h;           // d_in x d_out
  Vec a;           // d_out
  double residual; // mean squared residual per row

  Mat apply(const Mat& x) const {
    Mat y = x * h;
    y.rowwise() += a.transpose();
    return y;
  }
};

// Least-squares fit of Y ~= X H + 1 a^T. Exact when an exact affine
// relation exists; throws RankError when the rows of X do not affinely
// span their space.
AffineFit fit_affine_ls(const Mat& x, const Mat& y);

// Per-slot evaluation series: one row per evaluation sample (scene), with
// a validity mask since occluded objects leave gaps. All slots share the
// row indexing.
struct SlotSeries {
  std::vector<Mat> series;              // K entries, each n x d
  std::vector<std::vector<char>> valid; // K x n; empty means all rows valid
  std::vector<char> active;             // K; empty means all slots active

  int k() const { return static_cast<int>(series.size()); }
  int n() const { return series.empty() ? 0 : static_cast<int>(series.front().rows()); }
  int dim() const { return series.empty() ? 0 : static_cast<int>(series.front().cols()); }
  bool slot_active(int i) const {
    return active.empty() || active[static_cast<std::size_t>(i)] != 0;
  }
  bool row_valid(int slot, int row) const {
    return valid.empty() || valid[slot].empty() || valid[slot][row] != 0;
  }
};

struct SmccReport {
  double score = 0.0;                // mean of per_slot over included slots
  matching::Permutation permutation; // tau: base slot i pairs with tilde slot tau(i)
  Mat h;                             // global affine witness
  Vec a;
  Vec per_slot;                      // mean correlation per base slot (0 when excluded)
  std::vector<int> excluded;         // slot indices left out
  bool sufficiency_warning = false;
};

// Slot mean correlation coefficient: permutation by Hungarian assignment
// on per-pair affine-fit residuals, one global affine witness on the
// matched active pairs, then the mean Pearson correlation per dimension.
SmccReport smcc(const SlotSeries& s, const SlotSeries& s_tilde);

// smcc between aggregated contents of two viewpoint-subset models; an
// unsatisfied sufficiency assumption is reported as a warning, not an error.
SmccReport inv_smcc(const SlotSeries& contents_a, const SlotSeries& contents_b,
                    bool both_sufficient);

struct MccReport {
  double score = 0.0;                // mean assigned absolute correlation
  matching::Permutation assignment;  // factor j -> inferred dimension
  Mat corr_matrix;                   // q x p absolute correlations
};

// Mean correlation coefficient between inferred dimensions (columns of
// v_hat) and ground-truth factors (columns of v_true), p >= q.
MccReport mcc(const Mat& v_hat, const Mat& v_true);

// Pearson correlation; throws RankError on a degenerate series.
double pearson(const Vec& x, const Vec& y);

}  // namespace visa::metrics
