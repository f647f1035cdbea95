#include "visa/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "visa/error.hpp"

namespace visa::metrics {

namespace {
constexpr double kPairPenalty = 1e15;
}

AffineFit fit_affine_ls(const Mat& x, const Mat& y) {
  const int n = static_cast<int>(x.rows());
  const int din = static_cast<int>(x.cols());
  if (y.rows() != n) throw DimensionError("fit_affine_ls row mismatch");
  if (n < din + 1) throw RankError("need at least d+1 rows");

  Mat design(n, din + 1);
  design.leftCols(din) = x;
  design.col(din).setOnes();
  Eigen::ColPivHouseholderQR<Mat> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < din + 1) throw RankError("rows do not affinely span the input space");
  const Mat sol = qr.solve(y);  // (din+1) x dout

  AffineFit fit;
  fit.h = sol.topRows(din);
  fit.a = sol.row(din).transpose();
  fit.residual = (design * sol - y).squaredNorm() / n;
  return fit;
}

double pearson(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.size() < 3) throw DimensionError("pearson needs matched series");
  const double mx = x.mean(), my = y.mean();
  const Vec cx = x.array() - mx, cy = y.array() - my;
  const double sx = cx.norm(), sy = cy.norm();
  if (sx < 1e-12 || sy < 1e-12) throw RankError("degenerate (constant) series");
  return cx.dot(cy) / (sx * sy);
}

namespace {

// Rows valid on both sides of a candidate pair.
std::vector<int> shared_rows(const SlotSeries& s, int i, const SlotSeries& t, int j) {
  std::vector<int> rows;
  const int n = s.n();
  rows.reserve(n);
  for (int r = 0; r < n; ++r)
    if (s.row_valid(i, r) && t.row_valid(j, r)) rows.push_back(r);
  return rows;
}

Mat take_rows(const Mat& m, const std::vector<int>& rows) {
  Mat out(static_cast<int>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<int>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace

SmccReport smcc(const SlotSeries& s, const SlotSeries& t) {
  const int k = s.k();
  const int d = s.dim();
  if (t.k() != k || t.dim() != d) throw DimensionError("slot series disagree on K or d");
  if (s.n() != t.n()) throw DimensionError("slot series disagree on sample count");
  const int min_rows = std::max(3, d + 1);

  // Stage 1: per-pair affine fits give the assignment cost.
  Mat cost(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (!s.slot_active(i) || !t.slot_active(j)) {
        cost(i, j) = kPairPenalty;
        continue;
      }
      const auto rows = shared_rows(s, i, t, j);
      if (static_cast<int>(rows.size()) < min_rows) {
        cost(i, j) = kPairPenalty;
        continue;
      }
      try {
        cost(i, j) = fit_affine_ls(take_rows(t.series[j], rows), take_rows(s.series[i], rows))
                         .residual;
      } catch (const RankError&) {
        cost(i, j) = kPairPenalty;
      }
    }
  }
  auto [perm, total] = matching::hungarian(cost);
  (void)total;

  // Stage 2: one global witness over all matched usable pairs.
  SmccReport report;
  report.permutation = perm;
  std::vector<char> usable(k, 0);
  int n_stack = 0;
  for (int i = 0; i < k; ++i) {
    if (cost(i, perm.map[i]) >= kPairPenalty) continue;
    usable[i] = 1;
    n_stack += static_cast<int>(shared_rows(s, i, t, perm.map[i]).size());
  }
  if (n_stack < min_rows) throw RankError("not enough usable slot samples for smcc");
  Mat xs(n_stack, d), ys(n_stack, d);
  int row = 0;
  for (int i = 0; i < k; ++i) {
    if (!usable[i]) continue;
    const auto rows = shared_rows(s, i, t, perm.map[i]);
    xs.middleRows(row, static_cast<int>(rows.size())) = take_rows(t.series[perm.map[i]], rows);
    ys.middleRows(row, static_cast<int>(rows.size())) = take_rows(s.series[i], rows);
    row += static_cast<int>(rows.size());
  }
  const AffineFit witness = fit_affine_ls(xs, ys);
  report.h = witness.h;
  report.a = witness.a;

  // Stage 3: mean Pearson correlation per slot and dimension.
  report.per_slot = Vec::Zero(k);
  double sum = 0.0;
  int included = 0;
  for (int i = 0; i < k; ++i) {
    if (!usable[i]) {
      report.excluded.push_back(i);
      continue;
    }
    const auto rows = shared_rows(s, i, t, perm.map[i]);
    const Mat mapped = witness.apply(take_rows(t.series[perm.map[i]], rows));
    const Mat truth = take_rows(s.series[i], rows);
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += pearson(truth.col(j), mapped.col(j));
    report.per_slot[i] = acc / d;
    sum += report.per_slot[i];
    ++included;
  }
  report.score = included > 0 ? sum / included : 0.0;
  return report;
}

SmccReport inv_smcc(const SlotSeries& contents_a, const SlotSeries& contents_b,
                    bool both_sufficient) {
  SmccReport report = smcc(contents_a, contents_b);
  report.sufficiency_warning = !both_sufficient;
  return report;
}

MccReport mcc(const Mat& v_hat, const Mat& v_true) {
  const int n = static_cast<int>(v_hat.rows());
  if (v_true.rows() != n) throw DimensionError("mcc row mismatch");
  if (n < 3) throw DimensionError("mcc needs at least 3 samples");
  const int p = static_cast<int>(v_hat.cols());
  const int q = static_cast<int>(v_true.cols());
  if (p < q) throw DimensionError("inferred dimension count must cover the factors");

  MccReport report;
  report.corr_matrix.resize(q, p);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < p; ++j)
      report.corr_matrix(i, j) = std::abs(pearson(v_true.col(i), v_hat.col(j)));

  // pad factor rows with zero-cost dummies so the assignment is square
  Mat cost = Mat::Zero(p, p);
  cost.topRows(q) = -report.corr_matrix;
  auto [perm, total] = matching::hungarian(cost);
  (void)total;
  report.assignment.map.assign(perm.map.begin(), perm.map.begin() + q);
  double sum = 0.0;
  for (int i = 0; i < q; ++i) sum += report.corr_matrix(i, report.assignment.map[i]);
  report.score = sum / q;
  return report;
}

}  // namespace visa::metrics
