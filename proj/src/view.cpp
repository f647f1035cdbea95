#include "visa/view.hpp"

#include <cmath>
#include <map>

#include "visa/error.hpp"

namespace visa::view {

Affine2D Affine2D::translation(double tx, double ty) {
  Affine2D t;
  t.offset << tx, ty;
  return t;
}

Affine2D Affine2D::rotation(double radians) {
  Affine2D t;
  const double c = std::cos(radians), s = std::sin(radians);
  t.linear << c, -s, s, c;
  return t;
}

Vec Affine2D::flatten() const {
  Vec v(6);
  v << linear(0, 0), linear(0, 1), offset(0), linear(1, 0), linear(1, 1), offset(1);
  return v;
}

Affine2D Affine2D::from_flat(const Vec& v) {
  if (v.size() != 6) throw DimensionError("flattened affine must have 6 entries");
  Affine2D t;
  t.linear << v[0], v[1], v[3], v[4];
  t.offset << v[2], v[5];
  return t;
}

Mat apply(const Affine2D& theta, const Mat& points) {
  if (points.cols() != 2) throw DimensionError("points must be N x 2");
  Mat out = points * theta.linear.transpose();
  out.rowwise() += theta.offset.transpose();
  return out;
}

Affine2D invert(const Affine2D& theta) {
  if (std::abs(theta.det()) < kMinDet) throw RankError("affine map is near singular");
  Affine2D inv;
  inv.linear = theta.linear.inverse();
  inv.offset = -(inv.linear * theta.offset);
  return inv;
}

Affine2D compose(const Affine2D& outer, const Affine2D& inner) {
  Affine2D out;
  out.linear = outer.linear * inner.linear;
  out.offset = outer.linear * inner.offset + outer.offset;
  return out;
}

Affine2D estimate_alignment(const Mat& source, const Mat& target, const Vec& weights) {
  const int k = static_cast<int>(source.rows());
  if (target.rows() != k || source.cols() != 2 || target.cols() != 2 || weights.size() != k)
    throw DimensionError("alignment inputs must be K x 2 with K weights");
  int active = 0;
  for (int i = 0; i < k; ++i)
    if (weights[i] > 0.0) ++active;
  if (active < 3) throw AlignmentError("need at least 3 active correspondences");

  // Normal equations on [x, y, 1]; shared 3x3 Gram for both output rows.
  Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
  Eigen::Matrix<double, 3, 2> rhs = Eigen::Matrix<double, 3, 2>::Zero();
  for (int i = 0; i < k; ++i) {
    if (weights[i] <= 0.0) continue;
    Eigen::Vector3d s(source(i, 0), source(i, 1), 1.0);
    gram += weights[i] * s * s.transpose();
    rhs += weights[i] * s * target.row(i);
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(gram);
  lu.setThreshold(1e-10);
  if (lu.rank() < 3) throw AlignmentError("correspondences are collinear");
  const Eigen::Matrix<double, 3, 2> sol = lu.solve(rhs);

  Affine2D theta;
  theta.linear = sol.topRows<2>().transpose();
  theta.offset = sol.row(2).transpose();
  return theta;
}

ViewPrior fit_view_prior(const std::vector<ViewDescriptor>& descriptors, int n_components,
                         double var_floor) {
  std::map<int, std::vector<const ViewDescriptor*>> groups;
  for (const auto& d : descriptors) groups[d.view_id].push_back(&d);
  if (groups.empty()) throw DimensionError("no descriptors");
  if (static_cast<int>(groups.size()) != n_components)
    throw ConfigError("n_components must equal the number of distinct view ids");

  ViewPrior prior;
  prior.mixture.weights.resize(n_components);
  prior.mixture.components.reserve(n_components);
  prior.mixture.inactive.assign(n_components, 0);
  int c = 0;
  for (const auto& [id, group] : groups) {
    if (group.empty()) throw ConfigError("empty view group");
    // a singleton group degenerates to a floored point mass
    Vec mean = Vec::Zero(6), var = Vec::Zero(6);
    for (const auto* d : group) mean += d->v;
    mean /= static_cast<double>(group.size());
    for (const auto* d : group) var += (d->v - mean).cwiseAbs2();
    var /= static_cast<double>(group.size());
    prior.mixture.components.emplace_back(mean, var.cwiseMax(var_floor));
    prior.mixture.weights[c] =
        static_cast<double>(group.size()) / static_cast<double>(descriptors.size());
    ++c;
  }
  return prior;
}

KlEstimate mc_kl(const gmm::DiagGaussian& q, const ViewPrior& p, int n_samples, Rng& rng) {
  if (q.dim() != p.mixture.dim()) throw DimensionError("mc_kl dimension mismatch");
  if (n_samples < 2) throw ConfigError("mc_kl needs at least 2 samples");
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Vec x = gmm::sample(q, rng);
    const double diff = gmm::log_density(q, x) - gmm::log_density(p.mixture, x);
    sum += diff;
    sumsq += diff * diff;
  }
  KlEstimate est;
  est.value = sum / n_samples;
  const double var = (sumsq - sum * sum / n_samples) / (n_samples - 1);
  est.std_error = std::sqrt(std::max(0.0, var) / n_samples);
  return est;
}

}  // namespace visa::view
