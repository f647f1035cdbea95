#pragma once

#include <vector>

#include "visa/gmm.hpp"
#include "visa/rng.hpp"
#include "visa/types.hpp"

namespace visa::view {

// Planar affine map x -> linear * x + offset. The flattened form doubles
// as the 6-dimensional view representation: row-major over the 2x3 block
// [linear | offset], i.e. [l00, l01, t0, l10, l11, t1].
struct Affine2D {
  Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();

  static Affine2D identity() { return {}; }
  static Affine2D translation(double tx, double ty);
  static Affine2D rotation(double radians);

  Vec flatten() const;
  static Affine2D from_flat(const Vec& v);

  double det() const { return linear.determinant(); }
};

inline constexpr double kMinDet = 1e-6;

Mat apply(const Affine2D& theta, const Mat& points);  // N x 2 rows
Affine2D invert(const Affine2D& theta);
// (outer ∘ inner)(x) = outer(inner(x))
Affine2D compose(const Affine2D& outer, const Affine2D& inner);

// Weighted least-squares affine map sending source rows onto target rows.
// Needs at least 3 positively weighted, non-collinear correspondences.
Affine2D estimate_alignment(const Mat& source, const Mat& target, const Vec& weights);

struct ViewDescriptor {
  int view_id = 0;
  Affine2D theta;
  Vec v;  // flatten(theta), kept alongside for serialization

  ViewDescriptor() = default;
  ViewDescriptor(int id, const Affine2D& t) : view_id(id), theta(t), v(t.flatten()) {}
};

struct ViewPrior {
  gmm::DiagGmm mixture;  // one component per view id, over R^6
};

// One component per view id: empirical mean and floored diagonal variance
// of the flattened transforms, weights proportional to group sizes.
ViewPrior fit_view_prior(const std::vector<ViewDescriptor>& descriptors, int n_components,
                         double var_floor = kVarFloor);

struct KlEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo KL(q || p) with samples drawn from q.
KlEstimate mc_kl(const gmm::DiagGaussian& q, const ViewPrior& p, int n_samples, Rng& rng);

}  // namespace visa::view
