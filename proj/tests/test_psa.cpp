#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "visa/error.hpp"
#include "visa/psa.hpp"

using namespace visa;
using psa::Attention;
using psa::PsaConfig;
using psa::SlotState;

namespace {

Mat planted_two_clusters(int per_cluster, Rng& rng, double separation = 10.0) {
  Mat pts(2 * per_cluster, 2);
  for (int i = 0; i < per_cluster; ++i) {
    pts(i, 0) = rng.normal(0.0, 1.0);
    pts(i, 1) = rng.normal(0.0, 1.0);
    pts(per_cluster + i, 0) = rng.normal(separation, 1.0);
    pts(per_cluster + i, 1) = rng.normal(separation, 1.0);
  }
  return pts;
}

Mat random_points(int n, int d, Rng& rng, double spread = 3.0) {
  Mat pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = rng.normal(0.0, spread);
  return pts;
}

}  // namespace

TEST_CASE("init_slots: uniform weights, unit variance") {
  PsaConfig cfg;
  cfg.k_slots = 3;
  Rng rng(1);
  const SlotState s = psa::init_slots(cfg, 2, rng);
  for (int k = 0; k < 3; ++k) CHECK(s.pi[k] == doctest::Approx(1.0 / 3.0));
  CHECK(s.sigma2.minCoeff() == 1.0);
  CHECK(s.sigma2.maxCoeff() == 1.0);
}

TEST_CASE("init_slots: fixed seed reproduces the means") {
  PsaConfig cfg;
  cfg.k_slots = 4;
  Rng a(9), b(9);
  const SlotState s1 = psa::init_slots(cfg, 3, a);
  const SlotState s2 = psa::init_slots(cfg, 3, b);
  CHECK((s1.mu - s2.mu).norm() == 0.0);
}

TEST_CASE("init_slots: provided means are copied verbatim") {
  PsaConfig cfg;
  cfg.k_slots = 2;
  cfg.init = psa::SlotInit::provided_means;
  cfg.provided_means.resize(2, 2);
  cfg.provided_means << 1.0, 2.0, 3.0, 4.0;
  Rng rng(1);
  const SlotState s = psa::init_slots(cfg, 2, rng);
  CHECK((s.mu - cfg.provided_means).norm() == 0.0);
}

TEST_CASE("e_step: a single slot takes every point") {
  PsaConfig cfg;
  cfg.k_slots = 1;
  Rng rng(2);
  const Mat pts = random_points(50, 2, rng);
  const SlotState s = psa::init_slots(cfg, 2, rng);
  const Attention attn = psa::e_step(s, pts);
  CHECK((attn.a.array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("e_step: separated slots match the gmm responsibilities") {
  SlotState s;
  s.mu.resize(2, 2);
  s.mu << -10.0, -10.0, 10.0, 10.0;
  s.sigma2 = Mat::Ones(2, 2);
  s.pi = Vec::Constant(2, 0.5);
  Mat pts(1, 2);
  pts << 10.0, 10.0;
  const Attention attn = psa::e_step(s, pts);
  CHECK(attn.a(0, 1) >= 1.0 - 1e-9);
  const Vec r = gmm::responsibilities(s.to_gmm(), pts.row(0).transpose());
  CHECK(attn.a(0, 0) == doctest::Approx(r[0]).epsilon(1e-12));
  CHECK(attn.a(0, 1) == doctest::Approx(r[1]).epsilon(1e-12));
}

TEST_CASE("e_step: rows of a and columns of a_hat are normalized") {
  Rng rng(3);
  PsaConfig cfg;
  cfg.k_slots = 4;
  const Mat pts = random_points(80, 3, rng);
  const SlotState s = psa::init_slots(cfg, 3, rng);
  const Attention attn = psa::e_step(s, pts);
  for (int i = 0; i < pts.rows(); ++i)
    CHECK(attn.a.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (int k = 0; k < 4; ++k)
    CHECK(attn.a_hat.col(k).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("e_step: degenerate point names its index") {
  SlotState s;
  s.mu = Mat::Zero(1, 1);
  s.sigma2 = Mat::Ones(1, 1);
  s.pi = Vec::Ones(1);
  Mat pts(3, 1);
  pts << 0.0, 1e170, 0.0;
  try {
    psa::e_step(s, pts);
    FAIL("expected DegeneratePointError");
  } catch (const DegeneratePointError& e) {
    CHECK(e.point_index == 1);
  }
}

TEST_CASE("m_step: identical points collapse onto the floor") {
  PsaConfig cfg;
  cfg.k_slots = 1;
  Rng rng(4);
  Mat pts = Mat::Zero(20, 2);
  pts.col(0).setConstant(3.0);
  pts.col(1).setConstant(-1.0);
  const SlotState s0 = psa::init_slots(cfg, 2, rng);
  const SlotState s1 = psa::m_step(s0, psa::e_step(s0, pts), pts);
  CHECK(s1.mu(0, 0) == doctest::Approx(3.0));
  CHECK(s1.mu(0, 1) == doctest::Approx(-1.0));
  CHECK(s1.sigma2(0, 0) == kVarFloor);
  CHECK(s1.pi[0] == doctest::Approx(1.0));
}

TEST_CASE("m_step: hard assignments recover cluster centroids") {
  const int n = 40;
  Mat pts(n, 2);
  for (int i = 0; i < n / 2; ++i) {
    pts(i, 0) = 0.1 * i;
    pts(i, 1) = 0.05 * i;
    pts(n / 2 + i, 0) = 10.0 + 0.1 * i;
    pts(n / 2 + i, 1) = 10.0 - 0.05 * i;
  }
  SlotState s;
  s.mu = Mat::Zero(2, 2);
  s.sigma2 = Mat::Ones(2, 2);
  s.pi = Vec::Constant(2, 0.5);
  Attention attn;
  attn.a = Mat::Zero(n, 2);
  for (int i = 0; i < n / 2; ++i) {
    attn.a(i, 0) = 1.0;
    attn.a(n / 2 + i, 1) = 1.0;
  }
  attn.a_hat = attn.a;
  for (int k = 0; k < 2; ++k) attn.a_hat.col(k) /= attn.a_hat.col(k).sum();
  const SlotState out = psa::m_step(s, attn, pts);
  CHECK(out.mu(0, 0) == doctest::Approx(pts.topRows(n / 2).col(0).mean()).epsilon(1e-12));
  CHECK(out.mu(1, 0) == doctest::Approx(pts.bottomRows(n / 2).col(0).mean()).epsilon(1e-12));
  CHECK(out.pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("m_step: empty column freezes the slot") {
  SlotState s;
  s.mu.resize(2, 1);
  s.mu << 0.0, 50.0;
  s.sigma2 = Mat::Ones(2, 1);
  s.pi = Vec::Constant(2, 0.5);
  Mat pts(4, 1);
  pts << -0.1, 0.0, 0.1, 0.2;
  Attention attn;
  attn.a = Mat::Zero(4, 2);
  attn.a.col(0).setOnes();
  attn.a_hat = Mat::Zero(4, 2);
  attn.a_hat.col(0).setConstant(0.25);
  const SlotState out = psa::m_step(s, attn, pts);
  CHECK(out.pi[1] == 0.0);
  CHECK(out.is_inactive(1));
  CHECK(out.mu(1, 0) == 50.0);
  CHECK(out.pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("run: planted well-separated mixture is recovered") {
  Rng data_rng(5);
  const Mat pts = planted_two_clusters(100, data_rng);
  PsaConfig cfg;
  cfg.k_slots = 2;
  cfg.iterations = 20;
  Rng rng(6);
  const auto res = psa::run(pts, cfg, rng);
  const Eigen::Vector2d a(0.0, 0.0), b(10.0, 10.0);
  const double direct = (res.slots.mu.row(0).transpose() - a).norm() +
                        (res.slots.mu.row(1).transpose() - b).norm();
  const double swapped = (res.slots.mu.row(0).transpose() - b).norm() +
                         (res.slots.mu.row(1).transpose() - a).norm();
  CHECK(std::min(direct, swapped) < 0.2 * 2);
}

TEST_CASE("run: K=1 reduces to data moments") {
  Rng rng(7);
  const Mat pts = random_points(200, 2, rng);
  PsaConfig cfg;
  cfg.k_slots = 1;
  cfg.iterations = 5;
  Rng run_rng(8);
  const auto res = psa::run(pts, cfg, run_rng);
  for (int j = 0; j < 2; ++j) {
    const double mean = pts.col(j).mean();
    const double var = (pts.col(j).array() - mean).square().mean();
    CHECK(res.slots.mu(0, j) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(res.slots.sigma2(0, j) == doctest::Approx(std::max(kVarFloor, var)).epsilon(1e-9));
  }
  CHECK(res.slots.pi[0] == doctest::Approx(1.0));
}

TEST_CASE("run: log-likelihood trace is monotone") {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const int n = 20 + rng.uniform_int(180);
    const int k = 1 + rng.uniform_int(5);
    const int d = 1 + rng.uniform_int(4);
    const Mat pts = random_points(n, d, rng);
    PsaConfig cfg;
    cfg.k_slots = k;
    cfg.iterations = 15;
    const auto res = psa::run(pts, cfg, rng);
    for (std::size_t i = 1; i < res.loglik_trace.size(); ++i)
      CHECK(res.loglik_trace[i] >= res.loglik_trace[i - 1] - 1e-8);
  }
}

TEST_CASE("run: trajectory matches the reference EM exactly") {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const int n = 20 + rng.uniform_int(180);
    const int k = 1 + rng.uniform_int(5);
    const int d = 1 + rng.uniform_int(4);
    const Mat pts = random_points(n, d, rng);

    PsaConfig cfg;
    cfg.k_slots = k;
    cfg.iterations = 1;
    Rng init_rng(1000 + t);
    SlotState state = psa::init_slots(cfg, d, init_rng);

    oracle::EmState ref;
    ref.mu = state.mu;
    ref.var = state.sigma2;
    ref.pi = state.pi;

    for (int it = 0; it < 10; ++it) {
      state = psa::m_step(state, psa::e_step(state, pts), pts);
      ref = oracle::reference_em_step(ref, pts, kVarFloor);
      REQUIRE((state.mu - ref.mu).cwiseAbs().maxCoeff() < 1e-6);
      REQUIRE((state.sigma2 - ref.var).cwiseAbs().maxCoeff() < 1e-6);
      REQUIRE((state.pi - ref.pi).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("run: permutation equivariance of the whole loop") {
  Rng rng(11);
  const Mat pts = planted_two_clusters(60, rng, 6.0);
  PsaConfig cfg;
  cfg.k_slots = 3;
  cfg.iterations = 12;
  cfg.init = psa::SlotInit::provided_means;
  cfg.provided_means.resize(3, 2);
  cfg.provided_means << 0.5, 0.5, 5.5, 5.5, -2.0, 3.0;
  Rng r1(0);
  const auto base = psa::run(pts, cfg, r1);

  // permute the initial means by (2,0,1)
  PsaConfig cfg_p = cfg;
  cfg_p.provided_means.row(0) = cfg.provided_means.row(2);
  cfg_p.provided_means.row(1) = cfg.provided_means.row(0);
  cfg_p.provided_means.row(2) = cfg.provided_means.row(1);
  Rng r2(0);
  const auto perm = psa::run(pts, cfg_p, r2);

  // reduction order differs across permuted columns, so allow rounding noise
  const int p[3] = {2, 0, 1};
  for (int i = 0; i < 3; ++i) {
    CHECK((perm.slots.mu.row(i) - base.slots.mu.row(p[i])).norm() < 1e-12);
    CHECK((perm.slots.sigma2.row(i) - base.slots.sigma2.row(p[i])).norm() < 1e-12);
    CHECK(perm.slots.pi[i] == doctest::Approx(base.slots.pi[p[i]]).epsilon(1e-12));
  }
}

TEST_CASE("run: shift equivariance") {
  Rng rng(12);
  const Mat pts = planted_two_clusters(60, rng, 6.0);
  PsaConfig cfg;
  cfg.k_slots = 2;
  cfg.iterations = 10;
  cfg.init = psa::SlotInit::provided_means;
  cfg.provided_means.resize(2, 2);
  cfg.provided_means << 0.0, 0.0, 6.0, 6.0;
  Rng r1(0), r2(0);
  const auto base = psa::run(pts, cfg, r1);

  Eigen::RowVector2d shift(3.5, -2.0);
  Mat shifted = pts;
  shifted.rowwise() += shift;
  PsaConfig cfg_s = cfg;
  cfg_s.provided_means.rowwise() += shift;
  const auto moved = psa::run(shifted, cfg_s, r2);

  CHECK(((moved.slots.mu.rowwise() - shift) - base.slots.mu).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((moved.slots.sigma2 - base.slots.sigma2).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((moved.slots.pi - base.slots.pi).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((moved.attention.a - base.attention.a).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("slot state round-trips through the mixture form") {
  Rng rng(13);
  PsaConfig cfg;
  cfg.k_slots = 3;
  const Mat pts = random_points(50, 2, rng);
  const auto res = psa::run(pts, cfg, rng);
  const SlotState back = SlotState::from_gmm(res.slots.to_gmm());
  CHECK((back.mu - res.slots.mu).norm() == 0.0);
  CHECK((back.sigma2 - res.slots.sigma2).norm() == 0.0);
  CHECK((back.pi - res.slots.pi).norm() == 0.0);
}
