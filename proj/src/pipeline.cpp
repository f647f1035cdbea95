#include "visa/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "visa/error.hpp"

namespace visa::pipeline {

std::set<int> PipelineConfig::effective_subset(int n_views) const {
  if (subset.empty()) {
    std::set<int> all;
    for (int v = 0; v < n_views; ++v) all.insert(v);
    return all;
  }
  return subset;
}

psa::SlotState dedup_slots(const psa::SlotState& s, double radius) {
  if (radius <= 0.0) return s;
  psa::SlotState out = s;
  if (out.inactive.empty()) out.inactive.assign(out.k(), 0);

  // strongest slots claim their neighborhood first
  std::vector<int> order(out.k());
  for (int i = 0; i < out.k(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (out.pi[a] != out.pi[b]) return out.pi[a] > out.pi[b];
    return a < b;
  });
  std::vector<int> kept;
  for (int idx : order) {
    if (out.is_inactive(idx)) continue;
    bool duplicate = false;
    for (int keeper : kept) {
      if ((out.mu.row(idx) - out.mu.row(keeper)).norm() >= radius) continue;
      // moment-matched merge: duplicates are split fits of one cluster,
      // so the survivor takes the combined mean and spread
      const double pk = out.pi[keeper], pd = out.pi[idx];
      const double total = pk + pd;
      const Eigen::RowVectorXd mean =
          (pk * out.mu.row(keeper) + pd * out.mu.row(idx)) / total;
      const Eigen::RowVectorXd second =
          (pk * (out.sigma2.row(keeper) + out.mu.row(keeper).cwiseAbs2()) +
           pd * (out.sigma2.row(idx) + out.mu.row(idx).cwiseAbs2())) /
          total;
      out.mu.row(keeper) = mean;
      out.sigma2.row(keeper) = (second - mean.cwiseAbs2()).cwiseMax(kVarFloor);
      out.pi[keeper] = total;
      out.pi[idx] = 0.0;
      out.inactive[idx] = 1;
      duplicate = true;
      break;
    }
    if (!duplicate) kept.push_back(idx);
  }
  return out;
}

psa::SlotState drop_straddlers(const psa::SlotState& s, double var_cap) {
  if (var_cap <= 0.0) return s;
  psa::SlotState out = s;
  if (out.inactive.empty()) out.inactive.assign(out.k(), 0);
  for (int k = 0; k < out.k(); ++k) {
    if (out.is_inactive(k)) continue;
    if (out.sigma2.row(k).mean() > var_cap) {
      // a slot stretched across clusters carries no single object
      out.pi[k] = 0.0;
      out.inactive[k] = 1;
    }
  }
  const double mass = out.pi.sum();
  if (mass > kWeightEps && mass < 1.0) out.pi /= mass;
  return out;
}

namespace {

// Per-view PSA in the working frame defined by the current transforms.
std::vector<psa::SlotState> run_views(const scenegen::Scene& scene,
                                      const std::vector<int>& views,
                                      const std::vector<view::Affine2D>& thetas,
                                      const PipelineConfig& cfg,
                                      const std::vector<Mat>& init_means,
                                      std::vector<double>* logliks) {
  psa::PsaConfig pcfg = cfg.psa;
  pcfg.init = psa::SlotInit::provided_means;
  std::vector<psa::SlotState> states;
  states.reserve(views.size());
  if (logliks) logliks->clear();
  Rng unused(0);  // provided-means init draws nothing
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& sv = scene.views[views[i]];
    if (sv.points.rows() == 0) {
      // fully occluded view: every slot absent
      psa::SlotState empty;
      empty.mu = init_means[i];
      empty.sigma2 = Mat::Ones(init_means[i].rows(), init_means[i].cols());
      empty.pi = Vec::Zero(init_means[i].rows());
      empty.inactive.assign(init_means[i].rows(), 1);
      states.push_back(std::move(empty));
      if (logliks) logliks->push_back(0.0);
      continue;
    }
    pcfg.provided_means = init_means[i];
    const Mat common = view::apply(view::invert(thetas[i]), sv.points);
    auto res = psa::run(common, pcfg, unused);
    if (logliks) logliks->push_back(res.loglik_trace.empty() ? 0.0 : res.loglik_trace.back());
    states.push_back(
        dedup_slots(drop_straddlers(res.slots, cfg.straddler_var_cap), cfg.dedup_radius));
  }
  return states;
}

// k-means++ seeding over a point pool.
Mat kmeanspp_seeds(const Mat& pool, int k, Rng& rng) {
  Mat init(k, 2);
  if (pool.rows() == 0) {
    for (int s = 0; s < k; ++s)
      for (int j = 0; j < 2; ++j) init(s, j) = rng.normal();
    return init;
  }
  Vec min_sq = Vec::Constant(pool.rows(), std::numeric_limits<double>::infinity());
  for (int s = 0; s < k; ++s) {
    long pick = 0;
    if (s == 0) {
      pick = static_cast<long>(rng.uniform() * static_cast<double>(pool.rows()));
    } else {
      const double total = min_sq.sum();
      double target = rng.uniform() * total;
      for (long i = 0; i < pool.rows(); ++i) {
        target -= min_sq[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    pick = std::min<long>(pick, pool.rows() - 1);
    init.row(s) = pool.row(pick);
    // tiny jitter so coincident seeds cannot lock together
    for (int j = 0; j < 2; ++j) init(s, j) += 0.01 * rng.normal();
    if (s + 1 < k) {
      const Vec d = (pool.rowwise() - pool.row(pick)).rowwise().squaredNorm();
      min_sq = min_sq.cwiseMin(d);
    }
  }
  return init;
}

// Shared initial slot means for every view, seeded from the pooled points
// expressed in the common frame given by the current transforms.
std::vector<Mat> shared_seeds(const scenegen::Scene& scene, const std::vector<int>& views,
                              const std::vector<view::Affine2D>& thetas, int k, Rng& rng) {
  long total = 0;
  for (int v : views) total += scene.views[v].points.rows();
  Mat pool(total, 2);
  long row = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& pts = scene.views[views[i]].points;
    if (pts.rows() == 0) continue;
    pool.middleRows(row, pts.rows()) = view::apply(view::invert(thetas[i]), pts);
    row += pts.rows();
  }
  const Mat seeds = kmeanspp_seeds(pool, k, rng);
  return std::vector<Mat>(views.size(), seeds);
}

// Per-view seeds for the bootstrap pass, before any common frame exists.
std::vector<Mat> per_view_seeds(const scenegen::Scene& scene, const std::vector<int>& views,
                                int k, Rng& rng) {
  std::vector<Mat> seeds;
  seeds.reserve(views.size());
  for (int v : views) seeds.push_back(kmeanspp_seeds(scene.views[v].points, k, rng));
  return seeds;
}

void swap_slots(psa::SlotState& s, int a, int b) {
  s.mu.row(a).swap(s.mu.row(b));
  s.sigma2.row(a).swap(s.sigma2.row(b));
  std::swap(s.pi[a], s.pi[b]);
  if (!s.inactive.empty()) std::swap(s.inactive[a], s.inactive[b]);
}

bool slot_live(const psa::SlotState& s, int k, double eps) {
  return !s.is_inactive(k) && s.pi[k] >= eps;
}

// A matched pair far beyond the object scale is two different objects,
// each unseen by the other view. Where spare (mutually dead) indices
// exist, the stray slot moves there so aggregation never merges them.
void repair_mismatches(std::vector<psa::SlotState>& states,
                       std::vector<matching::Permutation>& perms, int base_pos,
                       double threshold, double eps, int* repairs, int* forced) {
  if (threshold <= 0.0) return;
  const auto& base = states[base_pos];
  for (std::size_t v = 0; v < states.size(); ++v) {
    if (static_cast<int>(v) == base_pos) continue;
    auto& st = states[v];
    std::vector<std::pair<double, int>> far;
    std::vector<int> spare;
    for (int k = 0; k < st.k(); ++k) {
      const bool base_live = slot_live(base, k, eps);
      const bool view_live = slot_live(st, k, eps);
      if (base_live && view_live) {
        const double dist = (base.mu.row(k) - st.mu.row(k)).norm();
        if (dist > threshold) far.emplace_back(-dist, k);
      } else if (!base_live && !view_live) {
        spare.push_back(k);
      }
    }
    std::sort(far.begin(), far.end());
    std::size_t next_spare = 0;
    for (const auto& [neg, k] : far) {
      (void)neg;
      if (next_spare >= spare.size()) {
        if (forced) ++(*forced);
        continue;
      }
      const int f = spare[next_spare++];
      swap_slots(st, k, f);
      std::swap(perms[v].map[k], perms[v].map[f]);
      if (repairs) ++(*repairs);
    }
  }
}

// With K around 3 an affine map exists through any candidate slot
// correspondence, so mean geometry alone cannot identify the binding.
// Candidate pairings are scored instead by the log-likelihood of the
// view's points under the base mixture transported through the fitted
// map; shapes and weights break the tie.
struct Binding {
  bool ok = false;
  matching::Permutation perm;  // full K map, base slot -> view slot
  view::Affine2D delta;        // base working frame -> view working frame
};

double transported_loglik(const psa::SlotState& base, const std::vector<int>& base_idx,
                          const std::vector<int>& view_idx, const view::Affine2D& delta,
                          const Mat& points) {
  const int m = static_cast<int>(base_idx.size());
  gmm::DiagGmm g;
  g.weights.resize(m);
  g.components.reserve(m);
  double total = 0.0;
  for (int i = 0; i < m; ++i) total += base.pi[base_idx[i]];
  const Eigen::Matrix2d l = delta.linear;
  for (int i = 0; i < m; ++i) {
    const int k = base_idx[i];
    g.weights[i] = base.pi[k] / total;
    const Eigen::Vector2d mean = l * base.mu.row(k).transpose() + delta.offset;
    Vec var(2);
    for (int j = 0; j < 2; ++j)
      var[j] = l(j, 0) * l(j, 0) * base.sigma2(k, 0) + l(j, 1) * l(j, 1) * base.sigma2(k, 1);
    g.components.emplace_back(mean, var.cwiseMax(kVarFloor));
  }
  double score = 0.0;
  for (int n = 0; n < points.rows(); ++n)
    score += gmm::log_density(g, points.row(n).transpose());
  return score;
}

Binding ml_bind(const psa::SlotState& base, const psa::SlotState& view_state,
                const Mat& view_points, double eps) {
  Binding out;
  std::vector<int> base_live, view_live;
  for (int k = 0; k < base.k(); ++k)
    if (slot_live(base, k, eps)) base_live.push_back(k);
  for (int k = 0; k < view_state.k(); ++k)
    if (slot_live(view_state, k, eps)) view_live.push_back(k);
  const int m = static_cast<int>(std::min(base_live.size(), view_live.size()));
  if (m < 3) return out;

  // subsample the scoring points
  Mat pts;
  const int cap = 400;
  if (view_points.rows() <= cap) {
    pts = view_points;
  } else {
    const int stride = static_cast<int>((view_points.rows() + cap - 1) / cap);
    pts.resize((view_points.rows() + stride - 1) / stride, 2);
    for (int i = 0, r = 0; i < view_points.rows(); i += stride, ++r) pts.row(r) = view_points.row(i);
  }

  // enumerate ordered m-selections of the larger side
  const bool base_small = base_live.size() <= view_live.size();
  const std::vector<int>& small = base_small ? base_live : view_live;
  std::vector<int> large = base_small ? view_live : base_live;
  std::sort(large.begin(), large.end());

  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> best_base, best_view;
  view::Affine2D best_delta;
  long candidates = 0;
  std::vector<char> chosen(large.size(), 0);
  std::vector<int> pick(m);
  std::function<void(int)> recurse = [&](int depth) {
    if (candidates > 360) return;  // combinatorial guard; larger K falls back
    if (depth == m) {
      ++candidates;
      Mat src(m, 2), dst(m, 2);
      for (int i = 0; i < m; ++i) {
        const int b = base_small ? small[i] : pick[i];
        const int v = base_small ? pick[i] : small[i];
        src.row(i) = base.mu.row(b);
        dst.row(i) = view_state.mu.row(v);
      }
      try {
        const view::Affine2D delta = view::estimate_alignment(src, dst, Vec::Ones(m));
        // the transform class is orientation- and volume-preserving, so a
        // candidate far from unit determinant is a mirror or a distortion
        if (delta.det() < 0.5 || delta.det() > 2.0) return;
        std::vector<int> bs(m), vs(m);
        for (int i = 0; i < m; ++i) {
          bs[i] = base_small ? small[i] : pick[i];
          vs[i] = base_small ? pick[i] : small[i];
        }
        const double score = transported_loglik(base, bs, vs, delta, pts);
        if (score > best) {
          best = score;
          best_base = bs;
          best_view = vs;
          best_delta = delta;
        }
      } catch (const AlignmentError&) {
      }
      return;
    }
    for (std::size_t i = 0; i < large.size(); ++i) {
      if (chosen[i]) continue;
      chosen[i] = 1;
      pick[depth] = large[i];
      recurse(depth + 1);
      chosen[i] = 0;
    }
  };
  recurse(0);
  if (candidates > 360 || best_base.empty()) return out;

  // extend the pairing to a full K permutation; leftovers fill ascending
  const int k_slots = base.k();
  std::vector<int> map(k_slots, -1);
  std::vector<char> used(k_slots, 0);
  for (int i = 0; i < m; ++i) {
    map[best_base[i]] = best_view[i];
    used[best_view[i]] = 1;
  }
  int next = 0;
  for (int k = 0; k < k_slots; ++k) {
    if (map[k] >= 0) continue;
    while (used[next]) ++next;
    map[k] = next;
    used[next] = 1;
  }
  out.ok = true;
  out.perm.map = std::move(map);
  out.delta = best_delta;
  return out;
}

// Correspondence weights: only pairs active on both sides count.
Vec pair_weights(const psa::SlotState& base, const psa::SlotState& other, double eps) {
  Vec w = Vec::Zero(base.k());
  for (int k = 0; k < base.k(); ++k) {
    const bool base_ok = !base.is_inactive(k) && base.pi[k] >= eps;
    const bool other_ok = !other.is_inactive(k) && other.pi[k] >= eps;
    if (base_ok && other_ok) w[k] = 1.0;
  }
  return w;
}

}  // namespace

SceneResult infer_scene(const scenegen::Scene& scene, const PipelineConfig& cfg, Rng& rng) {
  const auto subset = cfg.effective_subset(static_cast<int>(scene.views.size()));
  for (int v : subset)
    if (v < 0 || v >= static_cast<int>(scene.views.size()))
      throw ConfigError("subset view id out of range");
  std::vector<int> views(subset.begin(), subset.end());
  const int base_pos = 0;  // first view of the sorted subset
  const double eps = cfg.activity_eps_factor / cfg.psa.k_slots;

  SceneResult result;
  result.scene_id = scene.scene_id;
  result.sufficiency = scenegen::viewpoint_sufficient(scene, subset);

  // Shared initial slot means keep matching near-aligned across the
  // scene's views; k-means++ seeding over the pooled common-frame points
  // spreads one seed per cluster. Until the estimated transforms exist
  // there is no common frame, so the bootstrap pass seeds per view.
  std::vector<view::Affine2D> thetas(views.size());
  std::vector<Mat> init_means;
  if (cfg.view_mode == ViewMode::oracle) {
    for (std::size_t i = 0; i < views.size(); ++i) thetas[i] = scene.true_thetas[views[i]];
    init_means = shared_seeds(scene, views, thetas, cfg.psa.k_slots, rng);
  } else {
    // bootstrap: per-view EM, then the slot correspondence and transform
    // per view are picked by transported-mixture likelihood, since raw
    // distances across frames carry the unestimated transform itself
    const auto boot_seeds = per_view_seeds(scene, views, cfg.psa.k_slots, rng);
    auto states = run_views(scene, views, thetas, cfg, boot_seeds, nullptr);
    result.alignment_fallback_views.clear();
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (static_cast<int>(i) == base_pos) continue;
      const auto binding =
          ml_bind(states[base_pos], states[i], scene.views[views[i]].points, eps);
      if (binding.ok) {
        thetas[i] = view::compose(thetas[i], binding.delta);
      } else {
        result.alignment_fallback_views.push_back(views[i]);
        thetas[i] = scene.true_thetas[views[i]];
      }
    }
    init_means = shared_seeds(scene, views, thetas, cfg.psa.k_slots, rng);

    for (int round = 1; round < cfg.alignment_rounds; ++round) {
      auto round_states = run_views(scene, views, thetas, cfg, init_means, nullptr);
      auto aligned = matching::align_to_base(round_states, base_pos, cfg.cost_kind);
      repair_mismatches(aligned.states, aligned.permutations, base_pos,
                        cfg.mismatch_threshold, eps, nullptr, nullptr);
      result.alignment_fallback_views.clear();
      for (std::size_t i = 0; i < views.size(); ++i) {
        if (static_cast<int>(i) == base_pos) continue;
        const Vec w = pair_weights(aligned.states[base_pos], aligned.states[i], eps);
        try {
          const view::Affine2D delta = view::estimate_alignment(
              aligned.states[base_pos].mu, aligned.states[i].mu, w);
          thetas[i] = view::compose(thetas[i], delta);
        } catch (const AlignmentError&) {
          result.alignment_fallback_views.push_back(views[i]);
          thetas[i] = scene.true_thetas[views[i]];
        }
      }
    }
  }

  std::vector<double> logliks;
  auto states = run_views(scene, views, thetas, cfg, init_means, &logliks);
  auto aligned = matching::align_to_base(states, base_pos, cfg.cost_kind);
  repair_mismatches(aligned.states, aligned.permutations, base_pos, cfg.mismatch_threshold,
                    eps, &result.mismatch_repairs, &result.forced_merges);

  if (cfg.gaussian_product_refinement) {
    // precision-weighted fusion with the base view's slot, where both are live
    const auto& base = aligned.states[base_pos];
    for (std::size_t i = 0; i < aligned.states.size(); ++i) {
      if (static_cast<int>(i) == base_pos) continue;
      auto& st = aligned.states[i];
      for (int k = 0; k < st.k(); ++k) {
        if (st.is_inactive(k) || base.is_inactive(k)) continue;
        if (st.pi[k] < eps || base.pi[k] < eps) continue;
        gmm::DiagGaussian a(st.mu.row(k).transpose(), st.sigma2.row(k).transpose());
        gmm::DiagGaussian b(base.mu.row(k).transpose(), base.sigma2.row(k).transpose());
        auto [prod, ln] = gmm::gaussian_product(a, b);
        (void)ln;
        st.mu.row(k) = prod.mean.transpose();
        st.sigma2.row(k) = prod.var.cwiseMax(cfg.psa.var_floor).transpose();
      }
    }
  }

  result.content = aggregate::aggregate_content(aligned.states, cfg.activity_eps_factor,
                                                cfg.psa.var_floor);
  result.loglik = 0.0;
  for (double l : logliks) result.loglik += l;
  for (std::size_t i = 0; i < views.size(); ++i) {
    PerView pv;
    pv.descriptor = view::ViewDescriptor(views[i], thetas[i]);
    pv.slots = aligned.states[i];
    pv.permutation = aligned.permutations[i];
    result.per_view.push_back(std::move(pv));
  }
  return result;
}

DatasetResult infer_dataset(const std::vector<scenegen::Scene>& scenes,
                            const PipelineConfig& cfg, std::uint64_t seed, int workers) {
  if (scenes.empty()) throw ConfigError("empty dataset");
  const int n = static_cast<int>(scenes.size());
  DatasetResult out;
  out.results.resize(n);
  std::vector<char> ok(n, 0);

  auto work = [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(scenes[i].scene_id)));
    try {
      out.results[i] = infer_scene(scenes[i], cfg, rng);
      ok[i] = 1;
    } catch (const std::exception&) {
      ok[i] = 0;
    }
  };

  if (workers <= 1) {
    for (int i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, n);
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<aggregate::ContentState> contents;
  std::vector<long> ids;
  std::vector<view::ViewDescriptor> descriptors;
  std::vector<SceneResult> kept;
  kept.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (!ok[i]) {
      ++out.failed_scenes;
      continue;
    }
    contents.push_back(out.results[i].content);
    ids.push_back(out.results[i].scene_id);
    for (const auto& pv : out.results[i].per_view) descriptors.push_back(pv.descriptor);
    kept.push_back(std::move(out.results[i]));
  }
  out.results = std::move(kept);
  if (contents.empty()) throw ConfigError("every scene failed");
  out.prior = aggregate::build_aggregate_posterior(contents, ids);
  const auto subset = cfg.effective_subset(static_cast<int>(scenes.front().views.size()));
  out.view_prior = view::fit_view_prior(descriptors, static_cast<int>(subset.size()));
  return out;
}

}  // namespace visa::pipeline
