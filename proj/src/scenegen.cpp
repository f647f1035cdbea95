#include "visa/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "visa/error.hpp"

namespace visa::scenegen {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kShapeRadius = 0.5;
}  // namespace

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::cube: return "cube";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::pyramid: return "pyramid";
    case ShapeKind::sphere: return "sphere";
  }
  return "cube";
}

ShapeKind shape_from_name(const std::string& name) {
  if (name == "cube") return ShapeKind::cube;
  if (name == "cylinder") return ShapeKind::cylinder;
  if (name == "pyramid") return ShapeKind::pyramid;
  if (name == "sphere") return ShapeKind::sphere;
  throw ConfigError("unknown shape: " + name);
}

OcclusionPolicy OcclusionPolicy::dropout(double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  OcclusionPolicy p;
  p.kind = Kind::random_dropout;
  p.rate = rate;
  return p;
}

OcclusionPolicy OcclusionPolicy::scripted(std::vector<std::set<int>> hidden) {
  OcclusionPolicy p;
  p.kind = Kind::scripted;
  p.hidden = std::move(hidden);
  return p;
}

void SceneSpec::validate() const {
  if (n_objects < 1 || n_objects > location_mixture.size())
    throw ConfigError("n_objects must be between 1 and the number of locations");
  if (points_per_object < 1) throw ConfigError("points_per_object must be positive");
  if (cameras.empty()) throw ConfigError("at least one camera required");
  for (const auto& cam : cameras)
    if (std::abs(cam.det()) < view::kMinDet) throw ConfigError("camera must be invertible");
  if (occlusion.kind == OcclusionPolicy::Kind::scripted &&
      static_cast<int>(occlusion.hidden.size()) != n_views())
    throw ConfigError("scripted occlusion needs one hidden set per view");
}

gmm::DiagGmm default_location_mixture(int n_components) {
  gmm::DiagGmm g;
  g.weights = Vec::Constant(n_components, 1.0 / n_components);
  g.inactive.assign(n_components, 0);
  for (int k = 0; k < n_components; ++k) {
    const double angle = 2.0 * kPi * k / n_components;
    Vec mean(2), var(2);
    mean << 3.0 * std::cos(angle), 3.0 * std::sin(angle);
    var << 0.04, 0.04;
    g.components.emplace_back(std::move(mean), std::move(var));
  }
  return g;
}

std::vector<view::Affine2D> sample_cameras(int n_views, std::uint64_t seed) {
  std::vector<view::Affine2D> cams;
  cams.reserve(n_views);
  cams.push_back(view::Affine2D::identity());
  Rng rng(derive_seed(seed, 0xCA3E5AULL));
  while (static_cast<int>(cams.size()) < n_views) {
    const double angle = rng.uniform(-kPi / 3.0, kPi / 3.0);
    const double shear = rng.uniform(-0.2, 0.2);
    view::Affine2D cam = view::Affine2D::rotation(angle);
    Eigen::Matrix2d sh;
    sh << 1.0, shear, 0.0, 1.0;
    cam.linear = cam.linear * sh;
    const double t_angle = rng.uniform(0.0, 2.0 * kPi);
    const double t_norm = rng.uniform(0.0, 2.0);
    cam.offset << t_norm * std::cos(t_angle), t_norm * std::sin(t_angle);
    if (std::abs(cam.det()) < 1e-3) continue;
    cams.push_back(cam);
  }
  return cams;
}

SceneSpec default_scene_spec(int n_views, std::uint64_t camera_seed) {
  SceneSpec spec;
  spec.location_mixture = default_location_mixture();
  spec.cameras = sample_cameras(n_views, camera_seed);
  return spec;
}

std::set<int> Scene::placed_set() const {
  std::set<int> s;
  for (int i = 0; i < n_objects(); ++i) s.insert(i);
  return s;
}

Mat shape_outline(ShapeKind kind, int n_points, Rng& rng) {
  Mat pts(n_points, 2);
  // polygon vertices in order; circle handled separately
  std::vector<Eigen::Vector2d> verts;
  switch (kind) {
    case ShapeKind::cube:
      verts = {{-kShapeRadius, -kShapeRadius},
               {kShapeRadius, -kShapeRadius},
               {kShapeRadius, kShapeRadius},
               {-kShapeRadius, kShapeRadius}};
      break;
    case ShapeKind::cylinder:
      verts = {{-kShapeRadius, -0.3}, {kShapeRadius, -0.3}, {kShapeRadius, 0.3},
               {-kShapeRadius, 0.3}};
      break;
    case ShapeKind::pyramid:
      for (int v = 0; v < 3; ++v) {
        const double a = kPi / 2.0 + 2.0 * kPi * v / 3.0;
        verts.push_back({kShapeRadius * std::cos(a), kShapeRadius * std::sin(a)});
      }
      break;
    case ShapeKind::sphere: {
      for (int i = 0; i < n_points; ++i) {
        const double a = 2.0 * kPi * rng.uniform();
        pts(i, 0) = kShapeRadius * std::cos(a);
        pts(i, 1) = kShapeRadius * std::sin(a);
      }
      return pts;
    }
  }
  const int n_edges = static_cast<int>(verts.size());
  std::vector<double> cumlen(n_edges + 1, 0.0);
  for (int e = 0; e < n_edges; ++e)
    cumlen[e + 1] = cumlen[e] + (verts[(e + 1) % n_edges] - verts[e]).norm();
  const double perimeter = cumlen[n_edges];
  for (int i = 0; i < n_points; ++i) {
    const double s = perimeter * rng.uniform();
    int e = static_cast<int>(std::upper_bound(cumlen.begin(), cumlen.end(), s) -
                             cumlen.begin()) - 1;
    e = std::clamp(e, 0, n_edges - 1);
    const double frac = (s - cumlen[e]) / (cumlen[e + 1] - cumlen[e]);
    const Eigen::Vector2d p = verts[e] + frac * (verts[(e + 1) % n_edges] - verts[e]);
    pts(i, 0) = p(0);
    pts(i, 1) = p(1);
  }
  return pts;
}

Scene sample_scene(const SceneSpec& spec, Rng& rng, long scene_id) {
  spec.validate();
  Scene scene;
  scene.scene_id = scene_id;
  scene.true_thetas = spec.cameras;

  // distinct location components, then a location draw from each
  std::vector<int> pool(spec.location_mixture.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  for (int i = 0; i < spec.n_objects; ++i) {
    const int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
    std::swap(pool[i], pool[j]);
  }

  std::vector<Mat> canonical(spec.n_objects);
  for (int o = 0; o < spec.n_objects; ++o) {
    ObjectRecord rec;
    rec.location_component = pool[o];
    const auto& comp = spec.location_mixture.components[rec.location_component];
    rec.location = gmm::sample(comp, rng).head<2>();
    rec.shape = static_cast<ShapeKind>(rng.uniform_int(4));
    canonical[o] = shape_outline(rec.shape, spec.points_per_object, rng);
    canonical[o].rowwise() += rec.location.transpose();
    scene.objects.push_back(rec);
  }

  for (int v = 0; v < spec.n_views(); ++v) {
    SceneView sv;
    sv.view_id = v;
    for (int o = 0; o < spec.n_objects; ++o) sv.visible_objects.insert(o);
    switch (spec.occlusion.kind) {
      case OcclusionPolicy::Kind::none:
        break;
      case OcclusionPolicy::Kind::random_dropout:
        for (int o = 0; o < spec.n_objects; ++o)
          if (rng.uniform() < spec.occlusion.rate) sv.visible_objects.erase(o);
        break;
      case OcclusionPolicy::Kind::scripted:
        for (int o : spec.occlusion.hidden[v]) sv.visible_objects.erase(o);
        break;
    }
    const int n_vis = static_cast<int>(sv.visible_objects.size());
    sv.points.resize(n_vis * spec.points_per_object, 2);
    sv.labels.reserve(sv.points.rows());
    int row = 0;
    for (int o : sv.visible_objects) {
      sv.points.middleRows(row, spec.points_per_object) = canonical[o];
      for (int i = 0; i < spec.points_per_object; ++i) sv.labels.push_back(o);
      row += spec.points_per_object;
    }
    sv.points = view::apply(spec.cameras[v], sv.points);
    scene.views.push_back(std::move(sv));
  }
  return scene;
}

Scene sample_scene_at(const SceneSpec& spec, std::uint64_t dataset_seed, long index) {
  Rng rng(derive_seed(dataset_seed, static_cast<std::uint64_t>(index)));
  return sample_scene(spec, rng, index);
}

std::vector<Scene> sample_dataset(const SceneSpec& spec, int n_scenes, std::uint64_t seed) {
  if (n_scenes < 1) throw ConfigError("n_scenes must be positive");
  std::vector<Scene> scenes;
  scenes.reserve(n_scenes);
  for (long i = 0; i < n_scenes; ++i) scenes.push_back(sample_scene_at(spec, seed, i));
  return scenes;
}

bool viewpoint_sufficient(const Scene& scene, const std::set<int>& subset) {
  if (subset.empty()) throw ConfigError("empty view subset");
  std::set<int> seen;
  for (int v : subset) {
    if (v < 0 || v >= static_cast<int>(scene.views.size()))
      throw ConfigError("unknown view id " + std::to_string(v));
    const auto& vis = scene.views[v].visible_objects;
    seen.insert(vis.begin(), vis.end());
  }
  return seen == scene.placed_set();
}

}  // namespace visa::scenegen
