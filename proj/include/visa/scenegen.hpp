#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "visa/gmm.hpp"
#include "visa/rng.hpp"
#include "visa/types.hpp"
#include "visa/view.hpp"

namespace visa::scenegen {

enum class ShapeKind { cube, cylinder, pyramid, sphere };

const char* shape_name(ShapeKind s);
ShapeKind shape_from_name(const std::string& name);

struct OcclusionPolicy {
  enum class Kind { none, random_dropout, scripted };
  Kind kind = Kind::none;
  double rate = 0.0;                   // random_dropout
  std::vector<std::set<int>> hidden;   // scripted: per view, hidden object indices

  static OcclusionPolicy none() { return {}; }
  static OcclusionPolicy dropout(double rate);
  static OcclusionPolicy scripted(std::vector<std::set<int>> hidden);
};

struct SceneSpec {
  gmm::DiagGmm location_mixture;       // component per candidate location, over R^2
  int n_objects = 3;
  int points_per_object = 1000;
  std::vector<view::Affine2D> cameras; // true transform per viewpoint
  OcclusionPolicy occlusion;

  int n_views() const { return static_cast<int>(cameras.size()); }
  void validate() const;
};

// Component means on a radius-3 ring, isotropic variance 0.04, equal weights.
gmm::DiagGmm default_location_mixture(int n_components = 5);

// Camera 0 is the identity; the rest draw rotation in [-60, 60] degrees,
// shear up to 0.2 and translation of norm at most 2.
std::vector<view::Affine2D> sample_cameras(int n_views, std::uint64_t seed);

SceneSpec default_scene_spec(int n_views = 4, std::uint64_t camera_seed = 7);

struct SceneView {
  int view_id = 0;
  Mat points;                  // N x 2, camera frame
  std::vector<int> labels;     // object index per point
  std::set<int> visible_objects;
};

struct ObjectRecord {
  Eigen::Vector2d location;
  ShapeKind shape = ShapeKind::cube;
  int location_component = 0;  // which mixture component placed it
};

struct Scene {
  long scene_id = 0;
  std::vector<SceneView> views;
  std::vector<view::Affine2D> true_thetas;
  std::vector<ObjectRecord> objects;

  int n_objects() const { return static_cast<int>(objects.size()); }
  std::set<int> placed_set() const;
};

// Canonical outline centered at the origin with characteristic radius 0.5,
// sampled uniformly by arc length: square, rectangle, triangle or circle.
Mat shape_outline(ShapeKind kind, int n_points, Rng& rng);

Scene sample_scene(const SceneSpec& spec, Rng& rng, long scene_id = 0);

// Scene `index` of the dataset keyed by `dataset_seed`; pure in its inputs.
Scene sample_scene_at(const SceneSpec& spec, std::uint64_t dataset_seed, long index);

std::vector<Scene> sample_dataset(const SceneSpec& spec, int n_scenes, std::uint64_t seed);

// True iff the union of visible objects over the subset covers the scene.
bool viewpoint_sufficient(const Scene& scene, const std::set<int>& subset);

}  // namespace visa::scenegen
