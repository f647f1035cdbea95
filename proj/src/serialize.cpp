#include "visa/serialize.hpp"

#include <fstream>
#include <sstream>

#include "visa/error.hpp"

namespace visa::serialize {

json to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(j.at(0).size());
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

json to_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vec vec_from_json(const json& j) {
  Vec v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

json to_json(const gmm::DiagGmm& g) {
  json out;
  out["weights"] = to_json(g.weights);
  json means = json::array(), vars = json::array();
  for (const auto& c : g.components) {
    means.push_back(to_json(c.mean));
    vars.push_back(to_json(c.var));
  }
  out["means"] = std::move(means);
  out["vars"] = std::move(vars);
  json inactive = json::array();
  for (int k = 0; k < g.size(); ++k) inactive.push_back(g.is_inactive(k) ? 1 : 0);
  out["inactive"] = std::move(inactive);
  return out;
}

gmm::DiagGmm gmm_from_json(const json& j) {
  gmm::DiagGmm g;
  g.weights = vec_from_json(j.at("weights"));
  for (std::size_t k = 0; k < j.at("means").size(); ++k)
    g.components.emplace_back(vec_from_json(j.at("means").at(k)),
                              vec_from_json(j.at("vars").at(k)));
  if (j.contains("inactive"))
    for (const auto& f : j.at("inactive")) g.inactive.push_back(f.get<int>() ? 1 : 0);
  return g;
}

json to_json(const view::Affine2D& t) {
  json out;
  out["linear"] = {{t.linear(0, 0), t.linear(0, 1)}, {t.linear(1, 0), t.linear(1, 1)}};
  out["offset"] = {t.offset(0), t.offset(1)};
  return out;
}

view::Affine2D affine_from_json(const json& j) {
  view::Affine2D t;
  t.linear << j.at("linear").at(0).at(0).get<double>(), j.at("linear").at(0).at(1).get<double>(),
      j.at("linear").at(1).at(0).get<double>(), j.at("linear").at(1).at(1).get<double>();
  t.offset << j.at("offset").at(0).get<double>(), j.at("offset").at(1).get<double>();
  return t;
}

json to_json(const psa::SlotState& s) { return to_json(s.to_gmm()); }

psa::SlotState slot_state_from_json(const json& j) {
  return psa::SlotState::from_gmm(gmm_from_json(j));
}

json to_json(const scenegen::Scene& s) {
  json out;
  out["scene_id"] = s.scene_id;
  json views = json::array();
  for (const auto& v : s.views) {
    json jv;
    jv["view_id"] = v.view_id;
    jv["points"] = to_json(v.points);
    jv["labels"] = v.labels;
    jv["visible_objects"] = std::vector<int>(v.visible_objects.begin(), v.visible_objects.end());
    views.push_back(std::move(jv));
  }
  out["views"] = std::move(views);
  json thetas = json::array();
  for (const auto& t : s.true_thetas) thetas.push_back(to_json(t));
  out["true_thetas"] = std::move(thetas);
  json objects = json::array();
  for (const auto& o : s.objects) {
    json jo;
    jo["location"] = {o.location(0), o.location(1)};
    jo["shape"] = scenegen::shape_name(o.shape);
    jo["location_component"] = o.location_component;
    objects.push_back(std::move(jo));
  }
  out["object_records"] = std::move(objects);
  return out;
}

scenegen::Scene scene_from_json(const json& j) {
  scenegen::Scene s;
  s.scene_id = j.at("scene_id").get<long>();
  for (const auto& jv : j.at("views")) {
    scenegen::SceneView v;
    v.view_id = jv.at("view_id").get<int>();
    v.points = mat_from_json(jv.at("points"));
    v.labels = jv.at("labels").get<std::vector<int>>();
    for (const auto& o : jv.at("visible_objects")) v.visible_objects.insert(o.get<int>());
    s.views.push_back(std::move(v));
  }
  for (const auto& jt : j.at("true_thetas")) s.true_thetas.push_back(affine_from_json(jt));
  for (const auto& jo : j.at("object_records")) {
    scenegen::ObjectRecord o;
    o.location << jo.at("location").at(0).get<double>(), jo.at("location").at(1).get<double>();
    o.shape = scenegen::shape_from_name(jo.at("shape").get<std::string>());
    o.location_component = jo.value("location_component", 0);
    s.objects.push_back(o);
  }
  return s;
}

json to_json(const aggregate::AggregatePrior& p) {
  json out = to_json(p.mixture);
  json prov = json::array();
  for (const auto& [scene, slot] : p.provenance) prov.push_back({scene, slot});
  out["provenance"] = std::move(prov);
  return out;
}

json to_json(const pipeline::SceneResult& r) {
  json out;
  out["scene_id"] = r.scene_id;
  json views = json::array();
  for (const auto& pv : r.per_view) {
    json jv;
    jv["view_id"] = pv.descriptor.view_id;
    jv["theta"] = to_json(pv.descriptor.theta);
    jv["v"] = to_json(pv.descriptor.v);
    jv["slots"] = to_json(pv.slots);
    jv["permutation"] = pv.permutation.map;
    views.push_back(std::move(jv));
  }
  out["per_view"] = std::move(views);
  out["content"] = to_json(r.content);
  out["loglik"] = r.loglik;
  out["sufficiency"] = r.sufficiency;
  out["alignment_fallback_views"] = r.alignment_fallback_views;
  out["mismatch_repairs"] = r.mismatch_repairs;
  out["forced_merges"] = r.forced_merges;
  return out;
}

void write_dataset(std::ostream& out, const std::vector<scenegen::Scene>& scenes) {
  for (const auto& s : scenes) out << to_json(s).dump() << '\n';
}

std::vector<scenegen::Scene> read_dataset(std::istream& in) {
  std::vector<scenegen::Scene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    scenes.push_back(scene_from_json(json::parse(line)));
  }
  return scenes;
}

void write_dataset_file(const std::string& path, const std::vector<scenegen::Scene>& scenes) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_dataset(out, scenes);
}

std::vector<scenegen::Scene> read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return read_dataset(in);
}

json dataset_summary(const std::vector<scenegen::Scene>& scenes) {
  json out;
  out["n_scenes"] = scenes.size();
  if (scenes.empty()) return out;
  const int n_views = static_cast<int>(scenes.front().views.size());
  out["n_views"] = n_views;
  double mean_objects = 0.0;
  std::vector<long> visible_per_view(n_views, 0);
  long sufficient_full = 0;
  std::set<int> all_views;
  for (int v = 0; v < n_views; ++v) all_views.insert(v);
  for (const auto& s : scenes) {
    mean_objects += s.n_objects();
    for (const auto& v : s.views)
      visible_per_view[v.view_id] += static_cast<long>(v.visible_objects.size());
    if (scenegen::viewpoint_sufficient(s, all_views)) ++sufficient_full;
  }
  out["mean_objects_per_scene"] = mean_objects / scenes.size();
  json vis = json::array();
  for (int v = 0; v < n_views; ++v)
    vis.push_back(static_cast<double>(visible_per_view[v]) / scenes.size());
  out["mean_visible_per_view"] = std::move(vis);
  out["fraction_sufficient_all_views"] = static_cast<double>(sufficient_full) / scenes.size();
  return out;
}

}  // namespace visa::serialize
