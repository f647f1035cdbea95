#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "visa/aggregate.hpp"
#include "visa/gmm.hpp"
#include "visa/pipeline.hpp"
#include "visa/psa.hpp"
#include "visa/scenegen.hpp"
#include "visa/view.hpp"

namespace visa::serialize {

using json = nlohmann::ordered_json;

json to_json(const Mat& m);          // row-major nested arrays
Mat mat_from_json(const json& j);
json to_json(const Vec& v);
Vec vec_from_json(const json& j);

json to_json(const gmm::DiagGmm& g);
gmm::DiagGmm gmm_from_json(const json& j);

json to_json(const view::Affine2D& t);
view::Affine2D affine_from_json(const json& j);

json to_json(const psa::SlotState& s);
psa::SlotState slot_state_from_json(const json& j);

json to_json(const scenegen::Scene& s);
scenegen::Scene scene_from_json(const json& j);

json to_json(const aggregate::AggregatePrior& p);
json to_json(const pipeline::SceneResult& r);

// JSON Lines dataset files.
void write_dataset(std::ostream& out, const std::vector<scenegen::Scene>& scenes);
std::vector<scenegen::Scene> read_dataset(std::istream& in);
void write_dataset_file(const std::string& path, const std::vector<scenegen::Scene>& scenes);
std::vector<scenegen::Scene> read_dataset_file(const std::string& path);

// Per-dataset statistics (object counts, visibility table).
json dataset_summary(const std::vector<scenegen::Scene>& scenes);

}  // namespace visa::serialize
