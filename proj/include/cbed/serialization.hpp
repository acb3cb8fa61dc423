#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cbed/particles.hpp"
#include "cbed/policy.hpp"
#include "cbed/scm.hpp"

namespace cbed {

using Json = nlohmann::ordered_json;

Json to_json(const Dag& dag);
Json to_json(const Scm& scm);
Json to_json(const Design& design);
Json to_json(const DesignBatch& batch);
Json to_json(const ParticleSet& particles);
Json to_json(const PolicyParams& params);
Json to_json(const Eigen::MatrixXd& m);

// Parsers throw std::invalid_argument (or GraphError) on malformed input.
Dag dag_from_json(const Json& j);
Scm scm_from_json(const Json& j);
Design design_from_json(const Json& j);
ParticleSet particles_from_json(const Json& j);
PolicyParams policy_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames, so readers never see a partial file.
void write_json_file(const std::filesystem::path& path, const Json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cbed
