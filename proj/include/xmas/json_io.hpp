#pragma once

// JSON views of the pipeline's result types. Kept out of the module headers
// so library users that never touch JSON do not pull in nlohmann/json.

#include "json.hpp"

#include <filesystem>

namespace xmas {

struct ClusterModel;
struct SelectionResult;
struct BoundReport;
struct GradientCheckReport;
struct SoftmaxBoundReport;
struct SimulationReport;
struct TheoryConfig;
struct TheoryReport;
struct SimulationConfig;

nlohmann::json to_json(const ClusterModel& model);
nlohmann::json to_json(const SelectionResult& result);
nlohmann::json to_json(const BoundReport& report);
nlohmann::json to_json(const GradientCheckReport& report);
nlohmann::json to_json(const SoftmaxBoundReport& report);
nlohmann::json to_json(const SimulationReport& report);
nlohmann::json to_json(const TheoryConfig& config);
nlohmann::json to_json(const TheoryReport& report);
nlohmann::json to_json(const SimulationConfig& config);

/// Pretty-printed with a trailing newline; IoError on failure.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace xmas
