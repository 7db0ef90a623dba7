#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "critwin/experiment.hpp"
#include "critwin/hierarchy.hpp"

namespace critwin {

// Config-file problems (parse failures, schema violations). CLI exit code 3.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Doubles rendered with 17 significant digits so files round-trip exactly.
std::string format_double(double x);

// --- curve / window CSV -----------------------------------------------------
// Curve schema:  t,value,stderr,n
// Window schema: t_lo,t_hi,jump,disqualified

std::string curve_to_csv(const Curve& curve);
void write_curve_csv(const Curve& curve, const std::string& path);
Curve read_curve_csv(const std::string& path);  // errors carry line numbers

std::string windows_to_csv(const std::vector<DetectedWindow>& windows);
void write_windows_csv(const std::vector<DetectedWindow>& windows, const std::string& path);

// --- JSON model / process / tree serialization ------------------------------

nlohmann::json component_to_json(const ComponentDist& dist);
ComponentDist component_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const MixtureModel& model);
MixtureModel model_from_json(const nlohmann::json& j);
nlohmann::json process_to_json(const ForwardProcess& process);
ForwardProcess process_from_json(const nlohmann::json& j);
nlohmann::json tree_to_json(const MixtureTree& tree);
MixtureTree tree_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const TreeValidationReport& report);
nlohmann::json prediction_to_json(const WindowPrediction& w);

// --- simulate configs --------------------------------------------------------

struct SimulateJob {
    enum class Kind { generic, structured_output, biased_walk };
    Kind kind = Kind::generic;
    bool exact_mode = false;
    std::uint64_t seed = 0;
    // generic
    std::optional<ExperimentConfig> experiment;
    // structured-output
    std::vector<int> scaffold_lengths;
    std::vector<std::vector<double>> choice_probs;
    std::vector<int> original_choices;
    std::vector<double> t_grid;
    int n_per_point = 0;
    // biased-walk
    std::optional<BiasedWalkSpec> walk;
};

SimulateJob parse_simulate_config(const std::string& path);

// --- run manifests ------------------------------------------------------------

struct RunManifest {
    std::string subcommand;
    std::string config_hash;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
    std::vector<std::string> outputs;
};

std::uint64_t fnv1a64(const std::string& bytes);
void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace critwin
