#include "critwin/io.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace critwin {

using nlohmann::json;

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string curve_to_csv(const Curve& curve) {
    std::string out = "t,value,stderr,n\n";
    for (const auto& p : curve.points) {
        out += format_double(p.t) + "," + format_double(p.value) + "," + format_double(p.stderr_) +
               "," + std::to_string(p.n) + "\n";
    }
    return out;
}

void write_curve_csv(const Curve& curve, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f << curve_to_csv(curve);
}

Curve read_curve_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open: " + path);
    std::string line;
    int line_no = 0;
    Curve curve;
    bool any_stderr = false;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "t,value,stderr,n")
                throw ConfigError(path + ":1: expected header t,value,stderr,n");
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ss(line);
        CurvePoint p;
        char c1, c2, c3;
        if (!(ss >> p.t >> c1 >> p.value >> c2 >> p.stderr_ >> c3 >> p.n) || c1 != ',' ||
            c2 != ',' || c3 != ',')
            throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed curve row");
        any_stderr = any_stderr || p.stderr_ != 0.0;
        curve.points.push_back(p);
    }
    curve.kind = any_stderr ? CurveKind::membership_prob : CurveKind::exact;
    curve.validate();
    return curve;
}

std::string windows_to_csv(const std::vector<DetectedWindow>& windows) {
    std::string out = "t_lo,t_hi,jump,disqualified\n";
    for (const auto& w : windows) {
        out += format_double(w.t_lo) + "," + format_double(w.t_hi) + "," + format_double(w.jump) +
               "," + (w.disqualified ? "1" : "0") + "\n";
    }
    return out;
}

void write_windows_csv(const std::vector<DetectedWindow>& windows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f << windows_to_csv(windows);
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

const json& require_field(const json& j, const char* name, const char* where) {
    auto it = j.find(name);
    if (it == j.end())
        throw ConfigError(std::string(where) + ": missing field '" + name + "'");
    return *it;
}

}  // namespace

json component_to_json(const ComponentDist& dist) {
    return std::visit(
        overloaded{
            [](const IsotropicGaussian& g) {
                return json{{"type", "isotropic-gaussian"}, {"mean", g.mean}};
            },
            [](const DiracString& d) {
                return json{{"type", "dirac-string"}, {"tokens", d.tokens}, {"alphabet", d.alphabet}};
            },
            [](const BernoulliProductWalk& w) {
                return json{{"type", "bernoulli-walk"},
                            {"step_up_prob", w.step_up_prob},
                            {"length", w.length},
                            {"absorb", w.absorb}};
            },
            [](const FiniteSeqTable& t) {
                return json{{"type", "finite-table"},
                            {"length", t.length},
                            {"alphabet", t.alphabet},
                            {"probs", t.probs}};
            },
            [](const StructuredOutput& s) {
                json segs = json::array();
                for (const auto& seg : s.segments)
                    segs.push_back(json{{"scaffold", seg.scaffold},
                                        {"alternatives", seg.alternatives},
                                        {"probs", seg.probs}});
                return json{{"type", "structured-output"},
                            {"alphabet", s.alphabet},
                            {"segments", segs},
                            {"trailing", s.trailing}};
            }},
        dist);
}

ComponentDist component_from_json(const json& j) {
    const std::string type = require_field(j, "type", "component").get<std::string>();
    try {
        if (type == "isotropic-gaussian")
            return IsotropicGaussian{require_field(j, "mean", "component").get<Vec>()};
        if (type == "dirac-string")
            return DiracString{require_field(j, "tokens", "component").get<TokenSeq>(),
                               require_field(j, "alphabet", "component").get<int>()};
        if (type == "bernoulli-walk")
            return BernoulliProductWalk{
                require_field(j, "step_up_prob", "component").get<double>(),
                require_field(j, "length", "component").get<int>(),
                j.value("absorb", 0)};
        if (type == "finite-table")
            return FiniteSeqTable{require_field(j, "length", "component").get<int>(),
                                  require_field(j, "alphabet", "component").get<int>(),
                                  require_field(j, "probs", "component").get<std::vector<double>>()};
        if (type == "structured-output") {
            StructuredOutput s;
            s.alphabet = require_field(j, "alphabet", "component").get<int>();
            s.trailing = j.value("trailing", TokenSeq{});
            for (const auto& seg : require_field(j, "segments", "component")) {
                ChoiceSegment cs;
                cs.scaffold = seg.value("scaffold", TokenSeq{});
                cs.alternatives =
                    require_field(seg, "alternatives", "segment").get<std::vector<TokenSeq>>();
                cs.probs = require_field(seg, "probs", "segment").get<std::vector<double>>();
                s.segments.push_back(std::move(cs));
            }
            return s;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("component: ") + e.what());
    }
    throw ConfigError("component: unknown type '" + type + "'");
}

json model_to_json(const MixtureModel& model) {
    json comps = json::array();
    for (int i = 0; i < model.size(); ++i)
        comps.push_back(
            json{{"weight", model.weight(i)}, {"dist", component_to_json(model.component(i))}});
    return json{{"components", comps}};
}

MixtureModel model_from_json(const json& j) {
    std::vector<double> weights;
    std::vector<ComponentDist> comps;
    for (const auto& c : require_field(j, "components", "model")) {
        weights.push_back(require_field(c, "weight", "model component").get<double>());
        comps.push_back(component_from_json(require_field(c, "dist", "model component")));
    }
    try {
        return MixtureModel(std::move(weights), std::move(comps));
    } catch (const UnsupportedError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
}

json process_to_json(const ForwardProcess& process) {
    return std::visit(
        overloaded{[](const OuProcess&) { return json{{"type", "ou"}}; },
                   [](const RandomMaskProcess&) { return json{{"type", "random-mask"}}; },
                   [](const TruncationProcess& t) {
                       return json{{"type", "truncation"}, {"length", t.length}};
                   }},
        process);
}

ForwardProcess process_from_json(const json& j) {
    const std::string type = require_field(j, "type", "process").get<std::string>();
    if (type == "ou") return OuProcess{};
    if (type == "random-mask") return RandomMaskProcess{};
    if (type == "truncation")
        return TruncationProcess{require_field(j, "length", "process").get<int>()};
    throw ConfigError("process: unknown type '" + type + "'");
}

json tree_to_json(const MixtureTree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes)
        nodes.push_back(json{{"subset", n.subset.ids()},
                             {"noise", n.noise_amount},
                             {"children", n.children}});
    return json{{"epsilon", tree.epsilon}, {"root", tree.root}, {"nodes", nodes}};
}

MixtureTree tree_from_json(const json& j) {
    MixtureTree tree;
    tree.epsilon = require_field(j, "epsilon", "tree").get<double>();
    tree.root = require_field(j, "root", "tree").get<int>();
    for (const auto& n : require_field(j, "nodes", "tree")) {
        try {
            tree.nodes.push_back(
                TreeNode{SubsetSelector(require_field(n, "subset", "tree node").get<std::vector<int>>()),
                         require_field(n, "noise", "tree node").get<double>(),
                         n.value("children", std::vector<int>{})});
        } catch (const UnsupportedError& e) {
            throw ConfigError(std::string("tree node: ") + e.what());
        }
    }
    return tree;
}

namespace {

const char* condition_name(TreeCondition c) {
    switch (c) {
        case TreeCondition::leaf_pair_overlap: return "leaf-pair-overlap";
        case TreeCondition::subset_separation: return "subset-separation";
        case TreeCondition::noise_monotonic: return "noise-monotonic";
    }
    return "unknown";
}

}  // namespace

json report_to_json(const TreeValidationReport& report) {
    json checks = json::array();
    for (const auto& c : report.checks)
        checks.push_back(json{{"condition", condition_name(c.kind)},
                              {"node", c.node},
                              {"theta_i", c.theta_i},
                              {"theta_j", c.theta_j},
                              {"measured", c.measured},
                              {"stderr", c.stderr_},
                              {"threshold", c.threshold},
                              {"pass", c.pass},
                              {"slack", c.slack}});
    return json{{"pass", report.pass}, {"worst_slack", report.worst_slack}, {"checks", checks}};
}

json prediction_to_json(const WindowPrediction& w) {
    return json{{"t_after", w.t_after},
                {"t_before", w.t_before},
                {"epsilon", w.epsilon},
                {"clamped_after", w.clamped_after},
                {"clamped_before", w.clamped_before}};
}

// ---------------------------------------------------------------------------
// Simulate configs
// ---------------------------------------------------------------------------

namespace {

Classifier classifier_from_json(const json& j) {
    const std::string type = require_field(j, "type", "classifier").get<std::string>();
    if (type == "posterior-argmax") return PosteriorArgmaxClassifier{};
    if (type == "token-match")
        return TokenMatchClassifier{require_field(j, "position", "classifier").get<int>(),
                                    require_field(j, "token", "classifier").get<Token>()};
    if (type == "exact-match")
        return ExactMatchClassifier{require_field(j, "reference", "classifier").get<TokenSeq>()};
    throw ConfigError("classifier: unknown type '" + type + "'");
}

}  // namespace

SimulateJob parse_simulate_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    const int version = require_field(j, "version", "config").get<int>();
    if (version != 1) throw ConfigError("config: unsupported version " + std::to_string(version));

    SimulateJob job;
    job.seed = j.value("seed", std::uint64_t{0});
    const std::string mode = j.value("mode", std::string("mc"));
    if (mode != "mc" && mode != "exact") throw ConfigError("config: mode must be 'mc' or 'exact'");
    job.exact_mode = mode == "exact";
    const std::string kind = j.value("kind", std::string("generic"));

    try {
        if (kind == "generic") {
            job.kind = SimulateJob::Kind::generic;
            ExperimentConfig cfg{
                model_from_json(require_field(j, "model", "config")),
                process_from_json(require_field(j, "process", "config")),
                SubsetSelector(require_field(j, "s_init", "config").get<std::vector<int>>()),
                require_field(j, "t_grid", "config").get<std::vector<double>>(),
                j.value("n_per_point", 100),
                job.seed,
                classifier_from_json(require_field(j, "classifier", "config")),
                1};
            job.experiment = std::move(cfg);
        } else if (kind == "structured-output") {
            job.kind = SimulateJob::Kind::structured_output;
            job.scaffold_lengths =
                require_field(j, "scaffold_lengths", "config").get<std::vector<int>>();
            job.choice_probs = require_field(j, "choice_probs", "config")
                                   .get<std::vector<std::vector<double>>>();
            job.original_choices = j.value("original_choices", std::vector<int>{});
            job.t_grid = j.value("t_grid", std::vector<double>{});
            job.n_per_point = j.value("n_per_point", 100);
        } else if (kind == "biased-walk") {
            job.kind = SimulateJob::Kind::biased_walk;
            const json& w = require_field(j, "walk", "config");
            job.walk = BiasedWalkSpec{require_field(w, "length", "walk").get<int>(),
                                      require_field(w, "delta", "walk").get<double>(),
                                      require_field(w, "absorb", "walk").get<int>(),
                                      require_field(w, "epsilon", "walk").get<double>()};
            job.t_grid = require_field(j, "t_grid", "config").get<std::vector<double>>();
            job.n_per_point = j.value("n_per_point", 100);
        } else {
            throw ConfigError("config: unknown kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const UnsupportedError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return job;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
    json j{{"schema_version", 1},
           {"subcommand", manifest.subcommand},
           {"config_hash", manifest.config_hash},
           {"seed", manifest.seed},
           {"versions", {{"critwin", "0.1.0"}}},
           {"wall_time_s", manifest.wall_time_s},
           {"outputs", manifest.outputs}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace critwin
