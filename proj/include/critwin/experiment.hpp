#pragma once

#include <functional>

#include "critwin/curve.hpp"
#include "critwin/processes.hpp"
#include "critwin/theory.hpp"

namespace critwin {

// ---------------------------------------------------------------------------
// Membership rules
// ---------------------------------------------------------------------------

// Classify a resampled output by the clean-data posterior argmax over components.
struct PosteriorArgmaxClassifier {};

// Token at one position matches a reference token.
struct TokenMatchClassifier {
    int position = 0;
    Token token = 0;
};

// Whole-sequence equality against a reference.
struct ExactMatchClassifier {
    TokenSeq reference;
};

struct CustomClassifier {
    std::string name;
    std::function<bool(const Sample&)> fn;
};

using Classifier =
    std::variant<PosteriorArgmaxClassifier, TokenMatchClassifier, ExactMatchClassifier,
                 CustomClassifier>;

// True when x falls in the answer class of s_init under the rule.
bool classify(const Classifier& cls, const MixtureModel& model, const SubsetSelector& s_init,
              const Sample& x);

// ---------------------------------------------------------------------------
// Forward-reverse experiment
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    MixtureModel model;
    ForwardProcess process;
    SubsetSelector s_init;
    std::vector<double> t_grid;  // ascending, within the process index set
    int n_per_point = 100;
    std::uint64_t seed = 0;
    Classifier classifier = PosteriorArgmaxClassifier{};
    int threads = 1;

    void validate() const;
};

// n_per_point independent noise-then-denoise draws per grid point. Per-sample
// RNG streams derive from (seed, t-index, sample-index), so results are
// identical regardless of execution order or worker count.
std::vector<std::vector<Sample>> run_forward_reverse(const ExperimentConfig& config);

// Fraction of resampled outputs classified inside s_init's answer class,
// with stderr = sqrt(v(1-v)/n).
Curve membership_curve(const ExperimentConfig& config);

// Same quantity computed exactly by enumeration (discrete instances).
Curve exact_membership_curve(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Window detection (raw-value jump criterion)
// ---------------------------------------------------------------------------

struct DetectedWindow {
    double t_lo = 0.0;
    double t_hi = 0.0;
    double jump = 0.0;
    bool disqualified = false;
};

// Scan adjacent grid pairs from largest t to smallest (the direction of
// generation); report value increases strictly exceeding jump_threshold.
// Any adjacent decrease strictly exceeding drop_threshold anywhere marks the
// curve non-monotone and disqualifies all reported windows.
std::vector<DetectedWindow> detect_windows(const Curve& curve, double jump_threshold = 0.5,
                                           double drop_threshold = 0.3);

// ---------------------------------------------------------------------------
// Structured-output replica
// ---------------------------------------------------------------------------

struct StructuredOutputPlan {
    MixtureModel model;
    TruncationProcess process;
    int original_component = 0;          // theta_0 whose generation is resampled
    std::vector<int> choice_positions;   // token index of each choice
    std::vector<int> original_choices;   // per-choice original alternative
    std::vector<Curve> per_choice_exact; // same-answer curve per choice, t = 0..T
    Curve joint_exact;                   // all-choices-joint curve
    std::vector<WindowPrediction> predicted_windows;  // per choice, index scale
};

// Independent single-token choices embedded in deterministic scaffold text;
// forward process is truncation. Predicted windows sit where each choice token
// leaves/enters the prefix.
StructuredOutputPlan build_structured_output_model(const std::vector<int>& scaffold_lengths,
                                                   const std::vector<std::vector<double>>& choice_probs,
                                                   const std::vector<int>& original_choices = {});

// ---------------------------------------------------------------------------
// Worked autoregressive instances
// ---------------------------------------------------------------------------

// Strong/weak problem-solving modes as biased +-1 walks; value(t) = fraction
// of resampled walks whose posterior-sampled mode is the strong mode.
Curve simulate_biased_walk_experiment(const BiasedWalkSpec& spec, const std::vector<double>& t_grid,
                                      int n, std::uint64_t seed, int threads = 1);

// Two-mode sequence model: modes share the first `shared_prefix` token
// positions, separate over the next `gap` positions, and are support-disjoint
// once the full gap is visible.
MixtureModel build_two_mode_sequence_model(int length, int shared_prefix, int gap,
                                           double w_strong = 0.5);

}  // namespace critwin
