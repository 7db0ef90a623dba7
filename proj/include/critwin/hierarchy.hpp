#pragma once

#include "critwin/processes.hpp"
#include "critwin/theory.hpp"

namespace critwin {

// ---------------------------------------------------------------------------
// Mixture trees
// ---------------------------------------------------------------------------

struct TreeNode {
    SubsetSelector subset;
    double noise_amount = 0.0;
    std::vector<int> children;
};

// Rooted hierarchy of nested component subsets with per-node degradation
// levels. Structural invariants (root covers Theta, children strictly nested,
// noise strictly decreasing toward leaves) are enforced by the validator.
struct MixtureTree {
    std::vector<TreeNode> nodes;
    int root = 0;
    double epsilon = 0.0;
};

enum class TreeCondition { leaf_pair_overlap, subset_separation, noise_monotonic };

struct ConditionCheck {
    TreeCondition kind = TreeCondition::leaf_pair_overlap;
    int node = -1;     // the node the condition attaches to (LCA for pair checks)
    int theta_i = -1;  // pair checks only
    int theta_j = -1;
    double measured = 0.0;
    double stderr_ = 0.0;
    double threshold = 0.0;
    bool pass = false;
    double slack = 0.0;  // signed margin by which the condition holds
};

struct TreeValidationReport {
    std::vector<ConditionCheck> checks;
    bool pass = false;
    double worst_slack = 0.0;
};

struct ValidationOptions {
    std::int64_t n_mc = 20000;  // sample count for Monte-Carlo TV checks
    std::uint64_t seed = 0;
};

// Checks the three NoiseAmount conditions at the tree's epsilon. Exact TV on
// enumerable instances, closed form for single-Gaussian pairs, Monte Carlo
// otherwise (passing then requires the inequality with a 3*stderr margin).
// Structural violations throw before any TV work.
TreeValidationReport validate_tree(const MixtureTree& tree, const MixtureModel& model,
                                   const ForwardProcess& process,
                                   const ValidationOptions& opts = {});

// ---------------------------------------------------------------------------
// Permutation-masking construction
// ---------------------------------------------------------------------------

struct PermutationTreeInstance {
    MixtureTree tree;
    MixtureModel model;
    ForwardProcess process;  // truncation over the permuted storage order
};

// Dirac component per value tuple; positions are revealed in permutation
// order, stored so the masking schedule is a truncation. The result is a
// 0-mixture tree: depth-from-leaf is the noise amount.
PermutationTreeInstance build_permutation_tree(const std::vector<int>& alphabet_sizes,
                                               const std::vector<int>& permutation);

// ---------------------------------------------------------------------------
// Perturbation robustness
// ---------------------------------------------------------------------------

struct PerturbResult {
    TreeValidationReport report;
    MixtureModel perturbed;
    double epsilon_used = 0.0;  // epsilon + sqrt(delta)
};

// Builds q with TV(p^theta, q^theta) <= delta/2 per component (mass moves on
// finite supports, mean shifts for Gaussians) and revalidates the tree at
// epsilon + sqrt(delta).
PerturbResult perturb_and_validate(const MixtureTree& tree, const MixtureModel& model,
                                   const ForwardProcess& process, double delta,
                                   std::uint64_t seed, const ValidationOptions& opts = {});

// ---------------------------------------------------------------------------
// Window sequences along a root path
// ---------------------------------------------------------------------------

struct LevelWindow {
    int node = -1;
    double t = 0.0;
    double tv = 0.0;
    double bound = 0.0;  // theorem bound at this node's weight ratio
};

// Forward-reverse from S_init = {leaf_component} at each ancestor's noise
// amount; reports exact TV of the resampled law to p^{Subset(ancestor)}.
// Ordered leaf to root. Exact enumeration only.
std::vector<LevelWindow> hierarchy_window_sequence(const MixtureTree& tree,
                                                   const MixtureModel& model,
                                                   const ForwardProcess& process,
                                                   int leaf_component);

}  // namespace critwin
