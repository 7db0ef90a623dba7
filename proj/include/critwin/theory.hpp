#pragma once

#include <optional>
#include <vector>

#include "critwin/common.hpp"
#include "critwin/curve.hpp"

namespace critwin {

// A predicted critical window. Formulas may exit the process index set at
// extreme epsilon; endpoints are then clipped to the boundary and flagged.
// t_after <= t_before is reported, never enforced.
struct WindowPrediction {
    double t_after = 0.0;
    double t_before = 0.0;
    double epsilon = 0.0;
    bool clamped_after = false;
    bool clamped_before = false;

    double width() const { return t_before - t_after; }
};

struct BiasedWalkSpec {
    int length = 0;       // T
    double delta = 0.0;   // step-probability offset in (0, 0.5)
    int absorb = 0;       // A >= 1
    double epsilon = 0.0;
};

struct ArGmmSpec {
    double alpha = 0.0;     // concept-spike strength, > 0
    double inner_uv = 0.0;  // <u,v> in [-1,1]
    double epsilon = 0.0;
    double t_context = 0.0;  // T in the side condition e^{-T} sqrt(alpha - log(1+alpha)) <= eps
};

struct SparseRegressionSpec {
    int s = 0;
    int k = 0;
    double sigma2 = 0.0;
};

// eps * (1 + max(1,W)/sqrt(2)).
double theorem_bound(double epsilon, double w_ratio);

WindowPrediction predict_two_gaussians(double mu_norm, double epsilon);
WindowPrediction predict_random_means(const std::vector<Vec>& means, int target_id, double epsilon);
WindowPrediction predict_random_mask(int d_hamming, double epsilon);
WindowPrediction predict_biased_walk(const BiasedWalkSpec& spec);
WindowPrediction predict_ar_gmm(const ArGmmSpec& spec);

// N* = 2k log(s/k) / log(1 + k/sigma^2).
double aon_threshold(const SparseRegressionSpec& spec);

// Minimum in-context examples for Hellinger separation delta. `verbatim` is
// the stated condition ln((1-delta/2)/eps); `conservative` is what the
// tensorization step (1-delta/2)^T <= eps requires, ln(1/eps)/ln(1/(1-delta/2)).
struct IclExampleBound {
    double verbatim = 0.0;
    double conservative = 0.0;
};
IclExampleBound icl_min_examples(double delta, double epsilon);

// phi(x) = (2+x) / ((2 + x(1+c)/2)(2 + x(1-c)/2)); exposed for tests.
double ar_gmm_phi(double x, double inner_uv);

// Grid-resolved empirical bracket:
//   t_end   = first grid t with TV(init, target)   <= eps
//   t_start = last grid t with TV(target, rest)    >= 1 - eps^2
// nullopt when no grid point satisfies the condition.
struct WindowBracket {
    std::optional<double> t_end;
    std::optional<double> t_start;
};
WindowBracket window_bracket_empirical(const Curve& tv_init_vs_target,
                                       const Curve& tv_target_vs_rest, double epsilon);

}  // namespace critwin
