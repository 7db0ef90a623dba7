#pragma once

#include "critwin/distributions.hpp"
#include "critwin/theory.hpp"

namespace critwin {

// ---------------------------------------------------------------------------
// In-context learning over finite block spaces
// ---------------------------------------------------------------------------

// Blocks (x, y, delimiter) are i.i.d. given theta; delimiters carry no
// probability content. x is drawn from a shared P_other, y | x from p^theta.
struct IclTask {
    std::vector<double> x_probs;                          // P_other over the x space
    std::vector<std::vector<std::vector<double>>> y_given_x;  // [theta][x][y]
    std::vector<double> weights;
    int n_pairs = 0;  // N, number of in-context blocks
    int theta_star = 0;

    int n_theta() const { return static_cast<int>(weights.size()); }
    int n_x() const { return static_cast<int>(x_probs.size()); }
    int n_y() const { return y_given_x.empty() ? 0 : static_cast<int>(y_given_x[0][0].size()); }
    // Block probability q_theta(x, y).
    double block_prob(int theta, int x, int y) const { return x_probs[x] * y_given_x[theta][x][y]; }
    void validate() const;
};

// Two-mode task whose answers are Bernoulli draws; x space is trivial.
IclTask make_bernoulli_icl_task(double p_star, double p_other, double w_star, int n_pairs);

struct IclReport {
    int n_retained = 0;
    double expected_tv = 0.0;              // E over retained blocks of TV(resample law, p^{theta*})
    double expected_posterior_star = 0.0;  // E of posterior mass on theta*
    double stderr_ = 0.0;                  // 0 when exact
    std::int64_t n_samples = 0;            // 0 when exact
    bool exact = true;
};

// Erase the last n_erased blocks' answers and resample the final answer under
// the full mixture; exact Bayes over retained-block counts. Falls back to
// Monte Carlo over block draws when the count enumeration is too large.
IclReport icl_forward_reverse(const IclTask& task, int n_erased, std::int64_t n_mc = 0,
                              std::uint64_t seed = 0);

// Posterior over theta from an explicit list of (x, y) blocks. Count-based,
// so permuting the blocks yields bit-identical results.
std::vector<double> icl_posterior(const IclTask& task,
                                  const std::vector<std::pair<int, int>>& blocks);

// ---------------------------------------------------------------------------
// Planted sparse regression vs null (all-or-nothing instantiation)
// ---------------------------------------------------------------------------

class PlantedModel {
  public:
    explicit PlantedModel(const SparseRegressionSpec& spec);

    const SparseRegressionSpec& spec() const { return spec_; }
    const std::vector<std::vector<int>>& supports() const { return supports_; }

    // Exact log densities of one dataset {(x_i, y_i)} of n observations.
    double planted_log_density(const std::vector<Vec>& xs, const Vec& ys) const;
    double null_log_density(const std::vector<Vec>& xs, const Vec& ys) const;
    // log planted - log null; the shared x factor cancels exactly.
    double log_ratio(const std::vector<Vec>& xs, const Vec& ys) const;

    void sample_planted(int n_obs, Rng& rng, std::vector<Vec>& xs, Vec& ys) const;
    void sample_null(int n_obs, Rng& rng, std::vector<Vec>& xs, Vec& ys) const;

  private:
    SparseRegressionSpec spec_;
    std::vector<std::vector<int>> supports_;  // C(s,k) k-sparse index sets
};

// TV(pi^(N), null^(x)N) by the ratio identity with exact densities.
DivergenceEstimate planted_vs_null_tv(const PlantedModel& model, int n_obs, std::int64_t n_mc,
                                      std::uint64_t seed, int threads = 1);

struct AonWindowReport {
    double n_star = 0.0;
    int n_hi = 0;  // ceil(beta_hi * N*), retained-block count for the strong check
    int n_lo = 0;  // floor(beta_lo * N*), retained-block count for the weak check
    DivergenceEstimate tv_hi;
    DivergenceEstimate tv_lo;
    bool strong_pass = false;  // tv_hi >= 1 - eps^2 with 3*stderr margin
    bool weak_pass = false;    // tv_lo <= tau with 3*stderr margin
    bool pass = false;
    double erased_after = 0.0;   // N + 2 - n_hi on the erased-index scale
    double erased_before = 0.0;  // N + 2 - n_lo
};

AonWindowReport aon_window_check(const PlantedModel& model, int n_blocks_total, double epsilon,
                                 double tau, double beta_lo, double beta_hi, std::int64_t n_mc,
                                 std::uint64_t seed, int threads = 1);

}  // namespace critwin
