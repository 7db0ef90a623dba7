#include "critwin/icl_aon.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace critwin {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_binom(std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n < 2 * threads) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::int64_t> next{0};
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::int64_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

void IclTask::validate() const {
    if (weights.empty() || x_probs.empty() || y_given_x.size() != weights.size())
        throw UnsupportedError("IclTask: inconsistent shapes");
    double ws = 0.0;
    for (double w : weights) {
        if (w <= 0.0) throw UnsupportedError("IclTask: weights must be positive");
        ws += w;
    }
    if (std::abs(ws - 1.0) > kSimplexTol) throw UnsupportedError("IclTask: weights must sum to 1");
    double xs = 0.0;
    for (double p : x_probs) {
        if (p < 0.0) throw UnsupportedError("IclTask: negative x probability");
        xs += p;
    }
    if (std::abs(xs - 1.0) > kSimplexTol)
        throw UnsupportedError("IclTask: x probabilities must sum to 1");
    const std::size_t ny = y_given_x[0].empty() ? 0 : y_given_x[0][0].size();
    for (const auto& per_theta : y_given_x) {
        if (per_theta.size() != x_probs.size()) throw UnsupportedError("IclTask: x-space mismatch");
        for (const auto& row : per_theta) {
            if (row.size() != ny) throw UnsupportedError("IclTask: y-space mismatch");
            double rs = 0.0;
            for (double p : row) {
                if (p < 0.0) throw UnsupportedError("IclTask: negative y probability");
                rs += p;
            }
            if (std::abs(rs - 1.0) > kSimplexTol)
                throw UnsupportedError("IclTask: y|x probabilities must sum to 1");
        }
    }
    if (theta_star < 0 || theta_star >= n_theta())
        throw UnsupportedError("IclTask: theta_star out of range");
    if (n_pairs < 0) throw UnsupportedError("IclTask: n_pairs must be >= 0");
}

IclTask make_bernoulli_icl_task(double p_star, double p_other, double w_star, int n_pairs) {
    if (!(p_star > 0.0 && p_star < 1.0 && p_other > 0.0 && p_other < 1.0))
        throw PreconditionError("make_bernoulli_icl_task: probabilities must lie in (0,1)");
    if (!(w_star > 0.0 && w_star < 1.0))
        throw PreconditionError("make_bernoulli_icl_task: w_star must lie in (0,1)");
    IclTask task;
    task.x_probs = {1.0};
    task.y_given_x = {{{1.0 - p_star, p_star}}, {{1.0 - p_other, p_other}}};
    task.weights = {w_star, 1.0 - w_star};
    task.n_pairs = n_pairs;
    task.theta_star = 0;
    return task;
}

std::vector<double> icl_posterior(const IclTask& task,
                                  const std::vector<std::pair<int, int>>& blocks) {
    task.validate();
    // Fold blocks into counts first: the posterior then depends on the block
    // multiset only, so permutations are bit-identical.
    const int m = task.n_x() * task.n_y();
    std::vector<std::int64_t> counts(m, 0);
    for (const auto& [x, y] : blocks) ++counts[x * task.n_y() + y];
    std::vector<double> logs(task.n_theta());
    for (int th = 0; th < task.n_theta(); ++th) {
        double ll = std::log(task.weights[th]);
        for (int x = 0; x < task.n_x(); ++x)
            for (int y = 0; y < task.n_y(); ++y) {
                const std::int64_t c = counts[x * task.n_y() + y];
                if (c == 0) continue;
                const double q = task.y_given_x[th][x][y];
                if (q <= 0.0) {
                    ll = -std::numeric_limits<double>::infinity();
                    break;
                }
                ll += static_cast<double>(c) * std::log(q);
            }
        logs[th] = ll;
    }
    const double lz = logsumexp(logs);
    if (!std::isfinite(lz))
        throw PreconditionError("icl_posterior: blocks impossible under every theta");
    std::vector<double> post(task.n_theta());
    for (int th = 0; th < task.n_theta(); ++th) post[th] = std::exp(logs[th] - lz);
    return post;
}

namespace {

// TV between the posterior-mixture block law and the theta* block law, plus
// the posterior mass on theta*, for one retained-count vector.
std::pair<double, double> tv_and_post_for_counts(const IclTask& task,
                                                 const std::vector<std::int64_t>& counts) {
    std::vector<double> logs(task.n_theta());
    for (int th = 0; th < task.n_theta(); ++th) {
        double ll = std::log(task.weights[th]);
        for (int x = 0; x < task.n_x() && std::isfinite(ll); ++x)
            for (int y = 0; y < task.n_y(); ++y) {
                const std::int64_t c = counts[x * task.n_y() + y];
                if (c == 0) continue;
                const double q = task.y_given_x[th][x][y];
                if (q <= 0.0) {
                    ll = -std::numeric_limits<double>::infinity();
                    break;
                }
                ll += static_cast<double>(c) * std::log(q);
            }
        logs[th] = ll;
    }
    const double lz = logsumexp(logs);
    double tv = 0.0, post_star = 0.0;
    std::vector<double> post(task.n_theta());
    for (int th = 0; th < task.n_theta(); ++th) post[th] = std::exp(logs[th] - lz);
    post_star = post[task.theta_star];
    for (int x = 0; x < task.n_x(); ++x)
        for (int y = 0; y < task.n_y(); ++y) {
            double mix = 0.0;
            for (int th = 0; th < task.n_theta(); ++th) mix += post[th] * task.block_prob(th, x, y);
            tv += std::abs(mix - task.block_prob(task.theta_star, x, y));
        }
    return {0.5 * tv, post_star};
}

void enumerate_counts(const IclTask& task, int slot, std::int64_t remaining,
                      std::vector<std::int64_t>& counts, double log_pmf_partial,
                      double& expected_tv, double& expected_post) {
    const int m = static_cast<int>(counts.size());
    const int x = slot / task.n_y();
    const int y = slot % task.n_y();
    if (slot == m - 1) {
        counts[slot] = remaining;
        const double q = task.block_prob(task.theta_star, x, y);
        double lp = log_pmf_partial;
        if (remaining > 0) {
            if (q <= 0.0) return;
            lp += static_cast<double>(remaining) * std::log(q) -
                  std::lgamma(static_cast<double>(remaining + 1));
        }
        const double pmf = std::exp(lp);
        if (pmf <= 0.0) return;
        const auto [tv, post] = tv_and_post_for_counts(task, counts);
        expected_tv += pmf * tv;
        expected_post += pmf * post;
        return;
    }
    const double q = task.block_prob(task.theta_star, x, y);
    for (std::int64_t c = 0; c <= remaining; ++c) {
        if (c > 0 && q <= 0.0) break;
        counts[slot] = c;
        double lp = log_pmf_partial;
        if (c > 0)
            lp += static_cast<double>(c) * std::log(q) - std::lgamma(static_cast<double>(c + 1));
        enumerate_counts(task, slot + 1, remaining - c, counts, lp, expected_tv, expected_post);
    }
    counts[slot] = 0;
}

}  // namespace

IclReport icl_forward_reverse(const IclTask& task, int n_erased, std::int64_t n_mc,
                              std::uint64_t seed) {
    task.validate();
    if (n_erased < 0 || n_erased > task.n_pairs)
        throw PreconditionError("icl_forward_reverse: n_erased must lie in [0, N]");
    const int retained = task.n_pairs - n_erased;
    const int m = task.n_x() * task.n_y();

    // Composition count C(retained + m - 1, m - 1) decides exact vs MC.
    const double log_comps = log_binom(retained + m - 1, m - 1);
    IclReport rep;
    rep.n_retained = retained;
    if (log_comps <= std::log(1e6)) {
        std::vector<std::int64_t> counts(m, 0);
        double etv = 0.0, epost = 0.0;
        enumerate_counts(task, 0, retained, counts,
                         std::lgamma(static_cast<double>(retained + 1)), etv, epost);
        rep.expected_tv = etv;
        rep.expected_posterior_star = epost;
        rep.exact = true;
        return rep;
    }
    if (n_mc < 100)
        throw PreconditionError(
            "icl_forward_reverse: count enumeration too large; supply n_mc >= 100");
    double sum_tv = 0.0, sum_tv2 = 0.0, sum_post = 0.0;
    for (std::int64_t i = 0; i < n_mc; ++i) {
        Rng rng = derive_rng(seed, 0, static_cast<std::uint64_t>(i));
        std::vector<std::int64_t> counts(m, 0);
        for (int b = 0; b < retained; ++b) {
            const int x = rng.categorical(task.x_probs);
            const int y = rng.categorical(task.y_given_x[task.theta_star][x]);
            ++counts[x * task.n_y() + y];
        }
        const auto [tv, post] = tv_and_post_for_counts(task, counts);
        sum_tv += tv;
        sum_tv2 += tv * tv;
        sum_post += post;
    }
    const double n = static_cast<double>(n_mc);
    rep.expected_tv = sum_tv / n;
    rep.expected_posterior_star = sum_post / n;
    rep.stderr_ = std::sqrt(std::max(0.0, sum_tv2 / n - rep.expected_tv * rep.expected_tv) / n);
    rep.n_samples = n_mc;
    rep.exact = false;
    return rep;
}

// ---------------------------------------------------------------------------

PlantedModel::PlantedModel(const SparseRegressionSpec& spec) : spec_(spec) {
    if (spec.k < 1 || spec.k >= spec.s)
        throw PreconditionError("PlantedModel: requires 1 <= k < s");
    if (!(spec.sigma2 > 0.0)) throw PreconditionError("PlantedModel: sigma^2 must be > 0");
    const double log_count = log_binom(spec.s, spec.k);
    if (log_count > std::log(1e4))
        throw PreconditionError("PlantedModel: C(s,k) exceeds the 1e4 enumeration limit");
    std::vector<int> cur(spec.k);
    for (int i = 0; i < spec.k; ++i) cur[i] = i;
    for (;;) {
        supports_.push_back(cur);
        int i = spec.k - 1;
        while (i >= 0 && cur[i] == spec.s - spec.k + i) --i;
        if (i < 0) break;
        ++cur[i];
        for (int j = i + 1; j < spec.k; ++j) cur[j] = cur[j - 1] + 1;
    }
}

namespace {

double x_block_log_density(const std::vector<Vec>& xs, int s) {
    double ll = 0.0;
    for (const auto& x : xs) {
        ll -= 0.5 * static_cast<double>(s) * kLog2Pi;
        ll -= 0.5 * sq_norm(x);
    }
    return ll;
}

}  // namespace

double PlantedModel::log_ratio(const std::vector<Vec>& xs, const Vec& ys) const {
    const int n = static_cast<int>(xs.size());
    const double s2 = spec_.sigma2;
    const double null_var = static_cast<double>(spec_.k) + s2;
    std::vector<double> per_support(supports_.size(), 0.0);
    for (std::size_t c = 0; c < supports_.size(); ++c) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            double m = 0.0;
            for (int j : supports_[c]) m += xs[i][j];
            const double d = ys[i] - m;
            ll += -0.5 * (kLog2Pi + std::log(s2)) - 0.5 * d * d / s2;
        }
        per_support[c] = ll;
    }
    double lp = logsumexp(per_support) - std::log(static_cast<double>(supports_.size()));
    double lq = 0.0;
    for (int i = 0; i < n; ++i)
        lq += -0.5 * (kLog2Pi + std::log(null_var)) - 0.5 * ys[i] * ys[i] / null_var;
    return lp - lq;
}

double PlantedModel::planted_log_density(const std::vector<Vec>& xs, const Vec& ys) const {
    return null_log_density(xs, ys) + log_ratio(xs, ys);
}

double PlantedModel::null_log_density(const std::vector<Vec>& xs, const Vec& ys) const {
    const double null_var = static_cast<double>(spec_.k) + spec_.sigma2;
    double ll = x_block_log_density(xs, spec_.s);
    for (double y : ys) ll += -0.5 * (kLog2Pi + std::log(null_var)) - 0.5 * y * y / null_var;
    return ll;
}

void PlantedModel::sample_planted(int n_obs, Rng& rng, std::vector<Vec>& xs, Vec& ys) const {
    const auto& support = supports_[rng() % supports_.size()];
    const double sd = std::sqrt(spec_.sigma2);
    xs.assign(n_obs, Vec(spec_.s));
    ys.assign(n_obs, 0.0);
    for (int i = 0; i < n_obs; ++i) {
        for (int j = 0; j < spec_.s; ++j) xs[i][j] = rng.normal();
        double m = 0.0;
        for (int j : support) m += xs[i][j];
        ys[i] = m + sd * rng.normal();
    }
}

void PlantedModel::sample_null(int n_obs, Rng& rng, std::vector<Vec>& xs, Vec& ys) const {
    const double sd = std::sqrt(static_cast<double>(spec_.k) + spec_.sigma2);
    xs.assign(n_obs, Vec(spec_.s));
    ys.assign(n_obs, 0.0);
    for (int i = 0; i < n_obs; ++i) {
        for (int j = 0; j < spec_.s; ++j) xs[i][j] = rng.normal();
        ys[i] = sd * rng.normal();
    }
}

DivergenceEstimate planted_vs_null_tv(const PlantedModel& model, int n_obs, std::int64_t n_mc,
                                      std::uint64_t seed, int threads) {
    if (n_obs < 0) throw PreconditionError("planted_vs_null_tv: N must be >= 0");
    if (n_obs == 0) return {0.0, 0.0, 0, DivMethod::closed_form};
    if (n_mc < 10'000) throw PreconditionError("planted_vs_null_tv: n_mc must be >= 1e4");
    std::vector<double> vals(n_mc);
    parallel_for(n_mc, threads, [&](std::int64_t i) {
        Rng rng = derive_rng(seed, static_cast<std::uint64_t>(n_obs), static_cast<std::uint64_t>(i));
        std::vector<Vec> xs;
        Vec ys;
        if (rng.uniform() < 0.5)
            model.sample_planted(n_obs, rng, xs, ys);
        else
            model.sample_null(n_obs, rng, xs, ys);
        vals[i] = std::tanh(0.5 * std::abs(model.log_ratio(xs, ys)));
    });
    double sum = 0.0, sumsq = 0.0;
    for (double v : vals) {
        sum += v;
        sumsq += v * v;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    return {mean, std::sqrt(var / n), n_mc, DivMethod::monte_carlo};
}

AonWindowReport aon_window_check(const PlantedModel& model, int n_blocks_total, double epsilon,
                                 double tau, double beta_lo, double beta_hi, std::int64_t n_mc,
                                 std::uint64_t seed, int threads) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw PreconditionError("aon_window_check: epsilon must lie in (0,1)");
    if (!(tau > 0.0 && tau < 1.0))
        throw PreconditionError("aon_window_check: tau must lie in (0,1)");
    if (!(beta_lo < 1.0 && 1.0 < beta_hi))
        throw PreconditionError("aon_window_check: requires beta_lo < 1 < beta_hi");
    AonWindowReport rep;
    rep.n_star = aon_threshold(model.spec());
    rep.n_hi = static_cast<int>(std::ceil(beta_hi * rep.n_star));
    rep.n_lo = static_cast<int>(std::floor(beta_lo * rep.n_star));
    if (rep.n_hi > n_blocks_total)
        throw PreconditionError("aon_window_check: retained blocks exceed sequence length");
    rep.tv_hi = planted_vs_null_tv(model, rep.n_hi, n_mc, seed, threads);
    rep.tv_lo = rep.n_lo == 0 ? DivergenceEstimate{0.0, 0.0, 0, DivMethod::closed_form}
                              : planted_vs_null_tv(model, rep.n_lo, n_mc, seed, threads);
    rep.strong_pass = rep.tv_hi.value - 3.0 * rep.tv_hi.stderr_ >= 1.0 - epsilon * epsilon;
    rep.weak_pass = rep.tv_lo.value + 3.0 * rep.tv_lo.stderr_ <= tau;
    rep.pass = rep.strong_pass && rep.weak_pass;
    rep.erased_after = static_cast<double>(n_blocks_total) + 2.0 - static_cast<double>(rep.n_hi);
    rep.erased_before = static_cast<double>(n_blocks_total) + 2.0 - static_cast<double>(rep.n_lo);
    return rep;
}

}  // namespace critwin
