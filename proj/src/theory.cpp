#include "critwin/theory.hpp"

#include <algorithm>
#include <cmath>

namespace critwin {

std::string to_string(CurveKind kind) {
    switch (kind) {
        case CurveKind::membership_prob: return "membership-prob";
        case CurveKind::same_answer_prob: return "same-answer-prob";
        case CurveKind::tv: return "tv";
        case CurveKind::exact: return "exact";
    }
    return "unknown";
}

CurveKind curve_kind_from_string(const std::string& s) {
    if (s == "membership-prob") return CurveKind::membership_prob;
    if (s == "same-answer-prob") return CurveKind::same_answer_prob;
    if (s == "tv") return CurveKind::tv;
    if (s == "exact") return CurveKind::exact;
    throw UnsupportedError("unknown curve kind: " + s);
}

void Curve::validate() const {
    for (std::size_t i = 0; i + 1 < points.size(); ++i)
        if (!(points[i].t < points[i + 1].t))
            throw UnsupportedError("Curve: t grid must be strictly increasing");
    for (const auto& p : points) {
        if (p.stderr_ < 0.0) throw UnsupportedError("Curve: negative stderr");
        if (kind == CurveKind::exact && p.stderr_ != 0.0)
            throw UnsupportedError("Curve: exact curves carry stderr = 0");
    }
}

double theorem_bound(double epsilon, double w_ratio) {
    if (!(epsilon >= 0.0 && epsilon < 1.0))
        throw PreconditionError("theorem_bound: epsilon must lie in [0,1)");
    if (!(w_ratio >= 0.0)) throw PreconditionError("theorem_bound: W must be >= 0");
    return epsilon * (1.0 + std::max(1.0, w_ratio) / std::sqrt(2.0));
}

namespace {

void check_epsilon_open(double epsilon, const char* who) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw PreconditionError(std::string(who) + ": epsilon must lie in (0,1)");
}

WindowPrediction clamp_to(double t_after, double t_before, double epsilon, double lo, double hi) {
    WindowPrediction w{t_after, t_before, epsilon, false, false};
    if (w.t_after < lo) {
        w.t_after = lo;
        w.clamped_after = true;
    }
    if (w.t_before > hi) {
        w.t_before = hi;
        w.clamped_before = true;
    }
    return w;
}

}  // namespace

WindowPrediction predict_two_gaussians(double mu_norm, double epsilon) {
    if (!(mu_norm > 0.0)) throw PreconditionError("predict_two_gaussians: ||mu|| must be > 0");
    check_epsilon_open(epsilon, "predict_two_gaussians");
    const double inner = std::log(1.0 / (2.0 * epsilon * epsilon));
    if (!(inner > 1.0))
        throw PreconditionError(
            "predict_two_gaussians: requires ln(1/(2 eps^2)) > 1, i.e. eps < 1/sqrt(2e) ~= 0.4289");
    const double t_before = std::log(mu_norm) + std::log(2.0) + std::log(1.0 / epsilon);
    const double t_after = std::log(mu_norm) - std::log(inner);
    return clamp_to(t_after, t_before, epsilon, 0.0, std::numeric_limits<double>::infinity());
}

WindowPrediction predict_random_means(const std::vector<Vec>& means, int target_id,
                                      double epsilon) {
    const int k = static_cast<int>(means.size());
    if (k < 2) throw PreconditionError("predict_random_means: needs K >= 2 means");
    if (target_id < 0 || target_id >= k)
        throw PreconditionError("predict_random_means: target_id out of range");
    check_epsilon_open(epsilon, "predict_random_means");
    const double log_ratio = std::log(static_cast<double>(k) / epsilon);
    if (!(log_ratio > 0.125))
        throw PreconditionError("predict_random_means: requires ln(K/eps) > 1/8");
    double max_d = 0.0, min_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
        if (j == target_id) continue;
        const double d = norm(sub(means[target_id], means[j]));
        if (d <= 0.0) throw PreconditionError("predict_random_means: duplicate means");
        max_d = std::max(max_d, d);
        min_d = std::min(min_d, d);
    }
    const double t_before = std::log(max_d) + std::log(1.0 / epsilon);
    const double t_after = std::log(min_d) - 0.5 * std::log(8.0 * log_ratio);
    return clamp_to(t_after, t_before, epsilon, 0.0, std::numeric_limits<double>::infinity());
}

WindowPrediction predict_random_mask(int d_hamming, double epsilon) {
    if (d_hamming < 1) throw PreconditionError("predict_random_mask: d_H must be >= 1");
    check_epsilon_open(epsilon, "predict_random_mask");
    const double dh = static_cast<double>(d_hamming);
    const double t_before = std::exp(std::log1p(-epsilon) / dh);
    const double t_after = std::exp(std::log(epsilon * epsilon) / dh);
    return clamp_to(t_after, t_before, epsilon, 0.0, 1.0);
}

WindowPrediction predict_biased_walk(const BiasedWalkSpec& spec) {
    if (!(spec.delta > 0.0 && spec.delta < 0.5))
        throw PreconditionError("predict_biased_walk: Delta must lie in (0, 0.5)");
    check_epsilon_open(spec.epsilon, "predict_biased_walk");
    if (spec.length < 1) throw PreconditionError("predict_biased_walk: T must be >= 1");
    const double eps2 = spec.epsilon * spec.epsilon;
    const double d2 = spec.delta * spec.delta;
    const double after_offset = std::log(2.0 / eps2) / (2.0 * d2);
    if (!(after_offset < static_cast<double>(spec.absorb)))
        throw PreconditionError(
            "predict_biased_walk: requires ln(2/eps^2)/(2 Delta^2) < A; got " +
            std::to_string(after_offset) + " vs A = " + std::to_string(spec.absorb));
    const double cap = 1e-3 * (0.5 - spec.delta) * (0.5 + spec.delta);
    if (!(eps2 < cap))
        throw PreconditionError(
            "predict_biased_walk: requires eps^2 < 1e-3 (0.5-Delta)(0.5+Delta); got eps^2 = " +
            std::to_string(eps2) + " vs bound " + std::to_string(cap));
    const double t_after = static_cast<double>(spec.length) - after_offset;
    const double t_before = static_cast<double>(spec.length) - eps2 / d2 + 2.0;
    return clamp_to(t_after, t_before, spec.epsilon, 0.0, static_cast<double>(spec.length));
}

double ar_gmm_phi(double x, double inner_uv) {
    const double up = 2.0 + x * (1.0 + inner_uv) / 2.0;
    const double dn = 2.0 + x * (1.0 - inner_uv) / 2.0;
    return (2.0 + x) / (up * dn);
}

WindowPrediction predict_ar_gmm(const ArGmmSpec& spec) {
    if (!(spec.alpha > 0.0)) throw PreconditionError("predict_ar_gmm: alpha must be > 0");
    check_epsilon_open(spec.epsilon, "predict_ar_gmm");
    if (std::abs(spec.inner_uv) > 1.0)
        throw PreconditionError("predict_ar_gmm: |<u,v>| must be <= 1");
    if (std::abs(std::abs(spec.inner_uv) - 1.0) < 1e-15)
        throw PreconditionError("predict_ar_gmm: components identical up to sign degenerate");
    const double side = std::exp(-spec.t_context) * std::sqrt(spec.alpha - std::log1p(spec.alpha));
    if (!(side <= spec.epsilon))
        throw PreconditionError(
            "predict_ar_gmm: side condition e^{-T} sqrt(alpha - log(1+alpha)) <= eps fails");
    const double eps2 = spec.epsilon * spec.epsilon;
    const double c = spec.inner_uv;
    if (!(eps2 < ar_gmm_phi(0.0, c) && eps2 > ar_gmm_phi(spec.alpha, c)))
        throw PreconditionError("predict_ar_gmm: eps^2 must lie in (phi(alpha), phi(0)=1/2)");
    // phi is continuous and strictly decreasing on [0,alpha] for |<u,v>| < 1;
    // verified on a grid before inversion.
    const int grid = 256;
    double prev = ar_gmm_phi(0.0, c);
    for (int i = 1; i <= grid; ++i) {
        const double cur = ar_gmm_phi(spec.alpha * i / grid, c);
        if (!(cur < prev)) throw PreconditionError("predict_ar_gmm: phi not strictly decreasing");
        prev = cur;
    }
    double lo = 0.0, hi = spec.alpha;
    while (hi - lo > 1e-10 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (ar_gmm_phi(mid, c) > eps2)
            lo = mid;
        else
            hi = mid;
    }
    const double x_star = 0.5 * (lo + hi);
    const double t_after = 0.5 * std::log(spec.alpha / x_star);
    const double t_before =
        0.5 * std::log(spec.alpha * std::sqrt(1.0 + spec.alpha * spec.alpha) *
                       std::sqrt(1.0 - c * c) / spec.epsilon);
    return clamp_to(t_after, t_before, spec.epsilon, 0.0, std::numeric_limits<double>::infinity());
}

double aon_threshold(const SparseRegressionSpec& spec) {
    if (spec.k < 1) throw PreconditionError("aon_threshold: k must be >= 1");
    if (spec.k >= spec.s) throw PreconditionError("aon_threshold: requires k < s");
    if (!(spec.sigma2 > 0.0)) throw PreconditionError("aon_threshold: sigma^2 must be > 0");
    const double s = static_cast<double>(spec.s), k = static_cast<double>(spec.k);
    return 2.0 * k * std::log(s / k) / std::log1p(k / spec.sigma2);
}

IclExampleBound icl_min_examples(double delta, double epsilon) {
    if (!(delta > 0.0 && delta < 2.0))
        throw PreconditionError("icl_min_examples: delta must lie in (0,2)");
    check_epsilon_open(epsilon, "icl_min_examples");
    const double affinity = 1.0 - delta / 2.0;
    IclExampleBound b;
    b.verbatim = std::log(affinity / epsilon);
    b.conservative = std::log(1.0 / epsilon) / std::log(1.0 / affinity);
    return b;
}

WindowBracket window_bracket_empirical(const Curve& tv_init_vs_target,
                                       const Curve& tv_target_vs_rest, double epsilon) {
    check_epsilon_open(epsilon, "window_bracket_empirical");
    tv_init_vs_target.validate();
    tv_target_vs_rest.validate();
    if (tv_init_vs_target.points.empty() || tv_target_vs_rest.points.empty())
        throw PreconditionError("window_bracket_empirical: empty grid");
    if (tv_init_vs_target.points.size() != tv_target_vs_rest.points.size())
        throw PreconditionError("window_bracket_empirical: curves must share one grid");
    for (std::size_t i = 0; i < tv_init_vs_target.points.size(); ++i) {
        if (tv_init_vs_target.points[i].t != tv_target_vs_rest.points[i].t)
            throw PreconditionError("window_bracket_empirical: curves must share one grid");
        for (const Curve* c : {&tv_init_vs_target, &tv_target_vs_rest}) {
            const double v = c->points[i].value;
            if (!(v >= 0.0 && v <= 1.0 + 1e-12))
                throw PreconditionError("window_bracket_empirical: TV values must lie in [0,1]");
        }
    }
    WindowBracket out;
    for (const auto& p : tv_init_vs_target.points) {
        if (p.value <= epsilon) {
            out.t_end = p.t;
            break;
        }
    }
    const double sep = 1.0 - epsilon * epsilon;
    for (const auto& p : tv_target_vs_rest.points) {
        if (p.value >= sep) out.t_start = p.t;
    }
    return out;
}

}  // namespace critwin
