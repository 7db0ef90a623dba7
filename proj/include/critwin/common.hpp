#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace critwin {

using Vec = std::vector<double>;
using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// Reserved sentinel for masked positions; outside every alphabet.
inline constexpr Token kMask = -1;

// A point in a model's sample space: real vector or token sequence.
using Sample = std::variant<Vec, TokenSeq>;

// Tolerance for probability-simplex invariants (weights, tables).
inline constexpr double kSimplexTol = 1e-12;

// Numeric-precondition violations (admissible-range failures). CLI exit code 4.
class PreconditionError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// Structural misuse: mismatched sample spaces, unsupported pairs. CLI exit code 3.
class UnsupportedError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

template <class... Ts> struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

inline double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

// Inverse standard normal CDF: rational initial guess plus Newton polish.
double norm_ppf(double p);

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logsumexp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw UnsupportedError("dot: dimension mismatch, expected " + std::to_string(a.size()) +
                               " got " + std::to_string(b.size()));
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double sq_norm(const Vec& a) {
    return std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
}

inline double norm(const Vec& a) {
    return std::sqrt(sq_norm(a));
}

inline Vec sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw UnsupportedError("sub: dimension mismatch, expected " + std::to_string(a.size()) +
                               " got " + std::to_string(b.size()));
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

}  // namespace critwin
