#pragma once

#include <functional>
#include <optional>

#include "critwin/distributions.hpp"

namespace critwin {

// ---------------------------------------------------------------------------
// Forward degradation processes and their index sets
// ---------------------------------------------------------------------------

// I = [0, inf]; Y_t = e^{-t} X + sqrt(1-e^{-2t}) Z, terminal N(0,I).
struct OuProcess {};

// I = [0,1]; each position independently set to the MASK sentinel w.p. t.
struct RandomMaskProcess {};

// I = {0,...,T}; Y_t = first T-t tokens.
struct TruncationProcess {
    int length = 0;
};

using ForwardProcess = std::variant<OuProcess, RandomMaskProcess, TruncationProcess>;

struct NoisedSample {
    double t = 0.0;
    Sample payload;
};

// Throws PreconditionError when t lies outside the process index set.
void validate_time(const ForwardProcess& process, double t);

NoisedSample forward_sample(const ForwardProcess& process, const Sample& x, double t, Rng& rng);

// Markov step from an intermediate level t1 to t2 >= t1.
NoisedSample forward_step(const ForwardProcess& process, const NoisedSample& y, double t2, Rng& rng);

// ---------------------------------------------------------------------------
// Noised component laws p^theta_t
// ---------------------------------------------------------------------------

// Exact law of Y_t when X ~ component. Supported pairs:
//   (OU, IsotropicGaussian)      -> N(e^{-t} mu, I)
//   (RandomMask, DiracString)    -> per-position {token w.p. 1-t, MASK w.p. t}
//   (Truncation, any finite seq) -> prefix marginal
struct NoisedDist {
    std::function<double(const Sample&)> log_density;
    std::function<Sample(Rng&)> sample;
};

NoisedDist noised_component_dist(const ForwardProcess& process, const ComponentDist& dist, double t);

// Noised sub-mixture as a pointwise-evaluable, samplable distribution.
PdfSampler noised_pdf_sampler(const MixtureModel& model, const SubsetSelector& sel,
                              const ForwardProcess& process, double t);

// ---------------------------------------------------------------------------
// Posteriors and exact reverse sampling
// ---------------------------------------------------------------------------

// w_theta p^theta_t(y) / sum_phi w_phi p^phi_t(y). Throws on zero total likelihood.
std::vector<double> posterior_over_components(const MixtureModel& model,
                                              const ForwardProcess& process, double t,
                                              const Sample& y);

// The Bayes-rule bound quantity max(1,W) * p^{not S}_t(y) / (p^{not S}_t(y) + p^S_t(y)),
// which dominates the posterior mass outside the target subset.
double posterior_tail_ratio(const MixtureModel& model, const ForwardProcess& process,
                            const SubsetSelector& target, double t, const Sample& y);

// Exact draw from P(X | Y_t = y) under the FULL mixture prior.
Sample reverse_sample_exact(const MixtureModel& model, const ForwardProcess& process,
                            const NoisedSample& y, Rng& rng, int* chosen_component = nullptr);

// grad ln p_t(x) for an all-Gaussian mixture under OU noising.
Vec mixture_score(const MixtureModel& model, const Vec& x, double t);

// Euler-Maruyama discretization of the reverse SDE from (t, y) down to 0.
// Cross-check only; requires n_steps >= 100 and step size t/n_steps <= 0.05.
Vec reverse_sample_sde(const MixtureModel& model, const Vec& y, double t, int n_steps, Rng& rng);

// ---------------------------------------------------------------------------
// Exact laws by enumeration (discrete instances)
// ---------------------------------------------------------------------------

// Law of Y_t as a map over sequences (masked positions hold kMask; truncation
// prefixes are shorter sequences).
SeqDist exact_noised_seq_dist(const ComponentDist& dist, const ForwardProcess& process, double t);
SeqDist exact_noised_seq_dist(const MixtureModel& model, const SubsetSelector& sel,
                              const ForwardProcess& process, double t);

// Exact law of X^{S,t}: forward from p^S to level t, then reverse under the
// full mixture prior. Supported for Truncation (any enumerable model) and
// RandomMask (mixtures of DiracStrings).
SeqDist exact_resample_law(const MixtureModel& model, const ForwardProcess& process,
                           const SubsetSelector& s_init, double t);

}  // namespace critwin
