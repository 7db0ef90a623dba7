#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "critwin/common.hpp"
#include "critwin/rng.hpp"

namespace critwin {

// ---------------------------------------------------------------------------
// Sample spaces
// ---------------------------------------------------------------------------

struct SampleSpace {
    enum class Kind { vector_space, sequence_space };
    Kind kind = Kind::sequence_space;
    int dim = 0;       // vector_space
    int length = 0;    // sequence_space
    int alphabet = 0;  // sequence_space

    bool operator==(const SampleSpace&) const = default;
    std::string describe() const;
};

// ---------------------------------------------------------------------------
// Component distributions
// ---------------------------------------------------------------------------

// Unit componentwise variance implied.
struct IsotropicGaussian {
    Vec mean;
};

// Point mass on a fixed token string over alphabet {0..alphabet-1}.
struct DiracString {
    TokenSeq tokens;
    int alphabet = 2;
};

// Walk step tokens.
inline constexpr Token kStepDown = 0;
inline constexpr Token kStepUp = 1;
inline constexpr Token kStepPad = 2;

// Length-T sequence of +-1 steps encoded over {down,up,pad}. Once the walk
// hits +-absorb, every later token is pad. absorb <= 0 disables absorption.
struct BernoulliProductWalk {
    double step_up_prob = 0.5;
    int length = 1;
    int absorb = 0;
};

// Explicit probability table over alphabet^length, row-major in token order.
struct FiniteSeqTable {
    int length = 0;
    int alphabet = 0;
    std::vector<double> probs;
};

// One scaffold-then-choice block of a structured output. All alternatives in
// a choice must have equal length so the overall sequence length is fixed.
struct ChoiceSegment {
    TokenSeq scaffold;
    std::vector<TokenSeq> alternatives;
    std::vector<double> probs;
};

struct StructuredOutput {
    std::vector<ChoiceSegment> segments;
    TokenSeq trailing;
    int alphabet = 2;
};

using ComponentDist =
    std::variant<IsotropicGaussian, DiracString, BernoulliProductWalk, FiniteSeqTable, StructuredOutput>;

SampleSpace sample_space(const ComponentDist& dist);
void validate_component(const ComponentDist& dist);

// ---------------------------------------------------------------------------
// Mixture model and subsets
// ---------------------------------------------------------------------------

struct SubsetSelector {
    explicit SubsetSelector(std::vector<int> member_ids);
    SubsetSelector(std::initializer_list<int> member_ids)
        : SubsetSelector(std::vector<int>(member_ids)) {}

    const std::vector<int>& ids() const { return ids_; }
    bool contains(int id) const;
    std::size_t size() const { return ids_.size(); }

  private:
    std::vector<int> ids_;  // sorted, unique, nonempty
};

class MixtureModel {
  public:
    MixtureModel(std::vector<double> weights, std::vector<ComponentDist> components);

    int size() const { return static_cast<int>(components_.size()); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<ComponentDist>& components() const { return components_; }
    const ComponentDist& component(int id) const { return components_.at(id); }
    double weight(int id) const { return weights_.at(id); }
    const SampleSpace& space() const { return space_; }

    SubsetSelector full_subset() const;
    // Prior mass of a subset.
    double subset_weight(const SubsetSelector& sel) const;
    // Weight ratio W = mass outside target / mass inside target.
    double weight_ratio(const SubsetSelector& target) const;

  private:
    std::vector<double> weights_;
    std::vector<ComponentDist> components_;
    SampleSpace space_;
};

std::optional<SubsetSelector> complement(const SubsetSelector& sel, int n_components);

// ---------------------------------------------------------------------------
// Densities and sampling
// ---------------------------------------------------------------------------

double log_density(const ComponentDist& dist, const Sample& x);
double density(const ComponentDist& dist, const Sample& x);
double density(const MixtureModel& model, const Sample& x);
double density(const MixtureModel& model, const SubsetSelector& sel, const Sample& x);

Sample draw(const ComponentDist& dist, Rng& rng);
Sample draw(const MixtureModel& model, const SubsetSelector& sel, Rng& rng,
            int* chosen_component = nullptr);

// ---------------------------------------------------------------------------
// Finite enumeration
// ---------------------------------------------------------------------------

// Ordered support map; deterministic iteration.
using SeqDist = std::map<TokenSeq, double>;

inline constexpr std::size_t kEnumerationLimit = 1'000'000;

bool finitely_enumerable(const ComponentDist& dist);
SeqDist enumerate_dist(const ComponentDist& dist);
SeqDist enumerate_dist(const MixtureModel& model, const SubsetSelector& sel);

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

enum class DivMethod { exact_enumeration, closed_form, monte_carlo };

struct DivergenceEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::int64_t n_samples = 0;
    DivMethod method = DivMethod::exact_enumeration;
};

DivergenceEstimate tv_exact(const SeqDist& p, const SeqDist& q);
DivergenceEstimate tv_exact(const MixtureModel& pm, const SubsetSelector& ps,
                            const MixtureModel& qm, const SubsetSelector& qs);

// Pointwise-evaluable, samplable distribution for Monte-Carlo divergence work.
struct PdfSampler {
    std::function<double(const Sample&)> log_density;
    std::function<Sample(Rng&)> sample;
};

PdfSampler pdf_sampler(const MixtureModel& model, const SubsetSelector& sel);

// Monte-Carlo TV via TV(P,Q) = E_{x~(P+Q)/2} |p-q|/(p+q). Deterministic
// given (seed, n); requires n >= 100.
DivergenceEstimate tv_mc(const PdfSampler& p, const PdfSampler& q, std::int64_t n,
                         std::uint64_t seed);

// 2*Phi(||mu1-mu2||/2) - 1 for unit-variance isotropic Gaussians.
double tv_isotropic_gaussians(const Vec& mu1, const Vec& mu2);

// 1 - H^2/2 for diagonal-covariance Gaussians; value in (0,1].
double hellinger_affinity_gaussian(const Vec& mu_p, const Vec& var_p, const Vec& mu_q,
                                   const Vec& var_q);

// E_{x~P}[q/(p+q)] exactly on finite supports; 0/0 atoms contribute 0.
double ratio_expectation(const SeqDist& p, const SeqDist& q);

// Squared Hellinger distance between finite distributions.
double hellinger_sq_exact(const SeqDist& p, const SeqDist& q);

}  // namespace critwin
