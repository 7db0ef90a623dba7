#include "critwin/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

namespace critwin {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::size_t pow_size(int base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > kEnumerationLimit * 8) return kEnumerationLimit * 8 + 1;
        r *= static_cast<std::size_t>(base);
    }
    return r;
}

void check_tokens(const TokenSeq& tokens, int alphabet, const char* what) {
    for (Token t : tokens) {
        if (t < 0 || t >= alphabet)
            throw UnsupportedError(std::string(what) + ": token out of alphabet range");
    }
}

int structured_length(const StructuredOutput& so) {
    int len = 0;
    for (const auto& seg : so.segments) {
        len += static_cast<int>(seg.scaffold.size());
        len += seg.alternatives.empty() ? 0 : static_cast<int>(seg.alternatives.front().size());
    }
    len += static_cast<int>(so.trailing.size());
    return len;
}

}  // namespace

std::string SampleSpace::describe() const {
    if (kind == Kind::vector_space) return "R^" + std::to_string(dim);
    return "A^" + std::to_string(length) + " with |A|=" + std::to_string(alphabet);
}

SampleSpace sample_space(const ComponentDist& dist) {
    return std::visit(
        overloaded{
            [](const IsotropicGaussian& g) {
                return SampleSpace{SampleSpace::Kind::vector_space, static_cast<int>(g.mean.size()),
                                   0, 0};
            },
            [](const DiracString& d) {
                return SampleSpace{SampleSpace::Kind::sequence_space, 0,
                                   static_cast<int>(d.tokens.size()), d.alphabet};
            },
            [](const BernoulliProductWalk& w) {
                return SampleSpace{SampleSpace::Kind::sequence_space, 0, w.length, 3};
            },
            [](const FiniteSeqTable& t) {
                return SampleSpace{SampleSpace::Kind::sequence_space, 0, t.length, t.alphabet};
            },
            [](const StructuredOutput& s) {
                return SampleSpace{SampleSpace::Kind::sequence_space, 0, structured_length(s),
                                   s.alphabet};
            }},
        dist);
}

void validate_component(const ComponentDist& dist) {
    std::visit(
        overloaded{
            [](const IsotropicGaussian& g) {
                if (g.mean.empty()) throw UnsupportedError("IsotropicGaussian: dimension must be >= 1");
            },
            [](const DiracString& d) {
                if (d.alphabet < 1) throw UnsupportedError("DiracString: alphabet must be >= 1");
                check_tokens(d.tokens, d.alphabet, "DiracString");
            },
            [](const BernoulliProductWalk& w) {
                if (!(w.step_up_prob > 0.0 && w.step_up_prob < 1.0))
                    throw PreconditionError("BernoulliProductWalk: step probability must lie in (0,1)");
                if (w.length < 1) throw UnsupportedError("BernoulliProductWalk: length must be >= 1");
            },
            [](const FiniteSeqTable& t) {
                if (t.length < 1 || t.length > 8)
                    throw UnsupportedError("FiniteSeqTable: length must lie in [1,8]");
                if (t.alphabet < 1 || t.alphabet > 4)
                    throw UnsupportedError("FiniteSeqTable: alphabet must lie in [1,4]");
                if (t.probs.size() != pow_size(t.alphabet, t.length))
                    throw UnsupportedError("FiniteSeqTable: table size != alphabet^length");
                double s = 0.0;
                for (double p : t.probs) {
                    if (p < 0.0) throw UnsupportedError("FiniteSeqTable: negative probability");
                    s += p;
                }
                if (std::abs(s - 1.0) > kSimplexTol)
                    throw UnsupportedError("FiniteSeqTable: probabilities must sum to 1");
            },
            [](const StructuredOutput& s) {
                if (s.alphabet < 1) throw UnsupportedError("StructuredOutput: alphabet must be >= 1");
                if (s.segments.empty())
                    throw UnsupportedError("StructuredOutput: needs at least one segment");
                check_tokens(s.trailing, s.alphabet, "StructuredOutput");
                for (const auto& seg : s.segments) {
                    check_tokens(seg.scaffold, s.alphabet, "StructuredOutput");
                    if (seg.alternatives.empty())
                        throw UnsupportedError("StructuredOutput: choice needs alternatives");
                    if (seg.alternatives.size() != seg.probs.size())
                        throw UnsupportedError("StructuredOutput: alternatives/probs size mismatch");
                    const std::size_t alt_len = seg.alternatives.front().size();
                    double total = 0.0;
                    for (std::size_t a = 0; a < seg.alternatives.size(); ++a) {
                        if (seg.alternatives[a].size() != alt_len)
                            throw UnsupportedError(
                                "StructuredOutput: alternatives in one choice must share length");
                        check_tokens(seg.alternatives[a], s.alphabet, "StructuredOutput");
                        if (seg.probs[a] < 0.0)
                            throw UnsupportedError("StructuredOutput: negative choice probability");
                        total += seg.probs[a];
                    }
                    if (std::abs(total - 1.0) > kSimplexTol)
                        throw UnsupportedError("StructuredOutput: choice probabilities must sum to 1");
                }
            }},
        dist);
}

// ---------------------------------------------------------------------------

SubsetSelector::SubsetSelector(std::vector<int> member_ids) : ids_(std::move(member_ids)) {
    if (ids_.empty()) throw UnsupportedError("SubsetSelector: must be nonempty");
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    if (ids_.front() < 0) throw UnsupportedError("SubsetSelector: negative component id");
}

bool SubsetSelector::contains(int id) const {
    return std::binary_search(ids_.begin(), ids_.end(), id);
}

MixtureModel::MixtureModel(std::vector<double> weights, std::vector<ComponentDist> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    if (components_.empty()) throw UnsupportedError("MixtureModel: needs at least one component");
    if (weights_.size() != components_.size())
        throw UnsupportedError("MixtureModel: weights/components size mismatch");
    double s = 0.0;
    for (double w : weights_) {
        if (w <= 0.0) throw UnsupportedError("MixtureModel: weights must be positive");
        s += w;
    }
    if (std::abs(s - 1.0) > kSimplexTol)
        throw UnsupportedError("MixtureModel: weights must sum to 1");
    validate_component(components_.front());
    space_ = sample_space(components_.front());
    for (std::size_t i = 1; i < components_.size(); ++i) {
        validate_component(components_[i]);
        SampleSpace sp = sample_space(components_[i]);
        if (!(sp == space_))
            throw UnsupportedError("MixtureModel: component sample spaces differ, expected " +
                                   space_.describe() + " got " + sp.describe());
    }
}

SubsetSelector MixtureModel::full_subset() const {
    std::vector<int> ids(components_.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return SubsetSelector(std::move(ids));
}

double MixtureModel::subset_weight(const SubsetSelector& sel) const {
    double s = 0.0;
    for (int id : sel.ids()) {
        if (id >= size()) throw UnsupportedError("SubsetSelector: id out of range");
        s += weights_[id];
    }
    return s;
}

double MixtureModel::weight_ratio(const SubsetSelector& target) const {
    double inside = subset_weight(target);
    return (1.0 - inside) / inside;
}

std::optional<SubsetSelector> complement(const SubsetSelector& sel, int n_components) {
    std::vector<int> ids;
    for (int i = 0; i < n_components; ++i)
        if (!sel.contains(i)) ids.push_back(i);
    if (ids.empty()) return std::nullopt;
    return SubsetSelector(std::move(ids));
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

namespace {

const TokenSeq& as_seq(const Sample& x, const SampleSpace& space) {
    const auto* seq = std::get_if<TokenSeq>(&x);
    if (!seq)
        throw UnsupportedError("sample type mismatch: expected " + space.describe() +
                               " got a real vector");
    if (static_cast<int>(seq->size()) != space.length)
        throw UnsupportedError("sequence length mismatch: expected " + space.describe() + " got length " +
                               std::to_string(seq->size()));
    return *seq;
}

const Vec& as_vec(const Sample& x, const SampleSpace& space) {
    const auto* v = std::get_if<Vec>(&x);
    if (!v)
        throw UnsupportedError("sample type mismatch: expected " + space.describe() +
                               " got a token sequence");
    if (static_cast<int>(v->size()) != space.dim)
        throw UnsupportedError("vector dimension mismatch: expected " + space.describe() +
                               " got dim " + std::to_string(v->size()));
    return *v;
}

std::size_t table_index(const FiniteSeqTable& t, const TokenSeq& s) {
    std::size_t idx = 0;
    for (Token tok : s) idx = idx * static_cast<std::size_t>(t.alphabet) + static_cast<std::size_t>(tok);
    return idx;
}

double walk_log_density(const BernoulliProductWalk& w, const TokenSeq& s) {
    const double lu = std::log(w.step_up_prob);
    const double ld = std::log1p(-w.step_up_prob);
    double ll = 0.0;
    int pos = 0;
    bool absorbed = false;
    for (Token tok : s) {
        if (absorbed) {
            if (tok != kStepPad) return -std::numeric_limits<double>::infinity();
            continue;
        }
        if (tok == kStepUp) {
            ll += lu;
            ++pos;
        } else if (tok == kStepDown) {
            ll += ld;
            --pos;
        } else {
            return -std::numeric_limits<double>::infinity();
        }
        if (w.absorb > 0 && std::abs(pos) >= w.absorb) absorbed = true;
    }
    return ll;
}

double structured_log_density(const StructuredOutput& so, const TokenSeq& s) {
    std::size_t cursor = 0;
    double ll = 0.0;
    auto match = [&](const TokenSeq& ref) {
        for (Token tok : ref)
            if (s[cursor++] != tok) return false;
        return true;
    };
    for (const auto& seg : so.segments) {
        if (!match(seg.scaffold)) return -std::numeric_limits<double>::infinity();
        const std::size_t span = cursor;
        bool found = false;
        for (std::size_t a = 0; a < seg.alternatives.size(); ++a) {
            cursor = span;
            if (match(seg.alternatives[a])) {
                if (seg.probs[a] <= 0.0) return -std::numeric_limits<double>::infinity();
                ll += std::log(seg.probs[a]);
                found = true;
                break;
            }
        }
        if (!found) return -std::numeric_limits<double>::infinity();
    }
    if (!match(so.trailing)) return -std::numeric_limits<double>::infinity();
    return ll;
}

}  // namespace

double log_density(const ComponentDist& dist, const Sample& x) {
    const SampleSpace space = sample_space(dist);
    return std::visit(
        overloaded{
            [&](const IsotropicGaussian& g) {
                const Vec& v = as_vec(x, space);
                double ll = -0.5 * static_cast<double>(g.mean.size()) * kLog2Pi;
                for (std::size_t i = 0; i < g.mean.size(); ++i) {
                    const double d = v[i] - g.mean[i];
                    ll -= 0.5 * d * d;
                }
                return ll;
            },
            [&](const DiracString& d) {
                return as_seq(x, space) == d.tokens ? 0.0
                                                    : -std::numeric_limits<double>::infinity();
            },
            [&](const BernoulliProductWalk& w) { return walk_log_density(w, as_seq(x, space)); },
            [&](const FiniteSeqTable& t) {
                const double p = t.probs[table_index(t, as_seq(x, space))];
                return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
            },
            [&](const StructuredOutput& so) { return structured_log_density(so, as_seq(x, space)); }},
        dist);
}

double density(const ComponentDist& dist, const Sample& x) {
    return std::exp(log_density(dist, x));
}

double density(const MixtureModel& model, const Sample& x) {
    double s = 0.0;
    for (int i = 0; i < model.size(); ++i) s += model.weight(i) * density(model.component(i), x);
    return s;
}

double density(const MixtureModel& model, const SubsetSelector& sel, const Sample& x) {
    const double z = model.subset_weight(sel);
    double s = 0.0;
    for (int id : sel.ids()) s += model.weight(id) * density(model.component(id), x);
    return s / z;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Sample draw(const ComponentDist& dist, Rng& rng) {
    return std::visit(
        overloaded{
            [&](const IsotropicGaussian& g) -> Sample {
                Vec v(g.mean.size());
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = g.mean[i] + rng.normal();
                return v;
            },
            [&](const DiracString& d) -> Sample { return d.tokens; },
            [&](const BernoulliProductWalk& w) -> Sample {
                TokenSeq s(w.length);
                int pos = 0;
                bool absorbed = false;
                for (int i = 0; i < w.length; ++i) {
                    if (absorbed) {
                        s[i] = kStepPad;
                        continue;
                    }
                    const bool up = rng.uniform() < w.step_up_prob;
                    s[i] = up ? kStepUp : kStepDown;
                    pos += up ? 1 : -1;
                    if (w.absorb > 0 && std::abs(pos) >= w.absorb) absorbed = true;
                }
                return s;
            },
            [&](const FiniteSeqTable& t) -> Sample {
                const std::size_t idx = static_cast<std::size_t>(rng.categorical(t.probs));
                TokenSeq s(t.length);
                std::size_t rest = idx;
                for (int i = t.length - 1; i >= 0; --i) {
                    s[i] = static_cast<Token>(rest % t.alphabet);
                    rest /= t.alphabet;
                }
                return s;
            },
            [&](const StructuredOutput& so) -> Sample {
                TokenSeq s;
                for (const auto& seg : so.segments) {
                    s.insert(s.end(), seg.scaffold.begin(), seg.scaffold.end());
                    const int a = rng.categorical(seg.probs);
                    s.insert(s.end(), seg.alternatives[a].begin(), seg.alternatives[a].end());
                }
                s.insert(s.end(), so.trailing.begin(), so.trailing.end());
                return s;
            }},
        dist);
}

Sample draw(const MixtureModel& model, const SubsetSelector& sel, Rng& rng, int* chosen_component) {
    std::vector<double> w;
    w.reserve(sel.size());
    for (int id : sel.ids()) w.push_back(model.weight(id));
    const int pick = sel.ids()[static_cast<std::size_t>(rng.categorical(w))];
    if (chosen_component) *chosen_component = pick;
    return draw(model.component(pick), rng);
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

bool finitely_enumerable(const ComponentDist& dist) {
    return std::visit(overloaded{[](const IsotropicGaussian&) { return false; },
                                 [](const auto&) { return true; }},
                      dist);
}

namespace {

void walk_enumerate(const BernoulliProductWalk& w, TokenSeq& prefix, int pos, bool absorbed,
                    double prob, SeqDist& out) {
    if (static_cast<int>(prefix.size()) == w.length) {
        out[prefix] += prob;
        return;
    }
    if (out.size() > kEnumerationLimit)
        throw UnsupportedError("BernoulliProductWalk: support exceeds enumeration limit");
    if (absorbed) {
        prefix.push_back(kStepPad);
        walk_enumerate(w, prefix, pos, absorbed, prob, out);
        prefix.pop_back();
        return;
    }
    for (Token tok : {kStepDown, kStepUp}) {
        const int npos = pos + (tok == kStepUp ? 1 : -1);
        const bool nabs = w.absorb > 0 && std::abs(npos) >= w.absorb;
        prefix.push_back(tok);
        walk_enumerate(w, prefix, npos, nabs,
                       prob * (tok == kStepUp ? w.step_up_prob : 1.0 - w.step_up_prob), out);
        prefix.pop_back();
    }
}

void structured_enumerate(const StructuredOutput& so, std::size_t seg_idx, TokenSeq& prefix,
                          double prob, SeqDist& out) {
    if (seg_idx == so.segments.size()) {
        TokenSeq full = prefix;
        full.insert(full.end(), so.trailing.begin(), so.trailing.end());
        out[full] += prob;
        return;
    }
    if (out.size() > kEnumerationLimit)
        throw UnsupportedError("StructuredOutput: support exceeds enumeration limit");
    const auto& seg = so.segments[seg_idx];
    const std::size_t mark = prefix.size();
    prefix.insert(prefix.end(), seg.scaffold.begin(), seg.scaffold.end());
    for (std::size_t a = 0; a < seg.alternatives.size(); ++a) {
        if (seg.probs[a] <= 0.0) continue;
        prefix.insert(prefix.end(), seg.alternatives[a].begin(), seg.alternatives[a].end());
        structured_enumerate(so, seg_idx + 1, prefix, prob * seg.probs[a], out);
        prefix.resize(mark + seg.scaffold.size());
    }
    prefix.resize(mark);
}

}  // namespace

SeqDist enumerate_dist(const ComponentDist& dist) {
    SeqDist out;
    std::visit(overloaded{[&](const IsotropicGaussian&) -> void {
                              throw UnsupportedError(
                                  "enumerate_dist: Gaussian support is not enumerable; use tv_mc or "
                                  "tv_isotropic_gaussians");
                          },
                          [&](const DiracString& d) { out[d.tokens] = 1.0; },
                          [&](const BernoulliProductWalk& w) {
                              TokenSeq prefix;
                              prefix.reserve(w.length);
                              if (w.length > 40)
                                  throw UnsupportedError(
                                      "BernoulliProductWalk: support exceeds enumeration limit");
                              walk_enumerate(w, prefix, 0, false, 1.0, out);
                          },
                          [&](const FiniteSeqTable& t) {
                              TokenSeq s(t.length, 0);
                              for (std::size_t idx = 0; idx < t.probs.size(); ++idx) {
                                  if (t.probs[idx] > 0.0) out[s] = t.probs[idx];
                                  for (int i = t.length - 1; i >= 0; --i) {
                                      if (++s[i] < t.alphabet) break;
                                      s[i] = 0;
                                  }
                              }
                          },
                          [&](const StructuredOutput& so) {
                              TokenSeq prefix;
                              structured_enumerate(so, 0, prefix, 1.0, out);
                          }},
               dist);
    return out;
}

SeqDist enumerate_dist(const MixtureModel& model, const SubsetSelector& sel) {
    const double z = model.subset_weight(sel);
    SeqDist out;
    for (int id : sel.ids()) {
        const SeqDist comp = enumerate_dist(model.component(id));
        const double w = model.weight(id) / z;
        for (const auto& [s, p] : comp) out[s] += w * p;
        if (out.size() > kEnumerationLimit)
            throw UnsupportedError("enumerate_dist: mixture support exceeds enumeration limit");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

DivergenceEstimate tv_exact(const SeqDist& p, const SeqDist& q) {
    double acc = 0.0;
    auto it_p = p.begin();
    auto it_q = q.begin();
    while (it_p != p.end() || it_q != q.end()) {
        if (it_q == q.end() || (it_p != p.end() && it_p->first < it_q->first)) {
            acc += it_p->second;
            ++it_p;
        } else if (it_p == p.end() || it_q->first < it_p->first) {
            acc += it_q->second;
            ++it_q;
        } else {
            acc += std::abs(it_p->second - it_q->second);
            ++it_p;
            ++it_q;
        }
    }
    return {0.5 * acc, 0.0, 0, DivMethod::exact_enumeration};
}

DivergenceEstimate tv_exact(const MixtureModel& pm, const SubsetSelector& ps,
                            const MixtureModel& qm, const SubsetSelector& qs) {
    return tv_exact(enumerate_dist(pm, ps), enumerate_dist(qm, qs));
}

PdfSampler pdf_sampler(const MixtureModel& model, const SubsetSelector& sel) {
    const MixtureModel* m = &model;
    SubsetSelector s = sel;
    const double z = model.subset_weight(sel);
    PdfSampler out;
    out.log_density = [m, s, z](const Sample& x) {
        std::vector<double> terms;
        terms.reserve(s.size());
        for (int id : s.ids())
            terms.push_back(std::log(m->weight(id) / z) + log_density(m->component(id), x));
        return logsumexp(terms);
    };
    out.sample = [m, s](Rng& rng) { return draw(*m, s, rng); };
    return out;
}

DivergenceEstimate tv_mc(const PdfSampler& p, const PdfSampler& q, std::int64_t n,
                         std::uint64_t seed) {
    if (n < 100) throw PreconditionError("tv_mc: n must be >= 100");
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        Rng rng = derive_rng(seed, 0, static_cast<std::uint64_t>(i));
        const bool from_p = rng.uniform() < 0.5;
        const Sample x = from_p ? p.sample(rng) : q.sample(rng);
        const double lp = p.log_density(x);
        const double lq = q.log_density(x);
        double v;
        if (std::isinf(lp) && std::isinf(lq))
            v = 0.0;  // outside both supports; cannot happen under the mixture draw
        else if (std::isinf(lp) || std::isinf(lq))
            v = 1.0;
        else
            v = std::tanh(0.5 * std::abs(lp - lq));
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
    const double se = std::sqrt(var / static_cast<double>(n));
    return {mean, se, n, DivMethod::monte_carlo};
}

double tv_isotropic_gaussians(const Vec& mu1, const Vec& mu2) {
    const double r = norm(sub(mu1, mu2));
    return 2.0 * norm_cdf(0.5 * r) - 1.0;
}

double hellinger_affinity_gaussian(const Vec& mu_p, const Vec& var_p, const Vec& mu_q,
                                   const Vec& var_q) {
    const std::size_t d = mu_p.size();
    if (mu_q.size() != d || var_p.size() != d || var_q.size() != d)
        throw UnsupportedError("hellinger_affinity_gaussian: dimension mismatch");
    double log_aff = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (var_p[i] <= 0.0 || var_q[i] <= 0.0)
            throw PreconditionError("hellinger_affinity_gaussian: variances must be positive");
        const double m = 0.5 * (var_p[i] + var_q[i]);
        log_aff += 0.25 * (std::log(var_p[i]) + std::log(var_q[i])) - 0.5 * std::log(m);
        const double dm = mu_p[i] - mu_q[i];
        log_aff -= 0.125 * dm * dm / m;
    }
    return std::exp(log_aff);
}

double ratio_expectation(const SeqDist& p, const SeqDist& q) {
    double acc = 0.0;
    for (const auto& [x, px] : p) {
        auto it = q.find(x);
        const double qx = it == q.end() ? 0.0 : it->second;
        if (px + qx > 0.0) acc += px * qx / (px + qx);
    }
    return acc;
}

double hellinger_sq_exact(const SeqDist& p, const SeqDist& q) {
    // H^2 = 2 - 2*BC on finite supports.
    double bc = 0.0;
    for (const auto& [x, px] : p) {
        auto it = q.find(x);
        if (it != q.end()) bc += std::sqrt(px * it->second);
    }
    return 2.0 - 2.0 * bc;
}

}  // namespace critwin
