#include "critwin/processes.hpp"

#include <algorithm>
#include <cmath>

namespace critwin {

namespace {

bool is_integral_time(double t) {
    return std::abs(t - std::round(t)) < 1e-9;
}

const TokenSeq& payload_seq(const Sample& x) {
    const auto* s = std::get_if<TokenSeq>(&x);
    if (!s) throw UnsupportedError("expected a token-sequence payload");
    return *s;
}

const Vec& payload_vec(const Sample& x) {
    const auto* v = std::get_if<Vec>(&x);
    if (!v) throw UnsupportedError("expected a real-vector payload");
    return *v;
}

double ou_scale(double t) {
    return std::isinf(t) ? 0.0 : std::exp(-t);
}

// --- truncation prefix marginals ------------------------------------------

double dirac_prefix_log_density(const DiracString& d, const TokenSeq& prefix) {
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (prefix[i] != d.tokens[i]) return -std::numeric_limits<double>::infinity();
    return 0.0;
}

double table_prefix_log_density(const FiniteSeqTable& t, const TokenSeq& prefix) {
    std::size_t pidx = 0;
    for (Token tok : prefix) pidx = pidx * t.alphabet + static_cast<std::size_t>(tok);
    std::size_t block = 1;
    for (int i = 0; i < t.length - static_cast<int>(prefix.size()); ++i) block *= t.alphabet;
    double s = 0.0;
    for (std::size_t j = pidx * block; j < (pidx + 1) * block; ++j) s += t.probs[j];
    return s > 0.0 ? std::log(s) : -std::numeric_limits<double>::infinity();
}

double walk_prefix_log_density(const BernoulliProductWalk& w, const TokenSeq& prefix) {
    const double lu = std::log(w.step_up_prob);
    const double ld = std::log1p(-w.step_up_prob);
    double ll = 0.0;
    int pos = 0;
    bool absorbed = false;
    for (Token tok : prefix) {
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

double structured_prefix_log_density(const StructuredOutput& so, const TokenSeq& prefix) {
    const std::size_t L = prefix.size();
    std::size_t cursor = 0;
    double ll = 0.0;
    auto match_visible = [&](const TokenSeq& ref) {
        for (Token tok : ref) {
            if (cursor >= L) return true;  // beyond the prefix: unconstrained
            if (prefix[cursor++] != tok) return false;
        }
        return true;
    };
    for (const auto& seg : so.segments) {
        if (!match_visible(seg.scaffold)) return -std::numeric_limits<double>::infinity();
        if (cursor >= L) return ll;
        const std::size_t span = cursor;
        const std::size_t alt_len = seg.alternatives.front().size();
        const std::size_t visible = std::min(alt_len, L - span);
        double mass = 0.0;
        for (std::size_t a = 0; a < seg.alternatives.size(); ++a) {
            bool ok = true;
            for (std::size_t i = 0; i < visible; ++i)
                if (seg.alternatives[a][i] != prefix[span + i]) {
                    ok = false;
                    break;
                }
            if (ok) mass += seg.probs[a];
        }
        if (mass <= 0.0) return -std::numeric_limits<double>::infinity();
        ll += std::log(mass);
        cursor = span + visible;
        if (cursor >= L) return ll;
    }
    if (!match_visible(so.trailing)) return -std::numeric_limits<double>::infinity();
    return ll;
}

double truncation_prefix_log_density(const ComponentDist& dist, const TokenSeq& prefix) {
    return std::visit(
        overloaded{[&](const IsotropicGaussian&) -> double {
                       throw UnsupportedError("truncation does not apply to Gaussian components");
                   },
                   [&](const DiracString& d) { return dirac_prefix_log_density(d, prefix); },
                   [&](const BernoulliProductWalk& w) { return walk_prefix_log_density(w, prefix); },
                   [&](const FiniteSeqTable& t) { return table_prefix_log_density(t, prefix); },
                   [&](const StructuredOutput& so) {
                       return structured_prefix_log_density(so, prefix);
                   }},
        dist);
}

// Sample a full sequence from `dist` conditioned on starting with `prefix`.
TokenSeq sample_completion(const ComponentDist& dist, const TokenSeq& prefix, Rng& rng) {
    return std::visit(
        overloaded{
            [&](const IsotropicGaussian&) -> TokenSeq {
                throw UnsupportedError("truncation does not apply to Gaussian components");
            },
            [&](const DiracString& d) -> TokenSeq { return d.tokens; },
            [&](const BernoulliProductWalk& w) -> TokenSeq {
                TokenSeq s = prefix;
                int pos = 0;
                bool absorbed = false;
                for (Token tok : prefix) {
                    if (absorbed) continue;
                    pos += (tok == kStepUp) ? 1 : -1;
                    if (w.absorb > 0 && std::abs(pos) >= w.absorb) absorbed = true;
                }
                for (int i = static_cast<int>(prefix.size()); i < w.length; ++i) {
                    if (absorbed) {
                        s.push_back(kStepPad);
                        continue;
                    }
                    const bool up = rng.uniform() < w.step_up_prob;
                    s.push_back(up ? kStepUp : kStepDown);
                    pos += up ? 1 : -1;
                    if (w.absorb > 0 && std::abs(pos) >= w.absorb) absorbed = true;
                }
                return s;
            },
            [&](const FiniteSeqTable& t) -> TokenSeq {
                std::size_t pidx = 0;
                for (Token tok : prefix) pidx = pidx * t.alphabet + static_cast<std::size_t>(tok);
                const int suffix_len = t.length - static_cast<int>(prefix.size());
                std::size_t block = 1;
                for (int i = 0; i < suffix_len; ++i) block *= t.alphabet;
                std::vector<double> w(t.probs.begin() + pidx * block,
                                      t.probs.begin() + (pidx + 1) * block);
                std::size_t pick = static_cast<std::size_t>(rng.categorical(w));
                TokenSeq s = prefix;
                TokenSeq suffix(suffix_len);
                for (int i = suffix_len - 1; i >= 0; --i) {
                    suffix[i] = static_cast<Token>(pick % t.alphabet);
                    pick /= t.alphabet;
                }
                s.insert(s.end(), suffix.begin(), suffix.end());
                return s;
            },
            [&](const StructuredOutput& so) -> TokenSeq {
                const std::size_t L = prefix.size();
                TokenSeq s;
                auto emit = [&](const TokenSeq& ref) {
                    for (Token tok : ref) s.push_back(s.size() < L ? prefix[s.size()] : tok);
                };
                for (const auto& seg : so.segments) {
                    emit(seg.scaffold);
                    const std::size_t span = s.size();
                    const std::size_t alt_len = seg.alternatives.front().size();
                    const std::size_t visible = span < L ? std::min(alt_len, L - span) : 0;
                    std::vector<double> w(seg.alternatives.size(), 0.0);
                    for (std::size_t a = 0; a < seg.alternatives.size(); ++a) {
                        bool ok = true;
                        for (std::size_t i = 0; i < visible; ++i)
                            if (seg.alternatives[a][i] != prefix[span + i]) {
                                ok = false;
                                break;
                            }
                        if (ok) w[a] = seg.probs[a];
                    }
                    const int pick = rng.categorical(w);
                    for (std::size_t i = 0; i < alt_len; ++i)
                        s.push_back(i < visible ? prefix[span + i] : seg.alternatives[pick][i]);
                }
                emit(so.trailing);
                return s;
            }},
        dist);
}

}  // namespace

void validate_time(const ForwardProcess& process, double t) {
    std::visit(overloaded{[&](const OuProcess&) {
                              if (t < 0.0 || std::isnan(t))
                                  throw PreconditionError("OU time must lie in [0,inf]");
                          },
                          [&](const RandomMaskProcess&) {
                              if (!(t >= 0.0 && t <= 1.0))
                                  throw PreconditionError("masking level must lie in [0,1]");
                          },
                          [&](const TruncationProcess& tr) {
                              if (!is_integral_time(t) || t < 0 || t > tr.length)
                                  throw PreconditionError(
                                      "truncation index must be an integer in {0,...," +
                                      std::to_string(tr.length) + "}");
                          }},
               process);
}

NoisedSample forward_sample(const ForwardProcess& process, const Sample& x, double t, Rng& rng) {
    validate_time(process, t);
    return std::visit(
        overloaded{[&](const OuProcess&) {
                       const Vec& v = payload_vec(x);
                       const double a = ou_scale(t);
                       const double s = std::sqrt(std::max(0.0, 1.0 - a * a));
                       Vec y(v.size());
                       for (std::size_t i = 0; i < v.size(); ++i) y[i] = a * v[i] + s * rng.normal();
                       return NoisedSample{t, std::move(y)};
                   },
                   [&](const RandomMaskProcess&) {
                       TokenSeq y = payload_seq(x);
                       for (Token& tok : y)
                           if (rng.uniform() < t) tok = kMask;
                       return NoisedSample{t, std::move(y)};
                   },
                   [&](const TruncationProcess& tr) {
                       const TokenSeq& s = payload_seq(x);
                       if (static_cast<int>(s.size()) != tr.length)
                           throw UnsupportedError("truncation: sequence length mismatch");
                       TokenSeq y(s.begin(), s.begin() + (tr.length - static_cast<int>(t)));
                       return NoisedSample{t, std::move(y)};
                   }},
        process);
}

NoisedSample forward_step(const ForwardProcess& process, const NoisedSample& y, double t2,
                          Rng& rng) {
    validate_time(process, t2);
    if (t2 < y.t) throw PreconditionError("forward_step: t2 must be >= current level");
    return std::visit(
        overloaded{[&](const OuProcess&) {
                       const Vec& v = payload_vec(y.payload);
                       const double a = ou_scale(t2 - y.t);
                       const double s = std::sqrt(std::max(0.0, 1.0 - a * a));
                       Vec out(v.size());
                       for (std::size_t i = 0; i < v.size(); ++i)
                           out[i] = a * v[i] + s * rng.normal();
                       return NoisedSample{t2, std::move(out)};
                   },
                   [&](const RandomMaskProcess&) {
                       TokenSeq out = payload_seq(y.payload);
                       const double cond = y.t >= 1.0 ? 0.0 : (t2 - y.t) / (1.0 - y.t);
                       for (Token& tok : out)
                           if (tok != kMask && rng.uniform() < cond) tok = kMask;
                       return NoisedSample{t2, std::move(out)};
                   },
                   [&](const TruncationProcess& tr) {
                       const TokenSeq& s = payload_seq(y.payload);
                       const int keep = tr.length - static_cast<int>(t2);
                       if (keep > static_cast<int>(s.size()))
                           throw UnsupportedError("forward_step: prefix shorter than requested level");
                       return NoisedSample{t2, TokenSeq(s.begin(), s.begin() + keep)};
                   }},
        process);
}

NoisedDist noised_component_dist(const ForwardProcess& process, const ComponentDist& dist,
                                 double t) {
    validate_time(process, t);
    if (std::holds_alternative<OuProcess>(process)) {
        const auto* g = std::get_if<IsotropicGaussian>(&dist);
        if (!g)
            throw UnsupportedError(
                "noised_component_dist: supported pairs are (OU, IsotropicGaussian), "
                "(RandomMask, DiracString), (Truncation, finite sequence dist)");
        const double a = ou_scale(t);
        Vec mean(g->mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = a * g->mean[i];
        ComponentDist noised = IsotropicGaussian{std::move(mean)};
        NoisedDist nd;
        nd.log_density = [noised](const Sample& y) { return log_density(noised, y); };
        nd.sample = [noised](Rng& rng) { return draw(noised, rng); };
        return nd;
    }
    if (std::holds_alternative<RandomMaskProcess>(process)) {
        const auto* d = std::get_if<DiracString>(&dist);
        if (!d)
            throw UnsupportedError(
                "noised_component_dist: supported pairs are (OU, IsotropicGaussian), "
                "(RandomMask, DiracString), (Truncation, finite sequence dist)");
        const DiracString str = *d;
        NoisedDist nd;
        nd.log_density = [str, t](const Sample& y) {
            const TokenSeq& s = payload_seq(y);
            if (s.size() != str.tokens.size())
                throw UnsupportedError("masked sequence length mismatch");
            double ll = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i] == kMask)
                    ll += std::log(t);
                else if (s[i] == str.tokens[i])
                    ll += std::log1p(-t);
                else
                    return -std::numeric_limits<double>::infinity();
            }
            return ll;
        };
        ForwardProcess proc = process;
        ComponentDist comp = dist;
        nd.sample = [proc, comp, t](Rng& rng) {
            return forward_sample(proc, draw(comp, rng), t, rng).payload;
        };
        return nd;
    }
    const auto& tr = std::get<TruncationProcess>(process);
    if (std::holds_alternative<IsotropicGaussian>(dist))
        throw UnsupportedError(
            "noised_component_dist: supported pairs are (OU, IsotropicGaussian), "
            "(RandomMask, DiracString), (Truncation, finite sequence dist)");
    const int keep = tr.length - static_cast<int>(t);
    ComponentDist comp = dist;
    NoisedDist nd;
    nd.log_density = [comp, keep](const Sample& y) {
        const TokenSeq& s = payload_seq(y);
        if (static_cast<int>(s.size()) != keep)
            throw UnsupportedError("prefix length mismatch: expected " + std::to_string(keep));
        return truncation_prefix_log_density(comp, s);
    };
    ForwardProcess proc = process;
    nd.sample = [proc, comp, t](Rng& rng) {
        return forward_sample(proc, draw(comp, rng), t, rng).payload;
    };
    return nd;
}

PdfSampler noised_pdf_sampler(const MixtureModel& model, const SubsetSelector& sel,
                              const ForwardProcess& process, double t) {
    const double z = model.subset_weight(sel);
    std::vector<double> log_weights;
    std::vector<double> weights;
    std::vector<NoisedDist> parts;
    for (int id : sel.ids()) {
        log_weights.push_back(std::log(model.weight(id) / z));
        weights.push_back(model.weight(id));
        parts.push_back(noised_component_dist(process, model.component(id), t));
    }
    PdfSampler out;
    out.log_density = [log_weights, parts](const Sample& y) {
        std::vector<double> terms(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i)
            terms[i] = log_weights[i] + parts[i].log_density(y);
        return logsumexp(terms);
    };
    out.sample = [weights, parts](Rng& rng) {
        return parts[static_cast<std::size_t>(rng.categorical(weights))].sample(rng);
    };
    return out;
}

std::vector<double> posterior_over_components(const MixtureModel& model,
                                              const ForwardProcess& process, double t,
                                              const Sample& y) {
    std::vector<double> logs(model.size());
    for (int i = 0; i < model.size(); ++i) {
        NoisedDist nd = noised_component_dist(process, model.component(i), t);
        logs[i] = std::log(model.weight(i)) + nd.log_density(y);
    }
    const double lz = logsumexp(logs);
    if (!std::isfinite(lz))
        throw PreconditionError("posterior_over_components: zero total likelihood at observation");
    std::vector<double> post(model.size());
    for (int i = 0; i < model.size(); ++i) post[i] = std::exp(logs[i] - lz);
    return post;
}

double posterior_tail_ratio(const MixtureModel& model, const ForwardProcess& process,
                            const SubsetSelector& target, double t, const Sample& y) {
    const auto rest = complement(target, model.size());
    if (!rest) return 0.0;
    std::vector<double> in_logs, out_logs;
    for (int id : target.ids()) {
        NoisedDist nd = noised_component_dist(process, model.component(id), t);
        in_logs.push_back(std::log(model.weight(id) / model.subset_weight(target)) +
                          nd.log_density(y));
    }
    for (int id : rest->ids()) {
        NoisedDist nd = noised_component_dist(process, model.component(id), t);
        out_logs.push_back(std::log(model.weight(id) / model.subset_weight(*rest)) +
                           nd.log_density(y));
    }
    const double l_in = logsumexp(in_logs);
    const double l_out = logsumexp(out_logs);
    const double w = model.weight_ratio(target);
    if (!std::isfinite(l_out)) return 0.0;
    if (!std::isfinite(l_in)) return std::max(1.0, w);
    return std::max(1.0, w) * sigmoid(l_out - l_in);
}

Sample reverse_sample_exact(const MixtureModel& model, const ForwardProcess& process,
                            const NoisedSample& y, Rng& rng, int* chosen_component) {
    const std::vector<double> post = posterior_over_components(model, process, y.t, y.payload);
    const int theta = rng.categorical(post);
    if (chosen_component) *chosen_component = theta;
    const ComponentDist& comp = model.component(theta);
    return std::visit(
        overloaded{[&](const OuProcess&) -> Sample {
                       const auto& g = std::get<IsotropicGaussian>(comp);
                       const Vec& yv = payload_vec(y.payload);
                       const double a = ou_scale(y.t);
                       const double sd = std::sqrt(std::max(0.0, 1.0 - a * a));
                       Vec x(g.mean.size());
                       for (std::size_t i = 0; i < x.size(); ++i) {
                           const double m = g.mean[i] + a * (yv[i] - a * g.mean[i]);
                           x[i] = m + sd * rng.normal();
                       }
                       return x;
                   },
                   [&](const RandomMaskProcess&) -> Sample {
                       return std::get<DiracString>(comp).tokens;
                   },
                   [&](const TruncationProcess&) -> Sample {
                       return sample_completion(comp, payload_seq(y.payload), rng);
                   }},
        process);
}

Vec mixture_score(const MixtureModel& model, const Vec& x, double t) {
    const double a = ou_scale(t);
    std::vector<double> logs(model.size());
    for (int i = 0; i < model.size(); ++i) {
        const auto* g = std::get_if<IsotropicGaussian>(&model.component(i));
        if (!g) throw UnsupportedError("mixture_score: all components must be IsotropicGaussian");
        double ll = std::log(model.weight(i));
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = x[j] - a * g->mean[j];
            ll -= 0.5 * d * d;
        }
        logs[i] = ll;
    }
    const double lz = logsumexp(logs);
    Vec score(x.size(), 0.0);
    for (int i = 0; i < model.size(); ++i) {
        const auto& g = std::get<IsotropicGaussian>(model.component(i));
        const double p = std::exp(logs[i] - lz);
        for (std::size_t j = 0; j < x.size(); ++j) score[j] += p * (a * g.mean[j] - x[j]);
    }
    return score;
}

Vec reverse_sample_sde(const MixtureModel& model, const Vec& y, double t, int n_steps, Rng& rng) {
    if (n_steps < 100) throw PreconditionError("reverse_sample_sde: n_steps must be >= 100");
    const double h = t / static_cast<double>(n_steps);
    if (h > 0.05)
        throw PreconditionError("reverse_sample_sde: step size t/n_steps must be <= 0.05");
    Vec x = y;
    const double diff = std::sqrt(2.0 * h);
    for (int k = 0; k < n_steps; ++k) {
        const double u = t - static_cast<double>(k) * h;
        const Vec sc = mixture_score(model, x, u);
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] += h * (x[j] + 2.0 * sc[j]) + diff * rng.normal();
    }
    return x;
}

// ---------------------------------------------------------------------------
// Exact laws
// ---------------------------------------------------------------------------

namespace {

SeqDist truncation_noised_dist(const ComponentDist& dist, int keep) {
    SeqDist out;
    for (const auto& [s, p] : enumerate_dist(dist)) {
        TokenSeq prefix(s.begin(), s.begin() + keep);
        out[prefix] += p;
    }
    return out;
}

SeqDist masked_noised_dist(const DiracString& d, double t) {
    const int n = static_cast<int>(d.tokens.size());
    if (n > 20) throw UnsupportedError("exact masking law limited to length <= 20");
    SeqDist out;
    const std::size_t patterns = std::size_t(1) << n;
    for (std::size_t m = 0; m < patterns; ++m) {
        TokenSeq s = d.tokens;
        int masked = 0;
        for (int i = 0; i < n; ++i)
            if (m >> i & 1) {
                s[i] = kMask;
                ++masked;
            }
        const double p = std::pow(t, masked) * std::pow(1.0 - t, n - masked);
        if (p > 0.0) out[s] += p;
    }
    return out;
}

}  // namespace

SeqDist exact_noised_seq_dist(const ComponentDist& dist, const ForwardProcess& process, double t) {
    validate_time(process, t);
    return std::visit(
        overloaded{[&](const OuProcess&) -> SeqDist {
                       throw UnsupportedError("exact noised law requires a discrete process");
                   },
                   [&](const RandomMaskProcess&) -> SeqDist {
                       const auto* d = std::get_if<DiracString>(&dist);
                       if (!d)
                           throw UnsupportedError(
                               "exact masking law supported for DiracString components only");
                       return masked_noised_dist(*d, t);
                   },
                   [&](const TruncationProcess& tr) -> SeqDist {
                       return truncation_noised_dist(dist, tr.length - static_cast<int>(t));
                   }},
        process);
}

SeqDist exact_noised_seq_dist(const MixtureModel& model, const SubsetSelector& sel,
                              const ForwardProcess& process, double t) {
    const double z = model.subset_weight(sel);
    SeqDist out;
    for (int id : sel.ids()) {
        const double w = model.weight(id) / z;
        for (const auto& [s, p] : exact_noised_seq_dist(model.component(id), process, t))
            out[s] += w * p;
    }
    return out;
}

SeqDist exact_resample_law(const MixtureModel& model, const ForwardProcess& process,
                           const SubsetSelector& s_init, double t) {
    validate_time(process, t);
    if (std::holds_alternative<TruncationProcess>(process)) {
        const int keep = std::get<TruncationProcess>(process).length - static_cast<int>(t);
        const SeqDist full = enumerate_dist(model, model.full_subset());
        const SeqDist noised_init = exact_noised_seq_dist(model, s_init, process, t);
        SeqDist noised_all;
        for (const auto& [x, p] : full) {
            TokenSeq prefix(x.begin(), x.begin() + keep);
            noised_all[prefix] += p;
        }
        SeqDist law;
        for (const auto& [x, p] : full) {
            TokenSeq prefix(x.begin(), x.begin() + keep);
            auto it = noised_init.find(prefix);
            if (it == noised_init.end()) continue;
            law[x] += p * it->second / noised_all.at(prefix);
        }
        return law;
    }
    if (std::holds_alternative<RandomMaskProcess>(process)) {
        // Mixture of Dirac strings: reverse draw is the string of a posterior
        // component; enumerate mask patterns.
        std::vector<const DiracString*> strings(model.size());
        for (int i = 0; i < model.size(); ++i) {
            strings[i] = std::get_if<DiracString>(&model.component(i));
            if (!strings[i])
                throw UnsupportedError(
                    "exact masking resample law supported for DiracString mixtures only");
        }
        const int n = model.space().length;
        if (n > 20) throw UnsupportedError("exact masking law limited to length <= 20");
        const double zs = model.subset_weight(s_init);
        SeqDist law;
        const std::size_t patterns = std::size_t(1) << n;
        for (std::size_t m = 0; m < patterns; ++m) {
            int masked = 0;
            for (int i = 0; i < n; ++i) masked += (m >> i) & 1;
            const double pm = std::pow(t, masked) * std::pow(1.0 - t, n - masked);
            if (pm <= 0.0) continue;
            for (int start : s_init.ids()) {
                // Posterior support: components agreeing with `start` on visible positions.
                double z_match = 0.0;
                std::vector<int> matching;
                for (int j = 0; j < model.size(); ++j) {
                    bool ok = true;
                    for (int i = 0; i < n && ok; ++i)
                        if (!((m >> i) & 1) && strings[j]->tokens[i] != strings[start]->tokens[i])
                            ok = false;
                    if (ok) {
                        matching.push_back(j);
                        z_match += model.weight(j);
                    }
                }
                const double p_start = model.weight(start) / zs * pm;
                for (int j : matching)
                    law[strings[j]->tokens] += p_start * model.weight(j) / z_match;
            }
        }
        return law;
    }
    throw UnsupportedError("exact_resample_law: OU process has no enumerable law");
}

}  // namespace critwin
