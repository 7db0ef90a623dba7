#include "critwin/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace critwin {

namespace {

void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n < 2 * threads) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
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

bool classify(const Classifier& cls, const MixtureModel& model, const SubsetSelector& s_init,
              const Sample& x) {
    return std::visit(
        overloaded{[&](const PosteriorArgmaxClassifier&) {
                       int best = 0;
                       double best_ll = -std::numeric_limits<double>::infinity();
                       for (int i = 0; i < model.size(); ++i) {
                           const double ll =
                               std::log(model.weight(i)) + log_density(model.component(i), x);
                           if (ll > best_ll) {
                               best_ll = ll;
                               best = i;
                           }
                       }
                       return s_init.contains(best);
                   },
                   [&](const TokenMatchClassifier& tm) {
                       const auto& s = std::get<TokenSeq>(x);
                       return s.at(tm.position) == tm.token;
                   },
                   [&](const ExactMatchClassifier& em) {
                       return std::get<TokenSeq>(x) == em.reference;
                   },
                   [&](const CustomClassifier& c) { return c.fn(x); }},
        cls);
}

void ExperimentConfig::validate() const {
    if (t_grid.empty()) throw PreconditionError("ExperimentConfig: empty t grid");
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
        if (!(t_grid[i] < t_grid[i + 1]))
            throw PreconditionError("ExperimentConfig: t grid must be sorted ascending");
    for (double t : t_grid) validate_time(process, t);
    if (n_per_point < 100) throw PreconditionError("ExperimentConfig: n_per_point must be >= 100");
    model.subset_weight(s_init);  // id range check
}

std::vector<std::vector<Sample>> run_forward_reverse(const ExperimentConfig& config) {
    config.validate();
    std::vector<std::vector<Sample>> out(config.t_grid.size());
    for (std::size_t ti = 0; ti < config.t_grid.size(); ++ti) {
        const double t = config.t_grid[ti];
        auto& slot = out[ti];
        slot.resize(config.n_per_point);
        parallel_for(config.n_per_point, config.threads, [&](std::int64_t i) {
            Rng rng = derive_rng(config.seed, ti, static_cast<std::uint64_t>(i));
            const Sample x0 = draw(config.model, config.s_init, rng);
            const NoisedSample y = forward_sample(config.process, x0, t, rng);
            slot[i] = reverse_sample_exact(config.model, config.process, y, rng);
        });
    }
    return out;
}

namespace {

CurveKind classifier_kind(const Classifier& cls) {
    if (std::holds_alternative<TokenMatchClassifier>(cls) ||
        std::holds_alternative<ExactMatchClassifier>(cls))
        return CurveKind::same_answer_prob;
    return CurveKind::membership_prob;
}

}  // namespace

Curve membership_curve(const ExperimentConfig& config) {
    config.validate();
    Curve curve;
    curve.kind = classifier_kind(config.classifier);
    for (std::size_t ti = 0; ti < config.t_grid.size(); ++ti) {
        const double t = config.t_grid[ti];
        std::vector<std::uint8_t> hits(config.n_per_point, 0);
        parallel_for(config.n_per_point, config.threads, [&](std::int64_t i) {
            Rng rng = derive_rng(config.seed, ti, static_cast<std::uint64_t>(i));
            const Sample x0 = draw(config.model, config.s_init, rng);
            const NoisedSample y = forward_sample(config.process, x0, t, rng);
            const Sample x = reverse_sample_exact(config.model, config.process, y, rng);
            hits[i] = classify(config.classifier, config.model, config.s_init, x) ? 1 : 0;
        });
        std::int64_t k = 0;
        for (std::uint8_t h : hits) k += h;
        const double n = static_cast<double>(config.n_per_point);
        const double v = static_cast<double>(k) / n;
        curve.points.push_back({t, v, std::sqrt(v * (1.0 - v) / n), config.n_per_point});
    }
    curve.validate();
    return curve;
}

Curve exact_membership_curve(const ExperimentConfig& config) {
    if (config.t_grid.empty()) throw PreconditionError("ExperimentConfig: empty t grid");
    Curve curve;
    curve.kind = CurveKind::exact;
    for (double t : config.t_grid) {
        const SeqDist law = exact_resample_law(config.model, config.process, config.s_init, t);
        double v = 0.0;
        for (const auto& [x, p] : law)
            if (classify(config.classifier, config.model, config.s_init, Sample(x))) v += p;
        curve.points.push_back({t, v, 0.0, 0});
    }
    curve.validate();
    return curve;
}

std::vector<DetectedWindow> detect_windows(const Curve& curve, double jump_threshold,
                                           double drop_threshold) {
    curve.validate();
    bool non_monotone = false;
    std::vector<DetectedWindow> out;
    for (std::size_t i = curve.points.size(); i-- > 1;) {
        const auto& hi = curve.points[i];
        const auto& lo = curve.points[i - 1];
        const double change = lo.value - hi.value;  // change as generation proceeds (t decreasing)
        if (change > jump_threshold) out.push_back({lo.t, hi.t, change, false});
        if (-change > drop_threshold) non_monotone = true;
    }
    if (non_monotone)
        for (auto& w : out) w.disqualified = true;
    return out;
}

// ---------------------------------------------------------------------------

StructuredOutputPlan build_structured_output_model(const std::vector<int>& scaffold_lengths,
                                                   const std::vector<std::vector<double>>& choice_probs,
                                                   const std::vector<int>& original_choices) {
    const int b = static_cast<int>(choice_probs.size());
    if (b < 1) throw PreconditionError("build_structured_output_model: needs B >= 1 choices");
    if (scaffold_lengths.size() != static_cast<std::size_t>(b) &&
        scaffold_lengths.size() != static_cast<std::size_t>(b) + 1)
        throw PreconditionError(
            "build_structured_output_model: scaffold_lengths must have B or B+1 entries");
    std::vector<int> originals = original_choices;
    if (originals.empty()) originals.assign(b, 0);
    if (originals.size() != static_cast<std::size_t>(b))
        throw PreconditionError("build_structured_output_model: original_choices must have B entries");

    int max_alts = 0;
    for (const auto& probs : choice_probs) {
        if (probs.empty())
            throw PreconditionError("build_structured_output_model: empty choice");
        max_alts = std::max(max_alts, static_cast<int>(probs.size()));
    }
    const Token scaffold_token = static_cast<Token>(max_alts);
    const int alphabet = max_alts + 1;

    // Token layout and choice positions.
    std::vector<int> positions(b);
    int total = 0;
    for (int i = 0; i < b; ++i) {
        total += scaffold_lengths[i];
        positions[i] = total;
        total += 1;
    }
    if (scaffold_lengths.size() == static_cast<std::size_t>(b) + 1) total += scaffold_lengths[b];
    if (total > 512)
        throw PreconditionError("build_structured_output_model: sequence exceeds 512 tokens");

    // Theta = product of choices; each component a Dirac string.
    std::size_t n_components = 1;
    for (const auto& probs : choice_probs) n_components *= probs.size();
    if (n_components > kEnumerationLimit)
        throw PreconditionError("build_structured_output_model: too many components");
    std::vector<double> weights;
    std::vector<ComponentDist> components;
    std::vector<int> assignment(b, 0);
    int original_component = 0;
    for (std::size_t ci = 0; ci < n_components; ++ci) {
        double w = 1.0;
        TokenSeq tokens(total, scaffold_token);
        bool is_original = true;
        for (int i = 0; i < b; ++i) {
            w *= choice_probs[i][assignment[i]];
            tokens[positions[i]] = static_cast<Token>(assignment[i]);
            if (assignment[i] != originals[i]) is_original = false;
        }
        if (is_original) original_component = static_cast<int>(components.size());
        weights.push_back(w);
        components.push_back(DiracString{std::move(tokens), alphabet});
        for (int i = b - 1; i >= 0; --i) {
            if (++assignment[i] < static_cast<int>(choice_probs[i].size())) break;
            assignment[i] = 0;
        }
    }

    StructuredOutputPlan plan{MixtureModel(std::move(weights), std::move(components)),
                              TruncationProcess{total},
                              original_component,
                              positions,
                              originals,
                              {},
                              {},
                              {}};

    // Exact same-answer curves over the full index grid: while a choice token
    // remains in the prefix the answer survives; afterwards the resample picks
    // it with its prior probability.
    for (int i = 0; i < b; ++i) {
        Curve c;
        c.kind = CurveKind::exact;
        for (int t = 0; t <= total; ++t) {
            const bool visible = positions[i] < total - t;
            const double v = visible ? 1.0 : choice_probs[i][originals[i]];
            c.points.push_back({static_cast<double>(t), v, 0.0, 0});
        }
        plan.per_choice_exact.push_back(std::move(c));
        const double t_before = static_cast<double>(total - positions[i]);
        plan.predicted_windows.push_back(
            {t_before - 1.0, t_before, 0.0, false, false});
    }
    plan.joint_exact.kind = CurveKind::exact;
    for (int t = 0; t <= total; ++t) {
        double v = 1.0;
        for (int i = 0; i < b; ++i) v *= plan.per_choice_exact[i].points[t].value;
        plan.joint_exact.points.push_back({static_cast<double>(t), v, 0.0, 0});
    }
    return plan;
}

// ---------------------------------------------------------------------------

Curve simulate_biased_walk_experiment(const BiasedWalkSpec& spec, const std::vector<double>& t_grid,
                                      int n, std::uint64_t seed, int threads) {
    predict_biased_walk(spec);  // enforce the example's preconditions
    if (n < 100) throw PreconditionError("simulate_biased_walk_experiment: n must be >= 100");
    const MixtureModel model(
        {0.5, 0.5},
        {BernoulliProductWalk{0.5 + spec.delta, spec.length, spec.absorb},
         BernoulliProductWalk{0.5 - spec.delta, spec.length, spec.absorb}});
    const ForwardProcess process = TruncationProcess{spec.length};
    Curve curve;
    curve.kind = CurveKind::membership_prob;
    std::vector<double> grid = t_grid;
    std::sort(grid.begin(), grid.end());
    for (std::size_t ti = 0; ti < grid.size(); ++ti) {
        const double t = grid[ti];
        validate_time(process, t);
        std::vector<std::uint8_t> hits(n, 0);
        parallel_for(n, threads, [&](std::int64_t i) {
            Rng rng = derive_rng(seed, ti, static_cast<std::uint64_t>(i));
            const Sample x0 = draw(model.component(0), rng);
            const NoisedSample y = forward_sample(process, x0, t, rng);
            int mode = 0;
            reverse_sample_exact(model, process, y, rng, &mode);
            hits[i] = (mode == 0) ? 1 : 0;
        });
        std::int64_t k = 0;
        for (std::uint8_t h : hits) k += h;
        const double v = static_cast<double>(k) / static_cast<double>(n);
        curve.points.push_back({t, v, std::sqrt(v * (1.0 - v) / static_cast<double>(n)),
                                static_cast<std::int64_t>(n)});
    }
    curve.validate();
    return curve;
}

MixtureModel build_two_mode_sequence_model(int length, int shared_prefix, int gap,
                                           double w_strong) {
    if (length < 1 || length > 8)
        throw PreconditionError("build_two_mode_sequence_model: length must lie in [1,8]");
    if (shared_prefix < 0 || gap < 1 || shared_prefix + gap > length)
        throw PreconditionError("build_two_mode_sequence_model: need shared_prefix + gap <= length");
    if (!(w_strong > 0.0 && w_strong < 1.0))
        throw PreconditionError("build_two_mode_sequence_model: weight must lie in (0,1)");
    const int alphabet = 4;
    // Per-position token distributions; modes share the prefix, overlap
    // partially across the gap, and split on disjoint tokens at its end.
    auto build_table = [&](bool strong) {
        std::vector<std::vector<double>> pos_probs(length, std::vector<double>(alphabet, 0.0));
        for (int i = 0; i < length; ++i) {
            if (i < shared_prefix) {
                pos_probs[i][0] = 1.0;
            } else if (i < shared_prefix + gap - 1) {
                pos_probs[i][0] = strong ? 0.7 : 0.3;
                pos_probs[i][1] = strong ? 0.3 : 0.7;
            } else if (i == shared_prefix + gap - 1) {
                pos_probs[i][strong ? 2 : 3] = 1.0;
            } else {
                pos_probs[i][0] = 1.0;
            }
        }
        std::size_t size = 1;
        for (int i = 0; i < length; ++i) size *= alphabet;
        std::vector<double> table(size, 0.0);
        for (std::size_t idx = 0; idx < size; ++idx) {
            double p = 1.0;
            std::size_t rest = idx;
            for (int i = length - 1; i >= 0; --i) {
                p *= pos_probs[i][rest % alphabet];
                rest /= alphabet;
            }
            table[idx] = p;
        }
        return FiniteSeqTable{length, alphabet, std::move(table)};
    };
    return MixtureModel({w_strong, 1.0 - w_strong}, {build_table(true), build_table(false)});
}

}  // namespace critwin
