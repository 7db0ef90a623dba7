#include "critwin/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace critwin {

namespace {

struct TreeShape {
    std::vector<int> parent;
    std::vector<int> depth;      // from root
    std::vector<int> leaves;
};

TreeShape analyze_structure(const MixtureTree& tree, const MixtureModel& model) {
    const int n = static_cast<int>(tree.nodes.size());
    if (n == 0) throw UnsupportedError("MixtureTree: empty tree");
    if (tree.root < 0 || tree.root >= n) throw UnsupportedError("MixtureTree: bad root index");
    TreeShape shape;
    shape.parent.assign(n, -1);
    shape.depth.assign(n, -1);
    for (int u = 0; u < n; ++u) {
        for (int c : tree.nodes[u].children) {
            if (c < 0 || c >= n || c == u) throw UnsupportedError("MixtureTree: bad child index");
            if (shape.parent[c] != -1) throw UnsupportedError("MixtureTree: node has two parents");
            shape.parent[c] = u;
        }
    }
    if (shape.parent[tree.root] != -1) throw UnsupportedError("MixtureTree: root has a parent");
    // Depths + connectivity via BFS.
    std::vector<int> stack{tree.root};
    shape.depth[tree.root] = 0;
    int visited = 0;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        ++visited;
        for (int c : tree.nodes[u].children) {
            shape.depth[c] = shape.depth[u] + 1;
            stack.push_back(c);
        }
    }
    if (visited != n) throw UnsupportedError("MixtureTree: disconnected nodes");

    // Root covers Theta; children strictly nested in their parents.
    const auto& root_ids = tree.nodes[tree.root].subset.ids();
    if (static_cast<int>(root_ids.size()) != model.size())
        throw UnsupportedError("MixtureTree: Subset(root) must equal Theta");
    for (int u = 0; u < n; ++u) {
        for (int id : tree.nodes[u].subset.ids())
            if (id >= model.size()) throw UnsupportedError("MixtureTree: component id out of range");
        for (int c : tree.nodes[u].children) {
            const auto& cs = tree.nodes[c].subset;
            for (int id : cs.ids())
                if (!tree.nodes[u].subset.contains(id))
                    throw UnsupportedError("MixtureTree: child subset not nested in parent");
            if (cs.size() >= tree.nodes[u].subset.size())
                throw UnsupportedError("MixtureTree: child subset must be a proper subset");
        }
        if (tree.nodes[u].children.empty()) shape.leaves.push_back(u);
    }
    return shape;
}

int lowest_common_ancestor(const TreeShape& shape, int u, int v) {
    while (u != v) {
        if (shape.depth[u] < shape.depth[v])
            v = shape.parent[v];
        else
            u = shape.parent[u];
    }
    return u;
}

enum class TvStrategy { exact, gaussian_closed_form, monte_carlo };

TvStrategy pick_strategy(const MixtureModel& model, const ForwardProcess& process) {
    if (std::holds_alternative<OuProcess>(process)) {
        for (int i = 0; i < model.size(); ++i)
            if (!std::holds_alternative<IsotropicGaussian>(model.component(i)))
                throw UnsupportedError("validate_tree: OU process requires Gaussian components");
        return TvStrategy::monte_carlo;  // closed form used for singleton pairs
    }
    if (std::holds_alternative<RandomMaskProcess>(process)) {
        for (int i = 0; i < model.size(); ++i)
            if (!std::holds_alternative<DiracString>(model.component(i)))
                throw UnsupportedError("validate_tree: masking requires DiracString components");
    }
    return TvStrategy::exact;
}

// TV between noised sub-mixtures, exact / closed form / MC as available.
DivergenceEstimate noised_subset_tv(const MixtureModel& model, const ForwardProcess& process,
                                    const SubsetSelector& a, const SubsetSelector& b, double t,
                                    TvStrategy strategy, const ValidationOptions& opts,
                                    std::uint64_t check_index) {
    if (strategy == TvStrategy::exact) {
        return tv_exact(exact_noised_seq_dist(model, a, process, t),
                        exact_noised_seq_dist(model, b, process, t));
    }
    const double scale = std::isinf(t) ? 0.0 : std::exp(-t);
    if (a.size() == 1 && b.size() == 1) {
        const auto& ga = std::get<IsotropicGaussian>(model.component(a.ids()[0]));
        const auto& gb = std::get<IsotropicGaussian>(model.component(b.ids()[0]));
        Vec ma(ga.mean.size()), mb(gb.mean.size());
        for (std::size_t i = 0; i < ma.size(); ++i) {
            ma[i] = scale * ga.mean[i];
            mb[i] = scale * gb.mean[i];
        }
        return {tv_isotropic_gaussians(ma, mb), 0.0, 0, DivMethod::closed_form};
    }
    return tv_mc(noised_pdf_sampler(model, a, process, t), noised_pdf_sampler(model, b, process, t),
                 opts.n_mc, opts.seed + 0x51ed270b * check_index);
}

ConditionCheck make_check(TreeCondition kind, int node, int ti, int tj,
                          const DivergenceEstimate& tv, double threshold, bool upper) {
    ConditionCheck c;
    c.kind = kind;
    c.node = node;
    c.theta_i = ti;
    c.theta_j = tj;
    c.measured = tv.value;
    c.stderr_ = tv.stderr_;
    c.threshold = threshold;
    // MC checks must clear the inequality with a 3*stderr margin.
    if (upper) {
        c.pass = tv.value + 3.0 * tv.stderr_ <= threshold;
        c.slack = threshold - tv.value - 3.0 * tv.stderr_;
    } else {
        c.pass = tv.value - 3.0 * tv.stderr_ >= threshold;
        c.slack = tv.value - 3.0 * tv.stderr_ - threshold;
    }
    return c;
}

}  // namespace

TreeValidationReport validate_tree(const MixtureTree& tree, const MixtureModel& model,
                                   const ForwardProcess& process, const ValidationOptions& opts) {
    const TreeShape shape = analyze_structure(tree, model);
    const TvStrategy strategy = pick_strategy(model, process);
    for (const auto& node : tree.nodes) validate_time(process, node.noise_amount);

    TreeValidationReport report;
    std::uint64_t check_index = 0;

    // Condition (3): NoiseAmount strictly decreasing from parent to child.
    for (std::size_t u = 0; u < tree.nodes.size(); ++u) {
        for (int c : tree.nodes[u].children) {
            ConditionCheck chk;
            chk.kind = TreeCondition::noise_monotonic;
            chk.node = static_cast<int>(u);
            chk.theta_i = c;
            chk.measured = tree.nodes[c].noise_amount;
            chk.threshold = tree.nodes[u].noise_amount;
            chk.pass = tree.nodes[c].noise_amount < tree.nodes[u].noise_amount;
            chk.slack = tree.nodes[u].noise_amount - tree.nodes[c].noise_amount;
            report.checks.push_back(chk);
        }
    }

    // Condition (1): component pairs overlap at their leaves' LCA noise level.
    std::set<std::tuple<int, int, int>> seen;
    for (std::size_t wi = 0; wi < shape.leaves.size(); ++wi) {
        for (std::size_t vi = wi; vi < shape.leaves.size(); ++vi) {
            const int w = shape.leaves[wi], v = shape.leaves[vi];
            const int u = lowest_common_ancestor(shape, w, v);
            for (int ti : tree.nodes[w].subset.ids()) {
                for (int tj : tree.nodes[v].subset.ids()) {
                    if (ti == tj) continue;
                    const auto key = std::make_tuple(std::min(ti, tj), std::max(ti, tj), u);
                    if (!seen.insert(key).second) continue;
                    const DivergenceEstimate tv = noised_subset_tv(
                        model, process, SubsetSelector{ti}, SubsetSelector{tj},
                        tree.nodes[u].noise_amount,
                        strategy == TvStrategy::monte_carlo ? TvStrategy::monte_carlo : strategy,
                        opts, check_index++);
                    report.checks.push_back(make_check(TreeCondition::leaf_pair_overlap, u, ti, tj,
                                                       tv, tree.epsilon, true));
                }
            }
        }
    }

    // Condition (2): separation of Subset(u) from its complement. The root's
    // complement is empty, so the root is skipped.
    for (std::size_t u = 0; u < tree.nodes.size(); ++u) {
        const auto rest = complement(tree.nodes[u].subset, model.size());
        if (!rest) continue;
        const DivergenceEstimate tv =
            noised_subset_tv(model, process, tree.nodes[u].subset, *rest,
                             tree.nodes[u].noise_amount, strategy, opts, check_index++);
        report.checks.push_back(make_check(TreeCondition::subset_separation, static_cast<int>(u),
                                           -1, -1, tv,
                                           1.0 - tree.epsilon * tree.epsilon, false));
    }

    report.pass = true;
    report.worst_slack = std::numeric_limits<double>::infinity();
    for (const auto& c : report.checks) {
        report.pass = report.pass && c.pass;
        report.worst_slack = std::min(report.worst_slack, c.slack);
    }
    return report;
}

PermutationTreeInstance build_permutation_tree(const std::vector<int>& alphabet_sizes,
                                               const std::vector<int>& permutation) {
    const int d = static_cast<int>(alphabet_sizes.size());
    if (d < 1 || d > 12)
        throw PreconditionError("build_permutation_tree: dimension must lie in [1,12]");
    if (permutation.size() != static_cast<std::size_t>(d))
        throw PreconditionError("build_permutation_tree: permutation size mismatch");
    std::vector<bool> hit(d, false);
    for (int p : permutation) {
        if (p < 0 || p >= d || hit[p])
            throw PreconditionError("build_permutation_tree: not a permutation of [d]");
        hit[p] = true;
    }
    std::size_t n_leaves = 1;
    int max_alpha = 0;
    for (int a : alphabet_sizes) {
        if (a < 1) throw PreconditionError("build_permutation_tree: alphabet size must be >= 1");
        n_leaves *= static_cast<std::size_t>(a);
        max_alpha = std::max(max_alpha, a);
        if (n_leaves > 100'000)
            throw PreconditionError("build_permutation_tree: leaf count exceeds 1e5");
    }

    // Stored token order = decision order: position j holds the value of
    // alphabet permutation[j], so masking i_d,...,i_{d-t+1} is a truncation.
    std::vector<ComponentDist> components;
    std::vector<double> weights(n_leaves, 1.0 / static_cast<double>(n_leaves));
    std::vector<int> assign(d, 0);
    for (std::size_t li = 0; li < n_leaves; ++li) {
        TokenSeq tokens(d);
        for (int j = 0; j < d; ++j) tokens[j] = static_cast<Token>(assign[permutation[j]]);
        components.push_back(DiracString{std::move(tokens), max_alpha});
        for (int j = d - 1; j >= 0; --j) {
            const int alpha_j = alphabet_sizes[permutation[j]];
            if (++assign[permutation[j]] < alpha_j) break;
            assign[permutation[j]] = 0;
        }
    }
    // Pin the weight sum to 1 exactly under left-to-right summation.
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < n_leaves; ++i) partial += weights[i];
    weights[n_leaves - 1] = 1.0 - partial;
    MixtureModel model(std::move(weights), std::move(components));

    // Group leaves by shared stored prefix, level by level.
    MixtureTree tree;
    tree.epsilon = 0.0;
    std::map<TokenSeq, std::vector<int>> groups;
    for (int li = 0; li < model.size(); ++li)
        groups[std::get<DiracString>(model.component(li)).tokens] = {li};
    std::map<TokenSeq, int> node_of_prefix;
    for (int level = 0; level <= d; ++level) {
        const int plen = d - level;
        std::map<TokenSeq, std::vector<int>> next_groups;
        std::map<TokenSeq, int> next_node;
        for (auto& [prefix, ids] : groups) {
            TokenSeq key(prefix.begin(), prefix.begin() + plen);
            auto& bucket = next_groups[key];
            bucket.insert(bucket.end(), ids.begin(), ids.end());
        }
        for (auto& [prefix, ids] : next_groups) {
            TreeNode node{SubsetSelector(ids), static_cast<double>(level), {}};
            if (level > 0) {
                // Attach children from the previous level.
                for (auto& [cprefix, cnode] : node_of_prefix) {
                    if (std::equal(prefix.begin(), prefix.end(), cprefix.begin()))
                        node.children.push_back(cnode);
                }
            }
            next_node[prefix] = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(std::move(node));
        }
        groups = std::move(next_groups);
        node_of_prefix = std::move(next_node);
    }
    tree.root = static_cast<int>(tree.nodes.size()) - 1;
    return {std::move(tree), std::move(model), TruncationProcess{d}};
}

namespace {

ComponentDist perturb_component(const ComponentDist& dist, double budget, Rng& rng) {
    // budget is the exact TV distance allowed between original and perturbed.
    return std::visit(
        overloaded{
            [&](const IsotropicGaussian& g) -> ComponentDist {
                // Mean shift with tv_isotropic_gaussians(mu, mu') = budget.
                const double r = 2.0 * norm_ppf(0.5 * (1.0 + budget));
                Vec dir(g.mean.size());
                double nrm = 0.0;
                for (double& x : dir) {
                    x = rng.normal();
                    nrm += x * x;
                }
                nrm = std::sqrt(nrm);
                Vec mean = g.mean;
                for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r * dir[i] / nrm;
                return IsotropicGaussian{std::move(mean)};
            },
            [&](const auto&) -> ComponentDist {
                const SeqDist support = enumerate_dist(dist);
                const SampleSpace space = sample_space(dist);
                if (space.length > 8 || space.alphabet > 4)
                    throw PreconditionError(
                        "perturb_and_validate: finite perturbation needs length <= 8, alphabet <= 4");
                std::size_t size = 1;
                for (int i = 0; i < space.length; ++i) size *= space.alphabet;
                std::vector<double> table(size, 0.0);
                for (const auto& [s, p] : support) {
                    std::size_t idx = 0;
                    for (Token tok : s) idx = idx * space.alphabet + static_cast<std::size_t>(tok);
                    table[idx] = p;
                }
                // Scale down and land the moved mass on one random cell:
                // TV(new, old) = budget * TV(delta_cell, old) <= budget.
                const std::size_t cell = rng() % size;
                for (double& p : table) p *= 1.0 - budget;
                table[cell] += budget;
                return FiniteSeqTable{space.length, space.alphabet, std::move(table)};
            }},
        dist);
}

}  // namespace

PerturbResult perturb_and_validate(const MixtureTree& tree, const MixtureModel& model,
                                   const ForwardProcess& process, double delta,
                                   std::uint64_t seed, const ValidationOptions& opts) {
    if (delta < 0.0 || delta >= 1.0)
        throw PreconditionError("perturb_and_validate: delta must lie in [0,1)");
    if (delta == 0.0) {
        TreeValidationReport report = validate_tree(tree, model, process, opts);
        return {std::move(report), model, tree.epsilon};
    }
    std::vector<ComponentDist> comps;
    comps.reserve(model.size());
    for (int i = 0; i < model.size(); ++i) {
        Rng rng = derive_rng(seed, 0, static_cast<std::uint64_t>(i));
        // Strictly inside the delta/2 budget so exact-arithmetic boundaries
        // never decide the outcome.
        const double budget = 0.5 * delta * (0.25 + 0.7 * rng.uniform());
        comps.push_back(perturb_component(model.component(i), budget, rng));
    }
    MixtureModel perturbed(model.weights(), std::move(comps));
    MixtureTree widened = tree;
    widened.epsilon = tree.epsilon + std::sqrt(delta);
    TreeValidationReport report = validate_tree(widened, perturbed, process, opts);
    return {std::move(report), std::move(perturbed), widened.epsilon};
}

std::vector<LevelWindow> hierarchy_window_sequence(const MixtureTree& tree,
                                                   const MixtureModel& model,
                                                   const ForwardProcess& process,
                                                   int leaf_component) {
    const TreeShape shape = analyze_structure(tree, model);
    int leaf = -1;
    for (int u : shape.leaves)
        if (tree.nodes[u].subset.contains(leaf_component)) leaf = u;
    if (leaf < 0)
        throw PreconditionError("hierarchy_window_sequence: component is not a leaf subset member");
    std::vector<int> path;
    for (int u = leaf; u != -1; u = shape.parent[u]) path.push_back(u);

    std::vector<LevelWindow> out;
    const SubsetSelector s_init{leaf_component};
    for (int u : path) {
        const double t = tree.nodes[u].noise_amount;
        const SeqDist law = exact_resample_law(model, process, s_init, t);
        const SeqDist target = enumerate_dist(model, tree.nodes[u].subset);
        const double tv = tv_exact(law, target).value;
        const double w = model.weight_ratio(tree.nodes[u].subset);
        const bool root = tree.nodes[u].subset.size() == static_cast<std::size_t>(model.size());
        out.push_back({u, t, tv, theorem_bound(tree.epsilon, root ? 0.0 : w)});
    }
    return out;
}

}  // namespace critwin
