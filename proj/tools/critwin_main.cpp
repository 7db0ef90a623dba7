// critwin: critical-window predictors, forward-reverse experiments, and
// mixture-tree validation from the command line.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "critwin/experiment.hpp"
#include "critwin/hierarchy.hpp"
#include "critwin/icl_aon.hpp"
#include "critwin/io.hpp"

using namespace critwin;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    std::string out;
};

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string ensure_out_dir(const std::string& out) {
    if (out.empty()) return {};
    fs::create_directories(out);
    return out;
}

void emit_manifest(const GlobalOpts& g, const std::string& subcommand, const json& effective_config,
                   std::uint64_t seed, const std::vector<std::string>& outputs,
                   const Stopwatch& watch) {
    if (g.out.empty()) return;
    RunManifest m;
    m.subcommand = subcommand;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(effective_config.dump())));
    m.config_hash = buf;
    m.seed = seed;
    m.wall_time_s = watch.seconds();
    m.outputs = outputs;
    write_manifest(m, (fs::path(g.out) / "manifest.json").string());
}

Vec parse_vec(const std::string& csv) {
    Vec out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw CLI::ValidationError("empty vector literal");
    return out;
}

std::vector<int> parse_ints(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

void print_prediction(const WindowPrediction& w) {
    std::cout << "t_after  = " << format_double(w.t_after)
              << (w.clamped_after ? "  (clamped)" : "") << "\n"
              << "t_before = " << format_double(w.t_before)
              << (w.clamped_before ? "  (clamped)" : "") << "\n"
              << "epsilon  = " << format_double(w.epsilon) << "\n";
}

void write_prediction_record(const GlobalOpts& g, const std::string& which,
                             const WindowPrediction& w, const json& args, const Stopwatch& watch) {
    if (g.out.empty()) return;
    json rec = prediction_to_json(w);
    rec["predictor"] = which;
    rec["args"] = args;
    const std::string path = (fs::path(g.out) / "predict.json").string();
    std::ofstream f(path, std::ios::binary);
    f << rec.dump(2) << "\n";
    emit_manifest(g, "predict", args, 0, {"predict.json"}, watch);
}

// --- simulate ---------------------------------------------------------------

int run_simulate(const GlobalOpts& g, const std::string& config_path) {
    Stopwatch watch;
    SimulateJob job = parse_simulate_config(config_path);
    const std::uint64_t seed = g.seed_set ? g.seed : job.seed;
    const std::string out = g.out.empty() ? "." : g.out;
    ensure_out_dir(out);
    std::vector<std::string> outputs;

    std::ifstream cf(config_path);
    std::stringstream raw;
    raw << cf.rdbuf();
    json effective{{"config", raw.str()}, {"seed", seed}};

    if (job.kind == SimulateJob::Kind::generic) {
        ExperimentConfig cfg = *job.experiment;
        cfg.seed = seed;
        cfg.threads = g.threads;
        const Curve curve = job.exact_mode ? exact_membership_curve(cfg) : membership_curve(cfg);
        write_curve_csv(curve, (fs::path(out) / "curve.csv").string());
        outputs.push_back("curve.csv");
    } else if (job.kind == SimulateJob::Kind::structured_output) {
        StructuredOutputPlan plan = build_structured_output_model(
            job.scaffold_lengths, job.choice_probs, job.original_choices);
        std::string wp = "choice,position,t_after,t_before\n";
        for (std::size_t i = 0; i < plan.predicted_windows.size(); ++i) {
            wp += std::to_string(i) + "," + std::to_string(plan.choice_positions[i]) + "," +
                  format_double(plan.predicted_windows[i].t_after) + "," +
                  format_double(plan.predicted_windows[i].t_before) + "\n";
        }
        std::ofstream wf(fs::path(out) / "windows_pred.csv", std::ios::binary);
        wf << wp;
        outputs.push_back("windows_pred.csv");
        for (std::size_t i = 0; i < plan.per_choice_exact.size(); ++i) {
            const std::string name = "curve_choice" + std::to_string(i) + ".csv";
            write_curve_csv(plan.per_choice_exact[i], (fs::path(out) / name).string());
            outputs.push_back(name);
        }
        write_curve_csv(plan.joint_exact, (fs::path(out) / "curve_joint.csv").string());
        outputs.push_back("curve_joint.csv");
        if (!job.exact_mode) {
            std::vector<double> grid = job.t_grid;
            if (grid.empty())
                for (int t = 0; t <= plan.process.length; ++t) grid.push_back(t);
            for (std::size_t i = 0; i < plan.choice_positions.size(); ++i) {
                const auto& orig = std::get<DiracString>(
                    plan.model.component(plan.original_component));
                ExperimentConfig cfg{plan.model,
                                     plan.process,
                                     SubsetSelector{plan.original_component},
                                     grid,
                                     job.n_per_point,
                                     seed + i,
                                     TokenMatchClassifier{plan.choice_positions[i],
                                                          orig.tokens[plan.choice_positions[i]]},
                                     g.threads};
                const std::string name = "mc_choice" + std::to_string(i) + ".csv";
                write_curve_csv(membership_curve(cfg), (fs::path(out) / name).string());
                outputs.push_back(name);
            }
        }
    } else {
        const Curve curve = simulate_biased_walk_experiment(*job.walk, job.t_grid,
                                                            job.n_per_point, seed, g.threads);
        write_curve_csv(curve, (fs::path(out) / "curve.csv").string());
        outputs.push_back("curve.csv");
    }
    GlobalOpts gm = g;
    gm.out = out;
    emit_manifest(gm, "simulate", effective, seed, outputs, watch);
    std::cout << "wrote " << outputs.size() << " file(s) to " << out << "\n";
    return 0;
}

// --- tree -------------------------------------------------------------------

void print_report(const TreeValidationReport& report) {
    int failed = 0;
    for (const auto& c : report.checks)
        if (!c.pass) ++failed;
    std::cout << (report.pass ? "PASS" : "FAIL") << ": " << report.checks.size() << " checks, "
              << failed << " failed, worst slack " << format_double(report.worst_slack) << "\n";
}

struct TreeConfig {
    MixtureModel model;
    ForwardProcess process;
    MixtureTree tree;
    ValidationOptions opts;
};

TreeConfig load_tree_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.contains("model") || !j.contains("process") || !j.contains("tree"))
        throw ConfigError("tree config: needs fields model, process, tree");
    ValidationOptions opts;
    opts.n_mc = j.value("n_mc", std::int64_t{20000});
    opts.seed = j.value("seed", std::uint64_t{0});
    return TreeConfig{model_from_json(j["model"]), process_from_json(j["process"]),
                      tree_from_json(j["tree"]), opts};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"critical windows lab"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--seed", g.seed, "RNG seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "output directory");

    // predict ----------------------------------------------------------------
    auto* predict = app.add_subcommand("predict", "closed-form critical-window predictors");
    predict->require_subcommand(1);

    double eps = 0.1, mu_norm = 0.0, delta = 0.0, sigma2 = 1.0, alpha = 0.0, inner_uv = 0.0,
           t_context = 0.0, hell_delta = 0.0;
    int dh = 1, walk_len = 0, absorb = 0, s_dim = 0, k_sparse = 0, target_id = 0;
    std::vector<std::string> mean_args;

    auto* p2g = predict->add_subcommand("two-gaussians");
    p2g->add_option("--mu-norm", mu_norm)->required();
    p2g->add_option("--eps", eps)->required();

    auto* prm = predict->add_subcommand("random-means");
    prm->add_option("--mean", mean_args, "one mean per flag, comma-separated coords")->required();
    prm->add_option("--target", target_id)->required();
    prm->add_option("--eps", eps)->required();

    auto* pmask = predict->add_subcommand("random-mask");
    pmask->add_option("--dh", dh)->required();
    pmask->add_option("--eps", eps)->required();

    auto* pwalk = predict->add_subcommand("biased-walk");
    pwalk->add_option("--length", walk_len)->required();
    pwalk->add_option("--delta", delta)->required();
    pwalk->add_option("--absorb", absorb)->required();
    pwalk->add_option("--eps", eps)->required();

    auto* pgmm = predict->add_subcommand("ar-gmm");
    pgmm->add_option("--alpha", alpha)->required();
    pgmm->add_option("--inner-uv", inner_uv)->required();
    pgmm->add_option("--eps", eps)->required();
    pgmm->add_option("--t-context", t_context)->required();

    auto* paon = predict->add_subcommand("aon");
    paon->add_option("--s", s_dim)->required();
    paon->add_option("--k", k_sparse)->required();
    paon->add_option("--sigma2", sigma2)->required();

    auto* picl = predict->add_subcommand("icl-bound");
    picl->add_option("--delta", hell_delta, "squared Hellinger separation")->required();
    picl->add_option("--eps", eps)->required();

    // simulate / detect --------------------------------------------------------
    std::string config_path, curve_path;
    auto* simulate = app.add_subcommand("simulate", "run a forward-reverse experiment config");
    simulate->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

    double jump_thr = 0.5, drop_thr = 0.3;
    auto* detect = app.add_subcommand("detect", "detect windows in a curve CSV");
    detect->add_option("--curve", curve_path)->required()->check(CLI::ExistingFile);
    detect->add_option("--jump", jump_thr);
    detect->add_option("--drop", drop_thr);

    // tree ----------------------------------------------------------------------
    auto* tree_cmd = app.add_subcommand("tree", "mixture-tree construction and validation");
    tree_cmd->require_subcommand(1);
    std::string sizes_csv, perm_csv, tree_config_path;
    double perturb_delta = 0.0;
    auto* tbuild = tree_cmd->add_subcommand("build-permutation");
    tbuild->add_option("--sizes", sizes_csv, "alphabet sizes, comma-separated")->required();
    tbuild->add_option("--perm", perm_csv, "decision order (defaults to identity)");
    auto* tvalidate = tree_cmd->add_subcommand("validate");
    tvalidate->add_option("--config", tree_config_path)->required()->check(CLI::ExistingFile);
    auto* tperturb = tree_cmd->add_subcommand("perturb");
    tperturb->add_option("--config", tree_config_path)->required()->check(CLI::ExistingFile);
    tperturb->add_option("--delta", perturb_delta)->required();

    // icl -------------------------------------------------------------------------
    double p_star = 0.7, p_other = 0.3, w_star = 0.5;
    int n_pairs = 0, n_erased = 0;
    std::int64_t n_mc = 50000;
    auto* icl = app.add_subcommand("icl", "in-context resampling with a two-mode Bernoulli task");
    icl->add_option("--p-star", p_star)->required();
    icl->add_option("--p-other", p_other)->required();
    icl->add_option("--w-star", w_star);
    icl->add_option("--n-pairs", n_pairs)->required();
    icl->add_option("--n-erased", n_erased)->required();
    icl->add_option("--n-mc", n_mc);

    // aon --------------------------------------------------------------------------
    int n_min = 0, n_max = 0, n_total = -1;
    double chk_eps = 0.0, chk_tau = 0.0, beta_lo = 0.0, beta_hi = 0.0;
    auto* aon = app.add_subcommand("aon", "planted-vs-null TV curve and window check");
    aon->add_option("--s", s_dim)->required();
    aon->add_option("--k", k_sparse)->required();
    aon->add_option("--sigma2", sigma2)->required();
    aon->add_option("--n-min", n_min);
    aon->add_option("--n-max", n_max)->required();
    aon->add_option("--n-mc", n_mc);
    auto* aon_eps = aon->add_option("--check-eps", chk_eps);
    aon->add_option("--check-tau", chk_tau);
    aon->add_option("--beta-lo", beta_lo);
    aon->add_option("--beta-hi", beta_hi);
    aon->add_option("--n-total", n_total);

    try {
        app.parse(argc, argv);
        Stopwatch watch;
        ensure_out_dir(g.out);

        if (predict->parsed()) {
            WindowPrediction w;
            json args;
            std::string which;
            if (p2g->parsed()) {
                which = "two-gaussians";
                args = {{"mu_norm", mu_norm}, {"eps", eps}};
                w = predict_two_gaussians(mu_norm, eps);
            } else if (prm->parsed()) {
                which = "random-means";
                std::vector<Vec> means;
                for (const auto& m : mean_args) means.push_back(parse_vec(m));
                args = {{"means", means}, {"target", target_id}, {"eps", eps}};
                w = predict_random_means(means, target_id, eps);
            } else if (pmask->parsed()) {
                which = "random-mask";
                args = {{"dh", dh}, {"eps", eps}};
                w = predict_random_mask(dh, eps);
            } else if (pwalk->parsed()) {
                which = "biased-walk";
                args = {{"length", walk_len}, {"delta", delta}, {"absorb", absorb}, {"eps", eps}};
                w = predict_biased_walk(BiasedWalkSpec{walk_len, delta, absorb, eps});
            } else if (pgmm->parsed()) {
                which = "ar-gmm";
                args = {{"alpha", alpha}, {"inner_uv", inner_uv}, {"eps", eps},
                        {"t_context", t_context}};
                w = predict_ar_gmm(ArGmmSpec{alpha, inner_uv, eps, t_context});
            } else if (paon->parsed()) {
                const double n_star = aon_threshold(SparseRegressionSpec{s_dim, k_sparse, sigma2});
                std::cout << "N* = " << format_double(n_star) << "\n";
                if (!g.out.empty()) {
                    json rec{{"predictor", "aon"},
                             {"n_star", n_star},
                             {"args", {{"s", s_dim}, {"k", k_sparse}, {"sigma2", sigma2}}}};
                    std::ofstream f(fs::path(g.out) / "predict.json", std::ios::binary);
                    f << rec.dump(2) << "\n";
                    emit_manifest(g, "predict", rec["args"], 0, {"predict.json"}, watch);
                }
                return 0;
            } else {
                const IclExampleBound b = icl_min_examples(hell_delta, eps);
                std::cout << "verbatim     = " << format_double(b.verbatim) << "\n"
                          << "conservative = " << format_double(b.conservative) << "\n";
                if (!g.out.empty()) {
                    json rec{{"predictor", "icl-bound"},
                             {"verbatim", b.verbatim},
                             {"conservative", b.conservative},
                             {"args", {{"delta", hell_delta}, {"eps", eps}}}};
                    std::ofstream f(fs::path(g.out) / "predict.json", std::ios::binary);
                    f << rec.dump(2) << "\n";
                    emit_manifest(g, "predict", rec["args"], 0, {"predict.json"}, watch);
                }
                return 0;
            }
            print_prediction(w);
            write_prediction_record(g, which, w, args, watch);
            return 0;
        }

        if (simulate->parsed()) return run_simulate(g, config_path);

        if (detect->parsed()) {
            const Curve curve = read_curve_csv(curve_path);
            const auto windows = detect_windows(curve, jump_thr, drop_thr);
            std::cout << windows_to_csv(windows);
            if (!g.out.empty()) {
                write_windows_csv(windows, (fs::path(g.out) / "windows.csv").string());
                emit_manifest(g, "detect",
                              json{{"curve", curve_path}, {"jump", jump_thr}, {"drop", drop_thr}},
                              0, {"windows.csv"}, watch);
            }
            return 0;
        }

        if (tree_cmd->parsed()) {
            if (tbuild->parsed()) {
                const std::vector<int> sizes = parse_ints(sizes_csv);
                std::vector<int> perm = perm_csv.empty() ? std::vector<int>{} : parse_ints(perm_csv);
                if (perm.empty())
                    for (std::size_t i = 0; i < sizes.size(); ++i)
                        perm.push_back(static_cast<int>(i));
                PermutationTreeInstance inst = build_permutation_tree(sizes, perm);
                const TreeValidationReport report =
                    validate_tree(inst.tree, inst.model, inst.process);
                print_report(report);
                if (!g.out.empty()) {
                    std::ofstream tf(fs::path(g.out) / "tree.json", std::ios::binary);
                    tf << tree_to_json(inst.tree).dump(2) << "\n";
                    std::ofstream mf(fs::path(g.out) / "model.json", std::ios::binary);
                    mf << model_to_json(inst.model).dump(2) << "\n";
                    std::ofstream rf(fs::path(g.out) / "report.json", std::ios::binary);
                    rf << report_to_json(report).dump(2) << "\n";
                    emit_manifest(g, "tree-build-permutation",
                                  json{{"sizes", sizes}, {"perm", perm}}, 0,
                                  {"tree.json", "model.json", "report.json"}, watch);
                }
                return report.pass ? 0 : 1;
            }
            TreeConfig cfg = load_tree_config(tree_config_path);
            if (g.seed_set) cfg.opts.seed = g.seed;
            TreeValidationReport report;
            std::string sub;
            if (tvalidate->parsed()) {
                sub = "tree-validate";
                report = validate_tree(cfg.tree, cfg.model, cfg.process, cfg.opts);
            } else {
                sub = "tree-perturb";
                PerturbResult res = perturb_and_validate(cfg.tree, cfg.model, cfg.process,
                                                         perturb_delta, cfg.opts.seed, cfg.opts);
                std::cout << "validated at epsilon' = " << format_double(res.epsilon_used) << "\n";
                report = std::move(res.report);
            }
            print_report(report);
            if (!g.out.empty()) {
                std::ofstream rf(fs::path(g.out) / "report.json", std::ios::binary);
                rf << report_to_json(report).dump(2) << "\n";
                emit_manifest(g, sub, json{{"config", tree_config_path}, {"delta", perturb_delta}},
                              cfg.opts.seed, {"report.json"}, watch);
            }
            return report.pass ? 0 : 1;
        }

        if (icl->parsed()) {
            const IclTask task = make_bernoulli_icl_task(p_star, p_other, w_star, n_pairs);
            const IclReport rep = icl_forward_reverse(task, n_erased, n_mc, g.seed);
            std::cout << "retained            = " << rep.n_retained << "\n"
                      << "expected TV         = " << format_double(rep.expected_tv)
                      << (rep.exact ? "  (exact)" : "  (MC)") << "\n"
                      << "expected post(θ*)   = " << format_double(rep.expected_posterior_star)
                      << "\n";
            if (!g.out.empty()) {
                json rec{{"n_retained", rep.n_retained},
                         {"expected_tv", rep.expected_tv},
                         {"expected_posterior_star", rep.expected_posterior_star},
                         {"exact", rep.exact},
                         {"stderr", rep.stderr_},
                         {"n_samples", rep.n_samples}};
                std::ofstream f(fs::path(g.out) / "icl.json", std::ios::binary);
                f << rec.dump(2) << "\n";
                emit_manifest(g, "icl",
                              json{{"p_star", p_star}, {"p_other", p_other}, {"w_star", w_star},
                                   {"n_pairs", n_pairs}, {"n_erased", n_erased}},
                              g.seed, {"icl.json"}, watch);
            }
            return 0;
        }

        if (aon->parsed()) {
            const PlantedModel model(SparseRegressionSpec{s_dim, k_sparse, sigma2});
            Curve curve;
            curve.kind = CurveKind::tv;
            for (int n = n_min; n <= n_max; ++n) {
                const DivergenceEstimate tv =
                    planted_vs_null_tv(model, n, n_mc, g.seed, g.threads);
                curve.points.push_back({static_cast<double>(n), tv.value, tv.stderr_, tv.n_samples});
                std::cout << "N=" << n << "  TV=" << format_double(tv.value) << " +- "
                          << format_double(tv.stderr_) << "\n";
            }
            std::vector<std::string> outputs;
            if (!g.out.empty()) {
                write_curve_csv(curve, (fs::path(g.out) / "tv_curve.csv").string());
                outputs.push_back("tv_curve.csv");
            }
            if (*aon_eps) {
                const int total = n_total < 0 ? n_max : n_total;
                const AonWindowReport rep = aon_window_check(model, total, chk_eps, chk_tau,
                                                             beta_lo, beta_hi, n_mc, g.seed,
                                                             g.threads);
                std::cout << "N* = " << format_double(rep.n_star) << "  strong@" << rep.n_hi << " "
                          << (rep.strong_pass ? "pass" : "fail") << "  weak@" << rep.n_lo << " "
                          << (rep.weak_pass ? "pass" : "fail") << "\n";
                if (!g.out.empty()) {
                    json rec{{"n_star", rep.n_star},
                             {"n_hi", rep.n_hi},
                             {"n_lo", rep.n_lo},
                             {"tv_hi", rep.tv_hi.value},
                             {"tv_hi_stderr", rep.tv_hi.stderr_},
                             {"tv_lo", rep.tv_lo.value},
                             {"tv_lo_stderr", rep.tv_lo.stderr_},
                             {"strong_pass", rep.strong_pass},
                             {"weak_pass", rep.weak_pass},
                             {"pass", rep.pass},
                             {"erased_after", rep.erased_after},
                             {"erased_before", rep.erased_before}};
                    std::ofstream f(fs::path(g.out) / "aon_check.json", std::ios::binary);
                    f << rec.dump(2) << "\n";
                    outputs.push_back("aon_check.json");
                }
            }
            emit_manifest(g, "aon",
                          json{{"s", s_dim}, {"k", k_sparse}, {"sigma2", sigma2},
                               {"n_min", n_min}, {"n_max", n_max}, {"n_mc", n_mc},
                               {"seed", g.seed}},
                          g.seed, outputs, watch);
            return 0;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const PreconditionError& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 4;
    } catch (const UnsupportedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
