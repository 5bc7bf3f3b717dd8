// spatmix_cli: fit, sweep, simulate, study and evaluate spatial multinomial mixtures.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spatmix/io.hpp"
#include "spatmix/result_file.hpp"
#include "spatmix/spatmix.hpp"

namespace fs = std::filesystem;
using namespace spatmix;

namespace {

enum Exit : int { ok = 0, usage = 2, parse = 3, dimension = 4, numeric = 5 };

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open '" + path + "'");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot write '" + path + "'");
    return out;
}

Dataset load_counts(const std::string& path, bool long_form) {
    auto in = open_in(path);
    return long_form ? read_counts_long(in) : read_counts_wide(in);
}

AdjacencyGraph load_graph(const std::string& path) {
    auto in = open_in(path);
    try {
        return read_edge_list(in);
    } catch (const parse_error&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw parse_error(path + ": " + e.what());
    }
}

void require_same_size(const Dataset& d, const AdjacencyGraph& g) {
    if (d.counts.n() != g.size()) {
        throw dimension_error("counts have " + std::to_string(d.counts.n()) + " regions but the graph has " +
                              std::to_string(g.size()) + " nodes (declare trailing isolated nodes with '# nodes N')");
    }
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::istringstream is(item);
        T v{};
        if (!(is >> v) || !(is >> std::ws).eof()) throw std::invalid_argument(std::string("bad ") + what + " list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
    return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_json(const Json& doc, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

void warn_all(const FitResult& r) {
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

// Options shared by fit and sweep.
struct FitFlags {
    std::string counts, graph, out;
    bool long_form = false, no_spatial = false, hard = false;
    std::string gibbs = "newton", field_mode = "posterior";
    FitConfig cfg;

    void attach(CLI::App* app) {
        app->add_option("counts", counts, "Counts CSV (wide: region,<cat...>)")->required();
        app->add_option("graph", graph, "Edge list of 0-based region indices")->required();
        app->add_flag("--long", long_form, "Counts are long form: region,group,count");
        app->add_flag("--no-spatial", no_spatial, "Standard mixture: beta fixed at 0, no field simulation");
        app->add_option("--seed", cfg.seed, "Master seed")->envname("SPATMIX_SEED");
        app->add_option("--threads", cfg.threads, "Worker threads for the short runs")->envname("SPATMIX_THREADS");
        app->add_option("--starts", cfg.n_starts, "Number of short-run starts")->capture_default_str();
        app->add_option("--short-run", cfg.short_run_iter, "Iterations per short run")->capture_default_str();
        app->add_option("--max-iter", cfg.max_iter, "Iteration cap for the main run")->capture_default_str();
        app->add_option("--patience", cfg.patience, "Stop after this many iterations without improvement")->capture_default_str();
        app->add_option("--field-sweeps", cfg.field_sweeps, "Gibbs sweeps per iteration")->capture_default_str();
        app->add_option("--gibbs", gibbs, "Gibbs parameter optimiser")->check(CLI::IsMember({"newton", "anneal"}))->capture_default_str();
        app->add_option("--field-mode", field_mode, "Law of the simulated field")
            ->check(CLI::IsMember({"posterior", "prior"}))
            ->capture_default_str();
        app->add_flag("--hard-gibbs-weights", hard, "Fit alpha, beta on C-step labels instead of responsibilities");
    }

    FitConfig config() const {
        FitConfig c = cfg;
        c.spatial = !no_spatial;
        c.hard_gibbs_weights = hard;
        c.gibbs_method = gibbs == "anneal" ? GibbsMethod::anneal : GibbsMethod::newton;
        c.field_mode = field_mode == "prior" ? FieldMode::prior : FieldMode::posterior;
        if (c.threads == 0) c.threads = 1;
        return c;
    }
};

int cmd_fit(const FitFlags& f, std::size_t K, const std::string& labels_out) {
    const auto data = load_counts(f.counts, f.long_form);
    const auto graph = load_graph(f.graph);
    require_same_size(data, graph);
    FitConfig cfg = f.config();
    cfg.K = K;
    const FitResult r = fit(data.counts, graph, cfg);
    warn_all(r);
    write_json(fit_json(r, cfg, data.regions, data.categories), f.out);
    if (!labels_out.empty()) {
        auto out = open_out(labels_out);
        write_labels(out, data.regions, r.labels);
    }
    return ok;
}

int cmd_sweep(const FitFlags& f, std::size_t k_min, std::size_t k_max, bool cold, const std::string& out_dir) {
    if (k_min < 1 || k_min > k_max) throw std::invalid_argument("need 1 <= --k-min <= --k-max");
    const auto data = load_counts(f.counts, f.long_form);
    const auto graph = load_graph(f.graph);
    require_same_size(data, graph);
    const FitConfig cfg = f.config();
    std::vector<std::size_t> ks;
    for (std::size_t k = k_min; k <= k_max; ++k) ks.push_back(k);
    SweepOptions opt;
    opt.warm_start = !cold;
    const auto res = sweep(data.counts, graph, ks, cfg, opt);

    std::ostringstream table;
    table << std::setprecision(17);
    table << "K,status,loglik,d,bic,selected\n";
    Json rows = Json::array();
    for (const auto& rec : res.records) {
        const bool sel = rec.ok && rec.K == res.selected_K;
        if (rec.ok) {
            table << rec.K << ",ok," << rec.loglik << ',' << rec.d << ',' << rec.bic << ',' << (sel ? "*" : "") << '\n';
            rows.push_back(Json{{"K", rec.K}, {"status", "ok"}, {"loglik", rec.loglik}, {"d", rec.d}, {"bic", rec.bic}, {"selected", sel}});
            warn_all(*rec.fit);
        } else {
            table << rec.K << ",error,,,,\n";
            rows.push_back(Json{{"K", rec.K}, {"status", "error"}, {"error", rec.error}});
            std::cerr << "K=" << rec.K << " failed: " << rec.error << '\n';
        }
    }
    std::cout << table.str();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        for (const auto& rec : res.records) {
            if (!rec.ok) continue;
            FitConfig c = cfg;
            c.K = rec.K;
            c.seed = rec.fit->seed;
            write_json(fit_json(*rec.fit, c, data.regions, data.categories),
                       (fs::path(out_dir) / ("fit_K" + std::to_string(rec.K) + ".json")).string());
        }
        write_json(Json{{"format_version", kResultFormatVersion},
                        {"config", config_json(cfg)},
                        {"selected_K", res.selected_K},
                        {"records", rows}},
                   (fs::path(out_dir) / "sweep.json").string());
    }
    if (res.selected_K == 0) {
        std::cerr << "every K failed\n";
        return numeric;
    }
    return ok;
}

struct SimFlags {
    std::size_t side = 10;
    std::string scheme = "rook";
    std::int64_t m = 100;
    std::string beta = "0,0.1";
    std::string alpha;
    std::size_t burn_in = 500;
    std::uint64_t seed = 1;

    void attach(CLI::App* app, bool single) {
        if (single) {
            app->add_option("--side", side, "Lattice side")->capture_default_str();
            app->add_option("--beta", beta, "Interaction strengths, comma separated (first must be 0)")->capture_default_str();
        }
        app->add_option("--scheme", scheme, "Lattice neighbourhood")->check(CLI::IsMember({"rook", "queen"}))->capture_default_str();
        app->add_option("--m", m, "Counts per region")->capture_default_str();
        app->add_option("--alpha", alpha, "Intercepts, comma separated (default all 0)");
        app->add_option("--burn-in", burn_in, "Gibbs sweeps before the field is taken")->capture_default_str();
        app->add_option("--seed", seed, "Master seed")->envname("SPATMIX_SEED")->capture_default_str();
    }

    SimConfig config(std::size_t s, const std::vector<double>& b) const {
        SimConfig c;
        c.side = s;
        c.scheme = scheme == "queen" ? LatticeScheme::queen : LatticeScheme::rook;
        c.m = m;
        c.burn_in = burn_in;
        c.seed = seed;
        c.beta = to_eigen(b);
        c.alpha = alpha.empty() ? Eigen::VectorXd::Zero(c.beta.size()) : to_eigen(parse_list<double>(alpha, "alpha"));
        if (c.beta.size() != c.lambda.rows()) {
            throw dimension_error("the default category probabilities have 2 components; give 2 beta values");
        }
        c.validate();
        return c;
    }
};

int cmd_simulate(const SimFlags& f, const std::string& out_dir) {
    const SimConfig c = f.config(f.side, parse_list<double>(f.beta, "beta"));
    const SimulatedData sim = simulate_dataset(c, c.seed);
    Dataset d{{}, {}, sim.counts};
    for (std::size_t i = 0; i < sim.counts.n(); ++i) d.regions.push_back(std::to_string(i));
    for (std::size_t j = 0; j < sim.counts.J(); ++j) d.categories.push_back("c" + std::to_string(j + 1));
    fs::create_directories(out_dir);
    auto counts = open_out((fs::path(out_dir) / "counts.csv").string());
    write_counts_wide(counts, d);
    auto truth = open_out((fs::path(out_dir) / "truth.csv").string());
    write_labels(truth, d.regions, sim.truth);
    auto graph = open_out((fs::path(out_dir) / "graph.txt").string());
    write_edge_list(graph, sim.graph);
    std::cout << "wrote " << sim.counts.n() << " regions to " << out_dir << '\n';
    return ok;
}

int cmd_study(const SimFlags& f, const std::string& sides, const std::string& betas, std::size_t reps,
              std::size_t threads, const FitFlags& fit_flags, const std::string& out) {
    std::vector<SimConfig> cfgs;
    for (auto s : parse_list<std::size_t>(sides, "side")) {
        for (double b : parse_list<double>(betas, "beta")) {
            SimConfig c = f.config(s, {0.0, b});
            c.replicates = reps;
            cfgs.push_back(c);
        }
    }
    FitConfig fc = fit_flags.config();
    const SimReport rep = run_study(cfgs, fc, threads == 0 ? 1 : threads);
    std::cout << std::setprecision(6) << "side,beta2,n,failed,min,q1,median,q3,max\n";
    for (const auto& c : rep.cells) {
        std::cout << c.side << ',' << c.beta[1] << ',' << c.ari.size() << ',' << c.failed_replicates.size() << ','
                  << c.summary.min << ',' << c.summary.q1 << ',' << c.summary.median << ',' << c.summary.q3 << ','
                  << c.summary.max << '\n';
        for (std::size_t i = 0; i < c.failures.size(); ++i) {
            std::cerr << "side " << c.side << " replicate " << c.failed_replicates[i] << " failed: " << c.failures[i] << '\n';
        }
    }
    if (!out.empty()) {
        Json doc = study_json(rep);
        doc["fit_config"] = config_json(fc);
        doc["seed"] = f.seed;
        doc["replicates"] = reps;
        write_json(doc, out);
    }
    return ok;
}

int cmd_ari(const std::string& a, const std::string& b) {
    auto ia = open_in(a), ib = open_in(b);
    const auto la = read_labels(ia), lb = read_labels(ib);
    if (la.regions != lb.regions) throw dimension_error("label files list different regions");
    std::cout << std::setprecision(17) << ari(la.labels, lb.labels) << '\n';
    return ok;
}

int cmd_moran(const std::string& graph_path, const std::string& values, const std::string& column,
              const std::string& counts, bool long_form, const std::string& midpoints, std::size_t permutations,
              std::uint64_t seed, bool row_std) {
    const auto graph = load_graph(graph_path);
    std::vector<double> x;
    if (!values.empty() == !counts.empty()) throw std::invalid_argument("give exactly one of --values or --counts");
    if (!values.empty()) {
        auto in = open_in(values);
        x = read_numeric_column(in, column);
    } else {
        const auto d = load_counts(counts, long_form);
        const auto mid = midpoints.empty() ? default_age_midpoints(d.counts.J()) : parse_list<double>(midpoints, "midpoint");
        for (std::size_t i = 0; i < d.counts.n(); ++i) x.push_back(mean_age(d.counts.row(i), mid));
    }
    if (x.size() != graph.size()) {
        throw dimension_error("variable has " + std::to_string(x.size()) + " values but the graph has " +
                              std::to_string(graph.size()) + " nodes");
    }
    std::cout << std::setprecision(17);
    if (permutations == 0) {
        std::cout << "I," << morans_i(x, graph, row_std) << '\n';
    } else {
        const auto r = moran_permutation_test(x, graph, permutations, seed, row_std);
        std::cout << "I," << r.I << "\np_value," << r.p_value << "\npermutations," << r.n_permutations << '\n';
    }
    return ok;
}

int cmd_lrt(double ll_spatial, double ll_standard, std::size_t K) {
    const auto r = lrt(ll_spatial, ll_standard, K);
    std::cout << std::setprecision(17) << "statistic," << r.statistic << "\ndf," << r.df << "\np_value," << r.p_value << '\n';
    std::cerr << "note: chi-square reference is approximate (pseudo-likelihood based statistic)\n";
    if (r.suspicious) std::cerr << "warning: spatial log-likelihood is below the standard one; the spatial fit may not have converged\n";
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial multinomial mixtures with a Gibbs (Strauss automodel) prior"};
    app.set_version_flag("--version", std::string("spatmix_cli ") + SPATMIX_VERSION);
    app.require_subcommand(1);

    FitFlags fit_flags;
    std::size_t K = 2;
    std::string labels_out;
    auto* fit_cmd = app.add_subcommand("fit", "Fit one model and write a result document");
    fit_flags.attach(fit_cmd);
    fit_cmd->add_option("--k", K, "Number of components")->capture_default_str();
    fit_cmd->add_option("--out", fit_flags.out, "Result JSON path (default stdout)");
    fit_cmd->add_option("--labels", labels_out, "Also write region,label CSV");

    FitFlags sweep_flags;
    std::size_t k_min = 1, k_max = 5;
    bool cold = false;
    std::string sweep_dir;
    auto* sweep_cmd = app.add_subcommand("sweep", "Fit a range of K and select by BIC");
    sweep_flags.attach(sweep_cmd);
    sweep_cmd->add_option("--k-min", k_min, "Smallest K")->capture_default_str();
    sweep_cmd->add_option("--k-max", k_max, "Largest K")->capture_default_str();
    sweep_cmd->add_flag("--cold", cold, "Start every K from scratch instead of the K-1 solution");
    sweep_cmd->add_option("--out-dir", sweep_dir, "Directory for per-K result documents");

    SimFlags sim_flags;
    std::string sim_out;
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate one lattice dataset");
    sim_flags.attach(sim_cmd, true);
    sim_cmd->add_option("--out", sim_out, "Output directory (counts.csv, truth.csv, graph.txt)")->required();

    SimFlags study_flags;
    FitFlags study_fit;
    std::string sides = "8,10,20", betas = "0.01,0.1,0.2", study_out;
    std::size_t reps = 100, study_threads = 1;
    auto* study_cmd = app.add_subcommand("study", "Replicated recovery study on simulated lattices");
    study_flags.attach(study_cmd, false);
    study_cmd->add_option("--sides", sides, "Lattice sides")->capture_default_str();
    study_cmd->add_option("--betas", betas, "Values of beta_2")->capture_default_str();
    study_cmd->add_option("--reps", reps, "Replicates per cell")->capture_default_str();
    study_cmd->add_option("--threads", study_threads, "Concurrent replicates")->envname("SPATMIX_THREADS");
    study_cmd->add_option("--starts", study_fit.cfg.n_starts, "Short-run starts per fit")->capture_default_str();
    study_cmd->add_option("--field-mode", study_fit.field_mode, "Law of the simulated field")
        ->check(CLI::IsMember({"posterior", "prior"}));
    study_cmd->add_option("--out", study_out, "Report JSON path");

    auto* eval_cmd = app.add_subcommand("eval", "Clustering and spatial diagnostics");
    eval_cmd->require_subcommand(1);
    std::string ari_a, ari_b;
    auto* ari_cmd = eval_cmd->add_subcommand("ari", "Adjusted Rand index of two region,label files");
    ari_cmd->add_option("a", ari_a)->required();
    ari_cmd->add_option("b", ari_b)->required();

    std::string mgraph, mvalues, mcolumn, mcounts, mmid;
    bool mlong = false, mrow = false;
    std::size_t mperm = 0;
    std::uint64_t mseed = 1;
    auto* moran_cmd = eval_cmd->add_subcommand("moran", "Moran's I, optionally with a permutation test");
    moran_cmd->add_option("graph", mgraph, "Edge list")->required();
    moran_cmd->add_option("--values", mvalues, "CSV with a numeric column");
    moran_cmd->add_option("--column", mcolumn, "Column name (default: second column)");
    moran_cmd->add_option("--counts", mcounts, "Counts CSV reduced to mean age per region");
    moran_cmd->add_flag("--long", mlong, "Counts are long form");
    moran_cmd->add_option("--midpoints", mmid, "Category midpoints, comma separated (default 2.5, 7.5, ..., last +5)");
    moran_cmd->add_option("--permutations", mperm, "Permutations for the one-sided test (0 = none, else >= 99)");
    moran_cmd->add_option("--seed", mseed, "Permutation seed")->envname("SPATMIX_SEED");
    moran_cmd->add_flag("--row-standardize", mrow, "Row-standardised weights");

    double ll_sp = 0, ll_std = 0;
    std::size_t lrt_k = 2;
    auto* lrt_cmd = app.add_subcommand("lrt", "Likelihood-ratio test of the spatial model against beta = 0");
    lrt_cmd->add_option("--spatial", ll_sp, "Spatial log-likelihood")->required();
    lrt_cmd->add_option("--standard", ll_std, "Standard-mixture log-likelihood")->required();
    lrt_cmd->add_option("--k", lrt_k, "Number of components")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit_flags, K, labels_out);
        if (*sweep_cmd) return cmd_sweep(sweep_flags, k_min, k_max, cold, sweep_dir);
        if (*sim_cmd) return cmd_simulate(sim_flags, sim_out);
        if (*study_cmd) return cmd_study(study_flags, sides, betas, reps, study_threads, study_fit, study_out);
        if (*ari_cmd) return cmd_ari(ari_a, ari_b);
        if (*moran_cmd) return cmd_moran(mgraph, mvalues, mcolumn, mcounts, mlong, mmid, mperm, mseed, mrow);
        if (*lrt_cmd) return cmd_lrt(ll_sp, ll_std, lrt_k);
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return parse;
    } catch (const dimension_error& e) {
        std::cerr << "dimension error: " << e.what() << '\n';
        return dimension;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return numeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return numeric;
    }
    return usage;
}
