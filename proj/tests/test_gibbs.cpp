#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include "oracles.hpp"
#include "spatmix/gibbs.hpp"

using namespace spatmix;
using Catch::Matchers::WithinAbs;

namespace {

GibbsParams make_params(std::vector<double> a, std::vector<double> b) {
    GibbsParams p = GibbsParams::zeros(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        p.alpha[static_cast<Eigen::Index>(k)] = a[k];
        p.beta[static_cast<Eigen::Index>(k)] = b[k];
    }
    return p;
}

GibbsParams random_params(std::size_t K, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-scale, scale);
    GibbsParams p = GibbsParams::zeros(K);
    for (std::size_t k = 1; k < K; ++k) {
        p.alpha[static_cast<Eigen::Index>(k)] = u(rng);
        p.beta[static_cast<Eigen::Index>(k)] = u(rng);
    }
    return p;
}

std::vector<std::vector<std::size_t>> adjacency_lists(const AdjacencyGraph& g) {
    std::vector<std::vector<std::size_t>> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i].assign(g.neighbors(i).begin(), g.neighbors(i).end());
    return out;
}

AdjacencyGraph path_graph(std::size_t n) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return build_from_edges(n, e);
}

RowMatrix prior_matrix(const LabelField& z, const AdjacencyGraph& g, const GibbsParams& p) {
    return conditional_log_prior_matrix(z, g, p).array().exp().matrix();
}

} // namespace

TEST_CASE("potential values", "[gibbs]") {
    STATIC_REQUIRE(potential(1, 1) == -1);
    STATIC_REQUIRE(potential(1, 0) == 1);
    STATIC_REQUIRE(potential(0, 1) == 1);
    STATIC_REQUIRE(potential(0, 0) == 1);
}

TEST_CASE("conditional prior reference values", "[gibbs]") {
    auto g = build_lattice(3, LatticeScheme::rook);
    LabelField z{0, 1, 2, 1, 0, 2, 0, 1, 2};
    const auto t = conditional_prior(4, z, g, GibbsParams::zeros(3));
    for (double x : t) REQUIRE_THAT(x, WithinAbs(1.0 / 3.0, 1e-15));

    // centre of a star whose four leaves all sit in the second component
    std::vector<Edge> star{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    auto s = build_from_edges(5, star);
    LabelField zs{0, 1, 1, 1, 1};
    const auto p = make_params({0.0, 2.048}, {0.0, 0.781});
    const auto ts = conditional_prior(0, zs, s, p);
    const double oracle_logistic = 1.0 / (1.0 + std::exp(-(2.048 + 0.781 * 4.0)));
    REQUIRE_THAT(ts[1], WithinAbs(oracle_logistic, 1e-15));
    REQUIRE_THAT(ts[1], WithinAbs(0.9943587927163152, 1e-12));

    // isolated node: only the intercepts matter
    auto iso = build_from_edges(3, std::vector<Edge>{{0, 1}});
    LabelField zi{1, 1, 0};
    const auto q = make_params({0.0, 0.3, -1.2}, {0.0, 4.0, -3.0});
    const auto ti = conditional_prior(2, zi, iso, q);
    const double zsum = 1.0 + std::exp(0.3) + std::exp(-1.2);
    REQUIRE_THAT(ti[0], WithinAbs(1.0 / zsum, 1e-15));
    REQUIRE_THAT(ti[1], WithinAbs(std::exp(0.3) / zsum, 1e-15));
    REQUIRE_THAT(ti[2], WithinAbs(std::exp(-1.2) / zsum, 1e-15));
}

TEST_CASE("gibbs params validation", "[gibbs]") {
    auto p = make_params({0.5, 0.0}, {0.0, 0.0});
    REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
    auto q = make_params({0.0, INFINITY}, {0.0, 0.0});
    REQUIRE_THROWS_AS(q.validate(), numeric_error);
    auto e = make_params({0.0, 1.0}, {0.0, 2.0}).extended();
    REQUIRE(e.K() == 3);
    REQUIRE(e.alpha[1] == 1.0);
    REQUIRE(e.beta[2] == 0.0);
}

TEST_CASE("conditional prior properties on random fields", "[gibbs][property]") {
    std::mt19937_64 rng(77);
    for (auto scheme : {LatticeScheme::rook, LatticeScheme::queen}) {
        const auto g = build_lattice(5, scheme);
        const auto lists = adjacency_lists(g);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t K = 2 + rng() % 4;
            const auto p = random_params(K, 2.0, rng);
            LabelField z(g.size()), z2(g.size());
            for (auto& v : z) v = static_cast<int>(rng() % K);
            for (auto& v : z2) v = static_cast<int>(rng() % K);
            const double c = std::uniform_real_distribution<double>(-3, 3)(rng);
            GibbsParams shifted = p;
            shifted.alpha.array() += c;
            GibbsParams flat = p;
            flat.beta.setZero();
            const std::vector<double> a(p.alpha.data(), p.alpha.data() + K), b(p.beta.data(), p.beta.data() + K);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const auto t = conditional_prior(i, z, g, p);
                REQUIRE_THAT(std::accumulate(t.begin(), t.end(), 0.0), WithinAbs(1.0, 1e-12));
                const auto ts = conditional_prior(i, z, g, shifted);
                const auto ref = oracle::prior_from_potentials(lists, i, z, a, b);
                const auto f1 = conditional_prior(i, z, g, flat);
                const auto f2 = conditional_prior(i, z2, g, flat);
                for (std::size_t k = 0; k < K; ++k) {
                    REQUIRE_THAT(ts[k], WithinAbs(t[k], 1e-12));
                    REQUIRE_THAT(t[k], WithinAbs(ref[k], 1e-12));
                    REQUIRE(f1[k] == f2[k]);
                }
            }
        }
    }
}

TEST_CASE("uniform prior sweeps give uniform label frequencies", "[gibbs][oracle]") {
    const auto g = build_lattice(10, LatticeScheme::rook);
    const std::size_t K = 3;
    Rng rng = make_rng(5, 0);
    LabelField z = uniform_field(g.size(), K, rng);
    std::vector<double> freq(K, 0.0);
    const std::size_t sweeps = 100;
    for (std::size_t s = 0; s < sweeps; ++s) {
        gibbs_sweep(z, g, GibbsParams::zeros(K), rng);
        for (int v : z) freq[static_cast<std::size_t>(v)] += 1.0;
    }
    const double N = static_cast<double>(sweeps * g.size());
    REQUIRE(N >= 10000);
    const double p = 1.0 / static_cast<double>(K);
    const double se = std::sqrt(p * (1 - p) / N);
    for (double f : freq) REQUIRE(std::abs(f / N - p) <= 3.0 * se);
}

TEST_CASE("three-node path: conditionals and stationary law match enumeration", "[gibbs][oracle]") {
    const auto g = path_graph(3);
    const auto lists = adjacency_lists(g);
    const std::vector<double> a{0.0, 0.4}, b{0.0, 0.6};
    const auto p = make_params(a, b);
    const auto configs = oracle::all_labelings(3, 2);
    REQUIRE(configs.size() == 8);

    // exact conditionals from the joint
    for (const auto& z : configs) {
        for (std::size_t i = 0; i < 3; ++i) {
            auto z0 = z, z1 = z;
            z0[i] = 0;
            z1[i] = 1;
            const double l0 = oracle::log_joint(lists, z0, a, b), l1 = oracle::log_joint(lists, z1, a, b);
            const double p1 = 1.0 / (1.0 + std::exp(l0 - l1));
            REQUIRE_THAT(conditional_prior(i, z, g, p)[1], WithinAbs(p1, 1e-12));
        }
    }

    // stationary frequencies
    std::vector<double> exact(8);
    double zsum = 0.0;
    for (std::size_t c = 0; c < 8; ++c) zsum += (exact[c] = std::exp(oracle::log_joint(lists, configs[c], a, b)));
    for (double& e : exact) e /= zsum;

    auto code = [](const LabelField& z) { return static_cast<std::size_t>(z[0] + 2 * z[1] + 4 * z[2]); };
    Rng rng = make_rng(99, 0);
    LabelField z{0, 0, 0};
    for (int s = 0; s < 100; ++s) gibbs_sweep(z, g, p, rng);
    std::vector<double> freq(8, 0.0);
    const std::size_t samples = 40000, thin = 5;
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t t = 0; t < thin; ++t) gibbs_sweep(z, g, p, rng);
        freq[code(z)] += 1.0;
    }
    for (std::size_t c = 0; c < 8; ++c) {
        const double f = freq[code(LabelField(configs[c].begin(), configs[c].end()))] / static_cast<double>(samples);
        const double se = std::sqrt(exact[c] * (1 - exact[c]) / static_cast<double>(samples));
        INFO("config " << c << " exact " << exact[c] << " observed " << f);
        REQUIRE(std::abs(f - exact[c]) <= 4.0 * se);
    }
}

TEST_CASE("single-node graph draws iid from softmax(alpha)", "[gibbs]") {
    const auto g = build_from_edges(1, std::vector<Edge>{});
    const auto p = make_params({0.0, 1.0, -0.5}, {0.0, 3.0, 3.0});
    const double zsum = 1.0 + std::exp(1.0) + std::exp(-0.5);
    const std::vector<double> expect{1.0 / zsum, std::exp(1.0) / zsum, std::exp(-0.5) / zsum};
    Rng rng = make_rng(1, 1);
    LabelField z{0};
    std::vector<double> freq(3, 0.0);
    const std::size_t N = 30000;
    for (std::size_t s = 0; s < N; ++s) {
        gibbs_sweep(z, g, p, rng);
        freq[static_cast<std::size_t>(z[0])] += 1.0;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double se = std::sqrt(expect[k] * (1 - expect[k]) / static_cast<double>(N));
        REQUIRE(std::abs(freq[k] / static_cast<double>(N) - expect[k]) <= 4.0 * se);
    }
}

TEST_CASE("posterior sweep on a single node follows t times emission", "[gibbs]") {
    const auto g = build_from_edges(1, std::vector<Edge>{});
    const auto p = make_params({0.0, 0.5}, {0.0, 0.0});
    RowMatrix e(1, 2);
    e << std::log(0.2), std::log(0.6);
    const double p1 = std::exp(0.5) * 0.6 / (0.2 + std::exp(0.5) * 0.6);
    Rng rng = make_rng(4, 4);
    LabelField z{0};
    double ones = 0.0;
    const std::size_t N = 20000;
    for (std::size_t s = 0; s < N; ++s) {
        gibbs_sweep(z, g, p, rng, &e);
        ones += z[0];
    }
    REQUIRE(std::abs(ones / static_cast<double>(N) - p1) <= 4.0 * std::sqrt(p1 * (1 - p1) / static_cast<double>(N)));
}

TEST_CASE("gibbs sweep is reproducible under a seed", "[gibbs][determinism]") {
    const auto g = build_lattice(8, LatticeScheme::queen);
    const auto p = make_params({0.0, 0.2, -0.1}, {0.0, 0.3, 0.5});
    auto run = [&](std::uint64_t seed) {
        Rng rng = make_rng(seed, 3);
        LabelField z = uniform_field(g.size(), 3, rng);
        for (int s = 0; s < 20; ++s) gibbs_sweep(z, g, p, rng);
        return z;
    };
    REQUIRE(run(12) == run(12));
    REQUIRE(run(12) != run(13));
}

TEST_CASE("objective gradient matches central differences", "[gibbs][property]") {
    std::mt19937_64 rng(31);
    const auto g = build_lattice(5, LatticeScheme::rook);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t K = 2 + rng() % 3;
        LabelField z(g.size());
        for (auto& v : z) v = static_cast<int>(rng() % K);
        RowMatrix w(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(K));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index k = 0; k < w.cols(); ++k) w(i, k) = std::uniform_real_distribution<double>(0.01, 1)(rng);
            w.row(i) /= w.row(i).sum();
        }
        const GibbsObjective obj(w, z, g);
        const auto p = random_params(K, 1.5, rng);
        const Eigen::VectorXd grad = obj.gradient(p);
        const double h = 1e-5;
        for (std::size_t k = 1; k < K; ++k) {
            for (int which = 0; which < 2; ++which) {
                GibbsParams up = p, dn = p;
                auto& vu = which == 0 ? up.alpha : up.beta;
                auto& vd = which == 0 ? dn.alpha : dn.beta;
                vu[static_cast<Eigen::Index>(k)] += h;
                vd[static_cast<Eigen::Index>(k)] -= h;
                const double fd = (obj.value(up) - obj.value(dn)) / (2 * h);
                const double an = grad[static_cast<Eigen::Index>(which * (K - 1) + k - 1)];
                REQUIRE(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)));
            }
        }
    }
}

TEST_CASE("weights equal to the prior are a stationary point", "[gibbs]") {
    std::mt19937_64 rng(5);
    const auto g = build_lattice(6, LatticeScheme::rook);
    for (std::size_t K : {2u, 3u}) {
        const auto p = random_params(K, 1.0, rng);
        LabelField z(g.size());
        for (auto& v : z) v = static_cast<int>(rng() % K);
        const RowMatrix w = prior_matrix(z, g, p);
        const GibbsObjective obj(w, z, g);
        REQUIRE(obj.gradient(p).norm() < 1e-10);
        const auto out = fit_gibbs_params(w, z, g, p, {});
        REQUIRE((out.alpha - p.alpha).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((out.beta - p.beta).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("newton fit matches a dense grid search on a 12-node path", "[gibbs][oracle]") {
    const auto g = path_graph(12);
    std::mt19937_64 rng(12);
    LabelField z(12);
    for (auto& v : z) v = static_cast<int>(rng() % 2);
    const auto truth = make_params({0.0, 0.7}, {0.0, -0.4});
    RowMatrix w = prior_matrix(z, g, truth);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double u = std::uniform_real_distribution<double>(0, 1)(rng);
        w(i, 1) = 0.7 * w(i, 1) + 0.3 * u;
        w(i, 0) = 1.0 - w(i, 1);
    }
    const GibbsObjective obj(w, z, g);
    auto objective = [&](double a, double b) { return obj.value(make_params({0.0, a}, {0.0, b})); };
    const auto [arg, best] = oracle::grid_max(objective, -5.0, 5.0, 0.01);
    REQUIRE(std::abs(arg.first) < 4.9);
    REQUIRE(std::abs(arg.second) < 4.9);

    const auto fitted = fit_gibbs_params(w, z, g, GibbsParams::zeros(2), {});
    REQUIRE(std::abs(fitted.alpha[1] - arg.first) <= 0.02);
    REQUIRE(std::abs(fitted.beta[1] - arg.second) <= 0.02);
    REQUIRE(std::abs(obj.value(fitted) - best) < 0.02);
    REQUIRE(obj.value(fitted) >= best - 1e-12);
}

TEST_CASE("fit never returns a worse point than init", "[gibbs][property]") {
    std::mt19937_64 rng(44);
    const auto g = build_lattice(5, LatticeScheme::queen);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t K = 2 + rng() % 3;
        LabelField z(g.size());
        for (auto& v : z) v = static_cast<int>(rng() % K);
        RowMatrix w(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(K));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index k = 0; k < w.cols(); ++k) w(i, k) = std::uniform_real_distribution<double>(0, 1)(rng);
            w.row(i) /= w.row(i).sum();
        }
        const auto init = random_params(K, 3.0, rng);
        const GibbsObjective obj(w, z, g);
        GibbsFitOptions newton;
        GibbsFitOptions anneal;
        anneal.method = GibbsMethod::anneal;
        anneal.anneal.epochs = 40;
        Rng arng = make_rng(static_cast<std::uint64_t>(trial), 9);
        const auto a = fit_gibbs_params(w, z, g, init, newton);
        const auto b = fit_gibbs_params(w, z, g, init, anneal, &arng);
        REQUIRE(obj.value(a) >= obj.value(init));
        REQUIRE(obj.value(b) >= obj.value(init));
        REQUIRE(obj.value(b) >= obj.value(a) - 1e-6);
        a.validate();
        b.validate();
    }
}

TEST_CASE("pinned beta gives closed-form intercepts", "[gibbs]") {
    const auto g = build_lattice(4, LatticeScheme::rook);
    std::mt19937_64 rng(2);
    LabelField z(g.size());
    for (auto& v : z) v = static_cast<int>(rng() % 3);
    RowMatrix w(static_cast<Eigen::Index>(g.size()), 3);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index k = 0; k < 3; ++k) w(i, k) = std::uniform_real_distribution<double>(0.1, 1)(rng);
        w.row(i) /= w.row(i).sum();
    }
    GibbsFitOptions opt;
    opt.pin_beta = true;
    const auto p = fit_gibbs_params(w, z, g, GibbsParams::zeros(3), opt);
    const Eigen::VectorXd s = w.colwise().sum().transpose();
    REQUIRE(p.beta.isZero());
    REQUIRE_THAT(p.alpha[1], WithinAbs(std::log(s[1] / s[0]), 1e-10));
    REQUIRE_THAT(p.alpha[2], WithinAbs(std::log(s[2] / s[0]), 1e-10));
}

TEST_CASE("empty component drives its intercept to the box", "[gibbs]") {
    const auto g = build_lattice(4, LatticeScheme::rook);
    LabelField z(g.size(), 0);
    for (std::size_t i = 0; i < z.size(); i += 2) z[i] = 1;
    RowMatrix w = RowMatrix::Zero(static_cast<Eigen::Index>(g.size()), 3);
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, i % 2) = 1.0;
    const auto p = fit_gibbs_params(w, z, g, GibbsParams::zeros(3), {});
    REQUIRE(p.alpha.allFinite());
    REQUIRE(p.beta.allFinite());
    REQUIRE(p.alpha[2] < -5.0);
    REQUIRE(p.alpha.cwiseAbs().maxCoeff() <= 15.0);
}

TEST_CASE("fit_gibbs_params input errors", "[gibbs]") {
    const auto g = build_lattice(3, LatticeScheme::rook);
    LabelField z(g.size(), 0);
    RowMatrix w = RowMatrix::Constant(static_cast<Eigen::Index>(g.size()), 2, 0.5);
    auto bad = make_params({0.0, NAN}, {0.0, 0.0});
    REQUIRE_THROWS_AS(fit_gibbs_params(w, z, g, bad, {}), numeric_error);
    GibbsFitOptions anneal;
    anneal.method = GibbsMethod::anneal;
    REQUIRE_THROWS_AS(fit_gibbs_params(w, z, g, GibbsParams::zeros(2), anneal), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_gibbs_params(w, z, g, GibbsParams::zeros(3), {}), dimension_error);
}
