#include <catch_amalgamated.hpp>

#include <cmath>

#include "census_tables.hpp"
#include "spatmix/model_select.hpp"
#include "spatmix/simulation.hpp"

using namespace spatmix;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("free parameter counts", "[model_select]") {
    REQUIRE(free_params(8, 18, true) == 150);
    REQUIRE(free_params(2, 18, false) == 35);
    REQUIRE(free_params(1, 18, true) == 17);
    REQUIRE(free_params(1, 18, false) == 17);
    REQUIRE(free_params(2, 18, true) == 36);
    REQUIRE_THROWS_AS(free_params(0, 18, true), std::invalid_argument);
    REQUIRE_THROWS_AS(free_params(2, 1, true), std::invalid_argument);
}

TEST_CASE("bic reference values", "[model_select]") {
    REQUIRE_THAT(bic(-28590.73, 17, 60), WithinAbs(-57251.07, 0.01));
    REQUIRE_THAT(bic(-18298.02, 36, 60), WithinAbs(-36743.44, 0.01));
    REQUIRE(bic(0.0, 0, 1) == 0.0);
    for (std::size_t d = 0; d < 50; ++d) REQUIRE(bic(-100.0, d + 1, 7) < bic(-100.0, d, 7));
}

TEST_CASE("census table columns are consistent with the criterion", "[model_select]") {
    for (const auto& r : census::kStandard) {
        INFO("standard K=" << r.K);
        const double b = bic(r.loglik, free_params(r.K, census::kGroups, false), census::kRegions);
        REQUIRE(std::abs(b - r.bic) < 0.5);
    }
    for (const auto& r : census::kSpatial) {
        INFO("spatial K=" << r.K);
        const double b = bic(r.loglik, free_params(r.K, census::kGroups, true), census::kRegions);
        REQUIRE(std::abs(b - r.bic) < 0.5);
    }
}

TEST_CASE("chi-square survival function", "[model_select]") {
    REQUIRE_THAT(chi_square_sf(21.76, 7), WithinRel(0.0027939947568859686, 1e-10));
    REQUIRE_THAT(chi_square_sf(3.841458820694124, 1), WithinRel(0.05, 1e-10));
    REQUIRE_THAT(chi_square_sf(2.0, 2), WithinRel(std::exp(-1.0), 1e-12));
    REQUIRE(chi_square_sf(0.0, 3) == 1.0);
    REQUIRE(chi_square_sf(-1.0, 3) == 1.0);
}

TEST_CASE("likelihood ratio test", "[model_select]") {
    const auto r = lrt(-10659.71, -10670.59, 8);
    REQUIRE_THAT(r.statistic, WithinAbs(21.76, 1e-9));
    REQUIRE(r.df == 7);
    REQUIRE_THAT(r.p_value, WithinRel(0.0027939947568859686, 1e-9));
    REQUIRE(r.p_value < 0.05);
    REQUIRE_FALSE(r.suspicious);

    const auto eq = lrt(-50.0, -50.0, 3);
    REQUIRE(eq.statistic == 0.0);
    REQUIRE(eq.p_value == 1.0);

    const auto shifted = lrt(-10659.71 + 1000.0, -10670.59 + 1000.0, 8);
    REQUIRE_THAT(shifted.statistic, WithinAbs(r.statistic, 1e-9));

    const auto neg = lrt(-60.0, -50.0, 2);
    REQUIRE(neg.suspicious);
    REQUIRE(neg.p_value == 1.0);
    REQUIRE_THROWS_AS(lrt(0.0, 0.0, 1), std::invalid_argument);

    for (double s : {0.0, 0.1, 1.0, 10.0, 100.0}) {
        const auto x = lrt(s, 0.0, 4);
        REQUIRE(x.p_value >= 0.0);
        REQUIRE(x.p_value <= 1.0);
    }
}

TEST_CASE("bic penalty can prefer fewer components", "[model_select]") {
    // log-likelihood rises with K but by less than the added penalty past K = 3
    const std::vector<double> ll{-1000.0, -900.0, -850.0, -845.0, -843.0};
    std::size_t best = 0;
    for (std::size_t k = 1; k < ll.size(); ++k) {
        REQUIRE(ll[k] > ll[k - 1]);
        if (bic(ll[k], free_params(k + 1, 5, true), 60) > bic(ll[best], free_params(best + 1, 5, true), 60)) best = k;
    }
    REQUIRE(best + 1 == 3);
}

namespace {

FitConfig sweep_cfg(std::uint64_t seed) {
    FitConfig c;
    c.seed = seed;
    c.n_starts = 5;
    c.short_run_iter = 5;
    c.patience = 20;
    c.max_iter = 200;
    return c;
}

} // namespace

TEST_CASE("sweep over a single K selects it", "[model_select]") {
    SimConfig s;
    s.side = 4;
    s.burn_in = 5;
    const auto sim = simulate_dataset(s, 1);
    const auto r = sweep(sim.counts, sim.graph, {1}, sweep_cfg(2));
    REQUIRE(r.records.size() == 1);
    REQUIRE(r.selected_K == 1);
    REQUIRE(r.selected() != nullptr);
}

TEST_CASE("sweep selects the true K on separated data", "[model_select]") {
    SimConfig s;
    s.m = 1000;
    s.burn_in = 100;
    const auto sim = simulate_dataset(s, 4);
    const auto r = sweep(sim.counts, sim.graph, {1, 2, 3, 4}, sweep_cfg(3));
    REQUIRE(r.selected_K == 2);
    for (const auto& rec : r.records) {
        REQUIRE(rec.ok);
        REQUIRE(rec.d == free_params(rec.K, 10, true));
        REQUIRE_THAT(rec.bic, WithinAbs(2.0 * rec.loglik - static_cast<double>(rec.d) * std::log(100.0), 1e-9));
        REQUIRE(rec.fit->params.K() == rec.K);
    }
}

TEST_CASE("sweep isolates failures and validates its range", "[model_select]") {
    SimConfig s;
    s.side = 4;
    s.burn_in = 5;
    const auto sim = simulate_dataset(s, 1);
    const auto wrong = build_lattice(5);
    const auto r = sweep(sim.counts, wrong, {1, 2}, sweep_cfg(1));
    REQUIRE(r.records.size() == 2);
    for (const auto& rec : r.records) {
        REQUIRE_FALSE(rec.ok);
        REQUIRE_FALSE(rec.error.empty());
    }
    REQUIRE(r.selected_K == 0);
    REQUIRE(r.selected() == nullptr);
    REQUIRE_THROWS_AS(sweep(sim.counts, sim.graph, {}, sweep_cfg(1)), std::invalid_argument);
    REQUIRE_THROWS_AS(sweep(sim.counts, sim.graph, {2, 1}, sweep_cfg(1)), std::invalid_argument);
}

TEST_CASE("sweep is reproducible", "[model_select][determinism]") {
    SimConfig s;
    s.side = 5;
    s.burn_in = 20;
    const auto sim = simulate_dataset(s, 8);
    const auto a = sweep(sim.counts, sim.graph, {1, 2, 3}, sweep_cfg(5));
    const auto b = sweep(sim.counts, sim.graph, {1, 2, 3}, sweep_cfg(5));
    REQUIRE(a.selected_K == b.selected_K);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        REQUIRE(a.records[i].loglik == b.records[i].loglik);
        REQUIRE(a.records[i].fit->labels == b.records[i].fit->labels);
    }
}
