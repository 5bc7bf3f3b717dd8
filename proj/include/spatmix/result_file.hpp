#pragma once

// Structured result documents. Needs nlohmann/json (json.hpp) on the include path.

#include <string>
#include <vector>

#include <json.hpp>

#include "em.hpp"
#include "model_select.hpp"
#include "simulation.hpp"

namespace spatmix {

inline constexpr int kResultFormatVersion = 1;

using Json = nlohmann::ordered_json;

inline const char* to_string(GibbsMethod m) { return m == GibbsMethod::anneal ? "anneal" : "newton"; }
inline const char* to_string(FieldMode m) { return m == FieldMode::prior ? "prior" : "posterior"; }

inline Json config_json(const FitConfig& c) {
    return Json{{"K", c.K},
                {"max_iter", c.max_iter},
                {"patience", c.patience},
                {"n_starts", c.n_starts},
                {"short_run_iter", c.short_run_iter},
                {"seed", c.seed},
                {"field_sweeps", c.field_sweeps},
                {"gibbs_method", to_string(c.gibbs_method)},
                {"spatial", c.spatial},
                {"pin_beta", c.pin_beta},
                {"hard_gibbs_weights", c.hard_gibbs_weights},
                {"field_mode", to_string(c.field_mode)},
                {"improve_tol", c.improve_tol}};
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Json fit_json(const FitResult& r, const FitConfig& cfg, const std::vector<std::string>& regions,
                     const std::vector<std::string>& categories) {
    Json lambda = Json::array();
    for (std::size_t k = 0; k < r.params.K(); ++k) {
        const auto row = r.params.components.row(k);
        lambda.push_back(std::vector<double>(row.begin(), row.end()));
    }
    Json regs = Json::array();
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        const auto w = row_span(r.w, static_cast<Eigen::Index>(i));
        regs.push_back(Json{{"id", i < regions.size() ? regions[i] : std::to_string(i)},
                            {"label", r.labels[i]},
                            {"responsibilities", std::vector<double>(w.begin(), w.end())}});
    }
    return Json{{"format_version", kResultFormatVersion},
                {"config", config_json(cfg)},
                {"seed", r.seed},
                {"n", r.labels.size()},
                {"J", r.params.components.J()},
                {"K", r.params.K()},
                {"categories", categories},
                {"lambda", lambda},
                {"alpha", to_vector(r.params.gibbs.alpha)},
                {"beta", to_vector(r.params.gibbs.beta)},
                {"occupancy", r.occupancy()},
                {"regions", regs},
                {"loglik_trace", r.loglik_trace},
                {"best_loglik", r.best_loglik},
                {"best_iteration", r.best_iteration},
                {"d", r.d},
                {"bic", r.bic},
                {"iterations", r.iterations},
                {"selected_start", r.selected_start},
                {"converged", r.converged},
                {"warnings", r.warnings}};
}

inline Json study_json(const SimReport& rep) {
    Json cells = Json::array();
    for (const auto& c : rep.cells) {
        cells.push_back(Json{{"side", c.side},
                             {"beta", to_vector(c.beta)},
                             {"ari", c.ari},
                             {"failed_replicates", c.failed_replicates},
                             {"summary",
                              {{"min", c.summary.min},
                               {"q1", c.summary.q1},
                               {"median", c.summary.median},
                               {"q3", c.summary.q3},
                               {"max", c.summary.max}}}});
    }
    return Json{{"format_version", kResultFormatVersion}, {"cells", cells}};
}

} // namespace spatmix
