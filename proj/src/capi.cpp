#include "pdro/pdro.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <variant>

#include "pdro/bench.hpp"
#include "pdro/config.hpp"
#include "pdro/csv.hpp"
#include "pdro/dro.hpp"

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        return fail(PDRO_ERR_INVALID, e.what());
    } catch (const std::runtime_error& e) {
        // Parse/IO errors surface as runtime_error with a path prefix.
        const std::string what = e.what();
        if (what.find("cannot open") != std::string::npos ||
            what.find("failed writing") != std::string::npos)
            return fail(PDRO_ERR_IO, what);
        if (what.find(':') != std::string::npos)
            return fail(PDRO_ERR_PARSE, what);
        return fail(PDRO_ERR_RUNTIME, what);
    } catch (const std::exception& e) {
        return fail(PDRO_ERR_RUNTIME, e.what());
    }
}

using DistVariant = std::variant<pdro::GaussianSpec, pdro::ScaledBetaProductSpec,
                                 pdro::GaussianMixtureSpec, pdro::LinearGaussianConditional>;

pdro::Matrix to_matrix(const double* data, size_t rows, size_t cols) {
    if (!data)
        throw std::invalid_argument("null data pointer");
    pdro::Matrix m(rows, cols);
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j)
            m(Eigen::Index(i), Eigen::Index(j)) = data[i * cols + j];
    return m;
}

pdro::Vector to_vector(const double* data, size_t n) {
    if (!data)
        throw std::invalid_argument("null data pointer");
    return Eigen::Map<const pdro::Vector>(data, Eigen::Index(n));
}

} // namespace

struct pdro_dist {
    DistVariant value;
};

extern "C" {

const char* pdro_version(void) {
    return "0.1.0";
}

const char* pdro_last_error(void) {
    return g_last_error.c_str();
}

void pdro_dist_free(pdro_dist* dist) {
    delete dist;
}

void pdro_free(void* p) {
    std::free(p);
}

int pdro_fit_gaussian(const double* atoms, size_t m, size_t d, pdro_dist** out) {
    return guarded([&] {
        if (!out)
            throw std::invalid_argument("null output pointer");
        pdro::EmpiricalDist data(to_matrix(atoms, m, d));
        *out = new pdro_dist{pdro::fit_gaussian_full(data)};
        return PDRO_OK;
    });
}

int pdro_fit_gaussian_mean(const double* atoms, size_t m, size_t d, const double* cov,
                           pdro_dist** out) {
    return guarded([&] {
        if (!out)
            throw std::invalid_argument("null output pointer");
        pdro::EmpiricalDist data(to_matrix(atoms, m, d));
        *out = new pdro_dist{pdro::fit_gaussian_mean(data, to_matrix(cov, d, d))};
        return PDRO_OK;
    });
}

int pdro_fit_beta(const double* atoms, size_t m, size_t d, double r, pdro_dist** out) {
    return guarded([&] {
        if (!out)
            throw std::invalid_argument("null output pointer");
        pdro::EmpiricalDist data(to_matrix(atoms, m, d));
        *out = new pdro_dist{pdro::fit_beta_moment(data, r)};
        return PDRO_OK;
    });
}

int pdro_fit_gmm(const double* atoms, size_t m, size_t d, const int32_t* labels, pdro_dist** out) {
    return guarded([&] {
        if (!out || !labels)
            throw std::invalid_argument("null output or label pointer");
        pdro::EmpiricalDist data(to_matrix(atoms, m, d));
        std::vector<int> lab(labels, labels + m);
        *out = new pdro_dist{pdro::fit_gmm_labeled(data, lab)};
        return PDRO_OK;
    });
}

int pdro_fit_ols(const double* covariates, size_t n, size_t dy, const double* responses,
                 size_t dxi, pdro_dist** out) {
    return guarded([&] {
        if (!out)
            throw std::invalid_argument("null output pointer");
        *out = new pdro_dist{
            pdro::fit_contextual_ols(to_matrix(covariates, n, dy), to_matrix(responses, n, dxi))};
        return PDRO_OK;
    });
}

int pdro_dist_dim(const pdro_dist* dist, size_t* out_dim) {
    return guarded([&] {
        if (!dist || !out_dim)
            throw std::invalid_argument("null argument");
        *out_dim = std::visit([](const auto& d) { return size_t(d.dim()); }, dist->value);
        return PDRO_OK;
    });
}

namespace {

std::string describe(const DistVariant& v) {
    std::ostringstream os;
    os.precision(10);
    if (const auto* g = std::get_if<pdro::GaussianSpec>(&v)) {
        os << "family = gaussian\ndim = " << g->dim() << "\nmean =";
        for (Eigen::Index i = 0; i < g->dim(); ++i)
            os << ' ' << g->mean[i];
        os << "\ncov =";
        for (Eigen::Index i = 0; i < g->dim(); ++i)
            for (Eigen::Index j = 0; j < g->dim(); ++j)
                os << ' ' << g->cov(i, j);
        os << '\n';
    } else if (const auto* b = std::get_if<pdro::ScaledBetaProductSpec>(&v)) {
        os << "family = scaled-beta\ndim = " << b->dim() << "\nr = " << b->r << "\neta =";
        for (Eigen::Index i = 0; i < b->dim(); ++i)
            os << ' ' << b->eta[i];
        os << '\n';
    } else if (const auto* g = std::get_if<pdro::GaussianMixtureSpec>(&v)) {
        os << "family = gaussian-mixture\ndim = " << g->dim()
           << "\ncomponents = " << g->components.size() << "\nweights =";
        for (Eigen::Index i = 0; i < g->weights.size(); ++i)
            os << ' ' << g->weights[i];
        os << '\n';
        for (size_t k = 0; k < g->components.size(); ++k) {
            os << "mean[" << k << "] =";
            for (Eigen::Index i = 0; i < g->dim(); ++i)
                os << ' ' << g->components[k].mean[i];
            os << '\n';
        }
    } else if (const auto* c = std::get_if<pdro::LinearGaussianConditional>(&v)) {
        os << "family = linear-gaussian\ndim = " << c->dim()
           << "\ncovariate_dim = " << c->covariate_dim()
           << "\nrank_deficient = " << (c->rank_deficient ? 1 : 0) << "\nB =";
        for (Eigen::Index i = 0; i < c->B.rows(); ++i)
            for (Eigen::Index j = 0; j < c->B.cols(); ++j)
                os << ' ' << c->B(i, j);
        os << "\ncov =";
        for (Eigen::Index i = 0; i < c->cov.rows(); ++i)
            for (Eigen::Index j = 0; j < c->cov.cols(); ++j)
                os << ' ' << c->cov(i, j);
        os << '\n';
    }
    return os.str();
}

} // namespace

int pdro_dist_describe(const pdro_dist* dist, char* buf, size_t cap, size_t* out_len) {
    return guarded([&] {
        if (!dist)
            throw std::invalid_argument("null distribution");
        const std::string text = describe(dist->value);
        if (out_len)
            *out_len = text.size();
        if (buf && cap > 0) {
            const size_t n = std::min(cap - 1, text.size());
            std::memcpy(buf, text.data(), n);
            buf[n] = '\0';
        }
        return PDRO_OK;
    });
}

int pdro_sample(const pdro_dist* dist, size_t m, uint64_t seed, const double* context,
                size_t context_len, double* out_atoms) {
    return guarded([&] {
        if (!dist || !out_atoms)
            throw std::invalid_argument("null argument");
        pdro::EmpiricalDist drawn = std::visit(
            [&](const auto& d) -> pdro::EmpiricalDist {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, pdro::LinearGaussianConditional>) {
                    if (!context)
                        throw std::invalid_argument("conditional law requires a context vector");
                    return pdro::sample(d, Eigen::Index(m), seed, to_vector(context, context_len));
                } else {
                    if (context)
                        throw std::invalid_argument("context given for an unconditional law");
                    return pdro::sample(d, Eigen::Index(m), seed);
                }
            },
            dist->value);
        for (Eigen::Index i = 0; i < drawn.atoms.rows(); ++i)
            for (Eigen::Index j = 0; j < drawn.atoms.cols(); ++j)
                out_atoms[size_t(i) * size_t(drawn.atoms.cols()) + size_t(j)] = drawn.atoms(i, j);
        return PDRO_OK;
    });
}

namespace {

int worst_case_common(const double* values, size_t m, const double* base, double eps,
                      double* out_value, double* out_weights, int* out_closed_form,
                      pdro::DivergenceKind kind) {
    return guarded([&] {
        if (!values || !out_value)
            throw std::invalid_argument("null argument");
        const pdro::Vector v = to_vector(values, m);
        const pdro::Vector q =
            base ? to_vector(base, m)
                 : pdro::Vector(pdro::Vector::Constant(Eigen::Index(m), 1.0 / double(m)));
        const pdro::WorstCaseResult r = kind == pdro::DivergenceKind::Chi2
                                            ? pdro::chi2_worst_case(v, q, eps)
                                            : pdro::kl_worst_case(v, q, eps);
        *out_value = r.value;
        if (out_weights) {
            const pdro::Vector& w = r.weights ? *r.weights : q;
            for (size_t i = 0; i < m; ++i)
                out_weights[i] = w[Eigen::Index(i)];
        }
        if (out_closed_form)
            *out_closed_form = r.closed_form_used ? 1 : 0;
        return PDRO_OK;
    });
}

} // namespace

int pdro_chi2_worst_case(const double* values, size_t m, const double* base, double eps,
                         double* out_value, double* out_weights, int* out_closed_form) {
    return worst_case_common(values, m, base, eps, out_value, out_weights, out_closed_form,
                             pdro::DivergenceKind::Chi2);
}

int pdro_kl_worst_case(const double* values, size_t m, const double* base, double eps,
                       double* out_value, double* out_weights, int* out_closed_form) {
    return worst_case_common(values, m, base, eps, out_value, out_weights, out_closed_form,
                             pdro::DivergenceKind::KL);
}

int pdro_w1_worst_case(double mean_value, double lip, double eps, double* out_value) {
    return guarded([&] {
        if (!out_value)
            throw std::invalid_argument("null output pointer");
        *out_value = pdro::w1_worst_case_lipschitz(mean_value, lip, eps).value;
        return PDRO_OK;
    });
}

int pdro_solve(const double* atoms, size_t m, size_t d, const pdro_solve_spec* spec, double* out_x,
               double* out_objective, int* out_status) {
    return guarded([&] {
        if (!spec || !out_x || !out_objective)
            throw std::invalid_argument("null argument");
        pdro::EmpiricalDist data(to_matrix(atoms, m, d));

        pdro::CostFunction cost = [&]() -> pdro::CostFunction {
            switch (spec->cost_kind) {
            case PDRO_COST_DOWNSIDE:
                return pdro::DownsideRiskCost(spec->mu, spec->gamma);
            case PDRO_COST_QUADRATIC:
                if (!spec->anchor)
                    throw std::invalid_argument("quadratic cost needs an anchor vector");
                return pdro::QuadraticLinearCost(to_vector(spec->anchor, d));
            default:
                throw std::invalid_argument("unknown cost kind");
            }
        }();
        pdro::FeasibleSet set = [&]() -> pdro::FeasibleSet {
            switch (spec->set_kind) {
            case PDRO_SET_SIMPLEX_FLOOR:
                return pdro::SimplexFloorSet(spec->tau, Eigen::Index(d));
            case PDRO_SET_L2_BALL:
                return pdro::L2BallSet(spec->radius, Eigen::Index(d));
            default:
                throw std::invalid_argument("unknown set kind");
            }
        }();
        pdro::ObjectiveKind obj = [&] {
            switch (spec->amb_kind) {
            case PDRO_AMB_NONE:
                return pdro::ObjectiveKind::erm();
            case PDRO_AMB_CHI2:
                return pdro::ObjectiveKind::dro({pdro::DivergenceKind::Chi2, spec->eps});
            case PDRO_AMB_KL:
                return pdro::ObjectiveKind::dro({pdro::DivergenceKind::KL, spec->eps});
            case PDRO_AMB_W1:
                return pdro::ObjectiveKind::dro({pdro::DivergenceKind::W1, spec->eps});
            default:
                throw std::invalid_argument("unknown ambiguity kind");
            }
        }();

        pdro::SolverConfig cfg;
        if (spec->max_iter > 0)
            cfg.max_iter = spec->max_iter;
        if (spec->step_c > 0)
            cfg.step_c = spec->step_c;
        if (spec->tol > 0)
            cfg.tol = spec->tol;
        cfg.seed = spec->seed;
        cfg.averaging = spec->averaging != 0;

        const pdro::Solution sol = pdro::solve_outer(cost, set, obj, data, cfg);
        for (size_t j = 0; j < d; ++j)
            out_x[j] = sol.x[Eigen::Index(j)];
        *out_objective = sol.objective;
        if (out_status)
            *out_status = sol.status == pdro::SolveStatus::Converged ? 0 : 1;
        return PDRO_OK;
    });
}

int pdro_run_experiment(const char* config_path, const char* results_path) {
    return guarded([&] {
        if (!config_path)
            throw std::invalid_argument("null config path");
        const pdro::ExperimentSpec spec = pdro::load_config(config_path);
        const std::string out_path =
            results_path ? results_path : pdro::config_output_path(config_path);
        const auto rows = pdro::run_trials(spec);
        pdro::write_results(rows, out_path);
        return PDRO_OK;
    });
}

int pdro_check_bounds(const char* config_path, double* out_coverage) {
    return guarded([&] {
        if (!config_path || !out_coverage)
            throw std::invalid_argument("null argument");
        const pdro::ExperimentSpec spec = pdro::load_config(config_path);
        *out_coverage = pdro::check_bound_coverage(spec).coverage;
        return PDRO_OK;
    });
}

int pdro_report(const char* results_csv, char** out_text) {
    return guarded([&] {
        if (!results_csv || !out_text)
            throw std::invalid_argument("null argument");
        const auto rows = pdro::read_results(results_csv);
        const std::string text = pdro::render_aggregates(rows);
        char* buf = static_cast<char*>(std::malloc(text.size() + 1));
        if (!buf)
            throw std::runtime_error("out of memory");
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out_text = buf;
        return PDRO_OK;
    });
}

int pdro_load_returns_csv(const char* path, int percent_units, double** out_data, size_t* out_rows,
                          size_t* out_cols) {
    return guarded([&] {
        if (!path || !out_data || !out_rows || !out_cols)
            throw std::invalid_argument("null argument");
        const pdro::Matrix m = pdro::load_returns_csv(path, percent_units != 0);
        double* buf = static_cast<double*>(std::malloc(sizeof(double) * size_t(m.size())));
        if (!buf)
            throw std::runtime_error("out of memory");
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                buf[size_t(i) * size_t(m.cols()) + size_t(j)] = m(i, j);
        *out_data = buf;
        *out_rows = size_t(m.rows());
        *out_cols = size_t(m.cols());
        return PDRO_OK;
    });
}

} // extern "C"
