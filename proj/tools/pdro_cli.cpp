// Command-line front end for the pdro shared library. Everything goes
// through the C API; no core headers are included here.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdro/pdro.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int die(int code) {
    std::cerr << "error: " << pdro_last_error() << "\n";
    return code == PDRO_ERR_INVALID ? kExitUsage : kExitRuntime;
}

// One value per line or comma-separated; '#' comments allowed.
std::vector<double> read_values_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw CLI::ValidationError("--values", "cannot open " + path);
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#')
            continue;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            out.push_back(std::stod(tok));
        }
    }
    if (out.empty())
        throw CLI::ValidationError("--values", path + " holds no numbers");
    return out;
}

// Plain numeric matrix (comma separated, no header) or a returns CSV.
std::vector<double> read_matrix_file(const std::string& path, bool returns, bool percent,
                                     size_t& rows, size_t& cols) {
    if (returns) {
        double* data = nullptr;
        if (pdro_load_returns_csv(path.c_str(), percent ? 1 : 0, &data, &rows, &cols) != PDRO_OK)
            throw CLI::ValidationError("--data", pdro_last_error());
        std::vector<double> out(data, data + rows * cols);
        pdro_free(data);
        return out;
    }
    std::ifstream in(path);
    if (!in)
        throw CLI::ValidationError("--data", "cannot open " + path);
    std::vector<double> out;
    std::string line;
    rows = 0;
    cols = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::stringstream ss(line);
        std::string tok;
        size_t c = 0;
        while (std::getline(ss, tok, ',')) {
            out.push_back(std::stod(tok));
            ++c;
        }
        if (cols == 0)
            cols = c;
        else if (c != cols)
            throw CLI::ValidationError("--data", path + ": ragged row");
        ++rows;
    }
    if (rows == 0)
        throw CLI::ValidationError("--data", path + " is empty");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parametric DRO toolkit"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    // ---- fit ----------------------------------------------------------
    auto* fit = app.add_subcommand("fit", "Fit a parametric family and print its parameters");
    std::string fit_family = "gauss", fit_data, fit_labels_path;
    double fit_r = 1.0;
    bool fit_returns = false, fit_percent = true;
    fit->add_option("--family", fit_family, "gauss | beta | gmm | ols")
        ->check(CLI::IsMember({"gauss", "beta", "gmm", "ols"}));
    fit->add_option("--data", fit_data, "numeric CSV (atoms; for ols: covariates then responses)")
        ->required();
    fit->add_option("--labels", fit_labels_path, "one integer label per atom (gmm)");
    fit->add_option("--r", fit_r, "beta support half-width");
    fit->add_flag("--returns", fit_returns, "treat --data as a returns CSV with date column");
    fit->add_flag("!--no-percent", fit_percent, "returns CSV values are not in percent units");
    int fit_dy = 0;
    fit->add_option("--dy", fit_dy, "covariate column count (ols: first dy columns are y)");

    // ---- worst-case ---------------------------------------------------
    auto* wc = app.add_subcommand("worst-case", "Evaluate an inner worst-case solver");
    std::string wc_kind = "chi2", wc_values_path;
    double wc_eps = 0.0, wc_mean = 0.0, wc_lip = 0.0;
    bool wc_weights = false;
    wc->add_option("--kind", wc_kind, "chi2 | kl | w1")->check(CLI::IsMember({"chi2", "kl", "w1"}));
    wc->add_option("--eps", wc_eps, "ambiguity radius")->required();
    wc->add_option("--values", wc_values_path, "cost values file (chi2/kl)");
    wc->add_option("--mean", wc_mean, "base mean value (w1)");
    wc->add_option("--lip", wc_lip, "Lipschitz constant (w1)");
    wc->add_flag("--weights", wc_weights, "also print the worst-case weights");

    // ---- solve --------------------------------------------------------
    auto* solve = app.add_subcommand("solve", "One min-max solve on explicit atoms");
    std::string sv_data, sv_cost = "downside", sv_set = "simplex", sv_amb = "none";
    double sv_mu = 1.0, sv_gamma = 2.0, sv_tau = 0.0, sv_radius = 1.0, sv_eps = 0.0;
    int sv_iters = 0;
    uint64_t sv_seed = 0;
    bool sv_returns = false, sv_percent = true;
    solve->add_option("--data", sv_data, "atom matrix CSV")->required();
    solve->add_option("--cost", sv_cost, "downside | quadratic")
        ->check(CLI::IsMember({"downside", "quadratic"}));
    solve->add_option("--mu", sv_mu, "downside target return");
    solve->add_option("--gamma", sv_gamma, "downside exponent");
    solve->add_option("--set", sv_set, "simplex | ball")->check(CLI::IsMember({"simplex", "ball"}));
    solve->add_option("--tau", sv_tau, "simplex floor");
    solve->add_option("--radius", sv_radius, "ball radius");
    solve->add_option("--amb", sv_amb, "none | chi2 | kl | w1")
        ->check(CLI::IsMember({"none", "chi2", "kl", "w1"}));
    solve->add_option("--eps", sv_eps, "ambiguity radius");
    solve->add_option("--max-iter", sv_iters, "iteration cap");
    solve->add_option("--seed", sv_seed, "solver seed");
    solve->add_flag("--returns", sv_returns, "treat --data as a returns CSV");
    solve->add_flag("!--no-percent", sv_percent, "returns CSV values are not in percent units");

    // ---- experiment ---------------------------------------------------
    auto* exp = app.add_subcommand("experiment", "Run a benchmark config");
    std::string exp_config, exp_out;
    exp->add_option("--config", exp_config, "flat key=value config file")->required();
    exp->add_option("--out", exp_out, "results CSV path (overrides the config)");

    // ---- check-bounds -------------------------------------------------
    auto* cb = app.add_subcommand("check-bounds", "Bound-coverage probe from a config");
    std::string cb_config;
    cb->add_option("--config", cb_config, "flat key=value config file")->required();

    // ---- report -------------------------------------------------------
    auto* rep = app.add_subcommand("report", "Aggregate an existing results CSV");
    std::string rep_in, rep_out;
    rep->add_option("--in", rep_in, "results CSV")->required();
    rep->add_option("--out", rep_out, "write aggregates here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*fit) {
            size_t rows = 0, cols = 0;
            const auto data = read_matrix_file(fit_data, fit_returns, fit_percent, rows, cols);
            pdro_dist* dist = nullptr;
            int rc = PDRO_OK;
            if (fit_family == "gauss") {
                rc = pdro_fit_gaussian(data.data(), rows, cols, &dist);
            } else if (fit_family == "beta") {
                rc = pdro_fit_beta(data.data(), rows, cols, fit_r, &dist);
            } else if (fit_family == "gmm") {
                if (fit_labels_path.empty())
                    throw CLI::ValidationError("--labels", "gmm fit needs a labels file");
                const auto raw = read_values_file(fit_labels_path);
                std::vector<int32_t> labels(raw.begin(), raw.end());
                rc = pdro_fit_gmm(data.data(), rows, cols, labels.data(), &dist);
            } else { // ols
                if (fit_dy <= 0 || size_t(fit_dy) >= cols)
                    throw CLI::ValidationError("--dy", "need 0 < dy < columns for ols");
                const size_t dxi = cols - size_t(fit_dy);
                std::vector<double> ys(rows * size_t(fit_dy)), xis(rows * dxi);
                for (size_t i = 0; i < rows; ++i) {
                    for (size_t j = 0; j < size_t(fit_dy); ++j)
                        ys[i * size_t(fit_dy) + j] = data[i * cols + j];
                    for (size_t j = 0; j < dxi; ++j)
                        xis[i * dxi + j] = data[i * cols + size_t(fit_dy) + j];
                }
                rc = pdro_fit_ols(ys.data(), rows, size_t(fit_dy), xis.data(), dxi, &dist);
            }
            if (rc != PDRO_OK)
                return die(rc);
            size_t len = 0;
            pdro_dist_describe(dist, nullptr, 0, &len);
            std::string text(len + 1, '\0');
            pdro_dist_describe(dist, text.data(), text.size(), nullptr);
            text.resize(len);
            std::cout << text;
            pdro_dist_free(dist);
            return 0;
        }

        if (*wc) {
            if (wc_kind == "w1") {
                double value = 0.0;
                if (const int rc = pdro_w1_worst_case(wc_mean, wc_lip, wc_eps, &value); rc != PDRO_OK)
                    return die(rc);
                std::printf("%.10g\n", value);
                return 0;
            }
            if (wc_values_path.empty())
                throw CLI::ValidationError("--values", "chi2/kl need a values file");
            const auto values = read_values_file(wc_values_path);
            double value = 0.0;
            std::vector<double> weights(values.size());
            int closed = 0;
            const int rc =
                wc_kind == "chi2"
                    ? pdro_chi2_worst_case(values.data(), values.size(), nullptr, wc_eps, &value,
                                           weights.data(), &closed)
                    : pdro_kl_worst_case(values.data(), values.size(), nullptr, wc_eps, &value,
                                         weights.data(), &closed);
            if (rc != PDRO_OK)
                return die(rc);
            std::printf("%.10g\n", value);
            if (wc_weights) {
                for (size_t i = 0; i < weights.size(); ++i)
                    std::printf("%s%.10g", i ? "," : "", weights[i]);
                std::printf("\n");
            }
            return 0;
        }

        if (*solve) {
            size_t rows = 0, cols = 0;
            const auto data = read_matrix_file(sv_data, sv_returns, sv_percent, rows, cols);
            std::vector<double> anchor(cols, 0.0);
            pdro_solve_spec spec{};
            spec.cost_kind = sv_cost == "downside" ? PDRO_COST_DOWNSIDE : PDRO_COST_QUADRATIC;
            spec.mu = sv_mu;
            spec.gamma = sv_gamma;
            spec.anchor = anchor.data();
            spec.set_kind = sv_set == "simplex" ? PDRO_SET_SIMPLEX_FLOOR : PDRO_SET_L2_BALL;
            spec.tau = sv_tau;
            spec.radius = sv_radius;
            spec.amb_kind = sv_amb == "none"   ? PDRO_AMB_NONE
                            : sv_amb == "chi2" ? PDRO_AMB_CHI2
                            : sv_amb == "kl"   ? PDRO_AMB_KL
                                               : PDRO_AMB_W1;
            spec.eps = sv_eps;
            spec.max_iter = sv_iters;
            spec.seed = sv_seed;
            spec.averaging = 1;
            std::vector<double> x(cols, 0.0);
            double objective = 0.0;
            int status = 0;
            if (const int rc =
                    pdro_solve(data.data(), rows, cols, &spec, x.data(), &objective, &status);
                rc != PDRO_OK)
                return die(rc);
            std::printf("objective = %.10g\n", objective);
            std::printf("status = %s\n", status == 0 ? "converged" : "max-iter");
            std::printf("x =");
            for (double xi : x)
                std::printf(" %.10g", xi);
            std::printf("\n");
            return 0;
        }

        if (*exp) {
            if (const int rc = pdro_run_experiment(exp_config.c_str(),
                                                   exp_out.empty() ? nullptr : exp_out.c_str());
                rc != PDRO_OK)
                return die(rc);
            return 0;
        }

        if (*cb) {
            double coverage = 0.0;
            if (const int rc = pdro_check_bounds(cb_config.c_str(), &coverage); rc != PDRO_OK)
                return die(rc);
            std::printf("coverage = %.6g\n", coverage);
            return 0;
        }

        if (*rep) {
            char* text = nullptr;
            if (const int rc = pdro_report(rep_in.c_str(), &text); rc != PDRO_OK)
                return die(rc);
            if (rep_out.empty()) {
                std::fputs(text, stdout);
            } else {
                std::ofstream out(rep_out, std::ios::binary);
                if (!out) {
                    pdro_free(text);
                    std::cerr << "error: cannot open " << rep_out << "\n";
                    return kExitRuntime;
                }
                out << text;
            }
            pdro_free(text);
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
