#include "pdro/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace pdro {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

struct KvParser {
    std::unordered_map<std::string, std::string> kv;
    std::vector<std::string> errors;

    bool has(const std::string& key) const { return kv.count(key) > 0; }

    template <typename F>
    void with(const std::string& key, F&& f) {
        const auto it = kv.find(key);
        if (it == kv.end())
            return;
        try {
            f(it->second);
        } catch (const std::exception& e) {
            errors.push_back(key + ": " + e.what());
        }
        kv.erase(it);
    }

    static double to_double(const std::string& v) {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("not a number: '" + v + "'");
        return x;
    }
    static long to_long(const std::string& v) {
        size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("not an integer: '" + v + "'");
        return x;
    }
    static bool to_bool(const std::string& v) {
        if (v == "on" || v == "true" || v == "1" || v == "yes")
            return true;
        if (v == "off" || v == "false" || v == "0" || v == "no")
            return false;
        throw std::invalid_argument("not a boolean: '" + v + "'");
    }
};

} // namespace

ExperimentSpec parse_config_text(const std::string& text, const std::string& origin) {
    KvParser p;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            p.errors.push_back(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            p.errors.push_back(origin + ":" + std::to_string(lineno) + ": empty key");
            continue;
        }
        if (p.kv.count(key))
            p.errors.push_back(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        p.kv[key] = value;
    }

    ExperimentSpec spec;
    // Default method lineup matches the headline portfolio comparison.
    spec.methods = {MethodSpec::parse("beta-chi2@cv"), MethodSpec::parse("beta-erm"),
                    MethodSpec::parse("emp-erm")};
    spec.n_grid = {50};

    p.with("scenario", [&](const std::string& v) {
        if (v == "beta-portfolio")
            spec.scenario = Scenario::BetaPortfolio;
        else if (v == "quadratic")
            spec.scenario = Scenario::Quadratic;
        else if (v == "shifted")
            spec.scenario = Scenario::Shifted;
        else if (v == "contextual")
            spec.scenario = Scenario::Contextual;
        else
            throw std::invalid_argument("unknown scenario '" + v + "'");
    });
    p.with("methods", [&](const std::string& v) {
        spec.methods.clear();
        for (const auto& tok : split_list(v))
            spec.methods.push_back(MethodSpec::parse(tok));
    });
    p.with("n_grid", [&](const std::string& v) {
        spec.n_grid.clear();
        for (const auto& tok : split_list(v))
            spec.n_grid.push_back(int(KvParser::to_long(tok)));
    });
    p.with("seeds", [&](const std::string& v) { spec.seeds = int(KvParser::to_long(v)); });
    p.with("master_seed",
           [&](const std::string& v) { spec.master_seed = uint64_t(KvParser::to_long(v)); });
    p.with("monte_carlo_ratio",
           [&](const std::string& v) { spec.mc_ratio = KvParser::to_double(v); });
    p.with("eps_grid", [&](const std::string& v) {
        spec.eps_grid.clear();
        for (const auto& tok : split_list(v))
            spec.eps_grid.push_back(KvParser::to_double(tok));
    });
    p.with("cv_split", [&](const std::string& v) { spec.cv_split = KvParser::to_double(v); });
    p.with("gamma", [&](const std::string& v) { spec.gamma = KvParser::to_double(v); });
    p.with("tau", [&](const std::string& v) { spec.tau = KvParser::to_double(v); });
    p.with("mu", [&](const std::string& v) { spec.mu = KvParser::to_double(v); });
    p.with("r", [&](const std::string& v) { spec.r = KvParser::to_double(v); });
    p.with("dim", [&](const std::string& v) { spec.dim = int(KvParser::to_long(v)); });
    p.with("ball_radius", [&](const std::string& v) { spec.ball_radius = KvParser::to_double(v); });
    p.with("exp_rate", [&](const std::string& v) { spec.exp_rate = KvParser::to_double(v); });
    p.with("test_noise", [&](const std::string& v) { spec.test_noise = KvParser::to_double(v); });
    p.with("dy", [&](const std::string& v) { spec.dy = int(KvParser::to_long(v)); });
    p.with("snr", [&](const std::string& v) {
        if (v == "high")
            spec.high_snr = true;
        else if (v == "low")
            spec.high_snr = false;
        else
            throw std::invalid_argument("snr must be 'high' or 'low'");
    });
    p.with("mis", [&](const std::string& v) { spec.mis = KvParser::to_bool(v); });
    p.with("noise_sigma", [&](const std::string& v) { spec.noise_sigma = KvParser::to_double(v); });
    p.with("n_eval", [&](const std::string& v) { spec.n_eval = KvParser::to_long(v); });
    p.with("n_oracle", [&](const std::string& v) { spec.n_oracle = KvParser::to_long(v); });
    p.with("oracle_restarts",
           [&](const std::string& v) { spec.oracle_restarts = int(KvParser::to_long(v)); });
    p.with("max_iter", [&](const std::string& v) { spec.solver.max_iter = int(KvParser::to_long(v)); });
    p.with("step_c", [&](const std::string& v) { spec.solver.step_c = KvParser::to_double(v); });
    p.with("tol", [&](const std::string& v) { spec.solver.tol = KvParser::to_double(v); });
    p.with("averaging", [&](const std::string& v) { spec.solver.averaging = KvParser::to_bool(v); });
    p.with("rule_comp", [&](const std::string& v) { spec.rule.comp_theta = KvParser::to_double(v); });
    p.with("rule_alpha", [&](const std::string& v) { spec.rule.alpha = KvParser::to_double(v); });
    p.with("rule_eapx", [&](const std::string& v) { spec.rule.e_apx = KvParser::to_double(v); });
    p.with("rule_delta", [&](const std::string& v) { spec.rule.delta = KvParser::to_double(v); });
    p.with("rule_c", [&](const std::string& v) { spec.rule.c_mult = KvParser::to_double(v); });
    p.with("workers", [&](const std::string& v) { spec.workers = int(KvParser::to_long(v)); });
    p.with("record_wallclock",
           [&](const std::string& v) { spec.record_wallclock = KvParser::to_bool(v); });
    p.with("out", [&](const std::string&) { /* consumed by config_output_path */ });

    for (const auto& [key, value] : p.kv)
        p.errors.push_back("unknown key '" + key + "'");

    try {
        spec.validate();
    } catch (const std::exception& e) {
        p.errors.push_back(e.what());
    }

    if (!p.errors.empty()) {
        std::string msg = origin + ": configuration rejected:";
        for (const auto& e : p.errors)
            msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
    return spec;
}

ExperimentSpec load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string config_output_path(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            continue;
        if (trim(t.substr(0, eq)) == "out")
            return trim(t.substr(eq + 1));
    }
    return "results.csv";
}

} // namespace pdro
