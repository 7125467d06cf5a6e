#include "pdro/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pdro {

namespace {

std::string fmt6(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

std::string render_aggregates(const std::vector<TrialResult>& rows) {
    // (scenario, method, n) -> accumulated objective / gen_error samples.
    std::map<std::tuple<std::string, std::string, int>, std::vector<const TrialResult*>> groups;
    for (const auto& r : rows)
        groups[{r.scenario, r.method, r.n}].push_back(&r);

    std::string out = "# aggregate\nscenario,method,n,stat,objective,gen_error\n";
    for (const auto& [key, members] : groups) {
        double mo = 0.0, mg = 0.0;
        for (const auto* r : members) {
            mo += r->objective;
            mg += r->gen_error;
        }
        const double k = double(members.size());
        mo /= k;
        mg /= k;
        double so = 0.0, sg = 0.0;
        if (members.size() > 1) {
            for (const auto* r : members) {
                so += (r->objective - mo) * (r->objective - mo);
                sg += (r->gen_error - mg) * (r->gen_error - mg);
            }
            so = std::sqrt(so / (k - 1.0));
            sg = std::sqrt(sg / (k - 1.0));
        }
        const auto& [scenario, method, n] = key;
        out += scenario + "," + method + "," + std::to_string(n) + ",mean," + fmt6(mo) + "," +
               fmt6(mg) + "\n";
        out += scenario + "," + method + "," + std::to_string(n) + ",sd," + fmt6(so) + "," +
               fmt6(sg) + "\n";
    }
    return out;
}

std::string render_results(const std::vector<TrialResult>& rows) {
    std::string out = "scenario,method,n,seed,eps,objective,gen_error,wallclock_ms\n";
    for (const auto& r : rows) {
        out += r.scenario + "," + r.method + "," + std::to_string(r.n) + "," +
               std::to_string(r.seed) + "," + fmt6(r.eps_used) + "," + fmt6(r.objective) + "," +
               fmt6(r.gen_error) + "," + fmt6(r.wallclock_ms) + "\n";
    }
    if (!rows.empty())
        out += render_aggregates(rows);
    return out;
}

void write_results(const std::vector<TrialResult>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open results file for writing: " + path);
    out << render_results(rows);
    if (!out)
        throw std::runtime_error("failed writing results file: " + path);
}

std::vector<TrialResult> read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open results file: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": empty results file");
    if (split_csv_line(line) !=
        std::vector<std::string>{"scenario", "method", "n", "seed", "eps", "objective",
                                 "gen_error", "wallclock_ms"})
        throw std::runtime_error(path + ": unexpected results header");

    std::vector<TrialResult> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        if (line[0] == '#')
            break; // aggregate section; recomputed on demand
        const auto cells = split_csv_line(line);
        if (cells.size() != 8)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 8 columns");
        TrialResult r;
        r.scenario = cells[0];
        r.method = cells[1];
        try {
            r.n = std::stoi(cells[2]);
            r.seed = std::stoi(cells[3]);
            r.eps_used = std::stod(cells[4]);
            r.objective = std::stod(cells[5]);
            r.gen_error = std::stod(cells[6]);
            r.wallclock_ms = std::stod(cells[7]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric cell");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

Matrix load_returns_csv(const std::string& path, bool percent_units) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open returns file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw std::runtime_error(path + ": missing header row");
    const auto header = split_csv_line(line);
    if (header.size() < 2)
        throw std::runtime_error(path + ": header needs a date column plus at least one asset");
    // A header whose non-date cells parse as numbers is almost surely data.
    {
        char* end = nullptr;
        const std::string& probe = header[1];
        std::strtod(probe.c_str(), &end);
        if (end == probe.c_str() + probe.size() && !probe.empty())
            throw std::runtime_error(path + ": first row looks numeric; a header row is required");
    }
    const size_t cols = header.size() - 1;

    std::vector<std::vector<double>> data;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": ragged row (" +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()) + ")");
        std::vector<double> row(cols);
        for (size_t j = 1; j < cells.size(); ++j) {
            char* end = nullptr;
            const double v = std::strtod(cells[j].c_str(), &end);
            if (end != cells[j].c_str() + cells[j].size() || cells[j].empty())
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": column " +
                                         std::to_string(j + 1) + ": non-numeric cell '" + cells[j] +
                                         "'");
            row[j - 1] = percent_units ? v / 100.0 : v;
        }
        data.push_back(std::move(row));
    }
    Matrix out(data.size(), cols);
    for (size_t i = 0; i < data.size(); ++i)
        for (size_t j = 0; j < cols; ++j)
            out(i, j) = data[i][j];
    return out;
}

} // namespace pdro
