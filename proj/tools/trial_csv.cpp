#include "trial_csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pretest::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line, std::size_t column,
                              const std::string& name, const std::string& what) {
    std::string where = source + ":" + std::to_string(line);
    if (column > 0) where += ", column " + std::to_string(column) + " (" + name + ")";
    fail(ErrorCode::Parse, where + ": " + what);
}

}  // namespace

TrialTable parse_trial_csv(const std::string& text, const std::string& source) {
    std::vector<std::pair<std::size_t, std::string>> lines;
    {
        std::istringstream in(text);
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            lines.emplace_back(number, line);
        }
    }
    if (lines.empty()) fail(ErrorCode::Parse, source + ": empty file");

    std::vector<std::string> header = split(lines[0].second);
    for (auto& h : header) h = trim(h);
    if (header.size() < 3 || header[0] != "z" || header[1] != "y") {
        parse_error(source, lines[0].first, 0, "", "header must be z,y,x1,...,xJ with at least one covariate");
    }
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c].empty()) parse_error(source, lines[0].first, c + 1, "", "empty covariate name");
    }
    const auto cols = static_cast<Index>(header.size());
    const auto j = cols - 2;
    const auto n = static_cast<Index>(lines.size() - 1);

    Vector z(n), y(n);
    Matrix x(n, j);
    for (Index i = 0; i < n; ++i) {
        const auto& [number, line] = lines[static_cast<std::size_t>(i) + 1];
        const std::vector<std::string> cells = split(line);
        if (static_cast<Index>(cells.size()) != cols) {
            parse_error(source, number, 0, "",
                        "expected " + std::to_string(cols) + " cells, found " + std::to_string(cells.size()));
        }
        for (Index c = 0; c < cols; ++c) {
            const std::string cell = trim(cells[static_cast<std::size_t>(c)]);
            const std::string& name = header[static_cast<std::size_t>(c)];
            if (cell.empty()) parse_error(source, number, static_cast<std::size_t>(c) + 1, name, "missing value");
            double v = 0.0;
            const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(v)) {
                parse_error(source, number, static_cast<std::size_t>(c) + 1, name, "'" + cell + "' is not a finite number");
            }
            if (c == 0) {
                if (v != 0.0 && v != 1.0) parse_error(source, number, 1, name, "treatment must be 0 or 1");
                z(i) = v;
            } else if (c == 1) {
                y(i) = v;
            } else {
                x(i, c - 2) = v;
            }
        }
    }
    const Index n1 = static_cast<Index>(z.sum());
    if (n1 == 0 || n1 == n) fail(ErrorCode::InvalidSizes, source + ": both arms need at least one unit");
    if (n < j + 3) {
        fail(ErrorCode::InvalidSizes, source + ": " + std::to_string(n) + " units is too few for " +
                                          std::to_string(j) + " covariates (need N >= J + 3)");
    }
    TrialTable out{{header.begin() + 2, header.end()}, ObservedTrial(Assignment(z), y, x)};
    return out;
}

TrialTable read_trial_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_trial_csv(text.str(), path);
}

std::string trial_csv(const ObservedTrial& trial) {
    std::ostringstream out;
    out << "z,y";
    for (Index k = 0; k < trial.covariates(); ++k) out << ",x" << k + 1;
    out << '\n';
    char buf[40];
    for (Index i = 0; i < trial.size(); ++i) {
        out << (trial.assignment().treated(i) ? 1 : 0);
        std::snprintf(buf, sizeof buf, "%.17g", trial.y()(i));
        out << ',' << buf;
        for (Index k = 0; k < trial.covariates(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", trial.x()(i, k));
            out << ',' << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace pretest::cli
