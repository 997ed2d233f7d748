#pragma once

#include "bosdf/kernel.hpp"
#include "bosdf/posterior.hpp"
#include "bosdf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bosdf {

/// Affine map onto [0, 1] (min -> 0, max -> 1).  A constant vector maps
/// to all zeros.
inline Vector normalize_unit(const Vector& values) {
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    if (hi == lo) {
        return Vector::Zero(values.size());
    }
    Vector out = (values.array() - lo) / (hi - lo);
    // exact endpoints regardless of rounding
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] == lo) out[i] = 0.0;
        if (values[i] == hi) out[i] = 1.0;
    }
    return out;
}

/// Objective over a finite domain with known values; the optimum is
/// tracked for regret.
struct Objective {
    Domain domain;
    Vector values;
    double noise = 0.05;  // R: std of the Gaussian observation noise
    double B_y = 1.0;     // observations are clipped to [-B_y, B_y]

    [[nodiscard]] std::size_t optimum_id() const {
        Eigen::Index idx = 0;
        values.maxCoeff(&idx);
        return static_cast<std::size_t>(idx);
    }
    [[nodiscard]] double optimum() const { return values.maxCoeff(); }
    [[nodiscard]] double regret(std::size_t id) const { return optimum() - values[static_cast<Eigen::Index>(id)]; }
};

/// y = f(x) + eps, eps ~ N(0, R^2), clipped to [-B_y, B_y].
inline double observe(const Objective& objective, std::size_t id, Rng& rng) {
    if (id >= objective.domain.size()) {
        throw std::out_of_range("observe: point id out of range");
    }
    double y = objective.values[static_cast<Eigen::Index>(id)];
    if (objective.noise > 0.0) {
        std::normal_distribution<double> noise(0.0, objective.noise);
        y += noise(rng);
    }
    return std::clamp(y, -objective.B_y, objective.B_y);
}

/// Joint prior draw over the domain, normalized so min = 0 and max = 1.
template <CovarianceKernel K>
Objective sample_synthetic(const K& kernel, Domain domain, std::uint64_t seed, double noise = 0.05) {
    const auto& pts = domain.points();
    const Matrix cov = cross_gram(kernel, std::span<const Vector>(pts), std::span<const Vector>(pts));
    const Matrix l = factor_with_jitter(cov);
    Rng rng = make_rng(seed, Stream::Objective);
    const Vector z = standard_normal(rng, l.rows());
    Vector f = normalize_unit(l * z);
    return Objective{std::move(domain), std::move(f), noise};
}

/// Number of strict interior local maxima of a 1-D sequence.
inline std::size_t count_local_maxima(const Vector& v) {
    std::size_t count = 0;
    for (Eigen::Index i = 1; i + 1 < v.size(); ++i) {
        if (v[i] > v[i - 1] && v[i] > v[i + 1]) ++count;
    }
    return count;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_cell(const std::string& cell, const std::string& where) {
    if (cell.empty()) {
        throw std::runtime_error(where + ": missing value");
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": malformed number '" + cell + "'");
    }
    if (used != cell.size() || !std::isfinite(v)) {
        throw std::runtime_error(where + ": malformed number '" + cell + "'");
    }
    return v;
}

/// Parsed numeric CSV with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> lines;  // source line of each row
};

inline CsvTable read_numeric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        const std::string where = path + ":" + std::to_string(lineno);
        if (cells.size() != t.header.size()) {
            throw std::runtime_error(where + ": expected " + std::to_string(t.header.size()) +
                                     " columns, got " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_cell(c, where));
        t.rows.push_back(std::move(row));
        t.lines.push_back(lineno);
    }
    if (t.header.empty() || t.rows.empty()) {
        throw std::runtime_error("'" + path + "' has no data rows");
    }
    return t;
}

/// Scales each column of `pts` to [0, 1]; constant columns map to 0.
inline void unit_scale_columns(std::vector<Vector>& pts) {
    if (pts.empty()) return;
    const Eigen::Index d = pts.front().size();
    for (Eigen::Index j = 0; j < d; ++j) {
        double lo = pts.front()[j], hi = lo;
        for (const auto& p : pts) {
            lo = std::min(lo, p[j]);
            hi = std::max(hi, p[j]);
        }
        for (auto& p : pts) p[j] = hi > lo ? (p[j] - lo) / (hi - lo) : 0.0;
    }
}

}  // namespace detail

struct TabularOptions {
    bool scale_inputs = true;  // map each hyperparameter column to [0, 1]
    bool normalize = true;     // min-max normalize the value column
};

/// Loads a tabular benchmark: header naming the dimensions, then one row
/// per configuration with the observed value in the final column.
/// Duplicate configurations and values outside [0, 1] are rejected.
inline Objective load_tabular(const std::string& path, TabularOptions opts = {}, double noise = 0.0) {
    const auto table = detail::read_numeric_csv(path);
    if (table.header.size() < 2) {
        throw std::runtime_error("'" + path + "' needs at least one dimension and a value column");
    }
    const auto dims = static_cast<Eigen::Index>(table.header.size() - 1);
    std::vector<Vector> pts;
    Vector values(static_cast<Eigen::Index>(table.rows.size()));
    std::map<std::vector<double>, std::size_t> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = path + ":" + std::to_string(table.lines[r]);
        std::vector<double> key(row.begin(), row.end() - 1);
        if (auto [it, ok] = seen.emplace(key, table.lines[r]); !ok) {
            throw std::runtime_error(where + ": duplicate configuration (first seen on line " +
                                     std::to_string(it->second) + ")");
        }
        const double v = row.back();
        if (v < 0.0 || v > 1.0) {
            throw std::runtime_error(where + ": value " + std::to_string(v) + " outside [0, 1]");
        }
        pts.emplace_back(Eigen::Map<const Vector>(row.data(), dims));
        values[static_cast<Eigen::Index>(r)] = v;
    }
    if (opts.scale_inputs) detail::unit_scale_columns(pts);
    if (opts.normalize) values = normalize_unit(values);
    return Objective{Domain(std::move(pts)), std::move(values), noise};
}

}  // namespace bosdf
