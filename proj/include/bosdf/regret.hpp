#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bosdf {

/// One iteration of a run, in CSV column order.
struct LogRow {
    long t = 0;
    std::size_t point_id = 0;
    double inst_regret = 0.0;
    double cum_regret = 0.0;
    double simple_regret = 0.0;  // best converted query only
    std::size_t pending = 0;
    std::size_t censored = 0;
    double nu = 0.0;
    double info_gain = 0.0;
    bool converted = false;  // false: simple_regret is the prior bound, no conversion yet
};

struct RegretLog {
    std::string method;
    unsigned long long seed = 0;
    std::vector<LogRow> rows;
    bool aborted = false;
    std::string error;  // set when the run aborted; rows hold the partial log

    [[nodiscard]] std::vector<double> cumulative() const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.cum_regret);
        return out;
    }
    [[nodiscard]] std::vector<double> simple() const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.simple_regret);
        return out;
    }
    [[nodiscard]] double final_simple() const { return rows.empty() ? 0.0 : rows.back().simple_regret; }
    [[nodiscard]] double final_cumulative() const { return rows.empty() ? 0.0 : rows.back().cum_regret; }
};

inline constexpr const char* kLogHeader =
    "t,point_id,inst_regret,cum_regret,simple_regret,pending,censored,nu_t,info_gain";

}  // namespace bosdf
