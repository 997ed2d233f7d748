#pragma once

#include "bosdf/rng.hpp"

#include <boost/math/distributions/poisson.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace bosdf {

// Delay distributions.  Iteration-mode delays count how many further
// queries start before the observation arrives; time-mode delays are
// real-valued durations.

struct PoissonDelay {
    double mean = 0.0;
};

struct FixedDelay {
    long iterations = 0;
};

/// Poisson delay whose mean depends on the queried point id.
struct InputDependentDelay {
    std::vector<double> means;
};

struct ExponentialDelay {
    double rate = 1.0;
};

using DelayModel = std::variant<PoissonDelay, FixedDelay, InputDependentDelay, ExponentialDelay>;

inline bool is_time_model(const DelayModel& model) {
    return std::holds_alternative<ExponentialDelay>(model);
}

inline void validate(const DelayModel& model) {
    std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PoissonDelay>) {
                if (!(m.mean >= 0.0)) throw std::invalid_argument("Poisson delay mean must be >= 0");
            } else if constexpr (std::is_same_v<T, FixedDelay>) {
                if (m.iterations < 0) throw std::invalid_argument("fixed delay must be >= 0");
            } else if constexpr (std::is_same_v<T, InputDependentDelay>) {
                if (m.means.empty()) throw std::invalid_argument("input-dependent delay table is empty");
                for (double v : m.means) {
                    if (!(v >= 0.0)) throw std::invalid_argument("input-dependent delay mean must be >= 0");
                }
            } else {
                if (!(m.rate > 0.0)) throw std::invalid_argument("exponential delay rate must be > 0");
            }
        },
        model);
}

namespace detail {
inline double poisson_draw(double mean, Rng& rng) {
    if (mean <= 0.0) {
        return 0.0;
    }
    std::poisson_distribution<long> dist(mean);
    return static_cast<double>(dist(rng));
}
}  // namespace detail

/// Draws one delay for a query at point `point_id`.  Always >= 0, and
/// integral for every iteration-mode model.
inline double sample_delay(const DelayModel& model, std::size_t point_id, Rng& rng) {
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PoissonDelay>) {
                return detail::poisson_draw(m.mean, rng);
            } else if constexpr (std::is_same_v<T, FixedDelay>) {
                return static_cast<double>(m.iterations);
            } else if constexpr (std::is_same_v<T, InputDependentDelay>) {
                if (point_id >= m.means.size()) {
                    throw std::out_of_range("no delay mean for point " + std::to_string(point_id));
                }
                return detail::poisson_draw(m.means[point_id], rng);
            } else {
                std::exponential_distribution<double> dist(m.rate);
                return dist(rng);
            }
        },
        model);
}

/// P(d <= m).  For input-dependent delays the minimum over points.
inline double rho_m(const DelayModel& model, double m) {
    if (!(m >= 0.0)) {
        throw std::invalid_argument("rho_m: m must be >= 0");
    }
    auto poisson_cdf = [m](double mean) {
        if (mean <= 0.0) return 1.0;
        if (std::isinf(m)) return 1.0;
        return boost::math::cdf(boost::math::poisson_distribution<double>(mean), std::floor(m));
    };
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PoissonDelay>) {
                return poisson_cdf(d.mean);
            } else if constexpr (std::is_same_v<T, FixedDelay>) {
                return static_cast<double>(d.iterations) <= m ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, InputDependentDelay>) {
                double lo = 1.0;
                for (double mean : d.means) lo = std::min(lo, poisson_cdf(mean));
                return lo;
            } else {
                return std::isinf(m) ? 1.0 : 1.0 - std::exp(-d.rate * m);
            }
        },
        model);
}

/// Reads a per-point delay table (CSV: point_id,mean with a header row).
/// Every id in [0, domain_size) must appear exactly once.
inline InputDependentDelay load_delay_table(const std::string& path, std::size_t domain_size) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open delay table '" + path + "'");
    }
    std::vector<double> means(domain_size, std::numeric_limits<double>::quiet_NaN());
    std::string line;
    std::size_t lineno = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ss(line);
        std::string id_s, mean_s;
        if (!std::getline(ss, id_s, ',') || !std::getline(ss, mean_s)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected point_id,mean");
        }
        std::size_t id = 0;
        double mean = 0.0;
        try {
            id = std::stoul(id_s);
            mean = std::stod(mean_s);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
        }
        if (id >= domain_size) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": point id out of range");
        }
        if (!std::isnan(means[id])) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate point id");
        }
        means[id] = mean;
    }
    for (std::size_t i = 0; i < domain_size; ++i) {
        if (std::isnan(means[i])) {
            throw std::runtime_error(path + ": missing delay mean for point " + std::to_string(i));
        }
    }
    InputDependentDelay out{std::move(means)};
    validate(out);
    return out;
}

struct PendingEntry {
    std::size_t slot = 0;
    std::size_t point_id = 0;
    double issued = 0.0;  // iteration, or start time in time mode
    double delay = 0.0;
    double observation = 0.0;  // hidden until revealed
};

struct Reveal {
    std::size_t slot = 0;
    std::size_t point_id = 0;
    double observation = 0.0;
};

enum class LedgerMode { Iterations, Time };

/// Bookkeeping for incomplete queries.  An entry issued at s with delay d
/// is revealed at the first advance t with d <= min(m, t - s); if d > m it
/// is evicted as permanently censored once t - s > m.  At most m entries
/// remain pending after an iteration-mode advance (oldest evicted first).
class Ledger {
public:
    explicit Ledger(double capacity, LedgerMode mode = LedgerMode::Iterations)
        : capacity_(capacity), mode_(mode) {
        if (mode_ == LedgerMode::Iterations) {
            if (!(capacity_ >= 1.0) || capacity_ != std::floor(capacity_)) {
                throw std::invalid_argument("Ledger: m must be a positive integer");
            }
        } else if (!(capacity_ > 0.0)) {
            throw std::invalid_argument("Ledger: time budget must be positive");
        }
    }

    [[nodiscard]] double capacity() const { return capacity_; }
    [[nodiscard]] LedgerMode mode() const { return mode_; }
    [[nodiscard]] const std::deque<PendingEntry>& pending() const { return pending_; }
    [[nodiscard]] std::size_t issued() const { return issued_; }
    [[nodiscard]] std::size_t revealed() const { return revealed_; }
    [[nodiscard]] std::size_t censored_forever() const { return censored_forever_; }

    void enqueue(PendingEntry entry) {
        if (!(entry.delay >= 0.0)) {
            throw std::invalid_argument("Ledger: negative delay");
        }
        if (!pending_.empty() && entry.issued < pending_.back().issued) {
            throw std::invalid_argument("Ledger: entries must be enqueued in issue order");
        }
        pending_.push_back(entry);
        ++issued_;
    }

    /// Iteration-mode advance to the start of iteration `now`.
    std::vector<Reveal> advance(long now) {
        if (mode_ != LedgerMode::Iterations) {
            throw std::logic_error("Ledger::advance called on a time-mode ledger");
        }
        auto out = advance_impl(static_cast<double>(now));
        const auto cap = static_cast<std::size_t>(capacity_);
        while (pending_.size() > cap) {
            pending_.pop_front();
            ++censored_forever_;
        }
        return out;
    }

    /// Time-mode advance to wall-clock `now`.
    std::vector<Reveal> advance_time(double now) {
        if (mode_ != LedgerMode::Time) {
            throw std::logic_error("Ledger::advance_time called on an iteration-mode ledger");
        }
        return advance_impl(now);
    }

private:
    std::vector<Reveal> advance_impl(double now) {
        if (now < last_) {
            throw std::invalid_argument("Ledger: advance time must be nondecreasing");
        }
        last_ = now;
        std::vector<Reveal> out;
        std::deque<PendingEntry> keep;
        for (const auto& e : pending_) {
            const double age = now - e.issued;
            if (e.delay <= std::min(capacity_, age)) {
                out.push_back({e.slot, e.point_id, e.observation});
                ++revealed_;
            } else if (age > capacity_) {
                ++censored_forever_;
            } else {
                keep.push_back(e);
            }
        }
        pending_ = std::move(keep);
        return out;
    }

    double capacity_;
    LedgerMode mode_;
    std::deque<PendingEntry> pending_;
    std::size_t issued_ = 0;
    std::size_t revealed_ = 0;
    std::size_t censored_forever_ = 0;
    double last_ = -std::numeric_limits<double>::infinity();
};

}  // namespace bosdf
