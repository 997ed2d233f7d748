#pragma once

#include "bosdf/config.hpp"
#include "bosdf/contextual.hpp"
#include "bosdf/environments.hpp"
#include "bosdf/kernel.hpp"
#include "bosdf/ledger.hpp"
#include "bosdf/policies.hpp"
#include "bosdf/posterior.hpp"
#include "bosdf/regret.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace bosdf {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class ObjectiveKind { Synthetic, Tabular, ContextualSynthetic, ContextualTabular };

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::Synthetic;
    double lengthscale = 0.02;  // generator lengthscale
    std::size_t grid_size = 1000;
    double lo = 0.0;
    double hi = 1.0;
    double noise = 0.05;
    std::string table;
    TabularOptions tabular;
};

struct ContextSpec {
    std::string file;  // context meta-features (contextual-tabular)
    std::size_t features = 6;
    std::size_t repeat_count = 30;
    std::vector<std::size_t> order;  // empty: sequential
    // synthetic generator
    std::string kind = "random";  // random (Gaussian features) | index (0..count-1)
    std::size_t count = 50;
    std::size_t dim = 6;
    double lengthscale = 1.0;
    std::vector<std::size_t> query_grid{16, 18};
};

struct KernelSpec {
    double lengthscale = 0.02;
    double variance = 1.0;
    double context_lengthscale = 1.0;
};

struct RefitSpec {
    std::size_t every = 10;  // 0 disables
    std::vector<double> lengthscales = log_spaced(0.005, 1.0, 12);
    std::vector<double> variances{1.0};
    std::vector<double> context_lengthscales{0.5, 1.0, 2.0};
    std::size_t window = 0;  // 0: all queries
};

struct RunConfig {
    std::string name = "custom";
    ObjectiveSpec objective;
    ContextSpec context;
    KernelSpec kernel;
    RefitSpec refit;
    std::optional<double> lambda;  // default 1 + 2/T
    double lambda_floor = 1e-6;
    std::vector<Rule> methods{Rule::UcbSdf};
    WidthSchedule width;
    DelayModel delay = PoissonDelay{10.0};
    double m = 20.0;  // iterations, or time budget for time-based delays
    double time_step = 1.0;
    long horizon = 150;
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir;  // empty: do not write files
    unsigned threads = 0;    // 0: hardware concurrency

    [[nodiscard]] bool contextual() const {
        return objective.kind == ObjectiveKind::ContextualSynthetic ||
               objective.kind == ObjectiveKind::ContextualTabular;
    }
    [[nodiscard]] double effective_lambda() const {
        return lambda.value_or(1.0 + 2.0 / static_cast<double>(horizon));
    }
    [[nodiscard]] bool time_mode() const { return is_time_model(delay); }
};

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::size_t> to_indices(const std::vector<double>& v, const std::string& key) {
    std::vector<std::size_t> out;
    for (double d : v) {
        if (d < 0 || d != std::floor(d)) throw std::invalid_argument(key + ": expected nonnegative integers");
        out.push_back(static_cast<std::size_t>(d));
    }
    return out;
}

inline double default_window(const DelayModel& d) {
    return std::visit(
        [](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PoissonDelay>) {
                return std::max(1.0, std::ceil(2.0 * m.mean));
            } else if constexpr (std::is_same_v<T, FixedDelay>) {
                return std::max(1.0, static_cast<double>(m.iterations));
            } else if constexpr (std::is_same_v<T, InputDependentDelay>) {
                return std::max(1.0, std::ceil(2.0 * *std::max_element(m.means.begin(), m.means.end())));
            } else {
                return 2.0 / m.rate;
            }
        },
        d);
}

}  // namespace detail

/// Builds a RunConfig from flat keys.  Unset keys keep their defaults.
/// The delay table (delay.model=input) is resolved later against the
/// objective's domain size.
inline RunConfig run_config_from(const Config& c) {
    RunConfig r;
    r.name = c.str("preset", c.str("name", r.name));

    const std::string kind = c.str("objective.kind", "synthetic");
    if (kind == "synthetic") r.objective.kind = ObjectiveKind::Synthetic;
    else if (kind == "tabular") r.objective.kind = ObjectiveKind::Tabular;
    else if (kind == "contextual-synthetic") r.objective.kind = ObjectiveKind::ContextualSynthetic;
    else if (kind == "contextual-tabular") r.objective.kind = ObjectiveKind::ContextualTabular;
    else throw std::invalid_argument("unknown objective.kind '" + kind + "'");
    r.objective.lengthscale = c.real("objective.lengthscale", r.objective.lengthscale);
    r.objective.grid_size = static_cast<std::size_t>(c.integer("objective.grid_size", 1000));
    r.objective.lo = c.real("objective.lo", 0.0);
    r.objective.hi = c.real("objective.hi", 1.0);
    r.objective.noise = c.real("objective.noise", 0.05);
    r.objective.table = c.str("objective.table", "");
    r.objective.tabular.scale_inputs = c.boolean("objective.scale_inputs", true);
    r.objective.tabular.normalize = c.boolean("objective.normalize", true);
    if (r.objective.noise < 0) throw std::invalid_argument("objective.noise must be >= 0");

    r.context.file = c.str("context.file", "");
    r.context.features = static_cast<std::size_t>(c.integer("context.features", 6));
    r.context.repeat_count = static_cast<std::size_t>(c.integer("context.repeat", 30));
    r.context.kind = c.str("context.kind", "random");
    r.context.count = static_cast<std::size_t>(c.integer("context.count", 50));
    r.context.dim = static_cast<std::size_t>(c.integer("context.dim", 6));
    r.context.lengthscale = c.real("context.lengthscale", 1.0);
    r.context.query_grid = detail::to_indices(c.reals("context.query_grid", {16, 18}), "context.query_grid");
    if (const auto order = c.str("context.order", "sequential"); order != "sequential") {
        r.context.order = detail::to_indices(c.reals("context.order", {}), "context.order");
    }

    r.kernel.lengthscale = c.real("kernel.lengthscale", r.kernel.lengthscale);
    r.kernel.variance = c.real("kernel.variance", r.kernel.variance);
    r.kernel.context_lengthscale = c.real("kernel.context_lengthscale", r.kernel.context_lengthscale);

    r.refit.every = static_cast<std::size_t>(c.integer("refit_every", 10));
    r.refit.lengthscales = c.reals("refit.lengthscales", r.refit.lengthscales);
    r.refit.variances = c.reals("refit.variances", r.refit.variances);
    r.refit.context_lengthscales = c.reals("refit.context_lengthscales", r.refit.context_lengthscales);
    r.refit.window = static_cast<std::size_t>(c.integer("refit.window", 0));

    if (const auto l = c.str("gp.lambda", "auto"); l != "auto") r.lambda = c.real("gp.lambda", 1.0);
    r.lambda_floor = c.real("gp.lambda_floor", 1e-6);

    if (c.has("policy.rule")) {
        r.methods = {parse_rule(c.str("policy.rule", ""))};
    } else if (c.has("policy.methods")) {
        r.methods.clear();
        for (const auto& s : c.strings("policy.methods", {})) r.methods.push_back(parse_rule(s));
    }
    if (r.methods.empty()) throw std::invalid_argument("no policy methods configured");
    const std::string beta_mode = c.str("policy.beta_mode", "constant");
    if (beta_mode == "constant") r.width.mode = WidthSchedule::Mode::Constant;
    else if (beta_mode == "theoretical") r.width.mode = WidthSchedule::Mode::Theoretical;
    else throw std::invalid_argument("unknown policy.beta_mode '" + beta_mode + "'");
    r.width.constant_value = c.real("policy.beta_const", 1.0);
    r.width.B_y = c.real("policy.B_y", 1.0);
    r.width.B_f = c.real("policy.B_f", 1.0);
    r.width.R = c.real("policy.R", r.objective.noise);
    r.width.delta = c.real("policy.delta", 0.1);

    const std::string model = c.str("delay.model", "poisson");
    if (model == "poisson") r.delay = PoissonDelay{c.real("delay.mean", 10.0)};
    else if (model == "fixed") r.delay = FixedDelay{c.integer("delay.fixed", 10)};
    else if (model == "input") r.delay = InputDependentDelay{};  // resolved against the domain
    else if (model == "exponential") r.delay = ExponentialDelay{c.real("delay.rate", 0.1)};
    else throw std::invalid_argument("unknown delay.model '" + model + "'");
    if (c.has("batch.size")) {
        const auto b = batch_adapter(c.integer("batch.size", 2));
        r.delay = b.delay;
        r.m = static_cast<double>(b.m);
    } else if (model != "input") {
        validate(r.delay);
        r.m = detail::default_window(r.delay);
    }
    if (const auto m = c.str("m", "auto"); m != "auto") r.m = static_cast<double>(c.integer("m", 1));
    if (c.has("m_time")) r.m = c.real("m_time", 1.0);
    r.time_step = c.real("time.step", 1.0);

    r.horizon = c.integer("T", 150);
    if (c.has("seeds")) {
        r.seeds.clear();
        for (double s : c.reals("seeds", {})) r.seeds.push_back(static_cast<std::uint64_t>(s));
    } else {
        const long count = c.integer("seeds.count", 1);
        const long base = c.integer("seed", 0);
        r.seeds.clear();
        for (long i = 0; i < count; ++i) r.seeds.push_back(static_cast<std::uint64_t>(base + i));
    }
    r.output_dir = c.str("output.dir", "");
    r.threads = static_cast<unsigned>(c.integer("threads", 0));

    if (r.horizon < 1) throw std::invalid_argument("T must be >= 1");
    if (!r.time_mode() && (r.m < 1.0 || r.m != std::floor(r.m))) {
        throw std::invalid_argument("m must be a positive integer");
    }
    if (r.time_mode() && !(r.m > 0.0)) throw std::invalid_argument("m_time must be positive");
    if (r.seeds.empty()) throw std::invalid_argument("at least one seed required");
    return r;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"synthetic-stochastic", "synthetic-fixed", "batch",
                                                "contextual-multitask", "contextual-nonstationary"};
    return names;
}

/// Flat keys of a named experiment preset.
inline Config preset_config(const std::string& name) {
    Config c;
    c.set("preset", name);
    c.set("policy.methods", "UCB_SDF,UCB_IGNORE,BUCB,TS_SDF,ASY_TS,BTS");
    c.set("policy.beta_mode", "constant");
    c.set("policy.beta_const", "1");
    c.set("refit_every", "10");
    c.set("seeds.count", "10");
    if (name == "synthetic-stochastic" || name == "synthetic-fixed" || name == "batch") {
        c.set("objective.kind", "synthetic");
        c.set("objective.lengthscale", "0.02");
        c.set("objective.grid_size", "1000");
        c.set("kernel.lengthscale", "0.02");
        c.set("T", "150");
        // noise variance R^2; 1 + 2/T over-smooths a 0.02 lengthscale at this horizon
        c.set("gp.lambda", "0.0025");
        if (name == "synthetic-stochastic") {
            c.set("delay.model", "poisson");
            c.set("delay.mean", "10");
            c.set("m", "20");
        } else if (name == "synthetic-fixed") {
            c.set("delay.model", "fixed");
            c.set("delay.fixed", "10");
            c.set("m", "10");
        } else {
            c.set("batch.size", "11");
        }
    } else if (name == "contextual-multitask" || name == "contextual-nonstationary") {
        c.set("objective.kind", "contextual-synthetic");
        c.set("objective.lengthscale", "0.2");
        c.set("kernel.lengthscale", "0.2");
        c.set("kernel.context_lengthscale", "1.0");
        c.set("delay.model", "poisson");
        c.set("delay.mean", "3");
        c.set("m", "6");
        c.set("context.repeat", "30");
        c.set("refit_every", "30");
        c.set("refit.window", "300");
        if (name == "contextual-multitask") {
            c.set("context.kind", "random");
            c.set("context.count", "50");
            c.set("context.dim", "6");
            c.set("context.features", "6");
            c.set("context.query_grid", "16,18");
            c.set("T", "1500");
        } else {
            c.set("context.kind", "index");
            c.set("context.count", "20");
            c.set("context.query_grid", "12,12");
            c.set("T", "600");
        }
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return c;
}

inline RunConfig preset(const std::string& name) { return run_config_from(preset_config(name)); }

// ---------------------------------------------------------------------------
// Problems: what the run loop optimizes
// ---------------------------------------------------------------------------

/// Non-contextual problem over a fixed domain.
struct PlainProblem {
    const Objective* objective;

    [[nodiscard]] std::size_t context_at(long /*t*/) const { return 0; }
    [[nodiscard]] std::vector<Vector> candidates(std::size_t /*context*/) const { return objective->domain.points(); }
    [[nodiscard]] double value(std::size_t /*context*/, std::size_t id) const {
        return objective->values[static_cast<Eigen::Index>(id)];
    }
    [[nodiscard]] double optimum(std::size_t /*context*/) const { return objective->optimum(); }
    [[nodiscard]] double noise() const { return objective->noise; }
};

struct ContextualProblem {
    const ContextualObjective* objective;
    ContextSchedule schedule;

    [[nodiscard]] std::size_t context_at(long t) const { return schedule.context_at(t); }
    [[nodiscard]] std::vector<Vector> candidates(std::size_t z) const { return objective->slice(z); }
    [[nodiscard]] double value(std::size_t z, std::size_t id) const { return objective->value(z, id); }
    [[nodiscard]] double optimum(std::size_t z) const { return objective->optimum(z); }
    [[nodiscard]] double noise() const { return objective->noise; }
};

struct LoopSettings {
    Rule rule = Rule::UcbSdf;
    WidthSchedule width;
    DelayModel delay = PoissonDelay{0.0};
    double m = 1.0;
    double time_step = 1.0;
    long horizon = 1;
    double lambda = 1.0;
    double lambda_floor = 1e-6;
    std::size_t refit_every = 0;
    std::size_t refit_window = 0;
    double B_y = 1.0;
};

/// The BO-SDF run loop.  Per iteration t:
///   1. apply ledger reveals (targets of the censored state; completed
///      state for baselines),
///   2. refit hyperparameters when t is a multiple of refit_every,
///   3. compute the width,
///   4. select x_t,
///   5. append x_t with a censored target, draw y_t and d_t, enqueue.
/// A NumericalError aborts the run; the partial log is returned.
template <CovarianceKernel K, typename Problem>
RegretLog run_loop(const Problem& problem, const LoopSettings& s, K kernel, std::span<const K> refit_grid,
                   std::uint64_t seed) {
    RegretLog log;
    log.method = std::string(rule_name(s.rule));
    log.seed = seed;

    const bool time_mode = is_time_model(s.delay);
    PosteriorState<K> all(kernel, s.lambda, s.lambda_floor);
    std::optional<PosteriorState<K>> completed;
    if (!is_sdf(s.rule)) completed.emplace(kernel, s.lambda, s.lambda_floor);
    Ledger ledger(s.m, time_mode ? LedgerMode::Time : LedgerMode::Iterations);

    std::vector<std::size_t> slot_context;
    std::map<std::size_t, double> best_converted;
    std::optional<std::size_t> bound_context;
    double cum = 0.0;
    long t = 0;

    try {
        for (t = 1; t <= s.horizon; ++t) {
            const std::size_t z = problem.context_at(t);
            const double now = static_cast<double>(t - 1) * s.time_step;

            // 1. reveals
            const auto reveals = time_mode ? ledger.advance_time(now) : ledger.advance(t);
            for (const auto& r : reveals) {
                all.set_target(r.slot, r.observation);
                if (completed) completed->append(all.points()[r.slot], r.observation, r.point_id);
                const std::size_t zc = slot_context[r.slot];
                const double f = problem.value(zc, r.point_id);
                auto [it, fresh] = best_converted.emplace(zc, f);
                if (!fresh) it->second = std::max(it->second, f);
            }

            // 2. refit
            if (s.refit_every > 0 && t % static_cast<long>(s.refit_every) == 0 && !refit_grid.empty()) {
                if (is_sdf(s.rule)) {
                    if (!all.empty()) all.refit_hyperparameters(refit_grid, s.refit_window);
                } else if (!completed->empty()) {
                    const auto res = completed->refit_hyperparameters(refit_grid, s.refit_window);
                    if (res.ok && !(all.kernel() == completed->kernel())) all.set_kernel(completed->kernel());
                }
            }

            if (!bound_context || *bound_context != z) {
                auto cands = problem.candidates(z);
                if (completed) completed->bind_candidates(cands);
                all.bind_candidates(std::move(cands));
                bound_context = z;
            }

            // 3-4. width and selection
            Rng sampler = make_rng(seed, Stream::Sampling, static_cast<std::uint64_t>(t));
            double nu = 0.0;
            std::size_t x = 0;
            if (is_sdf(s.rule)) {
                std::vector<std::size_t> pending;
                for (const auto& e : ledger.pending()) pending.push_back(e.slot);
                nu = pending_width(all, pending, s.B_y) + s.width.beta(all.realized_info_gain());
                x = s.rule == Rule::UcbSdf ? select_ucb_sdf(all, nu) : select_ts_sdf(all, nu, sampler);
            } else {
                const auto& sigma_state = is_hallucinating(s.rule) ? all : *completed;
                nu = s.width.beta(sigma_state.realized_info_gain());
                x = select_baseline(s.rule, *completed, all, nu, sampler);
            }

            // 5. issue the query
            const std::size_t slot = all.append(all.candidates()[x], x);
            slot_context.push_back(z);
            Rng noise_rng = make_rng(seed, Stream::Noise, static_cast<std::uint64_t>(t));
            double y = problem.value(z, x);
            if (problem.noise() > 0.0) {
                std::normal_distribution<double> noise(0.0, problem.noise());
                y += noise(noise_rng);
            }
            y = std::clamp(y, -s.B_y, s.B_y);
            Rng delay_rng = make_rng(seed, Stream::Delay, static_cast<std::uint64_t>(t));
            const double d = sample_delay(s.delay, x, delay_rng);
            ledger.enqueue({slot, x, time_mode ? now : static_cast<double>(t), d, y});

            LogRow row;
            row.t = t;
            row.point_id = x;
            row.inst_regret = problem.optimum(z) - problem.value(z, x);
            cum += row.inst_regret;
            row.cum_regret = cum;
            const auto best = best_converted.find(z);
            row.converted = best != best_converted.end();
            row.simple_regret = problem.optimum(z) - (row.converted ? best->second : 0.0);
            row.pending = ledger.pending().size();
            row.censored = ledger.censored_forever();
            row.nu = nu;
            row.info_gain = all.realized_info_gain();
            log.rows.push_back(row);
        }
    } catch (const NumericalError& e) {
        log.aborted = true;
        log.error = "iteration " + std::to_string(t) + ": " + e.what();
    }
    return log;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Objective instance for one seed, either plain or contextual.
struct Instance {
    std::shared_ptr<const Objective> plain;
    std::shared_ptr<const ContextualObjective> contextual;
    ContextSchedule schedule;
    Standardization standardization;
};

inline Instance make_instance(const RunConfig& cfg, std::uint64_t seed) {
    Instance inst;
    const auto& o = cfg.objective;
    switch (o.kind) {
        case ObjectiveKind::Synthetic: {
            auto obj = sample_synthetic(SqExpKernel(o.lengthscale), grid_domain(o.lo, o.hi, o.grid_size), seed, o.noise);
            obj.B_y = cfg.width.B_y;
            inst.plain = std::make_shared<Objective>(std::move(obj));
            break;
        }
        case ObjectiveKind::Tabular: {
            if (o.table.empty()) throw std::invalid_argument("objective.table is required for tabular objectives");
            auto obj = load_tabular(o.table, o.tabular, o.noise);
            obj.B_y = cfg.width.B_y;
            inst.plain = std::make_shared<Objective>(std::move(obj));
            break;
        }
        case ObjectiveKind::ContextualSynthetic: {
            const auto& cs = cfg.context;
            std::vector<Vector> raw;
            Rng rng = make_rng(seed, Stream::Context);
            for (std::size_t i = 0; i < cs.count; ++i) {
                if (cs.kind == "index") {
                    raw.push_back(Vector::Constant(1, static_cast<double>(i)));
                } else if (cs.kind == "random") {
                    raw.push_back(standard_normal(rng, static_cast<Eigen::Index>(cs.dim)));
                } else {
                    throw std::invalid_argument("unknown context.kind '" + cs.kind + "'");
                }
            }
            auto [ctx, st] = standardize_contexts(raw, cs.kind == "index" ? 1 : cs.features);
            inst.standardization = st;
            std::vector<std::pair<double, double>> ranges(cs.query_grid.size(), {0.0, 1.0});
            auto queries = product_grid(ranges, cs.query_grid);
            auto obj = sample_contextual(SqExpKernel(cs.lengthscale), SqExpKernel(o.lengthscale), std::move(ctx),
                                         std::move(queries), seed, o.noise);
            obj.B_y = cfg.width.B_y;
            inst.contextual = std::make_shared<ContextualObjective>(std::move(obj));
            break;
        }
        case ObjectiveKind::ContextualTabular: {
            if (o.table.empty() || cfg.context.file.empty()) {
                throw std::invalid_argument("objective.table and context.file are required for contextual-tabular");
            }
            auto obj = load_contextual(o.table, cfg.context.file, cfg.context.features, o.tabular, o.noise,
                                       &inst.standardization);
            obj.B_y = cfg.width.B_y;
            inst.contextual = std::make_shared<ContextualObjective>(std::move(obj));
            break;
        }
    }
    if (inst.contextual) {
        if (cfg.context.order.empty()) {
            inst.schedule = sequential_schedule(inst.contextual->contexts.size(), cfg.context.repeat_count);
        } else {
            for (auto z : cfg.context.order) {
                if (z >= inst.contextual->contexts.size()) throw std::invalid_argument("context.order id out of range");
            }
            inst.schedule = ContextSchedule{cfg.context.order, cfg.context.repeat_count};
        }
        if (static_cast<std::size_t>(cfg.horizon) > inst.schedule.rounds()) {
            throw std::invalid_argument("T exceeds the context schedule length " +
                                        std::to_string(inst.schedule.rounds()));
        }
    }
    return inst;
}

inline LoopSettings loop_settings(const RunConfig& cfg, Rule rule, std::size_t domain_size,
                                  const Config* raw = nullptr) {
    LoopSettings s;
    s.rule = rule;
    s.width = cfg.width;
    s.delay = cfg.delay;
    if (auto* table = std::get_if<InputDependentDelay>(&s.delay); table && table->means.empty()) {
        const std::string path = raw ? raw->str("delay.table", "") : "";
        if (path.empty()) throw std::invalid_argument("delay.model=input requires delay.table");
        *table = load_delay_table(path, domain_size);
    }
    s.m = cfg.m;
    s.time_step = cfg.time_step;
    s.horizon = cfg.horizon;
    s.lambda = cfg.effective_lambda();
    s.lambda_floor = cfg.lambda_floor;
    s.refit_every = cfg.refit.every;
    s.refit_window = cfg.refit.window;
    s.B_y = cfg.width.B_y;
    return s;
}

/// One (method, seed) run on a prepared instance.
inline RegretLog run_single(const RunConfig& cfg, const Instance& inst, Rule rule, std::uint64_t seed,
                            const Config* raw = nullptr) {
    if (inst.plain) {
        const auto s = loop_settings(cfg, rule, inst.plain->domain.size(), raw);
        const auto grid = se_candidate_grid(cfg.refit.lengthscales, cfg.refit.variances);
        return run_loop(PlainProblem{inst.plain.get()}, s, SqExpKernel(cfg.kernel.lengthscale, cfg.kernel.variance),
                        std::span<const SqExpKernel>(grid), seed);
    }
    const auto& obj = *inst.contextual;
    const auto s = loop_settings(cfg, rule, obj.queries.size(), raw);
    const auto cdim = obj.contexts.front().size();
    const auto grid = product_candidate_grid(cfg.refit.context_lengthscales, cfg.refit.lengthscales,
                                             cfg.refit.variances, cdim);
    const ProductKernel kernel(SqExpKernel(cfg.kernel.context_lengthscale, 1.0),
                               SqExpKernel(cfg.kernel.lengthscale, cfg.kernel.variance), cdim);
    return run_loop(ContextualProblem{&obj, inst.schedule}, s, kernel, std::span<const ProductKernel>(grid), seed);
}

// ---------------------------------------------------------------------------
// CSV output and summaries
// ---------------------------------------------------------------------------

inline void write_log_csv(std::ostream& out, const RegretLog& log) {
    out << kLogHeader << '\n';
    for (const auto& r : log.rows) {
        out << r.t << ',' << r.point_id << ',' << format_real(r.inst_regret) << ',' << format_real(r.cum_regret)
            << ',' << format_real(r.simple_regret) << ',' << r.pending << ',' << r.censored << ','
            << format_real(r.nu) << ',' << format_real(r.info_gain) << '\n';
    }
}

inline std::string log_csv(const RegretLog& log) {
    std::ostringstream ss;
    write_log_csv(ss, log);
    return ss.str();
}

inline RegretLog read_log_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || Config::trim(line) != kLogHeader) {
        throw std::runtime_error(path.string() + ": unexpected header");
    }
    RegretLog log;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (Config::trim(line).empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 9) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 9 columns");
        const std::string where = path.string() + ":" + std::to_string(lineno);
        LogRow r;
        r.t = static_cast<long>(detail::parse_cell(cells[0], where));
        r.point_id = static_cast<std::size_t>(detail::parse_cell(cells[1], where));
        r.inst_regret = detail::parse_cell(cells[2], where);
        r.cum_regret = detail::parse_cell(cells[3], where);
        r.simple_regret = detail::parse_cell(cells[4], where);
        r.pending = static_cast<std::size_t>(detail::parse_cell(cells[5], where));
        r.censored = static_cast<std::size_t>(detail::parse_cell(cells[6], where));
        r.nu = detail::parse_cell(cells[7], where);
        r.info_gain = detail::parse_cell(cells[8], where);
        log.rows.push_back(r);
    }
    return log;
}

struct SeriesStats {
    std::vector<double> mean;
    std::vector<double> stderr_;
};

struct MethodSummary {
    std::string method;
    std::size_t runs = 0;
    SeriesStats simple;
    SeriesStats cumulative;
    [[nodiscard]] double final_simple_mean() const { return simple.mean.back(); }
    [[nodiscard]] double final_simple_stderr() const { return simple.stderr_.back(); }
    [[nodiscard]] double final_cum_mean() const { return cumulative.mean.back(); }
    [[nodiscard]] double final_cum_stderr() const { return cumulative.stderr_.back(); }
};

/// Per-iteration mean and standard error (sample std / sqrt(n)) across
/// runs; a single run has zero standard error.
inline SeriesStats series_stats(const std::vector<std::vector<double>>& series) {
    if (series.empty()) throw std::invalid_argument("series_stats: no series");
    const std::size_t len = series.front().size();
    for (const auto& s : series) {
        if (s.size() != len) throw std::invalid_argument("summarize: mismatched horizons");
    }
    SeriesStats st;
    const double n = static_cast<double>(series.size());
    for (std::size_t i = 0; i < len; ++i) {
        double sum = 0.0;
        for (const auto& s : series) sum += s[i];
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& s : series) ss += (s[i] - mean) * (s[i] - mean);
        st.mean.push_back(mean);
        st.stderr_.push_back(series.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0);
    }
    return st;
}

inline MethodSummary summarize(const std::vector<RegretLog>& logs) {
    if (logs.empty()) throw std::invalid_argument("summarize: at least one log required");
    MethodSummary out;
    out.method = logs.front().method;
    out.runs = logs.size();
    std::vector<std::vector<double>> simple, cum;
    for (const auto& l : logs) {
        if (l.rows.empty()) throw std::invalid_argument("summarize: empty log");
        simple.push_back(l.simple());
        cum.push_back(l.cumulative());
    }
    out.simple = series_stats(simple);
    out.cumulative = series_stats(cum);
    return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<MethodSummary>& summaries) {
    out << "method,t,simple_mean,simple_stderr,cum_mean,cum_stderr\n";
    for (const auto& s : summaries) {
        for (std::size_t i = 0; i < s.simple.mean.size(); ++i) {
            out << s.method << ',' << (i + 1) << ',' << format_real(s.simple.mean[i]) << ','
                << format_real(s.simple.stderr_[i]) << ',' << format_real(s.cumulative.mean[i]) << ','
                << format_real(s.cumulative.stderr_[i]) << '\n';
        }
    }
}

inline void print_final_table(std::ostream& out, const std::vector<MethodSummary>& summaries) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %5s %14s %10s %14s %10s\n", "method", "runs", "final_simple", "stderr",
                  "final_cum", "stderr");
    out << buf;
    for (const auto& s : summaries) {
        std::snprintf(buf, sizeof buf, "%-12s %5zu %14.6f %10.6f %14.6f %10.6f\n", s.method.c_str(), s.runs,
                      s.final_simple_mean(), s.final_simple_stderr(), s.final_cum_mean(), s.final_cum_stderr());
        out << buf;
    }
}

struct ExperimentResult {
    std::map<std::string, std::vector<RegretLog>> logs;  // method -> per-seed logs (seed order)
    std::vector<MethodSummary> summaries;                // configured method order
    std::vector<std::string> errors;

    [[nodiscard]] const std::vector<RegretLog>& of(Rule r) const { return logs.at(std::string(rule_name(r))); }
};

/// Runs every (method, seed) pair, in parallel across pairs.  Results are
/// independent of scheduling.  When output_dir is set, writes
/// <dir>/<name>/<method>/seed<k>.csv and <dir>/<name>/summary.csv, plus
/// context_standardization.csv for contextual runs.
inline ExperimentResult run_experiment(const RunConfig& cfg, const Config* raw = nullptr) {
    std::vector<Instance> instances;
    for (auto seed : cfg.seeds) instances.push_back(make_instance(cfg, seed));

    struct Job {
        Rule rule;
        std::size_t seed_index;
    };
    std::vector<Job> jobs;
    for (Rule r : cfg.methods) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) jobs.push_back({r, i});
    }
    std::vector<RegretLog> results(jobs.size());
    std::vector<std::string> failures(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                results[j] = run_single(cfg, instances[jobs[j].seed_index], jobs[j].rule, cfg.seeds[jobs[j].seed_index], raw);
            } catch (const std::exception& e) {
                failures[j] = e.what();
            }
        }
    };
    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
    {
        std::vector<std::jthread> pool;
        for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
        worker();
    }
    for (const auto& f : failures) {
        if (!f.empty()) throw std::runtime_error(f);
    }

    ExperimentResult out;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        auto& log = results[j];
        if (log.aborted) {
            out.errors.push_back(log.method + " seed " + std::to_string(log.seed) + ": " + log.error);
        }
        out.logs[log.method].push_back(std::move(log));
    }
    for (Rule r : cfg.methods) {
        const auto& logs = out.logs.at(std::string(rule_name(r)));
        bool usable = std::all_of(logs.begin(), logs.end(), [&](const RegretLog& l) {
            return !l.aborted && static_cast<long>(l.rows.size()) == cfg.horizon;
        });
        if (usable) out.summaries.push_back(summarize(logs));
    }

    if (!cfg.output_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path root = fs::path(cfg.output_dir) / cfg.name;
        for (const auto& [method, logs] : out.logs) {
            fs::create_directories(root / method);
            for (const auto& l : logs) {
                std::ofstream f(root / method / ("seed" + std::to_string(l.seed) + ".csv"));
                write_log_csv(f, l);
            }
        }
        std::ofstream f(root / "summary.csv");
        write_summary_csv(f, out.summaries);
        if (cfg.contextual()) {
            // constants applied to the raw context features, per seed
            std::ofstream st(root / "context_standardization.csv");
            st << "seed,feature,mean,scale\n";
            for (std::size_t i = 0; i < instances.size(); ++i) {
                const auto& z = instances[i].standardization;
                for (Eigen::Index j = 0; j < z.mean.size(); ++j) {
                    st << cfg.seeds[i] << ',' << j << ',' << format_real(z.mean[j]) << ',' << format_real(z.scale[j])
                       << '\n';
                }
            }
        }
    }
    return out;
}

/// Reads <dir>/<method>/seed*.csv and summarizes each method.
inline std::vector<MethodSummary> summarize_directory(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> method_dirs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) method_dirs.push_back(e.path());
    }
    std::sort(method_dirs.begin(), method_dirs.end());
    std::vector<MethodSummary> out;
    for (const auto& md : method_dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(md)) {
            const auto name = e.path().filename().string();
            if (e.is_regular_file() && name.rfind("seed", 0) == 0 && e.path().extension() == ".csv") {
                files.push_back(e.path());
            }
        }
        if (files.empty()) continue;
        std::sort(files.begin(), files.end());
        std::vector<RegretLog> logs;
        for (const auto& f : files) {
            auto l = read_log_csv(f);
            l.method = md.filename().string();
            logs.push_back(std::move(l));
        }
        out.push_back(summarize(logs));
    }
    if (out.empty()) throw std::runtime_error("no seed*.csv logs under '" + dir.string() + "'");
    return out;
}

}  // namespace bosdf
