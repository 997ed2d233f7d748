// Command-line runner for BO under stochastic delayed feedback.
//
//   bosdf run <config> [--override k=v]... [--k=v]...
//   bosdf preset <name> [--override k=v]... [--k=v]...
//   bosdf summarize <dir>
//   bosdf sweep --param k --values v1,v2 [--preset name | --config file] [--override k=v]...
//   bosdf verify <preset>

#include "bosdf/bosdf.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace {

using namespace bosdf;

/// Turns leftover "--key=value" / "--key value" tokens into overrides.
void apply_extras(Config& cfg, const std::vector<std::string>& extras) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string tok = extras[i];
        if (tok.rfind("--", 0) != 0) {
            throw std::invalid_argument("unexpected argument '" + tok + "'");
        }
        tok = tok.substr(2);
        if (tok.find('=') == std::string::npos) {
            if (i + 1 >= extras.size()) throw std::invalid_argument("flag --" + tok + " needs a value");
            tok += "=" + extras[++i];
        }
        cfg.set_assignment(tok);
    }
}

void apply_overrides(Config& cfg, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) cfg.set_assignment(o);
}

int report(const RunConfig& rc, const ExperimentResult& result) {
    print_final_table(std::cout, result.summaries);
    if (!rc.output_dir.empty()) {
        std::cout << "logs written to " << (std::filesystem::path(rc.output_dir) / rc.name).string() << "\n";
    }
    for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";
    return result.errors.empty() ? 0 : 2;
}

int run_config(Config cfg) {
    if (!cfg.has("output.dir")) cfg.set("output.dir", "out");
    const RunConfig rc = run_config_from(cfg);
    return report(rc, run_experiment(rc, &cfg));
}

int verify(const std::string& name) {
    const Config cfg = preset_config(name);
    const RunConfig rc = run_config_from(cfg);
    int failed = 0;
    auto line = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
        if (!ok) ++failed;
    };

    // incremental posterior vs dense solve
    {
        const SqExpKernel kernel(std::max(rc.kernel.lengthscale, 0.05), rc.kernel.variance);
        const Domain domain = grid_domain(0.0, 1.0, 50);
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 20; ++trial) {
            Rng rng = make_rng(trial, Stream::Test);
            std::uniform_int_distribution<std::size_t> pick(0, domain.size() - 1);
            std::uniform_real_distribution<double> val(0.0, 1.0);
            PosteriorState<SqExpKernel> st(kernel, rc.effective_lambda());
            for (int i = 0; i < 30; ++i) {
                const auto slot = st.append(domain[pick(rng)]);
                if (val(rng) < 0.6) st.set_target(slot, val(rng));
            }
            const Vector y = st.targets();
            for (const auto& x : domain.points()) {
                const auto inc = st.posterior_at(x);
                const auto ref = oracle::dense_posterior(std::span<const Vector>(st.points()), y, kernel, st.lambda(), x);
                worst = std::max({worst, std::abs(inc.mean - ref.mean), std::abs(inc.variance - ref.variance)});
            }
        }
        line(worst < 1e-8, "incremental posterior matches dense solve (max abs err " + format_real(worst) + ")");
    }

    // window probability
    if (const auto* p = std::get_if<PoissonDelay>(&rc.delay)) {
        const double a = rho_m(rc.delay, rc.m);
        const double b = oracle::poisson_cdf(p->mean, static_cast<long>(rc.m));
        line(std::abs(a - b) < 1e-12, "rho_m = " + format_real(a) + " agrees with pmf summation");
    } else {
        line(rho_m(rc.delay, rc.m) == 1.0, "rho_m = 1 for deterministic delays within the window");
    }

    // confidence ellipsoid on a small instance
    {
        const auto rep = oracle::coverage_test(oracle::CoverageConfig{}, 50);
        line(rep.coverage() >= 0.9, "confidence ellipsoid coverage " + format_real(rep.coverage()) + " >= 0.9");
    }

    // determinism of a shortened run
    {
        Config shortcfg = cfg;
        shortcfg.set("T", std::to_string(std::min<long>(rc.horizon, 30)));
        shortcfg.set("seeds", "0");
        shortcfg.set("policy.rule", std::string(rule_name(rc.methods.front())));
        const RunConfig src = run_config_from(shortcfg);
        const auto inst = make_instance(src, 0);
        const auto a = log_csv(run_single(src, inst, src.methods.front(), 0));
        const auto b = log_csv(run_single(src, make_instance(src, 0), src.methods.front(), 0));
        line(a == b, "repeated run is byte-identical");
    }
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian optimization under stochastic delayed feedback"};
    app.require_subcommand(1);

    std::string config_path, preset_name, summarize_dir, verify_name;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "key=value config file")->required();
    run->add_option("--override", overrides, "key=value override (repeatable)");
    run->allow_extras();

    auto* pre = app.add_subcommand("preset", "run a named experiment preset");
    pre->add_option("name", preset_name, "preset name")->required();
    pre->add_option("--override", overrides, "key=value override (repeatable)");
    pre->allow_extras();

    auto* sum = app.add_subcommand("summarize", "summarize a directory of per-seed logs");
    sum->add_option("dir", summarize_dir, "<outdir>/<preset> directory")->required();

    std::string sweep_param, sweep_values, sweep_preset, sweep_config;
    auto* sweep = app.add_subcommand("sweep", "repeat a run over values of one key");
    sweep->add_option("--param", sweep_param, "config key to vary")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--preset", sweep_preset, "base preset (default synthetic-stochastic)");
    sweep->add_option("--config", sweep_config, "base config file");
    sweep->add_option("--override", overrides, "key=value override (repeatable)");
    sweep->allow_extras();

    auto* ver = app.add_subcommand("verify", "self-check the library against its oracles");
    ver->add_option("preset", verify_name, "preset name")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            Config cfg = Config::load(config_path);
            apply_overrides(cfg, overrides);
            apply_extras(cfg, run->remaining());
            return run_config(cfg);
        }
        if (*pre) {
            Config cfg = preset_config(preset_name);
            apply_overrides(cfg, overrides);
            apply_extras(cfg, pre->remaining());
            return run_config(cfg);
        }
        if (*sum) {
            const auto summaries = summarize_directory(summarize_dir);
            std::ofstream out(std::filesystem::path(summarize_dir) / "summary.csv");
            write_summary_csv(out, summaries);
            print_final_table(std::cout, summaries);
            return 0;
        }
        if (*sweep) {
            Config base = sweep_config.empty() ? preset_config(sweep_preset.empty() ? "synthetic-stochastic" : sweep_preset)
                                               : Config::load(sweep_config);
            apply_overrides(base, overrides);
            apply_extras(base, sweep->remaining());
            if (!base.has("output.dir")) base.set("output.dir", "out");
            const std::string name = base.str("preset", "custom");
            int status = 0;
            for (const auto& v : Config::split_list(sweep_values)) {
                Config cfg = base;
                cfg.set(sweep_param, v);
                cfg.set("preset", name + "/" + sweep_param + "=" + v);
                std::cout << "== " << sweep_param << " = " << v << "\n";
                status = std::max(status, run_config(cfg));
            }
            return status;
        }
        if (*ver) {
            return verify(verify_name);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
