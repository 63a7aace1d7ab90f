#include "mlc/checks.hpp"
#include "mlc/error.hpp"
#include "mlc/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

void emit_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    return parts;
}

std::vector<double> parse_rho_list(const std::string& text) {
    std::vector<double> rhos;
    for (const std::string& part : split_list(text)) {
        std::size_t consumed = 0;
        double v = 0.0;
        try {
            v = std::stod(part, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed != part.size() || part.empty()) {
            throw mlc::ConfigError("--rho: bad value '" + part + "' in '" + text + "'");
        }
        rhos.push_back(v);
    }
    return rhos;
}

std::vector<mlc::harness::Method> parse_method_list(const std::string& text) {
    std::vector<mlc::harness::Method> methods;
    for (const std::string& part : split_list(text)) methods.push_back(mlc::harness::parse_method(part));
    return methods;
}

std::string fmt_acc(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

int cmd_run(const std::string& config_path, int repeats, const std::string& out_override) {
    mlc::harness::ExperimentConfig cfg = mlc::harness::parse_config_file(config_path);
    const std::string out_dir = out_override.empty() ? cfg.resolved_output_dir() : out_override;
    mlc::harness::RepeatsResult rr = mlc::harness::run_repeats(cfg, repeats, out_dir);

    std::cout << "run " << cfg.run_id << " (" << mlc::harness::method_name(cfg.method) << "), "
              << repeats << " repeat(s) -> " << out_dir << "\n";
    for (std::size_t i = 0; i < rr.reports.size(); ++i) {
        const auto& rep = rr.reports[i];
        std::cout << "  repeat " << i << " seed " << rep.config.train.seed << ": "
                  << (rep.failed ? "FAILED (" + rep.failure_message + ")"
                                 : "test_acc " + fmt_acc(rep.eval.accuracy))
                  << "\n";
    }
    std::cout << "mean test_acc " << fmt_acc(rr.mean_accuracy) << " +- " << fmt_acc(rr.std_accuracy)
              << " over " << rr.accuracies.size() << " successful repeat(s), " << rr.failures
              << " failure(s)\n";
    if (rr.failures == repeats) {
        emit_error("divergence_error", "all " + std::to_string(repeats) + " repeats failed");
        return 1;
    }
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& rho_text,
              const std::string& methods_text, int repeats, const std::string& out_override) {
    mlc::harness::ExperimentConfig cfg = mlc::harness::parse_config_file(config_path);
    const std::vector<double> rhos = parse_rho_list(rho_text);
    const std::vector<mlc::harness::Method> methods = parse_method_list(methods_text);
    const std::string out_dir = out_override.empty() ? cfg.resolved_output_dir() : out_override;
    const std::string out_path = out_dir + "/sweep.csv";

    auto cells = mlc::harness::run_sweep(cfg, rhos, methods, repeats);
    mlc::harness::export_sweep(cells, out_path);

    std::cout << "sweep " << cfg.run_id << " -> " << out_path << "\n";
    for (const auto& c : cells) {
        std::cout << "  " << mlc::harness::method_name(c.method) << " rho " << c.rho << ": mean "
                  << fmt_acc(c.mean_accuracy) << " +- " << fmt_acc(c.std_accuracy) << " ("
                  << c.failures << " failure(s))\n";
    }
    return 0;
}

int cmd_validate(const std::string& config_path) {
    mlc::harness::ExperimentConfig cfg = mlc::harness::parse_config_file(config_path);
    std::cout << mlc::harness::serialize_config(cfg);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto results = mlc::checks::run_all(seed);
    bool all_ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << "  " << r.detail << "\n";
        all_ok = all_ok && r.passed;
    }
    if (!all_ok) {
        emit_error("gradcheck_failed", "one or more oracle checks failed");
        return 1;
    }
    std::cout << "all " << results.size() << " oracle checks passed\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta label correction trainer: bi-level training runs, noise sweeps and oracle checks"};
    app.require_subcommand(1);

    std::string config_path;
    int repeats = 5;
    std::string out_override;
    CLI::App* run = app.add_subcommand("run", "Train one configuration, repeated over seeds");
    run->add_option("--config", config_path, "JSON experiment config")->required();
    run->add_option("--repeats", repeats, "number of repeats (seeds seed+0..N-1)");
    run->add_option("--out", out_override, "output directory (default: config output_dir)");

    std::string rho_text;
    std::string methods_text;
    CLI::App* sweep = app.add_subcommand("sweep", "Grid of methods x noise levels");
    sweep->add_option("--config", config_path, "JSON experiment config")->required();
    sweep->add_option("--rho", rho_text, "comma-separated noise levels, e.g. 0,0.2,0.4")->required();
    sweep->add_option("--methods", methods_text, "comma-separated methods, e.g. mlc,noisy_only")
        ->required();
    sweep->add_option("--repeats", repeats, "repeats per cell");
    sweep->add_option("--out", out_override, "output directory (default: config output_dir)");

    std::string validate_path;
    CLI::App* validate = app.add_subcommand("validate-config", "Parse, validate and echo a config");
    validate->add_option("config", validate_path, "JSON experiment config")->required();

    std::uint64_t gradcheck_seed = 0;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Run the differentiation oracle suites");
    gradcheck->add_option("--seed", gradcheck_seed, "base seed for the random draws");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(config_path, repeats, out_override);
        if (sweep->parsed()) return cmd_sweep(config_path, rho_text, methods_text, repeats, out_override);
        if (validate->parsed()) return cmd_validate(validate_path);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_seed);
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        emit_error("usage_error", e.what());
        return 1;
    } catch (const mlc::Error& e) {
        emit_error(e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 1;
    }
}
