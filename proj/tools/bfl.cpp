// bfl: batch driver for the semi-discrete binormal-flow experiments.
//
//   bfl identities [--seed S]
//   bfl run -c FILE [-o DIR]
//   bfl converge -c FILE --levels K [--offset node|mid]
//   bfl stability -c FILE --eps LIST
//
// Exit codes: 0 pass, 2 divergence, 3 threshold failure, 4 config error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "bfl/config.hpp"
#include "bfl/experiments.hpp"

namespace fs = std::filesystem;
using namespace bfl;

namespace {

struct Outputs {
    fs::path csv;
    fs::path json;
};

// -o DIR keeps the configured file names but places them in DIR.
Outputs output_paths(const ExperimentConfig& cfg, const std::string& dir, const std::string& suffix = "") {
    auto place = [&](const std::string& name) {
        fs::path p(name);
        if (!suffix.empty()) p.replace_filename(p.stem().string() + suffix + p.extension().string());
        return dir.empty() ? p : fs::path(dir) / p.filename();
    };
    return {place(cfg.csv), place(cfg.json)};
}

void write_outputs(const Outputs& o, const std::string& csv, const nlohmann::json& json) {
    write_text(o.csv, csv);
    write_text(o.json, json.dump(2) + "\n");
}

void print_checks(const std::vector<CheckResult>& checks) {
    for (const auto& c : checks) {
        std::printf("check %-18s %-5s value=%s threshold=%s\n", c.name.c_str(), c.passed ? "PASS" : "FAIL",
                    format_double(c.value).c_str(), format_double(c.threshold).c_str());
    }
}

int cmd_identities(std::uint64_t seed, const std::string& dir) {
    const auto r = run_identities(seed);
    for (const auto& row : r.rows) {
        std::printf("%-26s trials=%-5zu worst=%-12.3e %s\n", row.name.c_str(), row.trials, row.worst,
                    row.passed() ? "PASS" : "FAIL");
    }
    std::printf("identities: %s in %.2f s\n", r.passed() ? "all pass" : "FAILED", r.seconds);
    if (!dir.empty()) {
        write_text(fs::path(dir) / "identities.csv", to_csv(r));
        write_text(fs::path(dir) / "identities.json", to_json(r).dump(2) + "\n");
    }
    return static_cast<int>(r.passed() ? ExitCode::pass : ExitCode::threshold);
}

int cmd_run(const std::string& file, const std::string& dir) {
    const auto cfg = load_config(file);
    const auto r = run_experiment(cfg);
    write_outputs(output_paths(cfg, dir), to_csv(r), to_json(r));
    const auto& s = r.summary;
    std::printf("steps=%zu snapshots=%zu complete=%s\n", r.steps, r.rows.size(), r.complete ? "yes" : "no");
    std::printf("max_unit_drift=%.3e max_energy_drift=%.3e min_grad_margin=%.3e min_dual_margin=%.3e\n",
                s.max_unit_drift, s.max_energy_drift, s.min_grad_margin, s.min_dual_margin);
    if (!r.oracle_name.empty()) {
        std::printf("oracle (%s): final=%.3e max=%.3e\n", r.oracle_name.c_str(), s.final_oracle_error,
                    s.max_oracle_error);
    }
    if (!std::isnan(s.peak_speed)) std::printf("curvature peak speed=%.6f\n", s.peak_speed);
    if (!r.complete) std::fprintf(stderr, "divergence: %s\n", r.failure.c_str());
    print_checks(r.checks);
    return static_cast<int>(r.exit);
}

int cmd_converge(const std::string& file, std::size_t levels, const std::string& offset, const std::string& dir) {
    const auto cfg = load_config(file);
    std::optional<SamplingOffset> off;
    if (!offset.empty()) off = parse_offset(offset);
    const auto r = run_convergence(cfg, levels, off);
    write_outputs(output_paths(cfg, dir, "_converge"), to_csv(r), to_json(r));
    std::printf("reference=%s offset=%s\n", r.reference.c_str(), to_string(r.offset));
    std::printf("%5s %7s %12s %12s %12s %7s\n", "level", "nodes", "h", "dt", "error", "order");
    for (const auto& row : r.rows) {
        std::printf("%5zu %7zu %12.5e %12.5e %12.5e %7.3f\n", row.level, row.nodes, row.h, row.dt, row.error,
                    row.order);
    }
    if (!r.failure.empty()) std::fprintf(stderr, "divergence: %s\n", r.failure.c_str());
    print_checks(r.checks);
    return static_cast<int>(r.exit);
}

int cmd_stability(const std::string& file, const std::string& eps_list, const std::string& dir) {
    const auto cfg = load_config(file);
    const auto eps = parse_number_list(eps_list, "--eps");
    const auto r = run_stability(cfg, eps);
    write_outputs(output_paths(cfg, dir, "_stability"), to_csv(r), to_json(r));
    std::printf("%12s %12s\n", "eps", "ratio");
    for (const auto& row : r.rows) std::printf("%12.3e %12.6f\n", row.eps, row.result.ratio);
    std::printf("spread=%.4f\n", r.spread);
    if (!r.failure.empty()) std::fprintf(stderr, "divergence: %s\n", r.failure.c_str());
    print_checks(r.checks);
    return static_cast<int>(r.exit);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-discrete modified binormal curvature flow"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    std::string config, out_dir, offset, eps;
    std::size_t levels = 0;

    auto* ident = app.add_subcommand("identities", "randomized discrete-identity suite");
    ident->add_option("--seed", seed, "random seed");
    ident->add_option("-o,--out", out_dir, "write identities.csv/json into this directory");

    auto* run = app.add_subcommand("run", "evolve one experiment and write CSV/JSON diagnostics");
    run->add_option("-c,--config", config, "experiment config file")->required();
    run->add_option("-o,--out", out_dir, "output directory");

    auto* conv = app.add_subcommand("converge", "spatial refinement study");
    conv->add_option("-c,--config", config, "experiment config file")->required();
    conv->add_option("--levels", levels, "number of dyadic levels (>= 3)")->required();
    conv->add_option("--offset", offset, "speed sampling offset: node or mid");
    conv->add_option("-o,--out", out_dir, "output directory");

    auto* stab = app.add_subcommand("stability", "H1 amplification ratios over perturbation sizes");
    stab->add_option("-c,--config", config, "experiment config file")->required();
    stab->add_option("--eps", eps, "comma-separated perturbation sizes in (0, 0.1]")->required();
    stab->add_option("-o,--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config);
    }

    try {
        if (*ident) return cmd_identities(seed, out_dir);
        if (*run) return cmd_run(config, out_dir);
        if (*conv) return cmd_converge(config, levels, offset, out_dir);
        if (*stab) return cmd_stability(config, eps, out_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return static_cast<int>(ExitCode::config);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return static_cast<int>(ExitCode::divergence);
    } catch (const DomainError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return static_cast<int>(ExitCode::config);
    } catch (const CoefficientBoundError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return static_cast<int>(ExitCode::config);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
