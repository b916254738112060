// enfed: experiment runner and reporting CLI.
//   run        execute a configured scenario and write a metrics file
//   gradcheck  finite-difference audit of the backprop implementation
//   report     comparison table + reduction percentages over metrics files
//   partition  per-device class histograms for the configured partition

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "enfed/enfed.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNoCollaborators = 3;
constexpr int kExitDivergence = 4;

void print_human_summary(const enfed::RunMetrics& m) {
    std::printf("scenario         %s (transport %s, seed %llu)\n", m.scenario.c_str(),
                m.transport.c_str(), static_cast<unsigned long long>(m.seed));
    std::printf("outcome          %s\n",
                m.outcome == enfed::RunOutcome::Ok ? "ok" : "no_collaborators");
    std::printf("stop reason      %s\n",
                m.stop_reason ? enfed::stop_reason_name(*m.stop_reason) : "none");
    std::printf("rounds           %d (+1 initial aggregation)\n", m.rounds_executed);
    std::printf("collaborators    %d\n", m.collaborators);
    std::printf("accuracy         %.4f  (P %.4f / R %.4f / F1 %.4f)\n", m.accuracy, m.precision,
                m.recall, m.f1);
    std::printf("training time    %.6f s  (init %.4g, tx %.4g, rx %.4g, local %.4g, agg %.4g)\n",
                m.ledger.total_time(), m.ledger.t_init, m.ledger.t_com1, m.ledger.t_com2,
                m.ledger.t_loc, m.ledger.t_agg);
    std::printf("training energy  %.6f J  (comp %.6f, comm %.6f)\n", m.ledger.total_energy(),
                m.ledger.e_comp, m.ledger.e_comm);
    std::printf("battery          %.2f%% -> %.2f%%\n", m.battery_start, m.battery_end);
    std::printf("response time    %.6f s\n", m.response_time);
}

int run_command(const std::string& config_path, long long seed_override,
                const std::string& out_override) {
    enfed::ExperimentConfig cfg = enfed::load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.out = out_override;

    std::vector<std::pair<std::string, enfed::RunMetrics>> results;
    if (cfg.scenario == "enfed" && !cfg.enfed.sweep_collaborators.empty()) {
        for (int count : cfg.enfed.sweep_collaborators) {
            enfed::ExperimentConfig c = cfg;
            c.enfed.nearby = count;
            c.enfed.requester.max_collaborators = count;
            c.enfed.sweep_collaborators.clear();
            if (!c.enfed.reserve_prices.empty())
                c.enfed.reserve_prices.resize(count, c.enfed.reserve_price);
            enfed::RunMetrics m = enfed::run_scenario(c);
            const std::string path = cfg.out + ".c" + std::to_string(count);
            enfed::write_atomic(path, enfed::serialize_metrics(m));
            results.push_back({path, std::move(m)});
        }
        std::printf("%s", enfed::format_report(results).c_str());
    } else {
        enfed::RunMetrics m = enfed::run_scenario(cfg);
        enfed::write_atomic(cfg.out, enfed::serialize_metrics(m));
        print_human_summary(m);
        std::printf("metrics written to %s\n", cfg.out.c_str());
        if (m.outcome == enfed::RunOutcome::NoCollaborators) return kExitNoCollaborators;
    }
    return kExitOk;
}

int gradcheck_command(std::uint64_t seed, bool corrupt) {
    struct Arch {
        const char* name;
        std::vector<int> sizes;
    };
    const std::vector<Arch> archs = {
        {"mlp-64x32", {16, 64, 32, 6}},  // the default classifier shape
        {"mlp-8", {4, 8, 3}},
        {"mlp-16x8x4", {5, 16, 8, 4, 3}},
    };
    bool all_ok = true;
    for (const auto& arch : archs) {
        enfed::Hyperparams hp;
        hp.layer_sizes = arch.sizes;
        const auto report = enfed::gradient_check(hp, seed, 20, 1e-4, 1e-4, corrupt);
        const bool ok = report.passed(1e-4);
        all_ok = all_ok && ok;
        std::printf("%s %-12s coords=%zu max_rel_err=%.3e\n", ok ? "PASS" : "FAIL", arch.name,
                    report.coords_checked, report.max_rel_err);
        for (const auto& f : report.failures) std::printf("  mismatch: %s\n", f.c_str());
    }
    return all_ok ? kExitOk : kExitError;
}

int report_command(const std::vector<std::string>& files) {
    std::vector<std::pair<std::string, enfed::RunMetrics>> entries;
    for (const auto& f : files) entries.push_back({f, enfed::load_metrics(f)});
    std::printf("%s", enfed::format_report(entries).c_str());
    return kExitOk;
}

int partition_command(const std::string& config_path) {
    const enfed::ExperimentConfig cfg = enfed::load_config(config_path);
    const auto parts = enfed::scenario_partitions(cfg);
    int class_count = 0;
    for (const auto& p : parts) class_count = std::max(class_count, p.data.class_count);
    std::printf("%-12s %8s", "device", "rows");
    for (int c = 0; c < class_count; ++c) std::printf(" class%-2d", c);
    std::printf("\n");
    for (const auto& p : parts) {
        std::vector<long> hist(class_count, 0);
        for (int lbl : p.data.labels) ++hist[lbl];
        std::printf("%-12s %8zu", p.device.c_str(), p.data.rows());
        for (long h : hist) std::printf(" %7ld", h);
        std::printf("\n");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EnFed opportunistic federated learning experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    long long seed_override = -1;
    std::string out_override;
    auto* run = app.add_subcommand("run", "execute a scenario from a config file");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--seed", seed_override, "override the master seed");
    run->add_option("--out", out_override, "override the metrics output path");

    std::uint64_t gc_seed = 20240516;
    bool gc_corrupt = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("--seed", gc_seed, "seed for sampled coordinates");
    gradcheck->add_flag("--corrupt", gc_corrupt,
                        "test hook: corrupt one gradient and expect a failure");

    std::vector<std::string> report_files;
    auto* report = app.add_subcommand("report", "comparison table over metrics files");
    report->add_option("files", report_files, "metrics files")->required()->expected(-1);

    std::string part_config;
    bool inspect = false;
    auto* part = app.add_subcommand("partition", "inspect the per-device data partition");
    part->add_option("--config", part_config, "experiment config (JSON)")->required();
    part->add_flag("--inspect", inspect, "print per-device class histograms");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run->parsed()) return run_command(config_path, seed_override, out_override);
        if (gradcheck->parsed()) return gradcheck_command(gc_seed, gc_corrupt);
        if (report->parsed()) return report_command(report_files);
        if (part->parsed()) return partition_command(part_config);
    } catch (const enfed::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const enfed::DivergenceError& e) {
        std::fprintf(stderr, "training diverged: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitOk;
}
