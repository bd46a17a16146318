// p2pfair: clears a community P2P market hour by hour, measures group
// unfairness and runs the fair clearing and its sweeps.

#include "p2pfair/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace p2pfair;

namespace {

enum Exit { kOk = 0, kBadInput = 2, kInfeasible = 3, kNotConverged = 4 };

struct Common {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string hours = "0..23";
    std::string out;
};

struct FairFlags {
    double tol = 0.01;
    std::size_t max_iter = 15;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--scenario", c.scenario, "scenario JSON or exported scenario")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "override the scenario seed");
    cmd->add_option("--hours", c.hours, "hour or range H1..H2");
    cmd->add_option("--out", c.out, "output directory")->required();
}

void add_fair(CLI::App* cmd, FairFlags& f) {
    cmd->add_option("--tol", f.tol, "convergence tolerance (kWh)")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", f.max_iter, "alternating iteration cap")->check(CLI::Range(1, 1000));
}

FairOptions options_of(const FairFlags& f) { return FairOptions{f.tol, f.max_iter, {}}; }

Scenario load(const Common& c) {
    Scenario s = load_scenario(c.scenario, c.seed);
    fs::create_directories(c.out);
    std::ofstream copy(fs::path(c.out) / "scenario.tsv", std::ios::binary);
    export_scenario(s, copy);
    return s;
}

// 0 when all fair runs converged, kInfeasible if any failed
int fair_status(const FairRun& run) {
    int status = kOk;
    for (const auto& slot : run.outcomes) {
        for (const auto& o : slot) {
            if (!o.error.empty()) {
                std::fprintf(stderr, "eps %g: %s\n", o.epsilon * 100.0, o.error.c_str());
                return kInfeasible;
            }
            if (!o.converged) status = kNotConverged;
        }
    }
    return status;
}

void print_tables(const fs::path& out) {
    std::printf("results in %s\n", out.string().c_str());
    for (const char* name : {"ref/unfairness.tsv", "sweep_epsilon.tsv", "sweep_pv.tsv"}) {
        std::ifstream in(out / name);
        if (!in) continue;
        std::printf("\n%s\n%s", name, std::string(std::istreambuf_iterator<char>(in), {}).c_str());
    }
}

std::vector<double> percents(const std::vector<double>& values) {
    std::vector<double> out;
    for (double v : values) {
        if (v < 0.0 || v > 100.0) throw ScenarioError("epsilon must lie in [0, 100] percent");
        out.push_back(v / 100.0);
    }
    std::sort(out.begin(), out.end());
    return out;
}

int run_fair_command(const Common& c, const std::vector<double>& epsilons, const FairFlags& f) {
    const Scenario s = load(c);
    const auto ref = run_reference(s, parse_hours(c.hours));
    write_reference(fs::path(c.out) / "ref", s, ref);
    const auto fair = run_fair(s, ref, epsilons, options_of(f));
    write_fair(c.out, s, ref, fair);
    regenerate_report(c.out, s, f.tol);
    print_tables(c.out);
    return fair_status(fair);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peer-to-peer market clearing with group fairness"};
    app.require_subcommand(1);

    Common common;
    FairFlags flags;
    double epsilon = 100.0;
    std::vector<double> grid{1, 2, 5, 10, 20, 50, 70, 100};
    std::vector<double> capacities{0, 5, 10, 15, 20};
    int pv_bus = 12;
    double pv_epsilon = 100.0;

    auto* ref_cmd = app.add_subcommand("clear-ref", "reference clearing (highest bidder)");
    add_common(ref_cmd, common);

    auto* fair_cmd = app.add_subcommand("clear-fair", "fair clearing at one sacrifice level");
    add_common(fair_cmd, common);
    add_fair(fair_cmd, flags);
    fair_cmd->add_option("--epsilon", epsilon, "sacrifice level in percent")->check(CLI::Range(0.0, 100.0));

    auto* sweep_cmd = app.add_subcommand("sweep-epsilon", "fair clearing over a grid of sacrifice levels");
    add_common(sweep_cmd, common);
    add_fair(sweep_cmd, flags);
    sweep_cmd->add_option("--grid", grid, "sacrifice levels in percent")->delimiter(',');

    auto* pv_cmd = app.add_subcommand("sweep-pv", "reference and fair clearing per community PV capacity");
    add_common(pv_cmd, common);
    add_fair(pv_cmd, flags);
    pv_cmd->add_option("--capacities", capacities, "plant capacities in kW")->delimiter(',');
    pv_cmd->add_option("--pv-bus", pv_bus, "bus of the community plant");
    pv_cmd->add_option("--epsilon", pv_epsilon, "sacrifice level in percent")->check(CLI::Range(0.0, 100.0));

    auto* report_cmd = app.add_subcommand("report", "rebuild all tables from exported results");
    report_cmd->add_option("--scenario", common.scenario, "scenario used for the results")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--seed", common.seed, "override the scenario seed");
    report_cmd->add_option("--out", common.out, "results directory")->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--tol", flags.tol, "plateau tolerance (kWh)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (*ref_cmd) {
            const Scenario s = load(common);
            write_reference(fs::path(common.out) / "ref", s, run_reference(s, parse_hours(common.hours)));
            regenerate_report(common.out, s, flags.tol);
            print_tables(common.out);
            return kOk;
        }
        if (*fair_cmd) return run_fair_command(common, percents({epsilon}), flags);
        if (*sweep_cmd) return run_fair_command(common, percents(grid), flags);
        if (*pv_cmd) {
            const Scenario base = load(common);
            const auto range = parse_hours(common.hours);
            const auto eps = percents({pv_epsilon});
            int status = kOk;
            for (double kw : capacities) {
                if (kw < 0.0) throw ScenarioError("capacities must be non-negative");
                const Scenario s = add_community_pv(base, pv_bus, kw);
                const fs::path dir = fs::path(common.out) / pv_dir_name(kw);
                write_plant(dir, pv_bus, kw);
                const auto ref = run_reference(s, range);
                write_reference(dir / "ref", s, ref);
                const auto fair = run_fair(s, ref, eps, options_of(flags));
                write_fair(dir, s, ref, fair);
                status = std::max(status, fair_status(fair));
            }
            regenerate_report(common.out, base, flags.tol);
            print_tables(common.out);
            return status;
        }
        if (*report_cmd) {
            const Scenario s = load_scenario(common.scenario, common.seed);
            const auto n = regenerate_report(common.out, s, flags.tol);
            std::printf("%zu tables written\n", n);
            print_tables(common.out);
            return kOk;
        }
    } catch (const InfeasibleModel& e) {
        std::fprintf(stderr, "infeasible: %s\n", e.what());
        return kInfeasible;
    } catch (const FairClearingError& e) {
        std::fprintf(stderr, "fair clearing: %s\n", e.what());
        return kInfeasible;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadInput;
    }
    return kOk;
}
