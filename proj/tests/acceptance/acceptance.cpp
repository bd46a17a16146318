// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include "lindistflow_oracle.hpp"
#include "market_oracle.hpp"
#include "slot.hpp"
#include "toy_market.hpp"

#include "p2pfair/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

using namespace p2pfair;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kOracleTol = 1e-6;
constexpr double kVoltageTol = 1e-10;
constexpr double kFairTol = 0.01;
constexpr double kAuditTol = 1e-6;
constexpr double kSquaredVoltageTol = 1e-7;
constexpr double kPositive = 1e-6;
constexpr std::size_t kIterCap = 15;
const std::vector<double> kEpsilonGrid{0.01, 0.02, 0.05, 0.10, 0.20, 0.50, 0.70, 1.00};
constexpr double kPvScale = 132.0 / 1600.0;
constexpr int kPvBus = 12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Result {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------------------

Result oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> size(1, 12);
    std::uniform_real_distribution<double> value(0.0, 100.0);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
        for (auto& v : a) v = value(rng);
        for (auto& v : b) v = value(rng);
        const double lp = wasserstein_lp(a, b).distance;
        const double sorted = wasserstein_sorted_oracle(a, b);
        worst = std::max(worst, std::abs(lp - sorted));
    }
    const double t = seconds_since(t0);
    return {worst <= kOracleTol && t < 10.0,
            "200 pairs, max |lp - sorted| = " + fmt("%.3g", worst) + " (tol 1e-6), " + fmt("%.2f", t) + " s (< 10 s)"};
}

Result micro_clearing() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(424242);
    double worst = 0.0;
    int bad_prices = 0, not_optimal = 0;
    for (int k = 0; k < 50; ++k) {
        testing::Slot slot(testing::random_micro_market(rng), testing::single_line_grid());
        const auto sol = clear_reference(slot.ctx());
        if (sol.status != lp::Status::Optimal) {
            ++not_optimal;
            continue;
        }
        worst = std::max(worst, std::abs(sol.objective - testing::enumerate_reference(slot.peers, 0.25).objective));
        for (Eigen::Index i = 0; i < sol.trades.rows(); ++i) {
            for (Eigen::Index j = 0; j < sol.trades.cols(); ++j) {
                if (sol.trades(i, j) > 1e-9 && slot.peers[static_cast<std::size_t>(i)].sell_floor >
                                                   slot.peers[static_cast<std::size_t>(j)].buy_ceiling) {
                    ++bad_prices;
                }
            }
        }
    }
    const double t = seconds_since(t0);
    return {worst <= kOracleTol && bad_prices == 0 && not_optimal == 0 && t < 30.0,
            "50 markets, max |obj - enumeration| = " + fmt("%.3g", worst) + " (tol 1e-6), " +
                std::to_string(bad_prices) + " trades with ask > bid, " + std::to_string(not_optimal) +
                " non-optimal, " + fmt("%.2f", t) + " s (< 30 s)"};
}

Result lindistflow_equivalence() {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> imp(0.001, 0.1), inj(-0.5, 0.5);
    double worst = 0.0;
    int trees = 0;
    for (int n = 2; n <= 6; ++n) {
        testing::for_each_recursive_tree(n, [&](const std::vector<int>& parent) {
            std::vector<Bus> buses{{0, std::nullopt, 0.0, 0.0}};
            for (int k = 1; k < n; ++k) buses.push_back({k, parent[static_cast<std::size_t>(k)], imp(rng), imp(rng)});
            const auto g = build_grid(buses, SquaredVoltageLimits{1.0, 0.0, 4.0}, 1.0);
            Eigen::VectorXd p(n - 1), q(n - 1);
            std::map<int, double> pm, qm;
            for (std::size_t k = 0; k < g.size(); ++k) {
                p(static_cast<Eigen::Index>(k)) = pm[g.buses()[k]] = inj(rng);
                q(static_cast<Eigen::Index>(k)) = qm[g.buses()[k]] = inj(rng);
            }
            const auto v = g.voltage_profile(p, q);
            const auto ref = testing::recursive_voltages(buses, 1.0, pm, qm);
            for (std::size_t k = 0; k < g.size(); ++k) {
                worst = std::max(worst, std::abs(v(static_cast<Eigen::Index>(k)) - ref.at(g.buses()[k])));
            }
            ++trees;
        });
    }
    return {worst <= kVoltageTol && trees == 153,
            std::to_string(trees) + " rooted trees on 2..6 buses, max |v - recursive| = " + fmt("%.3g", worst) +
                " (tol 1e-10)"};
}

// ---------------------------------------------------------------------------

struct DayRun {
    std::string name;
    Scenario scenario;
    ReferenceRun reference;
    RunSummary summary;
};

std::vector<std::string> pair_labels(const GroupPartition& partition) {
    std::vector<std::string> out;
    for (const auto& [a, b] : partition.pairs()) out.push_back(partition.pair_label(a, b));
    return out;
}

std::vector<SlotUnfairness> slot_rows(const Scenario& s, const std::vector<int>& hours,
                                      const std::vector<const Eigen::MatrixXd*>& trades) {
    const auto active = market_active_slots(s);
    std::vector<SlotUnfairness> out;
    for (std::size_t k = 0; k < hours.size(); ++k) {
        const bool on = std::find(active.begin(), active.end(), hours[k]) != active.end();
        out.push_back(slot_unfairness(hours[k], on, *trades[k], s.partition));
    }
    return out;
}

DayRun reference_day(const std::string& name, const fs::path& spec) {
    DayRun d{name, load_scenario(spec.string()), {}, {}};
    d.reference = run_reference(d.scenario, HourRange{});
    std::vector<const Eigen::MatrixXd*> trades;
    for (const auto& s : d.reference.solutions) trades.push_back(&s.trades);
    d.summary = unfairness_table(pair_labels(d.scenario.partition), slot_rows(d.scenario, d.reference.hours, trades));
    return d;
}

Result desk_unfairness(const DayRun& high, const DayRun& low, double seconds) {
    std::string detail;
    bool ok = seconds < 300.0;
    std::vector<std::string> argmax;
    for (const DayRun* d : {&high, &low}) {
        const auto active = market_active_slots(d->scenario);
        bool contiguous = !active.empty();
        for (std::size_t k = 1; k < active.size(); ++k) contiguous = contiguous && active[k] == active[k - 1] + 1;
        const bool midday = contiguous && active.front() > 0 && active.back() < 23 && active.front() <= 12 &&
                            active.back() >= 12;
        double min_active = std::numeric_limits<double>::infinity();
        for (const auto& row : d->summary.slots) {
            if (row.active) min_active = std::min(min_active, row.d_max);
        }
        const std::string top = d->summary.pair_labels[d->summary.total_argmax];
        argmax.push_back(top);
        ok = ok && midday && min_active > kPositive;
        const std::string window =
            active.empty() ? "none" : std::to_string(active.front()) + ".." + std::to_string(active.back());
        detail += d->name + ": active " + window +
                  (midday ? "" : " (not a contiguous midday window)") + ", min active D_max " +
                  fmt("%.3f", min_active) + ", total arg-max " + top + "; ";
    }
    const bool flip = argmax[0] == "R-P" && argmax[1] == "R-M";
    ok = ok && flip;
    return {ok, detail + (flip ? "flips R-P -> R-M" : "no R-P/R-M flip") + ", " + fmt("%.1f", seconds) + " s (< 300 s)"};
}

// ---------------------------------------------------------------------------

struct FairAudit {
    const Scenario* scenario;
    const ReferenceRun* reference;
    const FairRun* fair;
    std::string name;
};

double recomputed_d_max(const Scenario& s, const Eigen::MatrixXd& trades) {
    return unfairness(trade_distribution(trades, s.partition), DistanceMethod::Sorted).d_max;
}

Result epsilon_sweep(const DayRun& day, const FairRun& fair, double seconds) {
    const std::size_t n_eps = fair.epsilons.size();
    int increases = 0, above_ref = 0, errors = 0;
    std::string plateau_at;
    double worst_increase = 0.0, worst_above = 0.0;
    std::vector<double> totals(n_eps, 0.0);
    for (std::size_t k = 0; k < day.reference.hours.size(); ++k) {
        const double ref = day.summary.slots[k].d_max;
        std::vector<double> column;
        for (std::size_t e = 0; e < n_eps; ++e) {
            const auto& o = fair.outcomes[k][e];
            if (!o.error.empty()) {
                ++errors;
                column.push_back(ref);
                continue;
            }
            column.push_back(recomputed_d_max(day.scenario, o.solution.trades));
            totals[e] += column.back();
            if (column.back() > ref + kFairTol) {
                ++above_ref;
                worst_above = std::max(worst_above, column.back() - ref);
            }
            if (e > 0 && column[e] > column[e - 1] + kFairTol) {
                ++increases;
                worst_increase = std::max(worst_increase, column[e] - column[e - 1]);
            }
        }
        const auto idx = plateau_index(column, kFairTol);
        if (plateau_at.empty() && day.summary.slots[k].active && has_plateau(idx, n_eps) && column[idx] > kFairTol) {
            plateau_at = "hour " + std::to_string(day.reference.hours[k]) + " from eps " +
                         fmt("%g", fair.epsilons[idx] * 100.0) + "% at " + fmt("%.2f", column[idx]) + " kWh";
        }
    }
    const bool ok = increases == 0 && above_ref == 0 && errors == 0 && !plateau_at.empty() && seconds < 1800.0;
    return {ok, day.name + ": " + std::to_string(increases) + " increases (worst " + fmt("%.3g", worst_increase) +
                    "), " + std::to_string(above_ref) + " above reference (worst " + fmt("%.3g", worst_above) +
                    "), " + std::to_string(errors) + " failed runs, plateau " +
                    (plateau_at.empty() ? "none" : plateau_at) + ", totals ref " +
                    fmt("%.2f", day.summary.total_d_max) + " -> eps100 " + fmt("%.2f", totals.back()) + ", " +
                    fmt("%.1f", seconds) + " s (< 1800 s)"};
}

// Group extra profits from trades and bids alone.
std::vector<double> profits_by_hand(const std::vector<Peer>& peers, const GroupPartition& partition,
                                    const Eigen::MatrixXd& x) {
    std::map<std::string, double> by_label;
    for (std::size_t i = 0; i < peers.size(); ++i) {
        for (std::size_t j = 0; j < peers.size(); ++j) {
            const double q = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (q == 0.0) continue;
            const double price = 0.5 * (peers[i].sell_floor + peers[j].buy_ceiling);
            if (!peers[i].pv_actor) by_label[peers[i].group] += q * (price - peers[i].utility_buy_price);
            if (!peers[j].pv_actor) by_label[peers[j].group] += q * (peers[j].utility_sell_price - price);
        }
    }
    std::vector<double> out;
    for (const auto& g : partition.groups) out.push_back(by_label[g.label]);
    return out;
}

Result constraint_audit(const std::vector<FairAudit>& audits) {
    std::size_t runs = 0, failed = 0, errors = 0;
    double worst_profit = 0.0, worst_sell = 0.0, worst_curtail = 0.0, worst_voltage = 0.0;
    std::size_t row_violations = 0;
    for (const auto& a : audits) {
        const Scenario& s = *a.scenario;
        for (std::size_t k = 0; k < a.reference->hours.size(); ++k) {
            const auto& peers = s.slots[static_cast<std::size_t>(a.reference->hours[k])];
            const BidMatch bids = build_bid_match(peers);
            const ClearingContext ctx{peers, bids, s.grid, s.partition};
            const ClearingSolution& ref = a.reference->solutions[k];
            const auto gamma = profits_by_hand(peers, s.partition, ref.trades);
            for (const auto& o : a.fair->outcomes[k]) {
                ++runs;
                if (!o.error.empty()) {
                    ++errors;
                    continue;
                }
                bool ok = true;
                const auto profit = profits_by_hand(peers, s.partition, o.solution.trades);
                for (std::size_t g = 0; g < profit.size(); ++g) {
                    const double short_by = (1.0 - o.epsilon) * std::abs(gamma[g]) - profit[g];
                    worst_profit = std::max(worst_profit, short_by);
                    ok = ok && short_by <= kAuditTol;
                }
                const double sell = o.solution.utility_sell.sum() - ref.utility_sell.sum();
                const double curtail = o.solution.curtailment.sum() - ref.curtailment.sum();
                worst_sell = std::max(worst_sell, sell);
                worst_curtail = std::max(worst_curtail, curtail);
                ok = ok && sell <= kAuditTol && curtail <= kAuditTol;
                const Eigen::VectorXd v = voltages_of(ctx, o.solution.curtailment);
                const double over = std::max(v.maxCoeff() - s.grid.v_upper(), s.grid.v_lower() - v.minCoeff());
                worst_voltage = std::max(worst_voltage, over);
                ok = ok && over <= kSquaredVoltageTol;
                const ReferenceLp market = build_reference_lp(ctx);
                const auto point = to_point(market.layout, market.problem, o.solution);
                const auto violations = lp::check_feasible(market.problem, point, kAuditTol);
                row_violations += violations.size();
                ok = ok && violations.empty();
                if (!ok) ++failed;
            }
        }
    }
    return {failed == 0 && errors == 0 && runs > 0,
            std::to_string(runs - failed - errors) + "/" + std::to_string(runs) + " runs pass; worst profit shortfall " +
                fmt("%.3g", worst_profit) + ", utility export excess " + fmt("%.3g", worst_sell) +
                ", curtailment excess " + fmt("%.3g", worst_curtail) + " (tol 1e-6), squared voltage excess " +
                fmt("%.3g", worst_voltage) + " (tol 1e-7), " + std::to_string(row_violations) +
                " market-row violations, " + std::to_string(errors) + " failed LPs"};
}

Result pv_monotonicity(const std::vector<double>& capacities, const std::vector<double>& totals, double seconds) {
    bool ok = seconds < 1800.0;
    std::string detail = "totals";
    for (std::size_t k = 0; k < totals.size(); ++k) {
        detail += " " + fmt("%g", capacities[k]) + "kW:" + fmt("%.3f", totals[k]);
        if (k > 0 && totals[k] > totals[k - 1] + kFairTol) ok = false;
    }
    return {ok, detail + " (non-increasing within 0.01), " + fmt("%.1f", seconds) + " s (< 1800 s)"};
}

Result algorithm_contract(const std::vector<FairAudit>& audits, const fs::path& scratch) {
    std::size_t runs = 0, over_cap = 0, flag_mismatch = 0, off_oracle = 0, trace_bad = 0, errors = 0;
    double worst_gap = 0.0;
    for (std::size_t a = 0; a < audits.size(); ++a) {
        const auto& audit = audits[a];
        const Scenario& s = *audit.scenario;
        const fs::path dir = scratch / ("run" + std::to_string(a));
        write_fair(dir, s, *audit.reference, *audit.fair);
        for (std::size_t k = 0; k < audit.reference->hours.size(); ++k) {
            const int hour = audit.reference->hours[k];
            for (const auto& o : audit.fair->outcomes[k]) {
                ++runs;
                if (!o.error.empty()) {
                    ++errors;
                    continue;
                }
                if (o.iterations > kIterCap || o.trace.size() != o.iterations || o.trace.empty()) ++over_cap;
                bool any_within = false;
                for (const auto& r : o.trace) any_within = any_within || std::abs(r.d1_out - r.d2) <= kFairTol;
                const bool last_within = std::abs(o.trace.back().d1_out - o.trace.back().d2) <= kFairTol;
                if (o.converged != any_within || (o.converged && !last_within)) ++flag_mismatch;
                const double gap = std::abs(o.d_max - recomputed_d_max(s, o.solution.trades));
                worst_gap = std::max(worst_gap, gap);
                if (gap > kFairTol + 1e-6) ++off_oracle;
                char name[16];
                std::snprintf(name, sizeof name, "h%02d.trace.tsv", hour);
                std::ifstream trace(dir / fair_dir_name(o.epsilon) / name);
                std::size_t lines = 0;
                for (std::string line; std::getline(trace, line);) ++lines;
                if (lines != o.trace.size() + 1) ++trace_bad;
            }
        }
    }
    const bool ok = runs > 0 && over_cap == 0 && flag_mismatch == 0 && off_oracle == 0 && trace_bad == 0 && errors == 0;
    return {ok, std::to_string(runs) + " runs: " + std::to_string(over_cap) + " over cap 15, " +
                    std::to_string(flag_mismatch) + " convergence flag mismatches (tol 0.01), max |D_max - oracle| " +
                    fmt("%.3g", worst_gap) + " (tol 0.010001), " + std::to_string(trace_bad) +
                    " incomplete traces, " + std::to_string(errors) + " failed LPs"};
}

// ---------------------------------------------------------------------------

// File contents with wall-clock fields removed.
std::string comparable(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string name = p.filename().string();
    if (name.size() < 10 || name.substr(name.size() - 10) != ".trace.tsv") return buf.str();
    std::string out, line;
    while (std::getline(buf, line)) out += line.substr(0, line.rfind('\t')) + '\n';
    return out;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name == "timing.tsv" || name == "wall.tsv") continue;
        out[fs::relative(e.path(), root).string()] = comparable(e.path());
    }
    return out;
}

Result determinism(const fs::path& cli, const fs::path& data, const fs::path& scratch) {
    const std::string scenario = (data / "scenarios" / "desk_low.json").string();
    const std::vector<std::pair<std::string, std::string>> commands{
        {"clear-ref", "clear-ref --hours 0..23 --seed 2024"},
        {"clear-fair", "clear-fair --epsilon 100 --hours 11..13"},
        {"sweep-epsilon", "sweep-epsilon --grid 10,100 --hours 11..12"},
        {"sweep-pv", "sweep-pv --capacities 0,1.65 --epsilon 100 --hours 11..12"},
    };
    std::size_t files = 0;
    std::string detail;
    bool ok = true;
    auto run = [&](const std::string& args, const fs::path& out) {
        const std::string cmd = "\"" + cli.string() + "\" " + args + " --scenario \"" + scenario + "\" --out \"" +
                                out.string() + "\" > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    for (const auto& [name, args] : commands) {
        const fs::path a = scratch / (name + "_a"), b = scratch / (name + "_b");
        const int ra = run(args, a), rb = run(args, b);
        bool same = ra == 0 && rb == 0;
        if (same) {
            const auto sa = snapshot(a), sb = snapshot(b);
            same = !sa.empty() && sa == sb;
            files += sa.size();
            // tables rebuilt by the report command match as well
            if (same) {
                const int rr = run("report", a);
                same = rr == 0 && snapshot(a) == sa;
            }
        }
        if (!same) {
            ok = false;
            detail += name + " differs (exit " + std::to_string(ra) + "/" + std::to_string(rb) + "); ";
        }
    }
    return {ok, detail + std::to_string(commands.size()) + " commands run twice plus report, " + std::to_string(files) +
                    " files byte-identical (wall-clock fields excluded)"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s DATA_DIR CLI_BINARY\n", argv[0]);
        return 2;
    }
    const fs::path data = argv[1], cli = argv[2];
    const fs::path scratch = fs::temp_directory_path() / "p2pfair_acceptance";
    fs::remove_all(scratch);
    fs::create_directories(scratch);

    std::map<int, Result> results;
    auto note = [](const char* what) { std::fprintf(stderr, "[acceptance] %s\n", what); };

    note("criterion 1");
    results[1] = oracle_equivalence();
    note("criterion 2");
    results[2] = micro_clearing();
    note("criterion 3");
    results[3] = lindistflow_equivalence();

    note("criterion 4");
    auto t0 = Clock::now();
    const DayRun high = reference_day("high day", data / "scenarios" / "desk_high.json");
    const DayRun low = reference_day("low day", data / "scenarios" / "desk_low.json");
    results[4] = desk_unfairness(high, low, seconds_since(t0));

    note("criterion 5");
    t0 = Clock::now();
    const FairOptions options{kFairTol, kIterCap, {}};
    const FairRun sweep = run_fair(low.scenario, low.reference, kEpsilonGrid, options);
    results[5] = epsilon_sweep(low, sweep, seconds_since(t0));

    note("criterion 7");
    t0 = Clock::now();
    const std::vector<double> capacities{0.0, 5.0 * kPvScale, 10.0 * kPvScale, 15.0 * kPvScale, 20.0 * kPvScale};
    std::vector<Scenario> pv_scenarios;
    std::vector<ReferenceRun> pv_refs;
    std::vector<FairRun> pv_runs;
    pv_scenarios.reserve(capacities.size());
    pv_refs.reserve(capacities.size());
    pv_runs.reserve(capacities.size());
    std::vector<double> pv_totals;
    for (double kw : capacities) {
        pv_scenarios.push_back(add_community_pv(low.scenario, kPvBus, kw));
        pv_refs.push_back(run_reference(pv_scenarios.back(), HourRange{}));
        pv_runs.push_back(run_fair(pv_scenarios.back(), pv_refs.back(), {1.0}, options));
        double total = 0.0;
        for (const auto& slot : pv_runs.back().outcomes) {
            const auto& o = slot.front();
            total += o.error.empty() ? recomputed_d_max(pv_scenarios.back(), o.solution.trades)
                                     : std::numeric_limits<double>::infinity();
        }
        pv_totals.push_back(total);
    }
    results[7] = pv_monotonicity(capacities, pv_totals, seconds_since(t0));

    std::vector<FairAudit> audits{{&low.scenario, &low.reference, &sweep, "epsilon sweep"}};
    for (std::size_t k = 0; k < capacities.size(); ++k) {
        audits.push_back({&pv_scenarios[k], &pv_refs[k], &pv_runs[k], "pv " + fmt("%g", capacities[k])});
    }
    note("criterion 6");
    results[6] = constraint_audit(audits);
    note("criterion 8");
    results[8] = algorithm_contract(audits, scratch / "traces");
    note("criterion 9");
    results[9] = determinism(cli, data, scratch / "determinism");

    bool all = true;
    for (const auto& [id, r] : results) {
        std::printf("criterion %d: %s  %s\n", id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
        all = all && r.pass;
    }
    std::fflush(stdout);
    fs::remove_all(scratch);
    return all ? 0 : 1;
}
