#include "p2pfair/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <regex>
#include <thread>

namespace p2pfair {

namespace fs = std::filesystem;

namespace {

std::string hour_name(int hour) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "h%02d", hour);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ReportError("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ReportError("cannot read " + path.string());
    return in;
}

// Runs body(k) for k in [0, n) on up to hardware_concurrency threads;
// exceptions surface in index order.
template <class F>
void parallel_for(std::size_t n, F body) {
    const std::size_t width = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::vector<std::future<void>> jobs;
    std::size_t next = 0;
    while (next < n) {
        jobs.clear();
        for (; next < n && jobs.size() < width; ++next) jobs.push_back(std::async(std::launch::async, body, next));
        for (auto& j : jobs) j.get();
    }
}

std::vector<std::string> pair_labels(const GroupPartition& partition) {
    std::vector<std::string> out;
    for (const auto& [a, b] : partition.pairs()) out.push_back(partition.pair_label(a, b));
    return out;
}

void write_unfairness(const fs::path& dir, const Scenario& scenario, const std::vector<SlotUnfairness>& slots) {
    auto out = open_out(dir / "unfairness.tsv");
    write_table(render(unfairness_table(pair_labels(scenario.partition), slots)), out);
}

std::vector<std::pair<int, double>> read_wall(const fs::path& dir) {
    auto in = open_in(dir / "wall.tsv");
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<int, double>> out;
    int hour = 0;
    double seconds = 0.0;
    while (in >> hour >> seconds) out.emplace_back(hour, seconds);
    return out;
}

void write_wall(const fs::path& dir, const std::vector<int>& hours, const std::vector<double>& seconds) {
    auto out = open_out(dir / "wall.tsv");
    out << "hour\tseconds\n";
    for (std::size_t k = 0; k < hours.size(); ++k) out << hours[k] << '\t' << format_fixed(seconds[k], 6) << '\n';
}

std::vector<double> column_d_max(const std::vector<SlotUnfairness>& slots) {
    std::vector<double> out;
    for (const auto& s : slots) out.push_back(s.d_max);
    return out;
}

// fair_eps<E> directories sorted by epsilon
std::vector<std::pair<double, fs::path>> fair_dirs(const fs::path& root) {
    static const std::regex pattern(R"(fair_eps([0-9.]+))");
    std::vector<std::pair<double, fs::path>> out;
    if (!fs::exists(root)) return out;
    for (const auto& e : fs::directory_iterator(root)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (e.is_directory() && std::regex_match(name, m, pattern)) out.emplace_back(std::stod(m[1]) / 100.0, e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<double, fs::path>> pv_dirs(const fs::path& root) {
    static const std::regex pattern(R"(pv_([0-9.]+)kw)");
    std::vector<std::pair<double, fs::path>> out;
    for (const auto& e : fs::directory_iterator(root)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (e.is_directory() && std::regex_match(name, m, pattern)) out.emplace_back(std::stod(m[1]), e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Long-format per-peer trade volumes of every slot of a run, for histograms.
void write_distributions(const fs::path& dir, const Scenario& scenario, const std::vector<int>& hours) {
    auto out = open_out(dir / "distributions.tsv");
    out << "hour\tgroup\tpeer\tkwh\n";
    for (int h : hours) {
        const auto& peers = scenario.slots[static_cast<std::size_t>(h)];
        auto in = open_in(dir / (hour_name(h) + ".trades.tsv"));
        const auto dist = trade_distribution(read_trades(in, peers), scenario.partition);
        for (std::size_t g = 0; g < dist.size(); ++g) {
            const auto& members = scenario.partition.groups[g].members;
            for (std::size_t k = 0; k < members.size(); ++k) {
                out << h << '\t' << dist[g].label << '\t' << peers[members[k]].id << '\t'
                    << format_exact(dist[g].values[k]) << '\n';
            }
        }
    }
}

// Community totals per hour: load, production and surplus/deficit.
void write_profile(const fs::path& root, const Scenario& scenario) {
    auto out = open_out(root / "profile.tsv");
    out << "hour\tconsumption\tproduction\tsurplus\tdeficit\n";
    for (std::size_t h = 0; h < scenario.slots.size(); ++h) {
        double c = 0.0, e = 0.0, surplus = 0.0, deficit = 0.0;
        for (const auto& p : scenario.slots[h]) {
            c += p.consumption;
            e += p.production;
            const double net = surplus_deficit(p);
            if (net > 0.0) surplus += net;
            else deficit -= net;
        }
        out << h << '\t' << format_fixed(c, 2) << '\t' << format_fixed(e, 2) << '\t' << format_fixed(surplus, 2)
            << '\t' << format_fixed(deficit, 2) << '\n';
    }
}

std::string percent_label(double epsilon) { return format_exact(std::round(epsilon * 1e8) / 1e6); }

// Tables of one result tree (reference plus fair runs); returns count.
std::size_t regenerate_tree(const fs::path& root, const Scenario& scenario, double tol) {
    std::size_t written = 0;
    std::vector<int> hours;
    const auto ref = read_run_unfairness(root / "ref", scenario, &hours);
    write_unfairness(root / "ref", scenario, ref);
    write_distributions(root / "ref", scenario, hours);
    write_profile(root, scenario);
    written += 3;
    std::vector<SweepColumn> points, timing{{"ref", {}}};
    for (const auto& [hour, seconds] : read_wall(root / "ref")) timing[0].d_max.push_back(seconds);
    for (const auto& [eps, dir] : fair_dirs(root)) {
        const auto slots = read_run_unfairness(dir, scenario);
        write_unfairness(dir, scenario, slots);
        std::vector<int> run_hours;
        for (const auto& slot : slots) run_hours.push_back(slot.hour);
        write_distributions(dir, scenario, run_hours);
        written += 2;
        points.push_back({"eps" + percent_label(eps), column_d_max(slots)});
        SweepColumn wall{"eps" + percent_label(eps), {}};
        for (const auto& [hour, seconds] : read_wall(dir)) wall.d_max.push_back(seconds);
        timing.push_back(std::move(wall));
    }
    if (!points.empty()) {
        auto out = open_out(root / "sweep_epsilon.tsv");
        write_table(render(sweep_table(hours, SweepColumn{"ref", column_d_max(ref)}, points, tol)), out);
        ++written;
    }
    auto out = open_out(root / "timing.tsv");
    write_table(render(timing_table(hours, timing)), out);
    return written + 1;
}

}  // namespace

std::vector<int> HourRange::hours() const {
    std::vector<int> out;
    for (int h = first; h <= last; ++h) out.push_back(h);
    return out;
}

HourRange parse_hours(const std::string& text) {
    static const std::regex pattern(R"((\d{1,2})(?:\.\.(\d{1,2}))?)");
    std::smatch m;
    if (!std::regex_match(text, m, pattern)) throw ScenarioError("hours must look like H or H1..H2: " + text);
    HourRange r{std::stoi(m[1]), m[2].matched ? std::stoi(m[2]) : std::stoi(m[1])};
    if (r.first < 0 || r.last >= static_cast<int>(kHours) || r.first > r.last) {
        throw ScenarioError("hour range out of 0..23: " + text);
    }
    return r;
}

ReferenceRun run_reference(const Scenario& scenario, const HourRange& range, const lp::SolveOptions& lp) {
    ReferenceRun run;
    run.hours = range.hours();
    const auto active = market_active_slots(scenario);
    run.solutions.resize(run.hours.size());
    for (int h : run.hours) run.active.push_back(std::find(active.begin(), active.end(), h) != active.end());
    parallel_for(run.hours.size(), [&](std::size_t k) {
        const auto& peers = scenario.slots[static_cast<std::size_t>(run.hours[k])];
        const BidMatch bids = build_bid_match(peers);
        run.solutions[k] = clear_reference(ClearingContext{peers, bids, scenario.grid, scenario.partition}, lp);
        if (run.solutions[k].status != lp::Status::Optimal) {
            throw InfeasibleModel("reference clearing at hour " + std::to_string(run.hours[k]) + " ended " +
                                  lp::to_string(run.solutions[k].status));
        }
    });
    return run;
}

FairRun run_fair(const Scenario& scenario, const ReferenceRun& reference, const std::vector<double>& epsilons,
                 const FairOptions& options) {
    FairRun run{epsilons, std::vector<std::vector<FairOutcome>>(reference.hours.size())};
    parallel_for(reference.hours.size(), [&](std::size_t k) {
        const auto& peers = scenario.slots[static_cast<std::size_t>(reference.hours[k])];
        const BidMatch bids = build_bid_match(peers);
        const ClearingContext ctx{peers, bids, scenario.grid, scenario.partition};
        run.outcomes[k] = epsilon_sweep(ctx, reference.solutions[k], epsilons, options);
    });
    return run;
}

std::string fair_dir_name(double epsilon) { return "fair_eps" + percent_label(epsilon); }

std::string pv_dir_name(double capacity_kw) { return "pv_" + format_exact(capacity_kw) + "kw"; }

void write_reference(const fs::path& dir, const Scenario& scenario, const ReferenceRun& run) {
    std::vector<double> wall;
    for (std::size_t k = 0; k < run.hours.size(); ++k) {
        const auto& peers = scenario.slots[static_cast<std::size_t>(run.hours[k])];
        auto trades = open_out(dir / (hour_name(run.hours[k]) + ".trades.tsv"));
        write_trades(run.solutions[k].trades, peers, trades);
        auto ledger = open_out(dir / (hour_name(run.hours[k]) + ".peers.tsv"));
        write_peer_ledger(run.solutions[k], peers, scenario.partition, ledger);
        wall.push_back(run.solutions[k].wall_seconds);
    }
    write_wall(dir, run.hours, wall);
}

void write_fair(const fs::path& out, const Scenario& scenario, const ReferenceRun& reference, const FairRun& run) {
    for (std::size_t e = 0; e < run.epsilons.size(); ++e) {
        const fs::path dir = out / fair_dir_name(run.epsilons[e]);
        std::vector<double> wall;
        auto runs = open_out(dir / "runs.tsv");
        runs << "hour\tconverged\titerations\td_max\terror\n";
        for (std::size_t k = 0; k < reference.hours.size(); ++k) {
            const int hour = reference.hours[k];
            const auto& peers = scenario.slots[static_cast<std::size_t>(hour)];
            const FairOutcome& o = run.outcomes[k][e];
            runs << hour << '\t' << (o.converged ? 1 : 0) << '\t' << o.iterations << '\t' << format_exact(o.d_max)
                 << '\t' << (o.error.empty() ? "-" : o.error) << '\n';
            double seconds = 0.0;
            for (const auto& r : o.trace) seconds += r.wall_seconds;
            wall.push_back(seconds);
            auto trace = open_out(dir / (hour_name(hour) + ".trace.tsv"));
            write_trace(o, scenario.partition, trace);
            if (!o.error.empty()) {
                auto trades = open_out(dir / (hour_name(hour) + ".trades.tsv"));
                trades << "seller\tbuyer\tkwh\n";
                continue;
            }
            auto trades = open_out(dir / (hour_name(hour) + ".trades.tsv"));
            write_trades(o.solution.trades, peers, trades);
            auto ledger = open_out(dir / (hour_name(hour) + ".peers.tsv"));
            write_peer_ledger(o.solution, peers, scenario.partition, ledger);
        }
        write_wall(dir, reference.hours, wall);
    }
}

void write_plant(const fs::path& dir, int bus, double capacity_kw) {
    auto out = open_out(dir / "plant.tsv");
    out << "bus\tcapacity_kw\n" << bus << '\t' << format_exact(capacity_kw) << '\n';
}

std::vector<SlotUnfairness> read_run_unfairness(const fs::path& dir, const Scenario& scenario, std::vector<int>* hours) {
    static const std::regex pattern(R"(h(\d\d)\.trades\.tsv)");
    std::vector<int> found;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, pattern)) found.push_back(std::stoi(m[1]));
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) throw ReportError("no trade files in " + dir.string());
    const auto active = market_active_slots(scenario);
    std::vector<SlotUnfairness> out;
    for (int h : found) {
        if (h >= static_cast<int>(scenario.slots.size())) throw ReportError("hour out of range in " + dir.string());
        auto in = open_in(dir / (hour_name(h) + ".trades.tsv"));
        const auto trades = read_trades(in, scenario.slots[static_cast<std::size_t>(h)]);
        const bool on = std::find(active.begin(), active.end(), h) != active.end();
        out.push_back(slot_unfairness(h, on, trades, scenario.partition));
    }
    if (hours) *hours = found;
    return out;
}

std::size_t regenerate_report(const fs::path& out, const Scenario& scenario, double tol) {
    std::size_t written = 0;
    if (fs::exists(out / "ref")) written += regenerate_tree(out, scenario, tol);
    const auto pv = pv_dirs(out);
    if (pv.empty()) {
        if (written == 0) throw ReportError("no results under " + out.string());
        return written;
    }
    std::vector<int> hours;
    std::vector<SweepColumn> fair_points, ref_points;
    for (const auto& [capacity, dir] : pv) {
        auto plant = open_in(dir / "plant.tsv");
        std::string header;
        std::getline(plant, header);
        int bus = 0;
        double kw = 0.0;
        if (!(plant >> bus >> kw)) throw ReportError("malformed " + (dir / "plant.tsv").string());
        const Scenario with_pv = add_community_pv(scenario, bus, kw);
        written += regenerate_tree(dir, with_pv, tol);
        const std::string label = format_exact(capacity) + "kw";
        ref_points.push_back({label, column_d_max(read_run_unfairness(dir / "ref", with_pv, &hours))});
        const auto fair = fair_dirs(dir);
        if (!fair.empty()) fair_points.push_back({label, column_d_max(read_run_unfairness(fair.back().second, with_pv))});
    }
    {
        auto f = open_out(out / "sweep_pv_ref.tsv");
        write_table(render(sweep_table(hours, std::nullopt, ref_points, tol)), f);
    }
    if (!fair_points.empty()) {
        auto f = open_out(out / "sweep_pv.tsv");
        write_table(render(sweep_table(hours, std::nullopt, fair_points, tol)), f);
    }
    return written + 2;
}

}  // namespace p2pfair
