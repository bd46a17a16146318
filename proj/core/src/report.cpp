#include "p2pfair/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace p2pfair {

std::string format_fixed(double value, int decimals) {
    if (std::abs(value) < 0.5 * std::pow(10.0, -decimals)) value = 0.0;  // no "-0.00"
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, decimals);
    return std::string(buf, res.ptr);
}

std::string format_exact(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void write_table(const Table& table, std::ostream& out) {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) out << (k ? "\t" : "") << cells[k];
        out << '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
}

SlotUnfairness slot_unfairness(int hour, bool active, const Eigen::MatrixXd& trades, const GroupPartition& partition) {
    SlotUnfairness out;
    out.hour = hour;
    out.active = active;
    if (partition.num_groups() < 2) return out;
    const auto rep = unfairness(trade_distribution(trades, partition));
    for (const auto& p : rep.pairs) out.distances.push_back(p.distance);
    out.d_max = rep.d_max;
    out.argmax = rep.argmax;
    return out;
}

RunSummary unfairness_table(const std::vector<std::string>& pair_labels, const std::vector<SlotUnfairness>& slots) {
    RunSummary s{pair_labels, slots, std::vector<double>(pair_labels.size(), 0.0), 0.0, 0};
    for (auto& slot : s.slots) {
        if (slot.distances.empty()) slot.distances.assign(pair_labels.size(), 0.0);
        if (slot.distances.size() != pair_labels.size()) throw ReportError("slot with the wrong number of pairs");
        for (std::size_t k = 0; k < slot.distances.size(); ++k) s.totals[k] += slot.distances[k];
        s.total_d_max += slot.d_max;
    }
    for (std::size_t k = 1; k < s.totals.size(); ++k) {
        if (s.totals[k] > s.totals[s.total_argmax]) s.total_argmax = k;
    }
    return s;
}

Table render(const RunSummary& s) {
    Table t;
    t.header.push_back("hour");
    for (const auto& l : s.pair_labels) t.header.push_back("d_" + l);
    t.header.insert(t.header.end(), {"d_max", "argmax"});
    for (const auto& slot : s.slots) {
        std::vector<std::string> row{std::to_string(slot.hour)};
        for (double d : slot.distances) row.push_back(format_fixed(d, 2));
        row.push_back(format_fixed(slot.d_max, 2));
        row.push_back(slot.active && !s.pair_labels.empty() ? s.pair_labels[slot.argmax] : "-");
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> total{"total"};
    for (double d : s.totals) total.push_back(format_fixed(d, 2));
    total.push_back(format_fixed(s.total_d_max, 2));
    total.push_back(s.pair_labels.empty() ? "-" : s.pair_labels[s.total_argmax]);
    t.rows.push_back(std::move(total));
    return t;
}

std::size_t plateau_index(const std::vector<double>& v, double tol) {
    if (v.empty()) return 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        bool flat = true;
        for (std::size_t j = k + 1; j < v.size() && flat; ++j) flat = v[j] >= v[k] - tol;
        if (flat) return k;
    }
    return v.size() - 1;
}

bool has_plateau(std::size_t index, std::size_t num_points) { return index + 1 < num_points; }

SweepSummary sweep_table(std::vector<int> hours, std::optional<SweepColumn> reference, std::vector<SweepColumn> points,
                         double tol) {
    SweepSummary s{std::move(hours), std::move(reference), std::move(points), {}, {}, std::nullopt};
    auto check = [&](const SweepColumn& c) {
        if (c.d_max.size() != s.hours.size()) throw ReportError("sweep column " + c.label + " has the wrong length");
    };
    if (s.reference) {
        check(*s.reference);
        s.reference_total = std::accumulate(s.reference->d_max.begin(), s.reference->d_max.end(), 0.0);
    }
    for (const auto& c : s.points) {
        check(c);
        s.totals.push_back(std::accumulate(c.d_max.begin(), c.d_max.end(), 0.0));
    }
    for (std::size_t r = 0; r < s.hours.size(); ++r) {
        std::vector<double> row;
        for (const auto& c : s.points) row.push_back(c.d_max[r]);
        s.plateau.push_back(plateau_index(row, tol));
    }
    return s;
}

Table render(const SweepSummary& s) {
    Table t;
    t.header.push_back("hour");
    if (s.reference) t.header.push_back(s.reference->label);
    for (const auto& c : s.points) t.header.push_back(c.label);
    t.header.push_back("plateau");
    for (std::size_t r = 0; r < s.hours.size(); ++r) {
        std::vector<std::string> row{std::to_string(s.hours[r])};
        if (s.reference) row.push_back(format_fixed(s.reference->d_max[r], 2));
        for (const auto& c : s.points) row.push_back(format_fixed(c.d_max[r], 2));
        row.push_back(s.points.empty() || !has_plateau(s.plateau[r], s.points.size()) ? "-"
                                                                                     : s.points[s.plateau[r]].label);
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> total{"total"};
    if (s.reference_total) total.push_back(format_fixed(*s.reference_total, 2));
    for (double v : s.totals) total.push_back(format_fixed(v, 2));
    total.push_back("-");
    t.rows.push_back(std::move(total));
    return t;
}

TimingSummary timing_table(std::vector<int> hours, std::vector<SweepColumn> columns) {
    TimingSummary s{std::move(hours), std::move(columns), {}};
    for (const auto& c : s.columns) {
        if (c.d_max.size() != s.hours.size()) throw ReportError("timing column " + c.label + " has the wrong length");
        s.averages.push_back(c.d_max.empty() ? 0.0
                                             : std::accumulate(c.d_max.begin(), c.d_max.end(), 0.0) /
                                                   static_cast<double>(c.d_max.size()));
    }
    return s;
}

Table render(const TimingSummary& s) {
    Table t;
    t.header.push_back("hour");
    for (const auto& c : s.columns) t.header.push_back(c.label);
    for (std::size_t r = 0; r < s.hours.size(); ++r) {
        std::vector<std::string> row{std::to_string(s.hours[r])};
        for (const auto& c : s.columns) row.push_back(format_fixed(c.d_max[r], 3));
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> avg{"average"};
    for (double v : s.averages) avg.push_back(format_fixed(v, 3));
    t.rows.push_back(std::move(avg));
    return t;
}

void write_trades(const Eigen::MatrixXd& trades, const std::vector<Peer>& peers, std::ostream& out) {
    out << "seller\tbuyer\tkwh\n";
    for (Eigen::Index i = 0; i < trades.rows(); ++i) {
        for (Eigen::Index j = 0; j < trades.cols(); ++j) {
            if (trades(i, j) == 0.0) continue;
            out << peers[static_cast<std::size_t>(i)].id << '\t' << peers[static_cast<std::size_t>(j)].id << '\t'
                << format_exact(trades(i, j)) << '\n';
        }
    }
}

Eigen::MatrixXd read_trades(std::istream& in, const std::vector<Peer>& peers) {
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < peers.size(); ++i) index[peers[i].id] = static_cast<Eigen::Index>(i);
    const auto n = static_cast<Eigen::Index>(peers.size());
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
    std::string line;
    std::getline(in, line);
    if (line != "seller\tbuyer\tkwh") throw ReportError("trades file without the expected header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream f(line);
        std::string s, b, v;
        if (!std::getline(f, s, '\t') || !std::getline(f, b, '\t') || !std::getline(f, v)) {
            throw ReportError("malformed trade line: " + line);
        }
        const auto is = index.find(s), ib = index.find(b);
        if (is == index.end() || ib == index.end()) throw ReportError("trade with unknown peer: " + line);
        double kwh = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), kwh);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ReportError("bad quantity: " + line);
        x(is->second, ib->second) = kwh;
    }
    return x;
}

void write_peer_ledger(const ClearingSolution& solution, const std::vector<Peer>& peers,
                       const GroupPartition& partition, std::ostream& out) {
    const auto ledger = compute_revenue(solution, peers, partition);
    out << "peer\tgroup\tutility_buy\tutility_sell\tcurtailment\tprofit\n";
    for (std::size_t i = 0; i < peers.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << peers[i].id << '\t' << peers[i].group << '\t' << format_exact(solution.utility_buy(k)) << '\t'
            << format_exact(solution.utility_sell(k)) << '\t' << format_exact(solution.curtailment(k)) << '\t'
            << format_exact(ledger.per_peer[i]) << '\n';
    }
}

void write_trace(const FairOutcome& outcome, const GroupPartition& partition, std::ostream& out) {
    out << "iter\td1_in\td2\td1_out";
    for (const auto& g : partition.groups) out << "\tprofit_" << g.label;
    out << "\tlp_iterations\twall_seconds\n";
    for (const auto& r : outcome.trace) {
        out << r.iter << '\t' << format_exact(r.d1_in) << '\t' << format_exact(r.d2) << '\t' << format_exact(r.d1_out);
        for (double p : r.group_profit) out << '\t' << format_exact(p);
        out << '\t' << r.lp_iterations << '\t' << format_fixed(r.wall_seconds, 6) << '\n';
    }
}

}  // namespace p2pfair
