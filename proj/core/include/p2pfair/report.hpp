#pragma once

// Tables over per-slot results and the text files they are computed from.

#include "p2pfair/clearing_fair.hpp"
#include "p2pfair/fairness.hpp"
#include "p2pfair/scenario.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace p2pfair {

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fixed-point with '.' as decimal separator, independent of the locale.
std::string format_fixed(double value, int decimals);
/// Shortest text that reads back to the same double.
std::string format_exact(double value);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
void write_table(const Table& table, std::ostream& out);

struct SlotUnfairness {
    int hour = 0;
    bool active = false;
    std::vector<double> distances;  // per group pair
    double d_max = 0.0;
    std::size_t argmax = 0;
};

struct RunSummary {
    std::vector<std::string> pair_labels;
    std::vector<SlotUnfairness> slots;
    std::vector<double> totals;  // column sums of distances
    double total_d_max = 0.0;    // column sum of d_max
    std::size_t total_argmax = 0;
};

/// One row per slot (inactive slots are zero rows), totals appended.
RunSummary unfairness_table(const std::vector<std::string>& pair_labels, const std::vector<SlotUnfairness>& slots);
Table render(const RunSummary& summary);

/// Unfairness of one slot's trades.
SlotUnfairness slot_unfairness(int hour, bool active, const Eigen::MatrixXd& trades, const GroupPartition& partition);

struct SweepColumn {
    std::string label;
    std::vector<double> d_max;  // per slot row
};

struct SweepSummary {
    std::vector<int> hours;
    std::optional<SweepColumn> reference;
    std::vector<SweepColumn> points;
    std::vector<std::size_t> plateau;  // per slot, index into points
    std::vector<double> totals;        // per point
    std::optional<double> reference_total;
};

/// Index of the first sweep point after which the slot's D_max never drops
/// by more than tol.
std::size_t plateau_index(const std::vector<double>& column_values, double tol);
bool has_plateau(std::size_t index, std::size_t num_points);

SweepSummary sweep_table(std::vector<int> hours, std::optional<SweepColumn> reference, std::vector<SweepColumn> points,
                         double tol = 0.01);
Table render(const SweepSummary& summary);

struct TimingSummary {
    std::vector<int> hours;
    std::vector<SweepColumn> columns;  // wall seconds, reference first
    std::vector<double> averages;
};
TimingSummary timing_table(std::vector<int> hours, std::vector<SweepColumn> columns);
Table render(const TimingSummary& summary);

// --- exported solution files ---

/// "seller buyer kwh" for every non-zero trade, peers by id.
void write_trades(const Eigen::MatrixXd& trades, const std::vector<Peer>& peers, std::ostream& out);
Eigen::MatrixXd read_trades(std::istream& in, const std::vector<Peer>& peers);

/// Per peer: utility exchanges, curtailment and extra profit.
void write_peer_ledger(const ClearingSolution& solution, const std::vector<Peer>& peers,
                       const GroupPartition& partition, std::ostream& out);

void write_trace(const FairOutcome& outcome, const GroupPartition& partition, std::ostream& out);

}  // namespace p2pfair
