#pragma once

// Reference ("sell to the highest bidder") market clearing and the
// per-peer extra-profit ledger.

#include "p2pfair/grid.hpp"
#include "p2pfair/lp.hpp"
#include "p2pfair/market.hpp"

#include <Eigen/Dense>

#include <vector>

namespace p2pfair {

/// Everything a slot clearing reads. Non-owning.
struct ClearingContext {
    const std::vector<Peer>& peers;
    const BidMatch& bids;
    const GridModel& grid;
    const GroupPartition& partition;
};

struct TradeVar {
    std::size_t seller;
    std::size_t buyer;
    std::size_t var;
};

/// Variable and row indices of the shared market block: trade variables
/// (only where Y = 1), utility exchanges and curtailment per peer, one energy
/// balance row per peer and the voltage rows.
struct MarketLayout {
    std::vector<TradeVar> trades;
    std::vector<std::size_t> utility_buy;   // energy the peer buys from the utility
    std::vector<std::size_t> utility_sell;  // energy the peer sells to the utility
    std::vector<std::size_t> curtail;
    std::vector<std::size_t> balance_rows;
    std::vector<std::size_t> voltage_rows;
    /// Voltage rows are multiplied by the grid base power; see voltage_of().
    double voltage_row_scale = 1.0;
};

/// Adds the market variables and rows to `problem`: energy balance, bounded
/// curtailment, bid matching through Y and M, and both voltage limits at
/// every non-substation bus. Objective coefficients are left at zero.
/// Throws MarketError when a peer sits on a bus the grid does not know.
MarketLayout add_market_block(lp::Problem& problem, const ClearingContext& ctx);

/// Extra profit of one executed kWh: the seller's margin over the utility
/// buyback price and the buyer's saving under its utility selling price.
struct TradeMargins {
    double seller;
    double buyer;
};
TradeMargins trade_margins(const Peer& seller, const Peer& buyer);

struct ReferenceLp {
    lp::Problem problem;
    MarketLayout layout;
};

ReferenceLp build_reference_lp(const ClearingContext& ctx);

struct ClearingSolution {
    lp::Status status = lp::Status::IterationLimit;
    Eigen::MatrixXd trades;        // X(i, j): kWh sold by i to j
    Eigen::VectorXd utility_buy;   // kWh bought from the utility
    Eigen::VectorXd utility_sell;  // kWh sold to the utility
    Eigen::VectorXd curtailment;
    double objective = 0.0;
    std::size_t iterations = 0;
    double wall_seconds = 0.0;
};

/// Extracts a ClearingSolution from an LP point laid out by `layout`.
ClearingSolution extract_solution(const MarketLayout& layout, std::size_t num_peers, const lp::Solution& sol);

/// Inverse of extract_solution on the market block variables; other
/// variables of `problem` stay zero.
std::vector<double> to_point(const MarketLayout& layout, const lp::Problem& problem, const ClearingSolution& sol);

ClearingSolution clear_reference(const ClearingContext& ctx, const lp::SolveOptions& options = {});

struct RevenueLedger {
    std::vector<double> per_peer;
    std::vector<double> per_group;  // indexed like partition.groups
    double pv_group = 0.0;
};

RevenueLedger compute_revenue(const ClearingSolution& solution, const std::vector<Peer>& peers,
                              const GroupPartition& partition);

/// Squared voltage at each non-substation bus (ordered like grid.buses())
/// for the given curtailment.
Eigen::VectorXd voltages_of(const ClearingContext& ctx, const Eigen::VectorXd& curtailment);

}  // namespace p2pfair
