#include "p2pfair/clearing_ref.hpp"

#include <chrono>
#include <cmath>

namespace p2pfair {

namespace {

struct NodalInjections {
    Eigen::VectorXd p;  // per unit, no curtailment
    Eigen::VectorXd q;
    std::vector<std::optional<std::size_t>> peer_bus;
};

NodalInjections nodal_injections(const ClearingContext& ctx, const Eigen::VectorXd* curtailment) {
    const auto n = static_cast<Eigen::Index>(ctx.grid.size());
    NodalInjections out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), {}};
    out.peer_bus.reserve(ctx.peers.size());
    for (std::size_t i = 0; i < ctx.peers.size(); ++i) {
        const auto& peer = ctx.peers[i];
        if (!ctx.grid.contains(peer.bus)) {
            throw MarketError("peer " + peer.id + " is on unknown bus " + std::to_string(peer.bus));
        }
        const auto idx = ctx.grid.index_of(peer.bus);
        out.peer_bus.push_back(idx);
        if (!idx) continue;
        double net = peer.production - peer.consumption;
        if (curtailment) net -= (*curtailment)(static_cast<Eigen::Index>(i));
        // hourly kWh read as average kW over the slot
        out.p(static_cast<Eigen::Index>(*idx)) += net / ctx.grid.base_kva();
        out.q(static_cast<Eigen::Index>(*idx)) += peer.reactive_pu;
    }
    return out;
}

}  // namespace

MarketLayout add_market_block(lp::Problem& problem, const ClearingContext& ctx) {
    const auto& peers = ctx.peers;
    const std::size_t n = peers.size();
    if (ctx.bids.size() != n) throw MarketError("bid match size does not match the peer list");
    for (const auto& p : peers) validate_peer(p);

    MarketLayout layout;
    layout.utility_buy.resize(n);
    layout.utility_sell.resize(n);
    layout.curtail.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = peers[i];
        const bool seller = is_seller(p);
        layout.utility_buy[i] = problem.add_variable(0.0, seller ? 0.0 : lp::kInf, 0.0, "ubuy[" + p.id + "]");
        layout.utility_sell[i] = problem.add_variable(0.0, seller ? lp::kInf : 0.0, 0.0, "usell[" + p.id + "]");
        layout.curtail[i] = problem.add_variable(0.0, seller ? p.production : 0.0, 0.0, "curtail[" + p.id + "]");
    }
    std::vector<std::vector<lp::Term>> balance(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!ctx.bids.feasible(i, j)) continue;
            const auto v = problem.add_variable(0.0, ctx.bids.big_m(i), 0.0, "x[" + peers[i].id + "," + peers[j].id + "]");
            layout.trades.push_back(TradeVar{i, j, v});
            balance[i].push_back({v, 1.0});
            balance[j].push_back({v, -1.0});
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        balance[i].push_back({layout.utility_sell[i], 1.0});
        balance[i].push_back({layout.utility_buy[i], -1.0});
        balance[i].push_back({layout.curtail[i], 1.0});
        layout.balance_rows.push_back(problem.add_constraint(std::move(balance[i]), lp::Relation::Equal,
                                                             surplus_deficit(peers[i]), "balance[" + peers[i].id + "]"));
    }

    const NodalInjections base = nodal_injections(ctx, nullptr);
    const double scale = ctx.grid.base_kva();
    layout.voltage_row_scale = scale;
    const auto& r_sens = ctx.grid.resistance_sensitivity();
    const auto rows = ctx.grid.voltage_constraint_rows();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& row = rows[k];
        const double fixed = row.p_coef.dot(base.p) + row.q_coef.dot(base.q);
        std::vector<lp::Term> terms;
        for (std::size_t i = 0; i < n; ++i) {
            if (!base.peer_bus[i] || !has_surplus(peers[i])) continue;
            const double coef = -r_sens(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(*base.peer_bus[i]));
            if (coef != 0.0) terms.push_back({layout.curtail[i], coef});
        }
        const std::string bus = std::to_string(row.bus);
        if (std::isfinite(row.lower_rhs)) {
            layout.voltage_rows.push_back(problem.add_constraint(terms, lp::Relation::GreaterEqual,
                                                                 (row.lower_rhs - fixed) * scale, "vmin[" + bus + "]"));
        }
        if (std::isfinite(row.upper_rhs)) {
            layout.voltage_rows.push_back(problem.add_constraint(std::move(terms), lp::Relation::LessEqual,
                                                                 (row.upper_rhs - fixed) * scale, "vmax[" + bus + "]"));
        }
    }
    return layout;
}

TradeMargins trade_margins(const Peer& seller, const Peer& buyer) {
    const double price = trade_price(seller, buyer);
    return {price - seller.utility_buy_price, buyer.utility_sell_price - price};
}

ReferenceLp build_reference_lp(const ClearingContext& ctx) {
    ReferenceLp out{lp::Problem(lp::Sense::Maximize), {}};
    out.layout = add_market_block(out.problem, ctx);
    for (const auto& t : out.layout.trades) {
        out.problem.set_objective(t.var, trade_margins(ctx.peers[t.seller], ctx.peers[t.buyer]).seller);
    }
    return out;
}

ClearingSolution extract_solution(const MarketLayout& layout, std::size_t num_peers, const lp::Solution& sol) {
    const auto n = static_cast<Eigen::Index>(num_peers);
    ClearingSolution out;
    out.status = sol.status;
    out.iterations = sol.iterations;
    out.trades = Eigen::MatrixXd::Zero(n, n);
    out.utility_buy = Eigen::VectorXd::Zero(n);
    out.utility_sell = Eigen::VectorXd::Zero(n);
    out.curtailment = Eigen::VectorXd::Zero(n);
    if (sol.primal.empty()) return out;
    for (const auto& t : layout.trades) {
        out.trades(static_cast<Eigen::Index>(t.seller), static_cast<Eigen::Index>(t.buyer)) = sol.primal[t.var];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out.utility_buy(i) = sol.primal[layout.utility_buy[k]];
        out.utility_sell(i) = sol.primal[layout.utility_sell[k]];
        out.curtailment(i) = sol.primal[layout.curtail[k]];
    }
    return out;
}

std::vector<double> to_point(const MarketLayout& layout, const lp::Problem& problem, const ClearingSolution& sol) {
    std::vector<double> x(problem.num_variables(), 0.0);
    for (const auto& t : layout.trades) {
        x[t.var] = sol.trades(static_cast<Eigen::Index>(t.seller), static_cast<Eigen::Index>(t.buyer));
    }
    for (std::size_t i = 0; i < layout.utility_buy.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        x[layout.utility_buy[i]] = sol.utility_buy(k);
        x[layout.utility_sell[i]] = sol.utility_sell(k);
        x[layout.curtail[i]] = sol.curtailment(k);
    }
    return x;
}

ClearingSolution clear_reference(const ClearingContext& ctx, const lp::SolveOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    const ReferenceLp model = build_reference_lp(ctx);
    const lp::Solution sol = lp::solve(model.problem, options);
    ClearingSolution out = extract_solution(model.layout, ctx.peers.size(), sol);
    out.objective = sol.objective;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

RevenueLedger compute_revenue(const ClearingSolution& solution, const std::vector<Peer>& peers,
                              const GroupPartition& partition) {
    const std::size_t n = peers.size();
    RevenueLedger out;
    out.per_peer.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double x = solution.trades(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (x == 0.0) continue;
            const TradeMargins m = trade_margins(peers[i], peers[j]);
            out.per_peer[i] += x * m.seller;
            out.per_peer[j] += x * m.buyer;
        }
    }
    for (const auto& g : partition.groups) {
        double total = 0.0;
        for (auto i : g.members) total += out.per_peer[i];
        out.per_group.push_back(total);
    }
    for (auto i : partition.pv_members) out.pv_group += out.per_peer[i];
    return out;
}

Eigen::VectorXd voltages_of(const ClearingContext& ctx, const Eigen::VectorXd& curtailment) {
    const NodalInjections inj = nodal_injections(ctx, &curtailment);
    return ctx.grid.voltage_profile(inj.p, inj.q);
}

}  // namespace p2pfair
