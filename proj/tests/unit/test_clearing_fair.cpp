#include "doctest.h"

#include "fair_oracle.hpp"
#include "market_oracle.hpp"
#include "p2pfair/clearing_fair.hpp"
#include "slot.hpp"
#include "toy_market.hpp"

#include <random>

using namespace p2pfair;
using testing::make_peer;
using testing::Slot;

namespace {

// One seller (outside the fairness groups) with 1 kWh for two buyers
// bidding 0.18 and 0.16; the reference gives everything to B1.
Slot scarce_seller() {
    auto peers = testing::one_seller_two_buyers();
    peers[0].production = 2.0;
    GroupPartition part;
    part.groups = {{"B1", {1}}, {"B2", {2}}};
    part.pv_members = {0};
    return Slot(std::move(peers), testing::single_line_grid(), part);
}

double sorted_d_max(const Slot& slot, const Eigen::MatrixXd& trades) {
    return unfairness(trade_distribution(trades, slot.partition), DistanceMethod::Sorted).d_max;
}

// Checks the market rows, profit floors and utility/curtailment caps
// independently of the alternating loop.
void audit(const Slot& slot, const ClearingSolution& reference, const FairOutcome& out, double eps) {
    const auto ctx = slot.ctx();
    const ReferenceLp market = build_reference_lp(ctx);
    CHECK(lp::check_feasible(market.problem, to_point(market.layout, market.problem, out.solution), 1e-7).empty());
    const auto ref_profit = group_profits(ctx, reference);
    const auto profit = group_profits(ctx, out.solution);
    for (std::size_t g = 0; g < profit.size(); ++g) CHECK(profit[g] >= (1 - eps) * std::abs(ref_profit[g]) - 1e-7);
    CHECK(out.solution.utility_sell.sum() <= reference.utility_sell.sum() + 1e-7);
    CHECK(out.solution.curtailment.sum() <= reference.curtailment.sum() + 1e-7);
    for (std::size_t k = 1; k < out.trace.size(); ++k) CHECK(out.trace[k].d2 <= out.trace[k - 1].d2 + 1e-7);
    if (out.converged) {
        CHECK(std::abs(out.trace.back().d1_out - out.trace.back().d2) <= 0.01);
        CHECK(std::abs(out.d_max - sorted_d_max(slot, out.solution.trades)) <= 0.01 + 1e-6);
    }
}

}  // namespace

TEST_CASE("scarce seller: sacrifice level trades profit for fairness") {
    const Slot slot = scarce_seller();
    const auto reference = clear_reference(slot.ctx());
    REQUIRE(reference.status == lp::Status::Optimal);
    CHECK(reference.trades(0, 1) == doctest::Approx(1.0));
    CHECK(sorted_d_max(slot, reference.trades) == doctest::Approx(1.0));

    // B1 keeps at least (1 - eps) * 0.015, i.e. X_B1 >= 1 - eps; all 1 kWh is sold.
    const std::pair<double, double> cases[] = {{0.0, 1.0}, {0.25, 0.5}, {0.5, 0.0}, {1.0, 0.0}};
    for (const auto& [eps, expected] : cases) {
        CAPTURE(eps);
        const auto out = alternating_solve(FairInputs{slot.ctx(), reference, eps});
        CHECK(out.converged);
        CHECK(out.d_max == doctest::Approx(expected).epsilon(1e-7));
        CHECK(out.solution.trades.sum() == doctest::Approx(1.0));
        audit(slot, reference, out, eps);
    }
}

TEST_CASE("two singleton groups split the seller's surplus") {
    auto peers = testing::one_seller_two_buyers();
    GroupPartition part;
    part.groups = {{"B1", {1}}, {"B2", {2}}};
    part.pv_members = {0};
    const Slot slot(peers, testing::single_line_grid(), part);
    const auto reference = clear_reference(slot.ctx());
    const auto out = alternating_solve(FairInputs{slot.ctx(), reference, 1.0}, FairOptions{0.01, 15, {}});
    CHECK(out.converged);
    CHECK(out.d_max == doctest::Approx(0.0));
    CHECK(out.solution.trades(0, 1) == doctest::Approx(1.0));
    CHECK(out.solution.trades(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("single group has nothing to compare") {
    auto peers = testing::one_seller_two_buyers();
    for (auto& p : peers) p.group = "all";
    const Slot slot(peers, testing::single_line_grid());
    const auto reference = clear_reference(slot.ctx());
    const FairLp model = build_fair_lp(FairInputs{slot.ctx(), reference, 0.1}, {});
    const auto sol = lp::solve(model.problem);
    CHECK(sol.status == lp::Status::Optimal);
    CHECK(sol.objective == doctest::Approx(0.0));
    const auto out = alternating_solve(FairInputs{slot.ctx(), reference, 0.1});
    CHECK(out.converged);
    CHECK(out.iterations == 1);
    CHECK(out.d_max == 0.0);
}

TEST_CASE("already fair reference converges at once") {
    // two identical seller/buyer couples, one couple per group
    std::vector<Peer> peers{make_peer("s1", "A", 2, 1, 0.15, 0.15, 0.1417, 0.2, 2),
                            make_peer("b1", "A", 0, 1, 0.18, 0.18, 0.1417, 0.18, 0),
                            make_peer("s2", "B", 2, 1, 0.15, 0.15, 0.1417, 0.2, 2),
                            make_peer("b2", "B", 0, 1, 0.18, 0.18, 0.1417, 0.18, 0)};
    const Slot slot(peers, testing::single_line_grid());
    const auto reference = clear_reference(slot.ctx());
    CHECK(sorted_d_max(slot, reference.trades) == doctest::Approx(0.0));
    const auto out = alternating_solve(FairInputs{slot.ctx(), reference, 0.0});
    CHECK(out.converged);
    CHECK(out.iterations == 1);
    CHECK(out.d_max == doctest::Approx(0.0));
}

TEST_CASE("incumbent reference is feasible for the fair LP") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const Slot slot(testing::random_micro_market(rng, {"A", "B", "A", "B"}), testing::single_line_grid());
        const auto reference = clear_reference(slot.ctx());
        REQUIRE(reference.status == lp::Status::Optimal);
        std::vector<TransportPlan> plans;
        for (const auto& p : unfairness(trade_distribution(reference.trades, slot.partition)).pairs) plans.push_back(p.plan);
        const FairLp model = build_fair_lp(FairInputs{slot.ctx(), reference, 0.0}, plans);
        auto point = to_point(model.layout, model.problem, reference);
        // complete the auxiliary columns: T, then d = |T_i - T_j|, then D_max
        const auto dist = trade_distribution(reference.trades, slot.partition);
        for (std::size_t g = 0; g < slot.partition.groups.size(); ++g)
            for (std::size_t k = 0; k < slot.partition.groups[g].members.size(); ++k)
                point[model.volume[slot.partition.groups[g].members[k]]] = dist[g].values[k];
        for (std::size_t j = 0; j < model.problem.num_variables(); ++j) {
            const auto& name = model.problem.variable(j).name;
            if (name.rfind("d[", 0) != 0) continue;
            double lo = 0.0;
            for (const auto& c : model.problem.constraints()) {
                if (c.name != "dist_pos[" + name.substr(2)) continue;
                lo = std::abs(point[c.terms[0].var] - point[c.terms[1].var]);
            }
            point[j] = lo;
        }
        point[model.d_max] = sorted_d_max(slot, reference.trades);
        CHECK(lp::check_feasible(model.problem, point, 1e-7).empty());
        CHECK(lp::solve(model.problem).objective <= point[model.d_max] + 1e-9);
    }
}

TEST_CASE("random micro markets against exhaustive search") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> order{"A", "B"};
    int unfair = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const Slot slot(testing::random_micro_market(rng, {"A", "B", "A", "B"}), testing::single_line_grid());
        const auto reference = clear_reference(slot.ctx());
        REQUIRE(reference.status == lp::Status::Optimal);
        const double ref_d = sorted_d_max(slot, reference.trades);
        if (ref_d > 0.01) ++unfair;
        const auto ref_profit = group_profits(slot.ctx(), reference);
        for (double eps : {0.0, 0.3, 1.0}) {
            CAPTURE(trial);
            CAPTURE(eps);
            const auto out = alternating_solve(FairInputs{slot.ctx(), reference, eps});
            audit(slot, reference, out, eps);
            CHECK(out.d_max <= ref_d + 0.01);
            std::map<std::string, double> floors;
            for (std::size_t g = 0; g < ref_profit.size(); ++g)
                floors[slot.partition.groups[g].label] = (1 - eps) * std::abs(ref_profit[g]);
            const double best = testing::enumerate_fair(slot.peers, order, floors, reference.trades.sum()).d_max;
            // the grid search is restricted to multiples of 0.25 kWh
            CHECK(out.d_max >= best - 0.25 - 1e-6);
            CHECK(sorted_d_max(slot, out.solution.trades) >= best - 0.25 - 1e-6);
        }
    }
    CHECK(unfair > 5);
}

TEST_CASE("epsilon sweep") {
    const Slot slot = scarce_seller();
    const auto reference = clear_reference(slot.ctx());
    const auto runs = epsilon_sweep(slot.ctx(), reference, {0.0, 0.1, 0.1, 0.3, 0.6});
    REQUIRE(runs.size() == 5);
    for (std::size_t k = 1; k < runs.size(); ++k) CHECK(runs[k].d_max <= runs[k - 1].d_max + 0.01);
    CHECK(runs[1].d_max == doctest::Approx(runs[2].d_max));
    CHECK(runs[1].solution.trades.isApprox(runs[2].solution.trades));
    CHECK(runs[4].d_max == doctest::Approx(0.0));
    CHECK_THROWS_AS(epsilon_sweep(slot.ctx(), reference, {0.2, 0.1}), FairClearingError);
}

TEST_CASE("input validation") {
    const Slot slot = scarce_seller();
    const auto reference = clear_reference(slot.ctx());
    CHECK_THROWS_AS(build_fair_lp(FairInputs{slot.ctx(), reference, 1.5}, {TransportPlan{Eigen::MatrixXd::Ones(1, 1)}}),
                    FairClearingError);
    CHECK_THROWS_AS(build_fair_lp(FairInputs{slot.ctx(), reference, 0.5}, {TransportPlan{Eigen::MatrixXd::Constant(1, 1, 0.5)}}),
                    FairClearingError);
    CHECK_THROWS_AS(build_fair_lp(FairInputs{slot.ctx(), reference, 0.5}, {}), FairClearingError);
    ClearingSolution bad = reference;
    bad.status = lp::Status::Infeasible;
    CHECK_THROWS_AS(alternating_solve(FairInputs{slot.ctx(), bad, 0.5}), FairClearingError);
    CHECK_THROWS_AS(alternating_solve(FairInputs{slot.ctx(), reference, 0.5}, FairOptions{0.0, 15, {}}),
                    FairClearingError);
}
