#include "p2pfair/clearing_fair.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <set>

namespace p2pfair {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kPlanMass = 1e-12;

double d_max_of(const ClearingContext& ctx, const Eigen::MatrixXd& trades, std::vector<TransportPlan>* plans) {
    if (ctx.partition.num_groups() < 2) {
        if (plans) plans->clear();
        return 0.0;
    }
    const auto report = unfairness(trade_distribution(trades, ctx.partition));
    if (plans) {
        plans->clear();
        for (const auto& p : report.pairs) plans->push_back(p.plan);
    }
    return report.d_max;
}

std::string family_of(const std::string& name) {
    const auto bracket = name.find('[');
    return bracket == std::string::npos ? name : name.substr(0, bracket);
}

// Names the row families violated by the incumbent trades in `model`.
std::string violated_families(const FairLp& model, const ClearingSolution& incumbent) {
    std::vector<double> point = to_point(model.layout, model.problem, incumbent);
    std::set<std::string> families;
    for (const auto& v : lp::check_feasible(model.problem, point, 1e-7)) {
        if (v.kind != lp::Violation::Kind::Constraint) continue;
        families.insert(family_of(model.problem.constraint(v.index).name));
    }
    // T, distance and D_max rows depend on auxiliary columns left at zero.
    for (const char* aux : {"volume", "dist_pos", "dist_neg", "transport"}) families.erase(aux);
    std::string out;
    for (const auto& f : families) out += (out.empty() ? "" : ", ") + f;
    return out.empty() ? "none of the market rows" : out;
}

}  // namespace

std::vector<double> group_profits(const ClearingContext& ctx, const ClearingSolution& solution) {
    return compute_revenue(solution, ctx.peers, ctx.partition).per_group;
}

FairLp build_fair_lp(const FairInputs& in, const std::vector<TransportPlan>& plans) {
    const auto& ctx = in.ctx;
    if (!(in.epsilon >= 0.0 && in.epsilon <= 1.0)) throw FairClearingError("epsilon must lie in [0, 1]");
    if (in.reference.status != lp::Status::Optimal) throw FairClearingError("reference clearing is not optimal");
    validate_partition(ctx.partition, ctx.peers.size());
    const auto pairs = ctx.partition.pairs();
    if (plans.size() != pairs.size()) throw FairClearingError("expected one transport plan per group pair");
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& plan = plans[k].mass;
        if (static_cast<std::size_t>(plan.rows()) != ctx.partition.groups[pairs[k].first].members.size() ||
            static_cast<std::size_t>(plan.cols()) != ctx.partition.groups[pairs[k].second].members.size()) {
            throw FairClearingError("transport plan " + ctx.partition.pair_label(pairs[k].first, pairs[k].second) +
                                    " has the wrong shape");
        }
        try {
            validate_plan(plans[k], 1e-7);
        } catch (const FairnessError& e) {
            throw FairClearingError(e.what());
        }
    }

    FairLp out{lp::Problem(lp::Sense::Minimize), {}, 0, {}, {}, {}};
    auto& problem = out.problem;
    out.layout = add_market_block(problem, ctx);
    const auto& layout = out.layout;
    const std::size_t n = ctx.peers.size();
    out.d_max = problem.add_variable(0.0, lp::kInf, 1.0, "d_max");

    // group of each peer, kNone for the pv group
    std::vector<std::size_t> group_of(n, kNone);
    for (std::size_t g = 0; g < ctx.partition.groups.size(); ++g) {
        for (auto i : ctx.partition.groups[g].members) group_of[i] = g;
    }

    // collective profit floors
    const auto reference_profit = group_profits(ctx, in.reference);
    std::vector<std::vector<lp::Term>> profit(ctx.partition.groups.size());
    for (const auto& t : layout.trades) {
        const TradeMargins m = trade_margins(ctx.peers[t.seller], ctx.peers[t.buyer]);
        if (group_of[t.seller] != kNone) profit[group_of[t.seller]].push_back({t.var, m.seller});
        if (group_of[t.buyer] != kNone) profit[group_of[t.buyer]].push_back({t.var, m.buyer});
    }
    for (std::size_t g = 0; g < profit.size(); ++g) {
        const double floor = (1.0 - in.epsilon) * std::abs(reference_profit[g]);
        out.profit_floor.push_back(floor);
        out.profit_rows.push_back(problem.add_constraint(std::move(profit[g]), lp::Relation::GreaterEqual, floor,
                                                         "profit[" + ctx.partition.groups[g].label + "]"));
    }

    // no more exports to the utility and no more curtailment than the reference
    std::vector<lp::Term> exports, curtail;
    for (std::size_t i = 0; i < n; ++i) {
        exports.push_back({layout.utility_sell[i], 1.0});
        curtail.push_back({layout.curtail[i], 1.0});
    }
    problem.add_constraint(std::move(exports), lp::Relation::LessEqual, in.reference.utility_sell.sum(), "utility_cap");
    problem.add_constraint(std::move(curtail), lp::Relation::LessEqual, in.reference.curtailment.sum(), "curtail_cap");

    // traded volume T_i of every fairness group member
    std::vector<std::vector<lp::Term>> volume_terms(n);
    for (const auto& t : layout.trades) {
        volume_terms[t.seller].push_back({t.var, 1.0});
        volume_terms[t.buyer].push_back({t.var, 1.0});
    }
    out.volume.assign(n, kNone);
    for (std::size_t i = 0; i < n; ++i) {
        if (group_of[i] == kNone) continue;
        const auto v = problem.add_variable(0.0, lp::kInf, 0.0, "T[" + ctx.peers[i].id + "]");
        out.volume[i] = v;
        auto terms = std::move(volume_terms[i]);
        terms.push_back({v, -1.0});
        problem.add_constraint(std::move(terms), lp::Relation::Equal, 0.0, "volume[" + ctx.peers[i].id + "]");
    }

    // |T_i - T_j| <= d_ij where the plan moves mass, and sum pi d <= D_max
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& ga = ctx.partition.groups[pairs[k].first].members;
        const auto& gb = ctx.partition.groups[pairs[k].second].members;
        const auto& mass = plans[k].mass;
        const std::string label = ctx.partition.pair_label(pairs[k].first, pairs[k].second);
        std::vector<lp::Term> cost{{out.d_max, -1.0}};
        for (std::size_t a = 0; a < ga.size(); ++a) {
            for (std::size_t b = 0; b < gb.size(); ++b) {
                const double pi = mass(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                if (pi <= kPlanMass) continue;
                const std::string tag = ctx.peers[ga[a]].id + "," + ctx.peers[gb[b]].id;
                const auto d = problem.add_variable(0.0, lp::kInf, 0.0, "d[" + tag + "]");
                const auto ti = out.volume[ga[a]], tj = out.volume[gb[b]];
                problem.add_constraint({{ti, 1.0}, {tj, -1.0}, {d, -1.0}}, lp::Relation::LessEqual, 0.0,
                                       "dist_pos[" + tag + "]");
                problem.add_constraint({{tj, 1.0}, {ti, -1.0}, {d, -1.0}}, lp::Relation::LessEqual, 0.0,
                                       "dist_neg[" + tag + "]");
                cost.push_back({d, pi});
            }
        }
        problem.add_constraint(std::move(cost), lp::Relation::LessEqual, 0.0, "transport[" + label + "]");
    }
    return out;
}

FairOutcome alternating_solve(const FairInputs& in, const FairOptions& options, const Eigen::MatrixXd* warm_start) {
    if (!(options.tol > 0.0)) throw FairClearingError("tol must be positive");
    if (options.max_iters < 1) throw FairClearingError("the iteration cap must be at least 1");
    if (in.reference.status != lp::Status::Optimal) throw FairClearingError("reference clearing is not optimal");
    const auto& ctx = in.ctx;

    ClearingSolution incumbent = in.reference;
    if (warm_start) {
        if (warm_start->rows() != incumbent.trades.rows() || warm_start->cols() != incumbent.trades.cols()) {
            throw FairClearingError("warm start has the wrong shape");
        }
        incumbent.trades = *warm_start;
    }

    FairOutcome out;
    out.epsilon = in.epsilon;
    std::vector<TransportPlan> plans;
    double d1 = d_max_of(ctx, incumbent.trades, &plans);
    double best_d2 = std::numeric_limits<double>::infinity();

    for (std::size_t iter = 1; iter <= options.max_iters; ++iter) {
        const auto start = std::chrono::steady_clock::now();
        const FairLp model = build_fair_lp(in, plans);
        const lp::Solution sol = lp::solve(model.problem, options.lp);
        if (sol.status != lp::Status::Optimal) {
            throw FairClearingError("fair LP at iteration " + std::to_string(iter) + " ended " +
                                    lp::to_string(sol.status) + "; the incumbent violates " +
                                    violated_families(model, incumbent));
        }
        ClearingSolution next = extract_solution(model.layout, ctx.peers.size(), sol);
        next.objective = sol.objective;
        next.iterations = sol.iterations;
        const double d2 = sol.primal[model.d_max];
        std::vector<TransportPlan> next_plans;
        const double d1_out = d_max_of(ctx, next.trades, &next_plans);
        next.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        FairIteration row;
        row.iter = iter;
        row.d1_in = d1;
        row.d2 = d2;
        row.d1_out = d1_out;
        row.group_profit = group_profits(ctx, next);
        row.lp_iterations = sol.iterations;
        row.wall_seconds = next.wall_seconds;
        out.trace.push_back(std::move(row));
        out.iterations = iter;

        if (d2 < best_d2) {
            best_d2 = d2;
            out.solution = next;
            out.d_max = 0.5 * (d1_out + d2);
        }
        if (std::abs(d1_out - d2) <= options.tol) {
            out.converged = true;
            out.solution = std::move(next);
            out.d_max = 0.5 * (d1_out + d2);
            break;
        }
        incumbent = std::move(next);
        plans = std::move(next_plans);
        d1 = d1_out;
    }
    return out;
}

std::vector<FairOutcome> epsilon_sweep(const ClearingContext& ctx, const ClearingSolution& reference,
                                       const std::vector<double>& epsilons, const FairOptions& options) {
    for (std::size_t k = 1; k < epsilons.size(); ++k) {
        if (epsilons[k] < epsilons[k - 1]) throw FairClearingError("epsilon list must be ascending");
    }
    std::vector<FairOutcome> runs;
    Eigen::MatrixXd warm = reference.trades;
    for (double eps : epsilons) {
        try {
            runs.push_back(alternating_solve(FairInputs{ctx, reference, eps}, options, &warm));
            warm = runs.back().solution.trades;
        } catch (const std::exception& e) {
            FairOutcome failed;
            failed.epsilon = eps;
            failed.error = e.what();
            runs.push_back(std::move(failed));
        }
    }
    return runs;
}

}  // namespace p2pfair
