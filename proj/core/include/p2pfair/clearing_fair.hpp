#pragma once

// Distributionally fair clearing: minimise the largest group-to-group
// Wasserstein distance of traded volumes, subject to the market block,
// group profit floors and caps on utility exports and curtailment.

#include "p2pfair/clearing_ref.hpp"
#include "p2pfair/fairness.hpp"

#include <optional>
#include <string>
#include <vector>

namespace p2pfair {

class FairClearingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inputs shared by every fair LP of one slot. Non-owning.
struct FairInputs {
    const ClearingContext& ctx;
    const ClearingSolution& reference;  // must be Optimal
    double epsilon = 0.0;               // sacrifice level in [0, 1]
};

struct FairLp {
    lp::Problem problem;  // minimise D_max
    MarketLayout layout;
    std::size_t d_max = 0;
    std::vector<std::size_t> volume;       // T per peer index; unused entries = SIZE_MAX
    std::vector<double> profit_floor;      // per fairness group
    std::vector<std::size_t> profit_rows;  // per fairness group
};

/// Builds the fair LP with the transport plans fixed, one per
/// partition.pairs() entry. Distance variables are created only where the
/// plan carries mass. Throws FairClearingError on a bad epsilon, a
/// non-optimal reference or plans of the wrong shape or marginals.
FairLp build_fair_lp(const FairInputs& in, const std::vector<TransportPlan>& plans);

struct FairOptions {
    double tol = 0.01;          // kWh
    std::size_t max_iters = 15;
    lp::SolveOptions lp;
};

struct FairIteration {
    std::size_t iter = 0;
    double d1_in = 0.0;   // D_max of the trades the plans were taken from
    double d2 = 0.0;      // LP optimum with those plans fixed
    double d1_out = 0.0;  // D_max of the LP's trades under their own optimal plans
    std::vector<double> group_profit;
    std::size_t lp_iterations = 0;
    double wall_seconds = 0.0;
};

struct FairOutcome {
    double epsilon = 0.0;
    ClearingSolution solution;  // best iterate; trades empty when error is set
    double d_max = 0.0;         // (d1_out + d2) / 2 of the returned iterate
    std::vector<FairIteration> trace;
    bool converged = false;
    std::size_t iterations = 0;
    std::string error;          // set when a fair LP failed
};

/// Alternates between optimal transport plans for the current trades and
/// the fair LP with those plans fixed. Starts from `warm_start` (or the
/// reference trades). Converged when the LP optimum and the distance of its
/// own trades agree within tol. Without convergence the iterate with the
/// smallest LP optimum is returned. Throws FairClearingError when a fair LP
/// is not solved to optimality; the message names the constraint families
/// the incumbent violates.
FairOutcome alternating_solve(const FairInputs& in, const FairOptions& options = {},
                              const Eigen::MatrixXd* warm_start = nullptr);

/// One alternating run per epsilon (ascending), each warm-started from the
/// previous run's trades. A failed run records its error and the chain
/// continues from the last successful trades.
std::vector<FairOutcome> epsilon_sweep(const ClearingContext& ctx, const ClearingSolution& reference,
                                       const std::vector<double>& epsilons, const FairOptions& options = {});

/// Collective profit per fairness group (indexed like partition.groups).
std::vector<double> group_profits(const ClearingContext& ctx, const ClearingSolution& solution);

}  // namespace p2pfair
