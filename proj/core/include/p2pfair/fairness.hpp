#pragma once

// Group trade distributions and 1-D Wasserstein distances between them.

#include "p2pfair/market.hpp"

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pfair {

class FairnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TradeDistribution {
    std::string label;
    std::vector<double> values;  // kWh, one per group member
};

/// T_i = sum_j (X_ij + X_ji) for every member of every fairness group; the
/// pv group is skipped.
std::vector<TradeDistribution> trade_distribution(const Eigen::MatrixXd& trades, const GroupPartition& partition);

/// d_ij = |a_i - b_j|.
Eigen::MatrixXd distance_matrix(std::span<const double> a, std::span<const double> b);

struct TransportPlan {
    Eigen::MatrixXd mass;  // |a| x |b|
};

/// Throws FairnessError unless the plan is non-negative with row sums 1/rows
/// and column sums 1/cols.
void validate_plan(const TransportPlan& plan, double tol = 1e-9);

struct Wasserstein {
    double distance = 0.0;
    TransportPlan plan;
};

/// Solves the optimal transport LP between the uniform measures on `a` and
/// `b`. Throws FairnessError on empty input or if the LP does not reach
/// optimality.
Wasserstein wasserstein_lp(std::span<const double> a, std::span<const double> b);

/// Closed form of the same distance through the quantile functions.
double wasserstein_sorted_oracle(std::span<const double> a, std::span<const double> b);

enum class DistanceMethod { TransportLp, Sorted };

struct PairDistance {
    std::size_t first;   // index into the distribution list
    std::size_t second;
    std::string label;   // "first-second"
    double distance = 0.0;
    TransportPlan plan;  // empty for DistanceMethod::Sorted
};

struct UnfairnessReport {
    std::vector<PairDistance> pairs;  // lexicographic (a < b)
    double d_max = 0.0;
    std::size_t argmax = 0;           // first pair attaining d_max
};

/// Pairwise distances over all 2-combinations. Throws FairnessError with
/// fewer than two distributions.
UnfairnessReport unfairness(const std::vector<TradeDistribution>& groups,
                            DistanceMethod method = DistanceMethod::TransportLp);

}  // namespace p2pfair
