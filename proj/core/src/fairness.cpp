#include "p2pfair/fairness.hpp"

#include "p2pfair/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>

namespace p2pfair {

std::vector<TradeDistribution> trade_distribution(const Eigen::MatrixXd& trades, const GroupPartition& partition) {
    if (trades.rows() != trades.cols()) throw FairnessError("trade matrix must be square");
    const Eigen::VectorXd volume = trades.rowwise().sum() + trades.colwise().sum().transpose();
    std::vector<TradeDistribution> out;
    out.reserve(partition.groups.size());
    for (const auto& g : partition.groups) {
        TradeDistribution d{g.label, {}};
        d.values.reserve(g.members.size());
        for (auto i : g.members) {
            if (static_cast<Eigen::Index>(i) >= volume.size()) throw FairnessError("group member out of range");
            d.values.push_back(volume(static_cast<Eigen::Index>(i)));
        }
        out.push_back(std::move(d));
    }
    return out;
}

Eigen::MatrixXd distance_matrix(std::span<const double> a, std::span<const double> b) {
    Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::abs(a[i] - b[j]);
        }
    }
    return d;
}

void validate_plan(const TransportPlan& plan, double tol) {
    const auto& m = plan.mass;
    if (m.rows() == 0 || m.cols() == 0) throw FairnessError("empty transport plan");
    if (m.minCoeff() < -tol) throw FairnessError("transport plan has negative mass");
    const double row = 1.0 / static_cast<double>(m.rows());
    const double col = 1.0 / static_cast<double>(m.cols());
    if ((m.rowwise().sum().array() - row).abs().maxCoeff() > tol) {
        throw FairnessError("transport plan row sums differ from 1/rows");
    }
    if ((m.colwise().sum().array() - col).abs().maxCoeff() > tol) {
        throw FairnessError("transport plan column sums differ from 1/cols");
    }
}

Wasserstein wasserstein_lp(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw FairnessError("wasserstein distance needs two non-empty distributions");
    const std::size_t n = a.size(), m = b.size();
    const Eigen::MatrixXd d = distance_matrix(a, b);

    lp::Problem problem;
    std::vector<std::vector<lp::Term>> rows(n), cols(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const auto v = problem.add_variable(0.0, lp::kInf, d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            rows[i].push_back({v, 1.0});
            cols[j].push_back({v, 1.0});
        }
    }
    for (auto& r : rows) problem.add_constraint(std::move(r), lp::Relation::Equal, 1.0 / static_cast<double>(n));
    for (auto& c : cols) problem.add_constraint(std::move(c), lp::Relation::Equal, 1.0 / static_cast<double>(m));

    const lp::Solution sol = lp::solve(problem);
    if (sol.status != lp::Status::Optimal) {
        throw FairnessError(std::string("transport LP ended ") + lp::to_string(sol.status));
    }
    Wasserstein out;
    out.plan.mass.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out.plan.mass(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::max(0.0, sol.primal[i * m + j]);
        }
    }
    out.distance = sol.objective;
    return out;
}

double wasserstein_sorted_oracle(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw FairnessError("wasserstein distance needs two non-empty distributions");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    // Quantile breakpoints i/n and j/m compared exactly as i*m vs j*n.
    const auto n = static_cast<std::uint64_t>(x.size()), m = static_cast<std::uint64_t>(y.size());
    std::uint64_t i = 0, j = 0, prev = 0;  // prev in units of 1/(n*m)
    double total = 0.0;
    while (i < n && j < m) {
        const std::uint64_t next = std::min((i + 1) * m, (j + 1) * n);
        total += static_cast<double>(next - prev) * std::abs(x[i] - y[j]);
        prev = next;
        if (next == (i + 1) * m) ++i;
        if (next == (j + 1) * n) ++j;
    }
    return total / static_cast<double>(n * m);
}

UnfairnessReport unfairness(const std::vector<TradeDistribution>& groups, DistanceMethod method) {
    if (groups.size() < 2) throw FairnessError("unfairness needs at least two groups");
    UnfairnessReport report;
    std::vector<std::future<Wasserstein>> jobs;
    for (std::size_t a = 0; a < groups.size(); ++a) {
        for (std::size_t b = a + 1; b < groups.size(); ++b) {
            report.pairs.push_back(PairDistance{a, b, groups[a].label + "-" + groups[b].label, 0.0, {}});
            if (method == DistanceMethod::TransportLp) {
                jobs.push_back(std::async(std::launch::async, [&groups, a, b] {
                    return wasserstein_lp(groups[a].values, groups[b].values);
                }));
            } else {
                report.pairs.back().distance = wasserstein_sorted_oracle(groups[a].values, groups[b].values);
            }
        }
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        Wasserstein w = jobs[k].get();
        report.pairs[k].distance = w.distance;
        report.pairs[k].plan = std::move(w.plan);
    }
    for (std::size_t k = 0; k < report.pairs.size(); ++k) {
        if (k == 0 || report.pairs[k].distance > report.d_max) {
            report.d_max = report.pairs[k].distance;
            report.argmax = k;
        }
    }
    return report;
}

}  // namespace p2pfair
