#pragma once

// Brute-force LP oracle for tiny problems: enumerate every basic solution
// (n active hyperplanes drawn from rows and finite bounds), keep the feasible
// ones and return the best objective. Independent of the simplex code path.

#include "p2pfair/lp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

namespace p2pfair::testing {

struct Hyperplane {
    std::vector<double> coef;
    double rhs;
};

struct VertexResult {
    double objective;
    std::vector<double> point;
    std::size_t vertices;  // feasible vertices found
};

inline bool point_feasible(const lp::Problem& p, const std::vector<double>& x, double tol) {
    return lp::check_feasible(p, x, tol).empty();
}

inline std::optional<VertexResult> enumerate_vertices(const lp::Problem& p, double tol = 1e-9) {
    const std::size_t n = p.num_variables();
    std::vector<Hyperplane> planes;
    for (const auto& c : p.constraints()) {
        Hyperplane h{std::vector<double>(n, 0.0), c.rhs};
        for (const auto& t : c.terms) h.coef[t.var] += t.coef;
        planes.push_back(std::move(h));
    }
    for (std::size_t j = 0; j < n; ++j) {
        const auto& v = p.variable(j);
        for (double b : {v.lower, v.upper}) {
            if (!std::isfinite(b)) continue;
            Hyperplane h{std::vector<double>(n, 0.0), b};
            h.coef[j] = 1.0;
            planes.push_back(std::move(h));
        }
    }
    const std::size_t k = planes.size();
    if (k < n) return std::nullopt;

    const double sign = p.sense() == lp::Sense::Maximize ? -1.0 : 1.0;
    std::optional<VertexResult> best;
    std::size_t found = 0;
    std::vector<std::size_t> pick(n);
    for (std::size_t i = 0; i < n; ++i) pick[i] = i;
    while (true) {
        Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        Eigen::VectorXd b(static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = planes[pick[r]].coef[c];
            b(static_cast<Eigen::Index>(r)) = planes[pick[r]].rhs;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (lu.rank() == static_cast<Eigen::Index>(n)) {
            Eigen::VectorXd sol = lu.solve(b);
            std::vector<double> x(sol.data(), sol.data() + n);
            if (point_feasible(p, x, tol)) {
                ++found;
                const double obj = p.evaluate(x);
                if (!best || sign * obj < sign * best->objective) best = VertexResult{obj, x, 0};
            }
        }
        // next combination
        std::size_t i = n;
        while (i > 0 && pick[i - 1] == k - n + (i - 1)) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t r = i; r < n; ++r) pick[r] = pick[r - 1] + 1;
    }
    if (best) best->vertices = found;
    return best;
}

}  // namespace p2pfair::testing
