#include "p2pfair/lp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <utility>

namespace p2pfair::lp {

const char* to_string(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::IterationLimit: return "iteration-limit";
    }
    return "unknown";
}

const char* to_string(Relation relation) {
    switch (relation) {
        case Relation::LessEqual: return "le";
        case Relation::Equal: return "eq";
        case Relation::GreaterEqual: return "ge";
    }
    return "?";
}

std::size_t Problem::add_variable(double lower, double upper, double objective, std::string name) {
    variables_.push_back(Variable{lower, upper, objective, std::move(name)});
    return variables_.size() - 1;
}

std::size_t Problem::add_constraint(std::vector<Term> terms, Relation relation, double rhs,
                                    std::string name) {
    constraints_.push_back(Constraint{std::move(terms), relation, rhs, std::move(name)});
    return constraints_.size() - 1;
}

void Problem::set_objective(std::size_t var, double coef) { variables_.at(var).objective = coef; }

void Problem::set_bounds(std::size_t var, double lower, double upper) {
    auto& v = variables_.at(var);
    v.lower = lower;
    v.upper = upper;
}

double Problem::evaluate(std::span<const double> point) const {
    double total = 0.0;
    for (std::size_t j = 0; j < variables_.size() && j < point.size(); ++j) {
        total += variables_[j].objective * point[j];
    }
    return total;
}

void Problem::validate() const {
    for (std::size_t j = 0; j < variables_.size(); ++j) {
        const auto& v = variables_[j];
        if (std::isnan(v.lower) || std::isnan(v.upper) || !std::isfinite(v.objective)) {
            throw MalformedProblem("variable " + std::to_string(j) + " has non-finite data");
        }
        if (v.lower > v.upper) {
            throw MalformedProblem("variable " + std::to_string(j) + " has lower bound above upper bound");
        }
        if (v.lower == kInf || v.upper == -kInf) {
            throw MalformedProblem("variable " + std::to_string(j) + " has an empty domain");
        }
    }
    for (std::size_t i = 0; i < constraints_.size(); ++i) {
        const auto& c = constraints_[i];
        if (!std::isfinite(c.rhs)) {
            throw MalformedProblem("constraint " + std::to_string(i) + " has a non-finite right-hand side");
        }
        for (const auto& t : c.terms) {
            if (t.var >= variables_.size()) {
                throw MalformedProblem("constraint " + std::to_string(i) + " references undeclared variable " +
                                       std::to_string(t.var));
            }
            if (!std::isfinite(t.coef)) {
                throw MalformedProblem("constraint " + std::to_string(i) + " has a non-finite coefficient");
            }
        }
    }
}

std::vector<Violation> check_feasible(const Problem& problem, std::span<const double> point, double tol) {
    if (point.size() != problem.num_variables()) {
        throw std::invalid_argument("check_feasible: point has " + std::to_string(point.size()) +
                                    " entries, problem has " + std::to_string(problem.num_variables()) +
                                    " variables");
    }
    std::vector<Violation> out;
    for (std::size_t j = 0; j < problem.num_variables(); ++j) {
        const auto& v = problem.variable(j);
        if (point[j] < v.lower - tol) out.push_back({Violation::Kind::LowerBound, j, v.lower - point[j]});
        if (point[j] > v.upper + tol) out.push_back({Violation::Kind::UpperBound, j, point[j] - v.upper});
    }
    for (std::size_t i = 0; i < problem.num_constraints(); ++i) {
        const auto& c = problem.constraint(i);
        double activity = 0.0;
        for (const auto& t : c.terms) activity += t.coef * point[t.var];
        double excess = 0.0;
        switch (c.relation) {
            case Relation::LessEqual: excess = activity - c.rhs; break;
            case Relation::GreaterEqual: excess = c.rhs - activity; break;
            case Relation::Equal: excess = std::abs(activity - c.rhs); break;
        }
        if (excess > tol) out.push_back({Violation::Kind::Constraint, i, excess});
    }
    return out;
}

namespace {

void write_number(std::ostream& out, double value) {
    if (value == kInf) {
        out << "inf";
    } else if (value == -kInf) {
        out << "-inf";
    } else {
        std::ostringstream s;
        s.imbue(std::locale::classic());
        s.precision(17);
        s << value;
        out << s.str();
    }
}

std::string name_or_index(const std::string& name, char prefix, std::size_t index) {
    if (!name.empty()) return name;
    return std::string(1, prefix) + std::to_string(index);
}

}  // namespace

void write_text(const Problem& problem, std::ostream& out) {
    out << "obj " << (problem.sense() == Sense::Minimize ? "min" : "max") << '\n';
    for (std::size_t j = 0; j < problem.num_variables(); ++j) {
        const auto& v = problem.variable(j);
        out << "var " << j << ' ' << name_or_index(v.name, 'x', j) << ' ';
        write_number(out, v.lower);
        out << ' ';
        write_number(out, v.upper);
        out << ' ';
        write_number(out, v.objective);
        out << '\n';
    }
    for (std::size_t i = 0; i < problem.num_constraints(); ++i) {
        const auto& c = problem.constraint(i);
        out << "row " << i << ' ' << name_or_index(c.name, 'r', i) << ' ' << to_string(c.relation) << ' ';
        write_number(out, c.rhs);
        for (const auto& t : c.terms) {
            out << ' ' << t.var << ':';
            write_number(out, t.coef);
        }
        out << '\n';
    }
}

namespace {

enum class VarState : std::uint8_t { Basic, AtLower, AtUpper, AtZero };

constexpr double kPivotTol = 1e-9;
constexpr double kDropTol = 1e-13;
constexpr std::size_t kDegenerateBeforeBland = 50;
constexpr std::size_t kResidualCheckEvery = 100;
constexpr std::size_t kRefactorEvery = 2000;

// Working form: structural columns 0..n-1, then one logical column per row
// carrying the row activity (A x - r = 0, r bounded by the row relation).
class Simplex {
public:
    Simplex(const Problem& problem, const SolveOptions& options)
        : n_(problem.num_variables()),
          m_(problem.num_constraints()),
          total_(n_ + m_),
          feas_tol_(options.feas_tol),
          opt_tol_(options.opt_tol),
          max_iters_(options.max_iters ? options.max_iters : 50 * (n_ + m_) + 50) {
        build_columns(problem);
        lower_.resize(total_);
        upper_.resize(total_);
        cost_.assign(total_, 0.0);
        const double sign = problem.sense() == Sense::Maximize ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n_; ++j) {
            const auto& v = problem.variable(j);
            lower_[j] = v.lower;
            upper_[j] = v.upper;
            cost_[j] = sign * v.objective;
        }
        for (std::size_t i = 0; i < m_; ++i) {
            const auto& c = problem.constraint(i);
            const std::size_t j = n_ + i;
            switch (c.relation) {
                case Relation::LessEqual: lower_[j] = -kInf; upper_[j] = c.rhs; break;
                case Relation::GreaterEqual: lower_[j] = c.rhs; upper_[j] = kInf; break;
                case Relation::Equal: lower_[j] = c.rhs; upper_[j] = c.rhs; break;
            }
        }
    }

    Solution run() {
        initialise_basis();
        Solution sol;
        const Status status = iterate();
        sol.status = status;
        sol.iterations = iterations_;
        sol.primal.assign(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
        return sol;
    }

private:
    void build_columns(const Problem& problem) {
        std::vector<std::size_t> counts(n_, 0);
        for (const auto& c : problem.constraints()) {
            for (const auto& t : c.terms) ++counts[t.var];
        }
        col_start_.assign(n_ + 1, 0);
        for (std::size_t j = 0; j < n_; ++j) col_start_[j + 1] = col_start_[j] + counts[j];
        col_row_.resize(col_start_[n_]);
        col_val_.resize(col_start_[n_]);
        std::vector<std::size_t> fill(col_start_.begin(), col_start_.end() - 1);
        for (std::size_t i = 0; i < m_; ++i) {
            for (const auto& t : problem.constraint(i).terms) {
                // duplicate references to one variable accumulate
                const std::size_t begin = col_start_[t.var];
                bool merged = false;
                for (std::size_t k = begin; k < fill[t.var]; ++k) {
                    if (col_row_[k] == i) {
                        col_val_[k] += t.coef;
                        merged = true;
                        break;
                    }
                }
                if (!merged) {
                    col_row_[fill[t.var]] = i;
                    col_val_[fill[t.var]] = t.coef;
                    ++fill[t.var];
                }
            }
        }
        // compact away merged slots
        std::vector<std::size_t> start(n_ + 1, 0);
        std::size_t w = 0;
        for (std::size_t j = 0; j < n_; ++j) {
            start[j] = w;
            for (std::size_t k = col_start_[j]; k < fill[j]; ++k) {
                if (col_val_[k] == 0.0) continue;
                col_row_[w] = col_row_[k];
                col_val_[w] = col_val_[k];
                ++w;
            }
        }
        start[n_] = w;
        col_row_.resize(w);
        col_val_.resize(w);
        col_start_ = std::move(start);
    }

    template <typename F>
    void for_column(std::size_t j, F&& f) const {
        if (j < n_) {
            for (std::size_t k = col_start_[j]; k < col_start_[j + 1]; ++k) f(col_row_[k], col_val_[k]);
        } else {
            f(j - n_, -1.0);
        }
    }

    double& binv(std::size_t row, std::size_t col) { return binv_[col * m_ + row]; }

    void initialise_basis() {
        x_.assign(total_, 0.0);
        state_.assign(total_, VarState::AtLower);
        pos_.assign(total_, -1);
        head_.resize(m_);
        for (std::size_t j = 0; j < n_; ++j) {
            if (std::isfinite(lower_[j])) {
                x_[j] = lower_[j];
                state_[j] = VarState::AtLower;
            } else if (std::isfinite(upper_[j])) {
                x_[j] = upper_[j];
                state_[j] = VarState::AtUpper;
            } else {
                x_[j] = 0.0;
                state_[j] = VarState::AtZero;
            }
        }
        for (std::size_t i = 0; i < m_; ++i) {
            head_[i] = n_ + i;
            state_[n_ + i] = VarState::Basic;
            pos_[n_ + i] = static_cast<std::ptrdiff_t>(i);
        }
        binv_.assign(m_ * m_, 0.0);
        for (std::size_t i = 0; i < m_; ++i) binv(i, i) = -1.0;
        compute_basic_values();
    }

    // x_B = -B^{-1} N x_N
    void compute_basic_values() {
        std::vector<double> rhs(m_, 0.0);
        for (std::size_t j = 0; j < total_; ++j) {
            if (state_[j] == VarState::Basic || x_[j] == 0.0) continue;
            const double xj = x_[j];
            for_column(j, [&](std::size_t row, double a) { rhs[row] -= a * xj; });
        }
        std::vector<double> xb(m_, 0.0);
        for (std::size_t k = 0; k < m_; ++k) {
            if (rhs[k] == 0.0) continue;
            const double* col = &binv_[k * m_];
            for (std::size_t i = 0; i < m_; ++i) xb[i] += col[i] * rhs[k];
        }
        for (std::size_t i = 0; i < m_; ++i) x_[head_[i]] = xb[i];
    }

    double residual() const {
        std::vector<double> r(m_, 0.0);
        for (std::size_t j = 0; j < total_; ++j) {
            const double xj = x_[j];
            if (xj == 0.0) continue;
            for_column(j, [&](std::size_t row, double a) { r[row] += a * xj; });
        }
        double worst = 0.0;
        for (double v : r) worst = std::max(worst, std::abs(v));
        return worst;
    }

    void refactor() {
        Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
        for (std::size_t i = 0; i < m_; ++i) {
            for_column(head_[i], [&](std::size_t row, double a) {
                basis(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) = a;
            });
        }
        Eigen::MatrixXd inv = basis.partialPivLu().inverse();
        // inv(i, k): row i of B^{-1}; stored column-major as binv(i, k)
        for (std::size_t k = 0; k < m_; ++k) {
            for (std::size_t i = 0; i < m_; ++i) {
                binv(i, k) = inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            }
        }
        since_refactor_ = 0;
        compute_basic_values();
    }

    double infeasibility_of(std::size_t j) const {
        if (x_[j] < lower_[j] - feas_tol_) return lower_[j] - x_[j];
        if (x_[j] > upper_[j] + feas_tol_) return x_[j] - upper_[j];
        return 0.0;
    }

    // Phase costs of basic variables; returns false when none are nonzero and
    // phase one has nothing to repair.
    bool basic_costs(bool phase_one) {
        basic_cost_.clear();
        for (std::size_t i = 0; i < m_; ++i) {
            const std::size_t j = head_[i];
            double c = 0.0;
            if (phase_one) {
                if (x_[j] < lower_[j] - feas_tol_) c = -1.0;
                else if (x_[j] > upper_[j] + feas_tol_) c = 1.0;
            } else {
                c = cost_[j];
            }
            if (c != 0.0) basic_cost_.emplace_back(i, c);
        }
        return !basic_cost_.empty();
    }

    void compute_duals() {
        y_.assign(m_, 0.0);
        if (basic_cost_.empty()) return;
        for (std::size_t k = 0; k < m_; ++k) {
            const double* col = &binv_[k * m_];
            double s = 0.0;
            for (const auto& [i, c] : basic_cost_) s += c * col[i];
            y_[k] = s;
        }
    }

    double reduced_cost(std::size_t j, bool phase_one) const {
        double d = phase_one ? 0.0 : cost_[j];
        for_column(j, [&](std::size_t row, double a) { d -= y_[row] * a; });
        return d;
    }

    // Returns the entering variable and its direction (+1 increase, -1 decrease),
    // or total_ when the current basis is optimal for the phase objective.
    std::pair<std::size_t, int> price(bool phase_one) const {
        std::size_t best = total_;
        int best_dir = 0;
        double best_score = 0.0;
        for (std::size_t j = 0; j < total_; ++j) {
            const VarState s = state_[j];
            if (s == VarState::Basic) continue;
            if (lower_[j] == upper_[j]) continue;
            const double d = reduced_cost(j, phase_one);
            int dir = 0;
            if (d < -opt_tol_ && (s == VarState::AtLower || s == VarState::AtZero)) dir = 1;
            else if (d > opt_tol_ && (s == VarState::AtUpper || s == VarState::AtZero)) dir = -1;
            if (dir == 0) continue;
            if (bland_) return {j, dir};
            const double score = std::abs(d);
            if (score > best_score) {
                best_score = score;
                best = j;
                best_dir = dir;
            }
        }
        return {best, best_dir};
    }

    void ftran(std::size_t j) {
        alpha_.assign(m_, 0.0);
        for_column(j, [&](std::size_t row, double a) {
            const double* col = &binv_[row * m_];
            for (std::size_t i = 0; i < m_; ++i) alpha_[i] += a * col[i];
        });
        alpha_nz_.clear();
        for (std::size_t i = 0; i < m_; ++i) {
            if (std::abs(alpha_[i]) > kDropTol) alpha_nz_.push_back(i);
            else alpha_[i] = 0.0;
        }
    }

    struct Ratio {
        std::size_t row = static_cast<std::size_t>(-1);
        double step = kInf;
        bool to_upper = false;
    };

    // Limit of basic position i along direction `dir` of the entering column.
    // Returns false when position i does not block.
    bool limit_of(std::size_t i, int dir, bool phase_one, double relax, double& limit, bool& to_upper) const {
        const std::size_t j = head_[i];
        const double delta = -dir * alpha_[i];
        const double xj = x_[j];
        const double lo = lower_[j];
        const double hi = upper_[j];
        if (phase_one && xj < lo - feas_tol_) {
            if (delta <= 0.0) return false;
            limit = (lo - xj + relax) / delta;
            to_upper = false;
            return true;
        }
        if (phase_one && xj > hi + feas_tol_) {
            if (delta >= 0.0) return false;
            limit = (xj - hi + relax) / -delta;
            to_upper = true;
            return true;
        }
        if (delta < 0.0 && std::isfinite(lo)) {
            limit = (xj - lo + relax) / -delta;
            to_upper = false;
            return true;
        }
        if (delta > 0.0 && std::isfinite(hi)) {
            limit = (hi - xj + relax) / delta;
            to_upper = true;
            return true;
        }
        return false;
    }

    Ratio ratio_test(int dir, bool phase_one) const {
        Ratio best;
        if (bland_) {
            for (std::size_t i : alpha_nz_) {
                if (std::abs(alpha_[i]) < kPivotTol) continue;
                double limit;
                bool up;
                if (!limit_of(i, dir, phase_one, 0.0, limit, up)) continue;
                limit = std::max(limit, 0.0);
                const bool better = limit < best.step - 1e-12 ||
                                    (limit <= best.step + 1e-12 && best.row != static_cast<std::size_t>(-1) &&
                                     head_[i] < head_[best.row]);
                if (best.row == static_cast<std::size_t>(-1) || better) {
                    best.row = i;
                    best.step = limit;
                    best.to_upper = up;
                }
            }
            return best;
        }
        // Harris two-pass: bound on the step with relaxed bounds, then the
        // largest pivot among rows whose exact ratio fits under it.
        double bound = kInf;
        for (std::size_t i : alpha_nz_) {
            if (std::abs(alpha_[i]) < kPivotTol) continue;
            double limit;
            bool up;
            if (!limit_of(i, dir, phase_one, feas_tol_, limit, up)) continue;
            bound = std::min(bound, limit);
        }
        if (!std::isfinite(bound)) return best;
        double best_pivot = 0.0;
        for (std::size_t i : alpha_nz_) {
            const double a = std::abs(alpha_[i]);
            if (a < kPivotTol) continue;
            double limit;
            bool up;
            if (!limit_of(i, dir, phase_one, 0.0, limit, up)) continue;
            if (limit <= bound && a > best_pivot) {
                best_pivot = a;
                best.row = i;
                best.step = std::max(limit, 0.0);
                best.to_upper = up;
            }
        }
        return best;
    }

    void update_inverse(std::size_t r) {
        const double pivot = alpha_[r];
        for (std::size_t c = 0; c < m_; ++c) {
            double* col = &binv_[c * m_];
            const double brc = col[r];
            if (brc == 0.0) continue;
            const double t = brc / pivot;
            for (std::size_t i : alpha_nz_) col[i] -= alpha_[i] * t;
            col[r] = t;
        }
    }

    void move(std::size_t entering, int dir, double step) {
        if (step == 0.0) return;
        x_[entering] += dir * step;
        for (std::size_t i : alpha_nz_) x_[head_[i]] -= dir * step * alpha_[i];
    }

    bool primal_infeasible_basis() const {
        for (std::size_t i = 0; i < m_; ++i) {
            if (infeasibility_of(head_[i]) > 0.0) return true;
        }
        return false;
    }

    Status iterate() {
        bool phase_one = primal_infeasible_basis();
        std::size_t degenerate_run = 0;
        int verify_rounds = 0;
        while (true) {
            if (iterations_ >= max_iters_) return Status::IterationLimit;
            if (phase_one && !basic_costs(true)) {
                phase_one = false;
                continue;
            }
            if (!phase_one) basic_costs(false);
            compute_duals();
            const auto [entering, dir] = price(phase_one);
            if (entering == total_) {
                // Optimal for this phase: confirm on a fresh factorization.
                if (since_refactor_ > 0 && verify_rounds < 3) {
                    ++verify_rounds;
                    refactor();
                    phase_one = primal_infeasible_basis();
                    continue;
                }
                if (phase_one) return Status::Infeasible;
                return Status::Optimal;
            }
            ftran(entering);
            const Ratio ratio = ratio_test(dir, phase_one);
            const double range = upper_[entering] - lower_[entering];
            ++iterations_;
            ++since_refactor_;
            if (std::isfinite(range) && range <= ratio.step) {
                // bound flip, basis unchanged
                move(entering, dir, range);
                x_[entering] = dir > 0 ? upper_[entering] : lower_[entering];
                state_[entering] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
                degenerate_run = 0;
                bland_ = false;
            } else if (ratio.row == static_cast<std::size_t>(-1)) {
                if (!phase_one) return Status::Unbounded;
                // Phase one cannot be unbounded; treat as numerical trouble.
                refactor();
                phase_one = primal_infeasible_basis();
                continue;
            } else {
                const std::size_t r = ratio.row;
                const std::size_t leaving = head_[r];
                move(entering, dir, ratio.step);
                x_[leaving] = ratio.to_upper ? upper_[leaving] : lower_[leaving];
                state_[leaving] = ratio.to_upper ? VarState::AtUpper : VarState::AtLower;
                pos_[leaving] = -1;
                update_inverse(r);
                head_[r] = entering;
                state_[entering] = VarState::Basic;
                pos_[entering] = static_cast<std::ptrdiff_t>(r);
                if (ratio.step <= 1e-12) {
                    if (++degenerate_run > kDegenerateBeforeBland) bland_ = true;
                } else {
                    degenerate_run = 0;
                    bland_ = false;
                }
            }
            if (since_refactor_ >= kRefactorEvery) {
                refactor();
            } else if (iterations_ % kResidualCheckEvery == 0 && residual() > 1e-9) {
                refactor();
            }
            if (phase_one && !primal_infeasible_basis()) phase_one = false;
        }
    }

    std::size_t n_, m_, total_;
    double feas_tol_, opt_tol_;
    std::size_t max_iters_;
    std::vector<std::size_t> col_start_, col_row_;
    std::vector<double> col_val_;
    std::vector<double> lower_, upper_, cost_, x_;
    std::vector<VarState> state_;
    std::vector<std::ptrdiff_t> pos_;
    std::vector<std::size_t> head_;
    std::vector<double> binv_;
    std::vector<std::pair<std::size_t, double>> basic_cost_;
    std::vector<double> y_, alpha_;
    std::vector<std::size_t> alpha_nz_;
    std::size_t iterations_ = 0;
    std::size_t since_refactor_ = 0;
    bool bland_ = false;
};

}  // namespace

Solution solve(const Problem& problem, const SolveOptions& options) {
    problem.validate();
    Simplex simplex(problem, options);
    Solution sol = simplex.run();
    sol.objective = problem.evaluate(sol.primal);
    return sol;
}

}  // namespace p2pfair::lp
