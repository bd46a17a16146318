#pragma once

// Linear programs: a sparse row-wise problem description and a bounded-variable
// primal revised simplex solver.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pfair::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Minimize, Maximize };
enum class Relation { LessEqual, Equal, GreaterEqual };
enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(Status status);
const char* to_string(Relation relation);

struct Term {
    std::size_t var;
    double coef;
};

struct Variable {
    double lower = 0.0;
    double upper = kInf;
    double objective = 0.0;
    std::string name;
};

struct Constraint {
    std::vector<Term> terms;
    Relation relation = Relation::LessEqual;
    double rhs = 0.0;
    std::string name;
};

/// Thrown when a problem violates its own structural invariants (bad index,
/// crossed bounds, non-finite data).
class MalformedProblem : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Problem {
public:
    explicit Problem(Sense sense = Sense::Minimize) : sense_(sense) {}

    std::size_t add_variable(double lower, double upper, double objective = 0.0,
                             std::string name = {});
    std::size_t add_constraint(std::vector<Term> terms, Relation relation, double rhs,
                               std::string name = {});

    void set_objective(std::size_t var, double coef);
    void set_bounds(std::size_t var, double lower, double upper);
    void set_sense(Sense sense) { sense_ = sense; }

    Sense sense() const { return sense_; }
    std::size_t num_variables() const { return variables_.size(); }
    std::size_t num_constraints() const { return constraints_.size(); }
    const Variable& variable(std::size_t j) const { return variables_.at(j); }
    const Constraint& constraint(std::size_t i) const { return constraints_.at(i); }
    const std::vector<Variable>& variables() const { return variables_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }

    /// Objective value of `point` under this problem's sense (no feasibility check).
    double evaluate(std::span<const double> point) const;

    /// Throws MalformedProblem if an invariant is broken.
    void validate() const;

private:
    Sense sense_;
    std::vector<Variable> variables_;
    std::vector<Constraint> constraints_;
};

struct SolveOptions {
    double feas_tol = 1e-7;
    double opt_tol = 1e-9;
    /// 0 selects 50 * (variables + constraints).
    std::size_t max_iters = 0;
};

struct Solution {
    Status status = Status::IterationLimit;
    double objective = 0.0;
    std::vector<double> primal;
    std::size_t iterations = 0;
};

/// Solves `problem`. Single-threaded and reentrant.
/// Throws MalformedProblem before any pivoting if the problem is ill-formed.
Solution solve(const Problem& problem, const SolveOptions& options = {});

struct Violation {
    enum class Kind { LowerBound, UpperBound, Constraint };
    Kind kind;
    std::size_t index;  // variable index for bounds, row index for constraints
    double amount;      // positive magnitude of the violation
};

/// Lists every bound or row violated by more than `tol`.
/// Throws std::invalid_argument on a dimension mismatch.
std::vector<Violation> check_feasible(const Problem& problem, std::span<const double> point,
                                      double tol);

/// Plain-text dump, one item per line:
///   `obj min|max`
///   `var <index> <name> <lower> <upper> <objective>`
///   `row <index> <name> <le|eq|ge> <rhs> <var>:<coef> ...`
/// Infinite bounds print as `inf` / `-inf`. Numbers use 17 significant digits.
void write_text(const Problem& problem, std::ostream& out);

}  // namespace p2pfair::lp
