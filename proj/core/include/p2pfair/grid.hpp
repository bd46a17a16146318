#pragma once

// Radial distribution network under the LinDistFlow approximation:
// squared voltages are affine in nodal injections, v = v0*1 + R p + Xs q,
// with R = 2 A^-1 D_r A^-T and Xs = 2 A^-1 D_x A^-T.

#include <Eigen/Dense>

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pfair {

class GridError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A bus and the line that feeds it. The substation is the only bus without
/// a parent; its r and x are ignored.
struct Bus {
    int id = 0;
    std::optional<int> parent;
    double r = 0.0;  // per unit
    double x = 0.0;  // per unit
};

struct SquaredVoltageLimits {
    double v0 = 1.0;
    double lower = 0.9025;
    double upper = 1.1025;

    /// Limits given as voltage magnitudes; stored squared.
    static SquaredVoltageLimits from_magnitudes(double v0_mag, double lower_mag, double upper_mag) {
        return {v0_mag * v0_mag, lower_mag * lower_mag, upper_mag * upper_mag};
    }
};

/// One bus's two-sided limit as a linear template in the nodal injections:
/// lower_rhs <= sum_k p_coef[k] p_k + q_coef[k] q_k <= upper_rhs, where the
/// vectors are indexed like GridModel::buses().
struct VoltageRow {
    int bus = 0;
    Eigen::VectorXd p_coef;
    Eigen::VectorXd q_coef;
    double lower_rhs = 0.0;
    double upper_rhs = 0.0;
};

class GridModel {
public:
    /// Non-substation buses in topological order from the substation
    /// (breadth first, ties by id).
    const std::vector<int>& buses() const { return order_; }
    int substation() const { return substation_; }
    std::size_t size() const { return order_.size(); }

    /// Position of `bus` in buses(); empty for the substation.
    /// Throws GridError for an unknown bus.
    std::optional<std::size_t> index_of(int bus) const;
    bool contains(int bus) const;

    const Eigen::MatrixXd& incidence() const { return incidence_; }
    const Eigen::MatrixXd& resistance_sensitivity() const { return r_sens_; }
    const Eigen::MatrixXd& reactance_sensitivity() const { return x_sens_; }
    const Eigen::VectorXd& line_r() const { return line_r_; }
    const Eigen::VectorXd& line_x() const { return line_x_; }
    int parent_of(std::size_t index) const { return parent_[index]; }

    double v0() const { return limits_.v0; }
    double v_lower() const { return limits_.lower; }
    double v_upper() const { return limits_.upper; }
    double base_kva() const { return base_kva_; }

    /// v = v0*1 + R p + Xs q (per unit, squared magnitudes).
    Eigen::VectorXd voltage_profile(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const;

    std::vector<VoltageRow> voltage_constraint_rows() const;

    friend GridModel build_grid(const std::vector<Bus>&, SquaredVoltageLimits, double);

private:
    int substation_ = 0;
    std::vector<int> order_;
    std::vector<int> parent_;  // parent bus id per ordered bus
    std::vector<std::pair<int, std::size_t>> lookup_;  // sorted (bus id, index)
    Eigen::MatrixXd incidence_;
    Eigen::VectorXd line_r_, line_x_;
    Eigen::MatrixXd r_sens_, x_sens_;
    SquaredVoltageLimits limits_;
    double base_kva_ = 1.0;
};

/// Builds the sensitivity matrices. Throws GridError on a cycle, a
/// disconnected bus, a duplicate id, a missing or second substation,
/// negative impedance, or inconsistent limits.
GridModel build_grid(const std::vector<Bus>& buses, SquaredVoltageLimits limits, double base_kva);

/// Reads a topology file: one line segment per record, whitespace separated
/// `from_bus to_bus r_pu x_pu`; blank lines and `#` comments are skipped.
/// The substation is the bus that never appears as `to_bus`.
std::vector<Bus> read_topology(std::istream& in);
std::vector<Bus> read_topology_file(const std::string& path);

}  // namespace p2pfair
