#include "p2pfair/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace p2pfair {

std::optional<std::size_t> GridModel::index_of(int bus) const {
    if (bus == substation_) return std::nullopt;
    auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::make_pair(bus, std::size_t{0}));
    if (it == lookup_.end() || it->first != bus) {
        throw GridError("unknown bus " + std::to_string(bus));
    }
    return it->second;
}

bool GridModel::contains(int bus) const {
    if (bus == substation_) return true;
    auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::make_pair(bus, std::size_t{0}));
    return it != lookup_.end() && it->first == bus;
}

Eigen::VectorXd GridModel::voltage_profile(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
    const auto n = static_cast<Eigen::Index>(order_.size());
    if (p.size() != n || q.size() != n) {
        throw GridError("voltage_profile: expected injections of length " + std::to_string(n));
    }
    return Eigen::VectorXd::Constant(n, limits_.v0) + r_sens_ * p + x_sens_ * q;
}

std::vector<VoltageRow> GridModel::voltage_constraint_rows() const {
    std::vector<VoltageRow> rows;
    rows.reserve(order_.size());
    for (std::size_t k = 0; k < order_.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        rows.push_back(VoltageRow{order_[k], r_sens_.row(row).transpose(), x_sens_.row(row).transpose(),
                                  limits_.lower - limits_.v0, limits_.upper - limits_.v0});
    }
    return rows;
}

GridModel build_grid(const std::vector<Bus>& buses, SquaredVoltageLimits limits, double base_kva) {
    if (!(limits.lower < limits.v0 && limits.v0 < limits.upper)) {
        throw GridError("voltage limits must satisfy lower < v0 < upper");
    }
    if (!(base_kva > 0.0) || !std::isfinite(base_kva)) throw GridError("base_kva must be positive");
    if (buses.size() < 2) throw GridError("a grid needs a substation and at least one line");

    std::map<int, const Bus*> by_id;
    std::optional<int> substation;
    for (const auto& b : buses) {
        if (!by_id.emplace(b.id, &b).second) throw GridError("duplicate bus id " + std::to_string(b.id));
        if (!b.parent) {
            if (substation) throw GridError("more than one bus without a parent");
            substation = b.id;
        } else if (b.r < 0.0 || b.x < 0.0 || !std::isfinite(b.r) || !std::isfinite(b.x)) {
            throw GridError("line into bus " + std::to_string(b.id) + " has negative or non-finite impedance");
        }
    }
    if (!substation) throw GridError("no substation (every bus has a parent: cycle)");

    std::map<int, std::vector<int>> children;
    for (const auto& b : buses) {
        if (!b.parent) continue;
        if (!by_id.count(*b.parent)) {
            throw GridError("bus " + std::to_string(b.id) + " has unknown parent " + std::to_string(*b.parent));
        }
        children[*b.parent].push_back(b.id);
    }
    for (auto& [id, kids] : children) std::sort(kids.begin(), kids.end());

    GridModel g;
    g.substation_ = *substation;
    g.limits_ = limits;
    g.base_kva_ = base_kva;
    std::deque<int> queue{*substation};
    std::set<int> seen{*substation};
    while (!queue.empty()) {
        const int id = queue.front();
        queue.pop_front();
        auto it = children.find(id);
        if (it == children.end()) continue;
        for (int child : it->second) {
            if (!seen.insert(child).second) throw GridError("cycle through bus " + std::to_string(child));
            g.order_.push_back(child);
            queue.push_back(child);
        }
    }
    if (g.order_.size() + 1 != buses.size()) {
        // Any bus not reached from the substation sits on a parent cycle.
        for (const auto& b : buses) {
            if (!seen.count(b.id)) throw GridError("bus " + std::to_string(b.id) + " is disconnected from the substation");
        }
    }

    const auto n = static_cast<Eigen::Index>(g.order_.size());
    for (std::size_t k = 0; k < g.order_.size(); ++k) g.lookup_.emplace_back(g.order_[k], k);
    std::sort(g.lookup_.begin(), g.lookup_.end());

    g.incidence_ = Eigen::MatrixXd::Zero(n, n);
    g.line_r_.resize(n);
    g.line_x_.resize(n);
    g.parent_.resize(g.order_.size());
    for (std::size_t k = 0; k < g.order_.size(); ++k) {
        const Bus& b = *by_id.at(g.order_[k]);
        const auto row = static_cast<Eigen::Index>(k);
        g.parent_[k] = *b.parent;
        g.line_r_(row) = b.r;
        g.line_x_(row) = b.x;
        g.incidence_(row, row) = -1.0;
        if (*b.parent != g.substation_) {
            const auto col = static_cast<Eigen::Index>(*g.index_of(*b.parent));
            g.incidence_(row, col) = 1.0;
        }
    }

    // Parents precede children, so A is lower triangular with -1 on the diagonal.
    const Eigen::MatrixXd a_inv =
        g.incidence_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    g.r_sens_ = 2.0 * a_inv * g.line_r_.asDiagonal() * a_inv.transpose();
    g.x_sens_ = 2.0 * a_inv * g.line_x_.asDiagonal() * a_inv.transpose();
    return g;
}

std::vector<Bus> read_topology(std::istream& in) {
    std::vector<Bus> out;
    std::set<int> has_parent, mentioned;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        fields.imbue(std::locale::classic());
        int from = 0, to = 0;
        double r = 0.0, x = 0.0;
        if (!(fields >> from)) continue;
        if (!(fields >> to >> r >> x)) {
            throw GridError("topology line " + std::to_string(lineno) + ": expected `from to r x`");
        }
        if (!has_parent.insert(to).second) {
            throw GridError("topology line " + std::to_string(lineno) + ": bus " + std::to_string(to) +
                            " fed by two lines");
        }
        mentioned.insert(from);
        mentioned.insert(to);
        out.push_back(Bus{to, from, r, x});
    }
    for (int id : mentioned) {
        if (!has_parent.count(id)) out.push_back(Bus{id, std::nullopt, 0.0, 0.0});
    }
    return out;
}

std::vector<Bus> read_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GridError("cannot open topology file " + path);
    return read_topology(in);
}

}  // namespace p2pfair
