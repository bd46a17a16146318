#pragma once

// Recursive LinDistFlow evaluation straight from the branch equations:
// flows accumulate leaf to root (P_n = sum of child flows - p_n), then
// voltages propagate root to leaf (v_n = v_parent - 2 (r P_n + x Q_n)).

#include "p2pfair/grid.hpp"

#include <functional>
#include <map>
#include <vector>

namespace p2pfair::testing {

inline std::map<int, double> recursive_voltages(const std::vector<Bus>& buses, double v0,
                                                const std::map<int, double>& p,
                                                const std::map<int, double>& q) {
    std::map<int, std::vector<const Bus*>> kids;
    int root = 0;
    for (const auto& b : buses) {
        if (b.parent) kids[*b.parent].push_back(&b);
        else root = b.id;
    }
    std::map<int, double> flow_p, flow_q;
    std::function<void(int)> accumulate = [&](int id) {
        double fp = 0.0, fq = 0.0;
        for (const Bus* c : kids[id]) {
            accumulate(c->id);
            fp += flow_p[c->id];
            fq += flow_q[c->id];
        }
        auto at = [](const std::map<int, double>& m, int k) {
            auto it = m.find(k);
            return it == m.end() ? 0.0 : it->second;
        };
        flow_p[id] = fp - at(p, id);
        flow_q[id] = fq - at(q, id);
    };
    accumulate(root);
    std::map<int, double> v;
    v[root] = v0;
    std::function<void(int)> descend = [&](int id) {
        for (const Bus* c : kids[id]) {
            v[c->id] = v[id] - 2.0 * (c->r * flow_p[c->id] + c->x * flow_q[c->id]);
            descend(c->id);
        }
    };
    descend(root);
    return v;
}

// Every rooted tree on `n` buses with parent(k) < k; covers all tree shapes.
inline void for_each_recursive_tree(int n, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::function<void(int)> rec = [&](int k) {
        if (k == n) {
            visit(parent);
            return;
        }
        for (int p = 0; p < k; ++p) {
            parent[static_cast<std::size_t>(k)] = p;
            rec(k + 1);
        }
    };
    rec(1);
}

}  // namespace p2pfair::testing
