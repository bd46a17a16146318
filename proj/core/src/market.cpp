#include "p2pfair/market.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace p2pfair {

void validate_peer(const Peer& p) {
    auto fail = [&](const std::string& what) { throw MarketError("peer " + p.id + ": " + what); };
    const double values[] = {p.consumption,       p.production,        p.sell_floor, p.buy_ceiling,
                             p.utility_sell_price, p.utility_buy_price, p.reactive_pu, p.pv_kw};
    for (double v : values) {
        if (!std::isfinite(v)) fail("non-finite field");
    }
    if (p.consumption < 0.0 || p.production < 0.0) fail("negative energy");
    if (p.sell_floor < 0.0 || p.buy_ceiling < 0.0 || p.utility_sell_price < 0.0 || p.utility_buy_price < 0.0) {
        fail("negative price");
    }
    if (p.pv_kw < 0.0) fail("negative PV capacity");
    if (p.sell_floor < p.utility_buy_price) fail("selling bid below the utility buyback price");
    if (p.buy_ceiling > p.utility_sell_price) fail("buying bid above the utility selling price");
    if (p.pv_actor && (p.consumption != 0.0 || p.sell_floor != 0.0)) {
        fail("pv actor must have zero consumption and a zero selling bid");
    }
    if (!p.pv_actor && p.group.empty()) fail("missing group label");
}

std::vector<std::pair<std::size_t, std::size_t>> GroupPartition::pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < groups.size(); ++a) {
        for (std::size_t b = a + 1; b < groups.size(); ++b) out.emplace_back(a, b);
    }
    return out;
}

std::string GroupPartition::pair_label(std::size_t a, std::size_t b) const {
    return groups.at(a).label + "-" + groups.at(b).label;
}

GroupPartition make_partition(const std::vector<Peer>& peers, const std::vector<std::string>& order) {
    std::vector<std::string> labels;
    for (const auto& l : order) {
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
    for (const auto& p : peers) {
        if (p.pv_actor) continue;
        if (std::find(labels.begin(), labels.end(), p.group) == labels.end()) labels.push_back(p.group);
    }
    GroupPartition out;
    std::map<std::string, std::size_t> slot;
    for (const auto& l : labels) {
        slot[l] = out.groups.size();
        out.groups.push_back(Group{l, {}});
    }
    for (std::size_t i = 0; i < peers.size(); ++i) {
        if (peers[i].pv_actor) out.pv_members.push_back(i);
        else out.groups[slot.at(peers[i].group)].members.push_back(i);
    }
    out.groups.erase(std::remove_if(out.groups.begin(), out.groups.end(),
                                    [](const Group& g) { return g.members.empty(); }),
                     out.groups.end());
    return out;
}

void validate_partition(const GroupPartition& partition, std::size_t num_peers) {
    std::vector<int> seen(num_peers, 0);
    auto mark = [&](std::size_t i) {
        if (i >= num_peers) throw MarketError("partition references peer " + std::to_string(i) + " out of range");
        if (seen[i]++) throw MarketError("peer " + std::to_string(i) + " belongs to more than one group");
    };
    for (const auto& g : partition.groups) {
        if (g.members.empty()) throw MarketError("fairness group " + g.label + " is empty");
        for (auto i : g.members) mark(i);
    }
    for (auto i : partition.pv_members) mark(i);
    for (std::size_t i = 0; i < num_peers; ++i) {
        if (!seen[i]) throw MarketError("peer " + std::to_string(i) + " belongs to no group");
    }
}

std::size_t BidMatch::count() const {
    return static_cast<std::size_t>(std::count(feasible_.begin(), feasible_.end(), std::uint8_t{1}));
}

BidMatch build_bid_match(const std::vector<Peer>& peers, double slot_hours) {
    const std::size_t n = peers.size();
    std::vector<std::uint8_t> y(n * n, 0);
    std::vector<double> big_m(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        big_m[i] = peers[i].pv_kw * slot_hours;
        if (!has_surplus(peers[i])) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !has_deficit(peers[j])) continue;
            if (peers[i].sell_floor <= peers[j].buy_ceiling) y[i * n + j] = 1;
        }
    }
    return BidMatch(n, std::move(y), std::move(big_m));
}

double trade_price(const Peer& seller, const Peer& buyer) {
    if (seller.sell_floor > buyer.buy_ceiling) {
        throw MarketError("bids of " + seller.id + " and " + buyer.id + " do not match");
    }
    return 0.5 * (seller.sell_floor + buyer.buy_ceiling);
}

}  // namespace p2pfair
