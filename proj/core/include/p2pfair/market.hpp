#pragma once

// Market participants, fairness groups and bid matching for one time slot.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace p2pfair {

class MarketError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// One participant in one slot. Energies in kWh, prices in EUR/kWh.
struct Peer {
    std::string id;
    int bus = 0;
    double consumption = 0.0;
    double production = 0.0;
    double sell_floor = 0.0;          // lambda^s
    double buy_ceiling = 0.0;         // lambda^b
    double utility_sell_price = 0.0;  // lambda^us, utility sells to the peer
    double utility_buy_price = 0.0;   // lambda^ub, utility buys from the peer
    double reactive_pu = 0.0;         // rho, signed injection
    std::string group;
    double pv_kw = 0.0;
    bool pv_actor = false;
};

/// Signed surplus e - c.
inline double surplus_deficit(const Peer& p) { return p.production - p.consumption; }

/// Each peer is a seller or a buyer in a slot; a balanced peer counts as a
/// zero-surplus seller.
inline bool is_seller(const Peer& p) { return p.production >= p.consumption; }
inline bool has_surplus(const Peer& p) { return p.production > p.consumption; }
inline bool has_deficit(const Peer& p) { return p.consumption > p.production; }

/// Throws MarketError if a Peer invariant fails.
void validate_peer(const Peer& p);

struct Group {
    std::string label;
    std::vector<std::size_t> members;  // peer indices
};

/// Fairness groups plus the (possibly empty) group of pv actors, which trade
/// but are excluded from unfairness measurement.
struct GroupPartition {
    std::vector<Group> groups;
    std::vector<std::size_t> pv_members;

    std::size_t num_groups() const { return groups.size(); }
    /// All 2-combinations (a, b), a < b, in lexicographic order.
    std::vector<std::pair<std::size_t, std::size_t>> pairs() const;
    std::string pair_label(std::size_t a, std::size_t b) const;
};

/// Groups peers by label. Labels listed in `order` come first (in that
/// order, skipped when empty); any other label follows in first-appearance
/// order. Peers flagged pv_actor go to the pv group.
GroupPartition make_partition(const std::vector<Peer>& peers, const std::vector<std::string>& order = {});

/// Throws MarketError unless the partition is exclusive, exhaustive over
/// `num_peers` and has no empty fairness group.
void validate_partition(const GroupPartition& partition, std::size_t num_peers);

/// Bid feasibility mask Y and per-seller trade bound M.
class BidMatch {
public:
    BidMatch() = default;
    BidMatch(std::size_t n, std::vector<std::uint8_t> feasible, std::vector<double> big_m)
        : n_(n), feasible_(std::move(feasible)), big_m_(std::move(big_m)) {}

    std::size_t size() const { return n_; }
    bool feasible(std::size_t seller, std::size_t buyer) const { return feasible_[seller * n_ + buyer] != 0; }
    double big_m(std::size_t i) const { return big_m_[i]; }
    const std::vector<double>& big_m() const { return big_m_; }
    std::size_t count() const;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> feasible_;
    std::vector<double> big_m_;
};

/// Y_ij = 1 iff i != j, i has strict surplus, j has strict deficit and
/// lambda^s_i <= lambda^b_j. M_i = installed PV (kW) times the slot length.
BidMatch build_bid_match(const std::vector<Peer>& peers, double slot_hours = 1.0);

/// Settled price of a matched pair: mean of ask and bid.
/// Throws MarketError when the bids do not match.
double trade_price(const Peer& seller, const Peer& buyer);

}  // namespace p2pfair
