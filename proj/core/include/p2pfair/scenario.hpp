#pragma once

// Synthetic community scenarios: households on a radial feeder with
// class-dependent peaks, PV ownership and tariffs, one market slot per hour.

#include "p2pfair/grid.hpp"
#include "p2pfair/market.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pfair {

class ScenarioError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kHours = 24;
using HourlySeries = std::array<double, kHours>;

enum class TariffKind { Flat, Double, Dynamic };
const char* to_string(TariffKind kind);
TariffKind tariff_kind_from_string(const std::string& s);

struct TariffSchedule {
    TariffKind kind = TariffKind::Flat;
    HourlySeries selling{};  // lambda^us per hour
    double buyback = 0.0;    // lambda^ub
};

TariffSchedule flat_tariff(double price, double buyback);
/// Day price on [day_start, day_end), night price otherwise.
TariffSchedule double_tariff(double day, double night, int day_start, int day_end, double buyback);
TariffSchedule dynamic_tariff(const HourlySeries& wholesale, double fee, double buyback);
/// Throws ScenarioError if the schedule breaks its kind's shape or lets the
/// buyback exceed an hourly selling price.
void validate_tariff(const TariffSchedule& t);

struct ClassSpec {
    std::string label;
    double share = 0.0;     // of all households
    double peak_kw = 0.0;
    double pv_share = 0.0;  // of the class
    double dynamic = 0.0;   // tariff mix, sums to 1
    double double_rate = 0.0;
    double flat = 0.0;
};

struct TariffSpec {
    double flat = 0.18736;
    double double_day = 0.18996;
    double double_night = 0.17766;
    int day_start = 6;
    int day_end = 22;
    double buyback = 0.1417;
    double dynamic_fee = 0.075;
    HourlySeries wholesale{};
};

struct CommunityPv {
    int bus = 0;
    double capacity_kw = 0.0;
};

struct ScenarioSpec {
    std::vector<Bus> topology;
    double base_kva = 10000.0;
    double v_min = 0.95;  // magnitudes, per unit
    double v_max = 1.05;
    int peers_per_bus = 4;
    bool include_substation = true;
    std::vector<ClassSpec> classes;
    double pv_capacity_ratio = 0.8;  // installed kW per kW of class peak
    double noise = 0.1;
    std::uint64_t seed = 1;
    std::string class_layout = "shuffled";  // or "by_bus": classes in feeder order
    TariffSpec tariffs;
    HourlySeries consumption_shape{};
    HourlySeries pv_shape{};
    double power_factor = 0.95;  // household load
    double ask_markup = 0.0;     // lambda^s = lambda^ub + markup
    double bid_markdown = 0.0;   // lambda^b = lambda^us - markdown
    std::optional<CommunityPv> community_pv;
};

/// Defaults: R/M/P thirds with 5.1/3.9/2.1 kW peaks, 80/20/0 %
/// PV and the 80/10/10, 50/10/40, 20/10/70 dynamic/double/flat mixes.
std::vector<ClassSpec> default_classes();

/// Throws ScenarioError on shares or mixes not summing to 1, bad ranges or
/// unknown layout.
void validate_spec(const ScenarioSpec& spec);

struct Household {
    std::string id;
    int bus = 0;
    std::string group;
    std::string tariff;  // "flat", "double", "dynamic" or "none"
    double peak_kw = 0.0;
    double pv_kw = 0.0;
    bool pv_actor = false;
};

struct Scenario {
    GridModel grid;
    std::vector<std::string> group_order;
    std::vector<Household> households;  // aligned with each slot's peers
    std::vector<std::vector<Peer>> slots;  // kHours entries
    GroupPartition partition;
    HourlySeries pv_shape{};  // unit-peak shape used for community plants
};

Scenario generate(const ScenarioSpec& spec);

/// Hours in which some participant has a strict surplus.
std::vector<int> market_active_slots(const Scenario& scenario);

/// Appends (or replaces) the non-profit plant on `bus`: no load, zero bids
/// and prices, production = capacity * scenario.pv_shape per hourly slot.
Scenario add_community_pv(Scenario scenario, int bus, double capacity_kw);

/// 24 values, one per line; a leading hour column is allowed, '#' starts a
/// comment.
HourlySeries read_series(std::istream& in);
HourlySeries read_series_file(const std::string& path);

/// JSON scenario description. Relative file names resolve against
/// `base_dir`.
ScenarioSpec parse_spec(const std::string& json_text, const std::string& base_dir);
ScenarioSpec read_spec_file(const std::string& path);

/// Full generated scenario as text; import(export(s)) reproduces s exactly.
void export_scenario(const Scenario& s, std::ostream& out);
Scenario import_scenario(std::istream& in);

/// Loads a JSON spec (generating with `seed` when given) or an exported
/// scenario, chosen by the file's first character.
Scenario load_scenario(const std::string& path, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace p2pfair
