#include "p2pfair/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace p2pfair {

namespace {

using nlohmann::json;

constexpr double kSumTol = 1e-6;

// floor(share * n) each, leftovers to the largest fractional parts (ties
// to the earlier entry).
std::vector<std::size_t> largest_remainder(const std::vector<double>& shares, std::size_t n) {
    std::vector<std::size_t> counts(shares.size());
    std::vector<std::pair<double, std::size_t>> frac;
    std::size_t used = 0;
    for (std::size_t k = 0; k < shares.size(); ++k) {
        const double exact = shares[k] * static_cast<double>(n);
        counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        used += counts[k];
        frac.emplace_back(exact - static_cast<double>(counts[k]), k);
    }
    std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < n && k < frac.size(); ++k, ++used) ++counts[frac[k].second];
    return counts;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    std::istringstream in(s);
    in.imbue(std::locale::classic());
    double v = 0.0;
    if (!(in >> v)) throw ScenarioError("not a number: " + s);
    return v;
}

HourlySeries series_from_json(const json& node, const std::string& key, const std::string& base_dir) {
    if (node.contains(key)) {
        const auto values = node.at(key).get<std::vector<double>>();
        if (values.size() != kHours) throw ScenarioError(key + " must have 24 entries");
        HourlySeries out{};
        std::copy(values.begin(), values.end(), out.begin());
        return out;
    }
    if (node.contains(key + "_file")) {
        return read_series_file((std::filesystem::path(base_dir) / node.at(key + "_file").get<std::string>()).string());
    }
    throw ScenarioError("missing " + key + " or " + key + "_file");
}

}  // namespace

const char* to_string(TariffKind kind) {
    switch (kind) {
        case TariffKind::Flat: return "flat";
        case TariffKind::Double: return "double";
        case TariffKind::Dynamic: return "dynamic";
    }
    return "?";
}

TariffKind tariff_kind_from_string(const std::string& s) {
    if (s == "flat") return TariffKind::Flat;
    if (s == "double") return TariffKind::Double;
    if (s == "dynamic") return TariffKind::Dynamic;
    throw ScenarioError("unknown tariff kind " + s);
}

TariffSchedule flat_tariff(double price, double buyback) {
    TariffSchedule t{TariffKind::Flat, {}, buyback};
    t.selling.fill(price);
    return t;
}

TariffSchedule double_tariff(double day, double night, int day_start, int day_end, double buyback) {
    TariffSchedule t{TariffKind::Double, {}, buyback};
    for (std::size_t h = 0; h < kHours; ++h) {
        const int hour = static_cast<int>(h);
        t.selling[h] = (hour >= day_start && hour < day_end) ? day : night;
    }
    return t;
}

TariffSchedule dynamic_tariff(const HourlySeries& wholesale, double fee, double buyback) {
    TariffSchedule t{TariffKind::Dynamic, {}, buyback};
    for (std::size_t h = 0; h < kHours; ++h) t.selling[h] = wholesale[h] + fee;
    return t;
}

void validate_tariff(const TariffSchedule& t) {
    const double lo = *std::min_element(t.selling.begin(), t.selling.end());
    const double hi = *std::max_element(t.selling.begin(), t.selling.end());
    if (!(lo >= 0.0) || !std::isfinite(hi)) throw ScenarioError("tariff prices must be finite and non-negative");
    if (!(t.buyback >= 0.0)) throw ScenarioError("buyback price must be non-negative");
    if (t.buyback > lo) throw ScenarioError("buyback price exceeds the lowest selling price");
    if (t.kind == TariffKind::Flat && lo != hi) throw ScenarioError("flat tariff varies over the day");
    if (t.kind == TariffKind::Double) {
        std::vector<double> distinct(t.selling.begin(), t.selling.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() != 2) throw ScenarioError("double tariff needs exactly two price levels");
    }
}

std::vector<ClassSpec> default_classes() {
    const double third = 1.0 / 3.0;
    return {{"R", third, 5.1, 0.8, 0.8, 0.1, 0.1},
            {"M", third, 3.9, 0.2, 0.5, 0.1, 0.4},
            {"P", third, 2.1, 0.0, 0.2, 0.1, 0.7}};
}

void validate_spec(const ScenarioSpec& spec) {
    if (spec.classes.empty()) throw ScenarioError("no household classes");
    double shares = 0.0;
    for (const auto& c : spec.classes) {
        if (c.label.empty() || c.label == "pv") throw ScenarioError("invalid class label '" + c.label + "'");
        if (c.share < 0.0 || c.peak_kw < 0.0 || c.pv_share < 0.0 || c.pv_share > 1.0) {
            throw ScenarioError("class " + c.label + ": share, peak or PV share out of range");
        }
        if (c.dynamic < 0.0 || c.double_rate < 0.0 || c.flat < 0.0 ||
            std::abs(c.dynamic + c.double_rate + c.flat - 1.0) > kSumTol) {
            throw ScenarioError("class " + c.label + ": tariff mix must sum to 1");
        }
        shares += c.share;
    }
    if (std::abs(shares - 1.0) > kSumTol) throw ScenarioError("class shares must sum to 1");
    if (spec.peers_per_bus < 1) throw ScenarioError("peers_per_bus must be at least 1");
    if (!(spec.noise >= 0.0)) throw ScenarioError("noise must be non-negative");
    if (!(spec.pv_capacity_ratio >= 0.0)) throw ScenarioError("pv_capacity_ratio must be non-negative");
    if (!(spec.power_factor > 0.0 && spec.power_factor <= 1.0)) throw ScenarioError("power_factor must lie in (0, 1]");
    if (spec.class_layout != "shuffled" && spec.class_layout != "by_bus") {
        throw ScenarioError("class_layout must be 'shuffled' or 'by_bus'");
    }
    if (spec.ask_markup < 0.0 || spec.bid_markdown < 0.0) throw ScenarioError("bid offsets must be non-negative");
    for (double v : spec.consumption_shape) {
        if (!(v >= 0.0)) throw ScenarioError("consumption shape must be non-negative");
    }
    for (double v : spec.pv_shape) {
        if (!(v >= 0.0)) throw ScenarioError("pv shape must be non-negative");
    }
    const auto& t = spec.tariffs;
    validate_tariff(flat_tariff(t.flat, t.buyback));
    validate_tariff(double_tariff(t.double_day, t.double_night, t.day_start, t.day_end, t.buyback));
    validate_tariff(dynamic_tariff(t.wholesale, t.dynamic_fee, t.buyback));
    if (spec.community_pv && !(spec.community_pv->capacity_kw >= 0.0)) {
        throw ScenarioError("community PV capacity must be non-negative");
    }
}

Scenario generate(const ScenarioSpec& spec) {
    validate_spec(spec);
    Scenario s{build_grid(spec.topology, SquaredVoltageLimits::from_magnitudes(1.0, spec.v_min, spec.v_max),
                          spec.base_kva),
               {}, {}, {}, {}};
    for (const auto& c : spec.classes) s.group_order.push_back(c.label);
    s.pv_shape = spec.pv_shape;

    // Households per bus, feeder order (substation first).
    std::vector<int> buses;
    if (spec.include_substation) buses.push_back(s.grid.substation());
    buses.insert(buses.end(), s.grid.buses().begin(), s.grid.buses().end());
    std::vector<int> by_id = buses;
    std::sort(by_id.begin(), by_id.end());

    std::mt19937_64 rng(spec.seed);
    const std::size_t n = buses.size() * static_cast<std::size_t>(spec.peers_per_bus);
    std::vector<double> shares;
    for (const auto& c : spec.classes) shares.push_back(c.share);
    const auto class_counts = largest_remainder(shares, n);
    std::vector<std::size_t> class_of;
    for (std::size_t k = 0; k < class_counts.size(); ++k) class_of.insert(class_of.end(), class_counts[k], k);

    s.households.resize(n);
    std::vector<std::size_t> slot_order(n);  // household position -> class slot
    std::iota(slot_order.begin(), slot_order.end(), 0);
    if (spec.class_layout == "shuffled") std::shuffle(slot_order.begin(), slot_order.end(), rng);
    const auto& bus_list = spec.class_layout == "shuffled" ? by_id : buses;
    for (std::size_t i = 0; i < n; ++i) {
        auto& h = s.households[i];
        const int bus = bus_list[i / static_cast<std::size_t>(spec.peers_per_bus)];
        h.bus = bus;
        h.id = "b" + std::to_string(bus) + "." + std::to_string(i % static_cast<std::size_t>(spec.peers_per_bus) + 1);
        const auto& cls = spec.classes[class_of[slot_order[i]]];
        h.group = cls.label;
        h.peak_kw = cls.peak_kw;
    }

    // PV ownership and tariffs, drawn per class.
    for (const auto& cls : spec.classes) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (s.households[i].group == cls.label) members.push_back(i);
        }
        std::shuffle(members.begin(), members.end(), rng);
        const auto owners = largest_remainder({cls.pv_share, 1.0 - cls.pv_share}, members.size())[0];
        for (std::size_t k = 0; k < owners; ++k) {
            s.households[members[k]].pv_kw = cls.peak_kw * spec.pv_capacity_ratio;
        }
        std::shuffle(members.begin(), members.end(), rng);
        const auto mix = largest_remainder({cls.dynamic, cls.double_rate, cls.flat}, members.size());
        std::size_t k = 0;
        for (std::size_t t = 0; t < mix.size(); ++t) {
            const char* kind = t == 0 ? "dynamic" : t == 1 ? "double" : "flat";
            for (std::size_t c = 0; c < mix[t]; ++c) s.households[members[k++]].tariff = kind;
        }
    }

    const auto& tp = spec.tariffs;
    const std::map<std::string, TariffSchedule> tariffs{
        {"flat", flat_tariff(tp.flat, tp.buyback)},
        {"double", double_tariff(tp.double_day, tp.double_night, tp.day_start, tp.day_end, tp.buyback)},
        {"dynamic", dynamic_tariff(tp.wholesale, tp.dynamic_fee, tp.buyback)}};
    const double tan_phi = std::tan(std::acos(spec.power_factor));

    std::normal_distribution<double> gauss(0.0, 1.0);
    s.slots.assign(kHours, std::vector<Peer>(n));
    for (std::size_t hour = 0; hour < kHours; ++hour) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& h = s.households[i];
            const double load_noise = 1.0 + spec.noise * gauss(rng);
            const double pv_noise = 1.0 + spec.noise * gauss(rng);
            const auto& tariff = tariffs.at(h.tariff);
            Peer& p = s.slots[hour][i];
            p.id = h.id;
            p.bus = h.bus;
            p.group = h.group;
            p.pv_kw = h.pv_kw;
            p.consumption = std::max(0.0, spec.consumption_shape[hour] * load_noise * h.peak_kw);
            p.production = std::clamp(spec.pv_shape[hour] * pv_noise * h.pv_kw, 0.0, h.pv_kw);
            p.utility_sell_price = tariff.selling[hour];
            p.utility_buy_price = tariff.buyback;
            p.sell_floor = tariff.buyback + spec.ask_markup;
            p.buy_ceiling = std::max(0.0, tariff.selling[hour] - spec.bid_markdown);
            p.reactive_pu = -p.consumption * tan_phi / spec.base_kva;
        }
    }
    s.partition = make_partition(s.slots.front(), s.group_order);
    if (spec.community_pv) {
        s = add_community_pv(std::move(s), spec.community_pv->bus, spec.community_pv->capacity_kw);
    }
    return s;
}

Scenario add_community_pv(Scenario s, int bus, double capacity_kw) {
    if (!s.grid.contains(bus)) throw ScenarioError("community PV on unknown bus " + std::to_string(bus));
    if (!(capacity_kw >= 0.0)) throw ScenarioError("community PV capacity must be non-negative");
    auto existing = std::find_if(s.households.begin(), s.households.end(), [](const Household& h) { return h.pv_actor; });
    const auto index = static_cast<std::size_t>(existing - s.households.begin());
    if (existing == s.households.end()) {
        s.households.push_back({});
        for (auto& slot : s.slots) slot.push_back({});
    }
    Household& h = s.households[index];
    h = Household{"pv", bus, "pv", "none", 0.0, capacity_kw, true};
    for (std::size_t hour = 0; hour < s.slots.size(); ++hour) {
        Peer p;
        p.id = h.id;
        p.bus = bus;
        p.group = h.group;
        p.pv_kw = capacity_kw;
        p.pv_actor = true;
        p.production = capacity_kw * s.pv_shape[hour];
        s.slots[hour][index] = p;
    }
    s.partition = make_partition(s.slots.front(), s.group_order);
    return s;
}

std::vector<int> market_active_slots(const Scenario& scenario) {
    std::vector<int> out;
    for (std::size_t hour = 0; hour < scenario.slots.size(); ++hour) {
        const auto& peers = scenario.slots[hour];
        if (std::any_of(peers.begin(), peers.end(), [](const Peer& p) { return has_surplus(p); })) {
            out.push_back(static_cast<int>(hour));
        }
    }
    return out;
}

HourlySeries read_series(std::istream& in) {
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        fields.imbue(std::locale::classic());
        std::vector<std::string> cols;
        for (std::string tok; fields >> tok;) cols.push_back(tok);
        if (cols.empty()) continue;
        if (cols.size() > 2) throw ScenarioError("series line with more than two columns: " + line);
        values.push_back(parse_double(cols.back()));
    }
    if (values.size() != kHours) {
        throw ScenarioError("expected 24 hourly values, got " + std::to_string(values.size()));
    }
    HourlySeries out{};
    std::copy(values.begin(), values.end(), out.begin());
    return out;
}

HourlySeries read_series_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open " + path);
    return read_series(in);
}

ScenarioSpec parse_spec(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("scenario JSON: ") + e.what());
    }
    auto resolve = [&](const std::string& f) { return (std::filesystem::path(base_dir) / f).string(); };
    ScenarioSpec spec;
    try {
        spec.topology = read_topology_file(resolve(j.at("topology").get<std::string>()));
        spec.base_kva = j.value("base_kva", spec.base_kva);
        spec.v_min = j.value("v_min", spec.v_min);
        spec.v_max = j.value("v_max", spec.v_max);
        spec.peers_per_bus = j.value("peers_per_bus", spec.peers_per_bus);
        spec.include_substation = j.value("include_substation", spec.include_substation);
        spec.pv_capacity_ratio = j.value("pv_capacity_ratio", spec.pv_capacity_ratio);
        spec.noise = j.value("noise", spec.noise);
        spec.seed = j.value("seed", spec.seed);
        spec.class_layout = j.value("class_layout", spec.class_layout);
        spec.power_factor = j.value("power_factor", spec.power_factor);
        spec.ask_markup = j.value("ask_markup", spec.ask_markup);
        spec.bid_markdown = j.value("bid_markdown", spec.bid_markdown);
        if (j.contains("classes")) {
            for (const auto& c : j.at("classes")) {
                const auto& mix = c.at("tariff_mix");
                spec.classes.push_back(ClassSpec{c.at("label").get<std::string>(), c.at("share").get<double>(),
                                                 c.at("peak_kw").get<double>(), c.value("pv_share", 0.0),
                                                 mix.value("dynamic", 0.0), mix.value("double", 0.0),
                                                 mix.value("flat", 0.0)});
            }
        } else {
            spec.classes = default_classes();
        }
        const auto& t = j.at("tariffs");
        auto& tp = spec.tariffs;
        tp.flat = t.value("flat", tp.flat);
        tp.double_day = t.value("double_day", tp.double_day);
        tp.double_night = t.value("double_night", tp.double_night);
        tp.day_start = t.value("day_start", tp.day_start);
        tp.day_end = t.value("day_end", tp.day_end);
        tp.buyback = t.value("buyback", tp.buyback);
        tp.dynamic_fee = t.value("dynamic_fee", tp.dynamic_fee);
        tp.wholesale = series_from_json(t, "wholesale", base_dir);
        spec.consumption_shape = series_from_json(j, "consumption_shape", base_dir);
        spec.pv_shape = series_from_json(j, "pv_shape", base_dir);
        if (j.contains("community_pv")) {
            const auto& c = j.at("community_pv");
            spec.community_pv = CommunityPv{c.at("bus").get<int>(), c.at("capacity_kw").get<double>()};
        }
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("scenario JSON: ") + e.what());
    }
    validate_spec(spec);
    return spec;
}

ScenarioSpec read_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str(), std::filesystem::path(path).parent_path().string());
}

void export_scenario(const Scenario& s, std::ostream& out) {
    out << "p2pfair-scenario 1\n";
    out << "limits " << fmt(s.grid.v0()) << ' ' << fmt(s.grid.v_lower()) << ' ' << fmt(s.grid.v_upper()) << '\n';
    out << "base_kva " << fmt(s.grid.base_kva()) << '\n';
    out << "substation " << s.grid.substation() << '\n';
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        out << "line " << s.grid.parent_of(k) << ' ' << s.grid.buses()[k] << ' ' << fmt(s.grid.line_r()(i)) << ' '
            << fmt(s.grid.line_x()(i)) << '\n';
    }
    for (const auto& g : s.group_order) out << "group " << g << '\n';
    out << "pv_shape";
    for (double v : s.pv_shape) out << ' ' << fmt(v);
    out << '\n';
    out << "# household id bus group tariff peak_kw pv_kw pv_actor\n";
    for (const auto& h : s.households) {
        out << "household " << h.id << ' ' << h.bus << ' ' << h.group << ' ' << h.tariff << ' ' << fmt(h.peak_kw)
            << ' ' << fmt(h.pv_kw) << ' ' << (h.pv_actor ? 1 : 0) << '\n';
    }
    out << "# slot hour index consumption production ask bid utility_sell utility_buy reactive\n";
    for (std::size_t hour = 0; hour < s.slots.size(); ++hour) {
        for (std::size_t i = 0; i < s.slots[hour].size(); ++i) {
            const Peer& p = s.slots[hour][i];
            out << "slot " << hour << ' ' << i << ' ' << fmt(p.consumption) << ' ' << fmt(p.production) << ' '
                << fmt(p.sell_floor) << ' ' << fmt(p.buy_ceiling) << ' ' << fmt(p.utility_sell_price) << ' '
                << fmt(p.utility_buy_price) << ' ' << fmt(p.reactive_pu) << '\n';
        }
    }
}

Scenario import_scenario(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "p2pfair-scenario 1") throw ScenarioError("not an exported scenario");
    double v0 = 1.0, lo = 0.0, hi = 0.0, base = 0.0;
    int substation = 0;
    std::vector<Bus> buses;
    Scenario s;
    s.slots.assign(kHours, {});
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream f(line);
        f.imbue(std::locale::classic());
        std::string tag;
        f >> tag;
        std::vector<std::string> t;
        for (std::string tok; f >> tok;) t.push_back(tok);
        auto need = [&](std::size_t k) {
            if (t.size() != k) throw ScenarioError("scenario line " + std::to_string(lineno) + ": malformed " + tag);
        };
        if (tag == "limits") {
            need(3);
            v0 = parse_double(t[0]);
            lo = parse_double(t[1]);
            hi = parse_double(t[2]);
        } else if (tag == "base_kva") {
            need(1);
            base = parse_double(t[0]);
        } else if (tag == "substation") {
            need(1);
            substation = std::stoi(t[0]);
            buses.push_back(Bus{substation, std::nullopt, 0.0, 0.0});
        } else if (tag == "line") {
            need(4);
            buses.push_back(Bus{std::stoi(t[1]), std::stoi(t[0]), parse_double(t[2]), parse_double(t[3])});
        } else if (tag == "pv_shape") {
            need(kHours);
            for (std::size_t h = 0; h < kHours; ++h) s.pv_shape[h] = parse_double(t[h]);
        } else if (tag == "group") {
            need(1);
            s.group_order.push_back(t[0]);
        } else if (tag == "household") {
            need(7);
            s.households.push_back(Household{t[0], std::stoi(t[1]), t[2], t[3], parse_double(t[4]),
                                             parse_double(t[5]), t[6] == "1"});
        } else if (tag == "slot") {
            need(9);
            const auto hour = std::stoul(t[0]), idx = std::stoul(t[1]);
            if (hour >= kHours || idx >= s.households.size()) {
                throw ScenarioError("scenario line " + std::to_string(lineno) + ": slot out of range");
            }
            auto& slot = s.slots[hour];
            if (slot.size() != idx) throw ScenarioError("scenario line " + std::to_string(lineno) + ": out of order");
            const Household& h = s.households[idx];
            Peer p;
            p.id = h.id;
            p.bus = h.bus;
            p.group = h.group;
            p.pv_kw = h.pv_kw;
            p.pv_actor = h.pv_actor;
            p.consumption = parse_double(t[2]);
            p.production = parse_double(t[3]);
            p.sell_floor = parse_double(t[4]);
            p.buy_ceiling = parse_double(t[5]);
            p.utility_sell_price = parse_double(t[6]);
            p.utility_buy_price = parse_double(t[7]);
            p.reactive_pu = parse_double(t[8]);
            slot.push_back(std::move(p));
        } else {
            throw ScenarioError("scenario line " + std::to_string(lineno) + ": unknown record " + tag);
        }
    }
    for (const auto& slot : s.slots) {
        if (slot.size() != s.households.size()) throw ScenarioError("scenario has incomplete slots");
    }
    s.grid = build_grid(buses, SquaredVoltageLimits{v0, lo, hi}, base);
    s.partition = make_partition(s.slots.front(), s.group_order);
    return s;
}

Scenario load_scenario(const std::string& path, std::optional<std::uint64_t> seed) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open " + path);
    const int first = (in >> std::ws).peek();
    if (first == '{') {
        in.close();
        ScenarioSpec spec = read_spec_file(path);
        if (seed) spec.seed = *seed;
        return generate(spec);
    }
    return import_scenario(in);
}

}  // namespace p2pfair
