#pragma once

// Whole-day runs over a scenario and their on-disk layout:
//
//   OUT/ref/hHH.trades.tsv, hHH.peers.tsv, wall.tsv, unfairness.tsv, distributions.tsv
//   OUT/fair_eps<E>/ same plus hHH.trace.tsv and runs.tsv
//   OUT/sweep_epsilon.tsv, OUT/timing.tsv, OUT/profile.tsv
//   OUT/pv_<C>kw/plant.tsv, {ref,fair_eps<E>}/..., OUT/sweep_pv.tsv, OUT/sweep_pv_ref.tsv
//
// Tables are recomputed from the exported trades by regenerate_report().

#include "p2pfair/clearing_fair.hpp"
#include "p2pfair/report.hpp"
#include "p2pfair/scenario.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace p2pfair {

/// A model that has no feasible point (reference or fair LP).
class InfeasibleModel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HourRange {
    int first = 0;
    int last = static_cast<int>(kHours) - 1;
    std::vector<int> hours() const;
};
/// "H" or "H1..H2", inclusive, within 0..23.
HourRange parse_hours(const std::string& text);

struct ReferenceRun {
    std::vector<int> hours;
    std::vector<bool> active;
    std::vector<ClearingSolution> solutions;
};

/// Clears every slot in range; throws InfeasibleModel if a slot has no
/// feasible dispatch.
ReferenceRun run_reference(const Scenario& scenario, const HourRange& range, const lp::SolveOptions& lp = {});

struct FairRun {
    std::vector<double> epsilons;
    std::vector<std::vector<FairOutcome>> outcomes;  // [slot][epsilon]
};

/// Per slot, an epsilon sweep warm-started from the reference trades.
FairRun run_fair(const Scenario& scenario, const ReferenceRun& reference, const std::vector<double>& epsilons,
                 const FairOptions& options = {});

/// Directory name of a fair run: fair_eps<percent>.
std::string fair_dir_name(double epsilon);
std::string pv_dir_name(double capacity_kw);

/// Exported solutions only; tables come from regenerate_report().
void write_reference(const std::filesystem::path& dir, const Scenario& scenario, const ReferenceRun& run);
void write_fair(const std::filesystem::path& out, const Scenario& scenario, const ReferenceRun& reference,
                const FairRun& run);
/// Records the community plant of a PV sweep directory (plant.tsv).
void write_plant(const std::filesystem::path& dir, int bus, double capacity_kw);


/// Rebuilds every table under `out` from the exported trades and wall
/// times. Returns the number of tables written.
std::size_t regenerate_report(const std::filesystem::path& out, const Scenario& scenario, double tol = 0.01);

/// Unfairness of each slot of a run directory, read back from its files.
std::vector<SlotUnfairness> read_run_unfairness(const std::filesystem::path& dir, const Scenario& scenario,
                                                std::vector<int>* hours = nullptr);

}  // namespace p2pfair
