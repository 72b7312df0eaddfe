#pragma once

#include <vector>

#include "voltmesh/dispatch.hpp"
#include "voltmesh/station.hpp"

namespace voltmesh {

struct Satisfaction {
    double fap = 0.0;  // kW needed to finish on time
    double u = 0.0;    // satisfaction score, <= 0
};

// Future-average-power satisfaction. By default the unmet demand is floored
// at zero once the target is reached; paper_literal lets it go negative.
Satisfaction satisfaction(const ChargerState& state, const ChargerSession& session, double rho,
                          const StationConfig& cfg, bool paper_literal = false);

// psi_j = |u_j - mean(u)| over the given (active) chargers.
std::vector<double> fairness(const std::vector<double>& u_values);

struct StepCost {
    double energy_cost = 0.0;   // grid purchases minus V2G sales
    double pv_sale = 0.0;       // PV-to-grid revenue
    double battery_cost = 0.0;  // cycle-aging cost
    int n_active = 0;
};

StepCost step_cost(const PowerFlows& flows, const ExogenousStep& ex,
                   const std::vector<DegradationOutcome>& degradations, double delta_t,
                   int n_active);

// A finished visit: the session plus the battery level at departure.
struct SessionOutcome {
    ChargerSession session;
    double e_final = 0.0;
};

// Per-session completion percentage, capped at 100.
std::vector<double> completion_ratios(const std::vector<SessionOutcome>& outcomes);

// Mean completion percentage over finished sessions (100 when none).
double completion_ratio(const std::vector<SessionOutcome>& outcomes);

// |completion_i - mean completion| per session, the fairness comparison metric.
std::vector<double> completion_deviations(const std::vector<SessionOutcome>& outcomes);

// Population standard deviation of per-session completion percentages.
double completion_std(const std::vector<SessionOutcome>& outcomes);

}  // namespace voltmesh
