#pragma once

#include <optional>
#include <utility>

#include "voltmesh/common.hpp"

namespace voltmesh {

// Station-wide physical parameters.
struct StationConfig {
    int n_chargers = 4;
    double delta_t = 0.25;      // hours per step
    double p_ch_max = 16.0;     // kW, per-charger charging limit
    double p_disch_max = 16.0;  // kW, per-charger discharging limit
    double g_max = 100.0;       // kW, station<->grid transmission cap
    double pv_capacity = 30.0;  // kWp
};

void validate(const StationConfig& cfg);

// One EV's visit to a charger.
struct ChargerSession {
    int session_id = 0;
    int charger_id = 0;
    int arrival_step = 0;
    int departure_step = 0;  // charger is free again at this step
    double e_demand = 0.0;   // kWh, requested energy level
    double e_init = 0.0;     // kWh at arrival
    double e_cap = 40.0;     // kWh battery capacity
    double e_min = 0.0;
    double e_max = 40.0;
    double eta_ch = 0.95;
    double eta_disch = 0.95;
    double l_cyc = 3000.0;       // cycle life
    double kappa_batt = 6000.0;  // cost of a full battery life
};

void validate(const ChargerSession& s);

// Per-step snapshot of one charger.
struct ChargerState {
    double energy = 0.0;      // kWh, 0 when unoccupied
    int remaining_steps = 0;  // steps until departure
    bool occupied = false;
    std::optional<ChargerSession> session;

    double remaining_hours(double delta_t) const { return remaining_steps * delta_t; }
};

struct DegradationOutcome {
    double efc = 0.0;       // equivalent full cycles this step
    double age_frac = 0.0;  // fraction of cycle life consumed
    double cost = 0.0;      // currency
};

// Project requested powers onto the feasible box: charger power limits plus
// battery headroom so the subsequent step_battery stays within [e_min, e_max].
// Unoccupied chargers always get (0, 0).
std::pair<double, double> clamp_feasible(const ChargerState& state, double p_ch, double p_disch,
                                         const StationConfig& cfg);

// Advance one charger by one step. Powers must already be feasible.
ChargerState step_battery(const ChargerState& state, double p_ch, double p_disch,
                          const StationConfig& cfg);

// Cycle aging via the energy-throughput-equivalent method.
DegradationOutcome degradation(double p_ch, double p_disch, const ChargerSession& session,
                               double delta_t);

}  // namespace voltmesh
