#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voltmesh/common.hpp"
#include "voltmesh/dispatch.hpp"
#include "voltmesh/station.hpp"

namespace voltmesh {

// A complete simulation input: station parameters, exogenous series
// (prices + solar), and the EV sessions scheduled over the horizon.
struct Scenario {
    StationConfig cfg;
    std::vector<ExogenousStep> exog;       // one entry per step
    std::vector<ChargerSession> sessions;  // per-charger non-overlapping
    int horizon = 0;                       // steps
};

// Enforce Scenario invariants: series length matches horizon, sessions stay
// inside the horizon and never overlap on one charger, all values finite and
// in range. Throws on violation.
void validate(const Scenario& sc);

int steps_per_day(double delta_t);

// Read a CSV whose first line must equal `header` exactly; returns the data
// rows split on commas, each with the 1-based source line appended as a
// trailing field (for later error messages). Used by every CSV consumer in
// the project so emitted files and inputs share one dialect.
std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& header);

// Read sessions.csv, prices.csv, solar.csv, config.txt from `dir`.
// Parse failures carry the file name and 1-based line number.
Scenario load_scenario(const std::string& dir);

// Write the four files so that load_scenario(dir) reproduces the scenario
// exactly (doubles round-trip at full precision).
void save_scenario(const Scenario& sc, const std::string& dir);

// Knobs for the synthetic generator. Defaults give a plausible workplace
// station: arrivals peak mid-morning, three-tier time-of-use buy price,
// diurnal wholesale sell price, bell-curve solar.
struct SyntheticProfile {
    double arrival_peak_per_hour = 0.40;  // per free charger, at the peak hour
    double arrival_base_per_hour = 0.05;
    double arrival_peak_hour = 9.0;
    double arrival_spread_hours = 3.0;
    double stay_min_hours = 2.0;
    double stay_max_hours = 10.0;
    double demand_min_kwh = 5.0;  // energy requested above the arrival level
    double demand_max_kwh = 35.0;
    double e_cap_kwh = 40.0;
    double buy_offpeak = 0.10;  // currency per kWh
    double buy_mid = 0.18;
    double buy_peak = 0.30;
    double sell_base = 0.06;
    double sell_amplitude = 0.03;
    double sell_noise_std = 0.005;
    double solar_noise_std = 0.05;  // multiplicative
};

SyntheticProfile synthetic_profile(const std::string& name);  // "default" | "busy"

struct SyntheticSpec {
    int n_chargers = 4;
    int horizon = 96;  // steps of delta_t hours
    std::uint64_t seed = 0;
    StationConfig cfg;  // n_chargers is overwritten from this spec
    SyntheticProfile profile;
};

Scenario generate_synthetic(const SyntheticSpec& spec);
Scenario generate_synthetic(int n_chargers, int days, std::uint64_t seed,
                            const std::string& profile = "default");

// Parse the CLI shorthand, e.g. "2x96", "2x96,seed=7", or
// "n_chargers=4,days=2,seed=1,profile=busy".
SyntheticSpec parse_synthetic_spec(const std::string& text);

}  // namespace voltmesh
