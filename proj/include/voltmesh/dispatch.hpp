#pragma once

#include <string>
#include <vector>

#include "voltmesh/station.hpp"

namespace voltmesh {

// One agent's request for a step. Positive p_signed charges, negative
// discharges; v2v_request / pv_request express how much of the charge
// (or discharge) should come from / go to V2V and PV.
struct AgentAction {
    double p_signed = 0.0;     // kW in [-p_disch_max, p_ch_max]
    double v2v_request = 0.0;  // fraction in [0, 1]
    double pv_request = 0.0;   // fraction in [0, 1]
};

// Exogenous quantities for one step.
struct ExogenousStep {
    double kappa_buy = 0.0;   // currency/kWh, grid purchase price
    double kappa_sell = 0.0;  // currency/kWh, grid sale price
    double kappa_v2v = 0.0;   // currency/kWh, V2V settlement price
    double pv_gen = 0.0;      // kW available from PV
};

// How PV is split among requesting chargers.
enum class PvShareRule {
    RequestedPower,  // proportional to pv_request * clamped charge power
    EnergyHeadroom,  // proportional to pv_request * (e_max - energy)
};

// Resolved station-wide flows for one step. Component vectors are indexed by
// charger; p_ch and p_disch are kept equal to their component sums.
struct PowerFlows {
    std::vector<double> p_ch;
    std::vector<double> p_disch;
    std::vector<double> p_pvev;
    std::vector<double> p_v2v_c;
    std::vector<double> p_v2v_d;
    std::vector<double> p_g2v;
    std::vector<double> p_v2g;
    double p_pvg = 0.0;            // kW, PV sold to the grid
    double grid_violation = 0.0;   // kW, pre-clip excess over g_max

    explicit PowerFlows(int n = 0)
        : p_ch(n, 0.0), p_disch(n, 0.0), p_pvev(n, 0.0), p_v2v_c(n, 0.0), p_v2v_d(n, 0.0),
          p_g2v(n, 0.0), p_v2g(n, 0.0) {}
    int size() const { return static_cast<int>(p_ch.size()); }
};

// Resolve requested actions into feasible flows. Powers are clamped to the
// per-charger feasible box first, then sources are assigned PV -> V2V -> grid,
// and grid caps are enforced by proportional scaling.
PowerFlows allocate(const std::vector<AgentAction>& actions,
                    const std::vector<ChargerState>& states, const ExogenousStep& ex,
                    const StationConfig& cfg, PvShareRule rule = PvShareRule::RequestedPower);

struct FlowViolation {
    std::string equation;  // which balance/limit failed
    std::string detail;
    double magnitude = 0.0;
};

// Independent checker for the flow constraint system. Empty result means all
// balances and limits hold within tol.
std::vector<FlowViolation> verify_flows(const PowerFlows& flows, const ExogenousStep& ex,
                                        const StationConfig& cfg, double tol = 1e-9);

}  // namespace voltmesh
