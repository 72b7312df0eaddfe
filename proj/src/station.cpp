#include "voltmesh/station.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace voltmesh {

namespace {
constexpr double kBoundTol = 1e-9;  // kWh

bool nonneg(double v) { return v >= 0.0 && std::isfinite(v); }
}  // namespace

void validate(const StationConfig& cfg) {
    if (cfg.n_chargers < 1) throw Error(ErrorCode::InvalidArgument, "n_chargers must be >= 1");
    if (!(cfg.delta_t > 0.0 && cfg.delta_t <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "delta_t must be in (0, 1]");
    if (!(cfg.p_ch_max > 0.0) || !(cfg.p_disch_max > 0.0) || !(cfg.g_max > 0.0) ||
        !(cfg.pv_capacity > 0.0))
        throw Error(ErrorCode::InvalidArgument, "station power limits must be positive");
}

void validate(const ChargerSession& s) {
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorCode::InvalidArgument,
                    "session " + std::to_string(s.session_id) + ": " + msg);
    };
    if (s.charger_id < 0) fail("charger_id must be >= 0");
    if (s.arrival_step < 0) fail("arrival_step must be >= 0");
    if (s.arrival_step >= s.departure_step) fail("arrival must precede departure");
    if (!(0.0 <= s.e_min && s.e_min <= s.e_init && s.e_init <= s.e_max && s.e_max <= s.e_cap))
        fail("energy bounds must satisfy 0 <= e_min <= e_init <= e_max <= e_cap");
    if (!(s.e_min <= s.e_demand && s.e_demand <= s.e_max))
        fail("e_demand must lie in [e_min, e_max]");
    if (!(s.eta_ch > 0.0 && s.eta_ch <= 1.0 && s.eta_disch > 0.0 && s.eta_disch <= 1.0))
        fail("efficiencies must be in (0, 1]");
    if (!(s.l_cyc > 0.0)) fail("l_cyc must be positive");
    if (!nonneg(s.kappa_batt)) fail("kappa_batt must be >= 0");
}

std::pair<double, double> clamp_feasible(const ChargerState& state, double p_ch, double p_disch,
                                         const StationConfig& cfg) {
    if (!state.occupied || !state.session) return {0.0, 0.0};
    const ChargerSession& s = *state.session;
    double ch = std::clamp(p_ch, 0.0, cfg.p_ch_max);
    double disch = std::clamp(p_disch, 0.0, cfg.p_disch_max);
    // headroom in power terms
    double ch_cap = (s.e_max - state.energy) / (s.eta_ch * cfg.delta_t);
    double disch_cap = (state.energy - s.e_min) * s.eta_disch / cfg.delta_t;
    ch = std::min(ch, std::max(0.0, ch_cap));
    disch = std::min(disch, std::max(0.0, disch_cap));
    return {ch, disch};
}

ChargerState step_battery(const ChargerState& state, double p_ch, double p_disch,
                          const StationConfig& cfg) {
    if (!state.occupied || !state.session) {
        if (p_ch > 1e-12 || p_disch > 1e-12)
            throw Error(ErrorCode::ContractViolation,
                        "step_battery: nonzero power on unoccupied charger");
        return state;
    }
    const ChargerSession& s = *state.session;
    ChargerState next = state;
    next.energy = state.energy + p_ch * s.eta_ch * cfg.delta_t - p_disch * cfg.delta_t / s.eta_disch;
    next.remaining_steps = state.remaining_steps - 1;
    if (next.energy < s.e_min - kBoundTol || next.energy > s.e_max + kBoundTol)
        throw Error(ErrorCode::ContractViolation,
                    "step_battery: energy " + std::to_string(next.energy) + " outside [" +
                        std::to_string(s.e_min) + ", " + std::to_string(s.e_max) +
                        "] (allocator bug)");
    next.energy = std::clamp(next.energy, s.e_min, s.e_max);
    return next;
}

DegradationOutcome degradation(double p_ch, double p_disch, const ChargerSession& session,
                               double delta_t) {
    if (session.e_cap <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "degradation: e_cap must be positive");
    double throughput = p_ch * session.eta_ch * delta_t - p_disch * delta_t / session.eta_disch;
    DegradationOutcome out;
    out.efc = 0.5 * std::abs(throughput) / session.e_cap;
    out.age_frac = out.efc / session.l_cyc;
    out.cost = out.age_frac * session.kappa_batt;
    return out;
}

}  // namespace voltmesh
