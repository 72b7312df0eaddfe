#include "voltmesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace voltmesh {

Satisfaction satisfaction(const ChargerState& state, const ChargerSession& session, double rho,
                          const StationConfig& cfg, bool paper_literal) {
    if (!state.occupied)
        throw Error(ErrorCode::InvalidArgument, "satisfaction: charger is unoccupied");
    double t_rem = state.remaining_hours(cfg.delta_t);
    if (t_rem <= 0.0)
        throw Error(ErrorCode::InvalidArgument,
                    "satisfaction: remaining time is zero (departure boundary); "
                    "use the completion metric instead");
    double unmet = session.e_demand - state.energy;
    if (!paper_literal) unmet = std::max(0.0, unmet);
    Satisfaction s;
    s.fap = unmet / t_rem;
    s.u = -rho * s.fap / cfg.p_ch_max;
    return s;
}

std::vector<double> fairness(const std::vector<double>& u_values) {
    if (u_values.empty()) return {};
    double mean = std::accumulate(u_values.begin(), u_values.end(), 0.0) /
                  static_cast<double>(u_values.size());
    std::vector<double> psi(u_values.size());
    for (std::size_t i = 0; i < u_values.size(); ++i) psi[i] = std::abs(u_values[i] - mean);
    return psi;
}

StepCost step_cost(const PowerFlows& flows, const ExogenousStep& ex,
                   const std::vector<DegradationOutcome>& degradations, double delta_t,
                   int n_active) {
    StepCost c;
    c.n_active = n_active;
    for (int j = 0; j < flows.size(); ++j)
        c.energy_cost += (flows.p_g2v[j] * ex.kappa_buy - flows.p_v2g[j] * ex.kappa_sell) * delta_t;
    c.pv_sale = flows.p_pvg * ex.kappa_sell * delta_t;
    for (const auto& d : degradations) c.battery_cost += d.cost;
    return c;
}

std::vector<double> completion_ratios(const std::vector<SessionOutcome>& outcomes) {
    std::vector<double> out;
    out.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        if (o.session.e_demand <= 0.0) {
            out.push_back(100.0);
            continue;
        }
        double delivered = o.e_final - o.session.e_init;
        out.push_back(std::min(1.0, delivered / o.session.e_demand) * 100.0);
    }
    return out;
}

double completion_ratio(const std::vector<SessionOutcome>& outcomes) {
    if (outcomes.empty()) return 100.0;
    auto r = completion_ratios(outcomes);
    return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

std::vector<double> completion_deviations(const std::vector<SessionOutcome>& outcomes) {
    auto r = completion_ratios(outcomes);
    if (r.empty()) return {};
    double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    for (auto& v : r) v = std::abs(v - mean);
    return r;
}

double completion_std(const std::vector<SessionOutcome>& outcomes) {
    auto r = completion_ratios(outcomes);
    if (r.empty()) return 0.0;
    double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    double ss = 0.0;
    for (double v : r) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(r.size()));
}

}  // namespace voltmesh
