#include "voltmesh/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace voltmesh {

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_finite(const AgentAction& a, int j) {
    if (!std::isfinite(a.p_signed) || !std::isfinite(a.v2v_request) || !std::isfinite(a.pv_request))
        throw Error(ErrorCode::InvalidArgument,
                    "allocate: non-finite action for charger " + std::to_string(j));
}

}  // namespace

PowerFlows allocate(const std::vector<AgentAction>& actions,
                    const std::vector<ChargerState>& states, const ExogenousStep& ex,
                    const StationConfig& cfg, PvShareRule rule) {
    const int n = static_cast<int>(states.size());
    if (static_cast<int>(actions.size()) != n)
        throw Error(ErrorCode::ArityMismatch, "allocate: actions/states size mismatch");
    if (!std::isfinite(ex.pv_gen) || ex.pv_gen < 0.0)
        throw Error(ErrorCode::InvalidArgument, "allocate: invalid pv_gen");

    PowerFlows f(n);
    std::vector<double> want_ch(n, 0.0), want_disch(n, 0.0);
    std::vector<double> v2v_req(n, 0.0), pv_req(n, 0.0);
    for (int j = 0; j < n; ++j) {
        check_finite(actions[j], j);
        double req_ch = std::max(0.0, actions[j].p_signed);
        double req_disch = std::max(0.0, -actions[j].p_signed);
        auto [ch, disch] = clamp_feasible(states[j], req_ch, req_disch, cfg);
        want_ch[j] = ch;
        want_disch[j] = disch;
        if (states[j].occupied) {
            v2v_req[j] = std::clamp(actions[j].v2v_request, 0.0, 1.0);
            pv_req[j] = std::clamp(actions[j].pv_request, 0.0, 1.0);
        }
    }

    // 1) PV to chargers, proportional to requests, capped by generation.
    std::vector<double> pv_want(n, 0.0);
    for (int j = 0; j < n; ++j) {
        if (rule == PvShareRule::RequestedPower) {
            pv_want[j] = pv_req[j] * want_ch[j];
        } else {
            double headroom = 0.0;
            if (states[j].occupied && states[j].session)
                headroom = std::max(0.0, states[j].session->e_max - states[j].energy);
            pv_want[j] = pv_req[j] * headroom;
        }
    }
    double pv_want_total = sum(pv_want);
    if (pv_want_total > 0.0) {
        double scale = std::min(1.0, ex.pv_gen / pv_want_total);
        for (int j = 0; j < n; ++j) {
            double share = pv_want[j] * scale;
            // under the headroom rule the share is still capped by charge power
            f.p_pvev[j] = std::min(share, want_ch[j]);
        }
    }

    // 2) V2V: match consumer requests against producer offers at min volume.
    std::vector<double> consume(n, 0.0), offer(n, 0.0);
    for (int j = 0; j < n; ++j) {
        consume[j] = v2v_req[j] * std::max(0.0, want_ch[j] - f.p_pvev[j]);
        offer[j] = v2v_req[j] * want_disch[j];
    }
    double c_total = sum(consume), o_total = sum(offer);
    double matched = std::min(c_total, o_total);
    if (matched > 0.0) {
        for (int j = 0; j < n; ++j) {
            f.p_v2v_c[j] = consume[j] * (matched / c_total);
            f.p_v2v_d[j] = offer[j] * (matched / o_total);
        }
    }

    // 3) residual charge from the grid, residual discharge to the grid,
    //    residual PV to the grid
    for (int j = 0; j < n; ++j) {
        f.p_g2v[j] = std::max(0.0, want_ch[j] - f.p_pvev[j] - f.p_v2v_c[j]);
        f.p_v2g[j] = std::max(0.0, want_disch[j] - f.p_v2v_d[j]);
    }
    f.p_pvg = std::max(0.0, ex.pv_gen - sum(f.p_pvev));

    // 4) grid caps, scaled proportionally per side; excess is reported
    double import_total = sum(f.p_g2v);
    if (import_total > cfg.g_max) {
        double scale = cfg.g_max / import_total;
        for (int j = 0; j < n; ++j) f.p_g2v[j] *= scale;
        f.grid_violation += import_total - cfg.g_max;
    }
    double export_total = sum(f.p_v2g) + f.p_pvg;
    if (export_total > cfg.g_max) {
        double scale = cfg.g_max / export_total;
        for (int j = 0; j < n; ++j) f.p_v2g[j] *= scale;
        f.p_pvg *= scale;
        f.grid_violation += export_total - cfg.g_max;
    }

    for (int j = 0; j < n; ++j) {
        f.p_ch[j] = f.p_pvev[j] + f.p_v2v_c[j] + f.p_g2v[j];
        f.p_disch[j] = f.p_v2v_d[j] + f.p_v2g[j];
    }
    return f;
}

std::vector<FlowViolation> verify_flows(const PowerFlows& flows, const ExogenousStep& ex,
                                        const StationConfig& cfg, double tol) {
    std::vector<FlowViolation> out;
    auto report = [&](const std::string& eq, const std::string& detail, double mag) {
        out.push_back({eq, detail, mag});
    };
    const int n = flows.size();

    auto check_nonneg = [&](const std::vector<double>& v, const std::string& name) {
        for (int j = 0; j < n; ++j) {
            if (!std::isfinite(v[j]))
                report("nonnegativity", name + "[" + std::to_string(j) + "] is not finite", 0.0);
            else if (v[j] < -tol)
                report("nonnegativity", name + "[" + std::to_string(j) + "] negative", -v[j]);
        }
    };
    check_nonneg(flows.p_pvev, "p_pvev");
    check_nonneg(flows.p_v2v_c, "p_v2v_c");
    check_nonneg(flows.p_v2v_d, "p_v2v_d");
    check_nonneg(flows.p_g2v, "p_g2v");
    check_nonneg(flows.p_v2g, "p_v2g");
    if (flows.p_pvg < -tol) report("nonnegativity", "p_pvg negative", -flows.p_pvg);

    double v2v_c = 0.0, v2v_d = 0.0, pvev = 0.0, g2v = 0.0, v2g = 0.0;
    for (int j = 0; j < n; ++j) {
        double ch = flows.p_pvev[j] + flows.p_v2v_c[j] + flows.p_g2v[j];
        if (std::abs(flows.p_ch[j] - ch) > tol)
            report("charge balance", "charger " + std::to_string(j),
                   std::abs(flows.p_ch[j] - ch));
        double disch = flows.p_v2v_d[j] + flows.p_v2g[j];
        if (std::abs(flows.p_disch[j] - disch) > tol)
            report("discharge balance", "charger " + std::to_string(j),
                   std::abs(flows.p_disch[j] - disch));
        v2v_c += flows.p_v2v_c[j];
        v2v_d += flows.p_v2v_d[j];
        pvev += flows.p_pvev[j];
        g2v += flows.p_g2v[j];
        v2g += flows.p_v2g[j];
    }
    if (std::abs(v2v_c - v2v_d) > tol)
        report("V2V balance", "total consumed vs produced", std::abs(v2v_c - v2v_d));
    if (pvev + flows.p_pvg > ex.pv_gen + tol)
        report("PV limit", "PV use exceeds generation", pvev + flows.p_pvg - ex.pv_gen);
    if (g2v > cfg.g_max + tol)
        report("grid import limit", "sum p_g2v exceeds g_max", g2v - cfg.g_max);
    if (v2g + flows.p_pvg > cfg.g_max + tol)
        report("grid export limit", "sum p_v2g + p_pvg exceeds g_max",
               v2g + flows.p_pvg - cfg.g_max);
    return out;
}

}  // namespace voltmesh
