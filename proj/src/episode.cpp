#include "voltmesh/episode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voltmesh {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::array<double, kObsDim> to_array(const AgentObservation& o) {
    return {o.e, o.t_rem, o.e_dem, o.k_buy, o.k_sell, o.pv_gen};
}

AgentObservation observation_from_array(const std::array<double, kObsDim>& a) {
    return AgentObservation{a[0], a[1], a[2], a[3], a[4], a[5]};
}

void validate(const RewardConfig& rc) {
    if (!(rc.xi >= 0.0 && rc.xi <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "reward xi must lie in [0,1]");
    if (!(rc.rho >= 0.0) || !std::isfinite(rc.rho))
        throw Error(ErrorCode::InvalidArgument, "reward rho must be >= 0");
    if (!(rc.grid_penalty_coeff >= 0.0) || !std::isfinite(rc.grid_penalty_coeff))
        throw Error(ErrorCode::InvalidArgument, "grid_penalty_coeff must be >= 0");
}

ObservationBounds observation_bounds(const Scenario& sc) {
    ObservationBounds b;
    double e_hi = 0.0, t_hi = 0.0, dem_hi = 0.0;
    for (const auto& s : sc.sessions) {
        e_hi = std::max(e_hi, s.e_max);
        t_hi = std::max(t_hi, (s.departure_step - s.arrival_step) * sc.cfg.delta_t);
        dem_hi = std::max(dem_hi, s.e_demand);
    }
    if (sc.sessions.empty()) {
        e_hi = ChargerSession{}.e_cap;
        t_hi = sc.horizon * sc.cfg.delta_t;
        dem_hi = e_hi;
    }
    double buy_hi = 0.0, sell_hi = 0.0, pv_hi = 0.0;
    for (const auto& e : sc.exog) {
        buy_hi = std::max(buy_hi, e.kappa_buy);
        sell_hi = std::max(sell_hi, e.kappa_sell);
        pv_hi = std::max(pv_hi, e.pv_gen);
    }
    b.hi = {e_hi, t_hi, dem_hi, buy_hi, sell_hi, pv_hi};
    return b;
}

std::vector<AgentObservation> corrupt_observations(const std::vector<AgentObservation>& obs,
                                                   const FaultSpec& fault, int t,
                                                   const ObservationBounds& bounds, Rng& rng) {
    if (t < fault.fault_step || fault.faulty_chargers.empty()) return obs;
    std::vector<AgentObservation> out = obs;
    for (int j : fault.faulty_chargers) {
        if (j < 0 || j >= static_cast<int>(obs.size()))
            throw Error(ErrorCode::InvalidArgument,
                        "fault charger index " + std::to_string(j) + " out of range");
        std::array<double, kObsDim> a;
        for (int k = 0; k < kObsDim; ++k) a[k] = rng.uniform(bounds.lo[k], bounds.hi[k]);
        out[j] = observation_from_array(a);
    }
    return out;
}

AgentObservation observe(const StationState& st, int j) {
    if (j < 0 || j >= static_cast<int>(st.chargers.size()))
        throw Error(ErrorCode::InvalidArgument, "observe: charger index out of range");
    const auto& c = st.chargers[j];
    if (!c.occupied) return AgentObservation{};
    AgentObservation o;
    o.e = c.energy;
    o.t_rem = c.remaining_hours(st.delta_t);
    o.e_dem = c.session ? c.session->e_demand : 0.0;
    o.k_buy = st.exog.kappa_buy;
    o.k_sell = st.exog.kappa_sell;
    o.pv_gen = st.exog.pv_gen;
    return o;
}

std::vector<AgentObservation> observe_all(const StationState& st) {
    std::vector<AgentObservation> out(st.chargers.size());
    for (std::size_t j = 0; j < st.chargers.size(); ++j)
        out[j] = observe(st, static_cast<int>(j));
    return out;
}

EpisodeEngine::EpisodeEngine(Scenario sc, RewardConfig rc) : sc_(std::move(sc)), rc_(rc) {
    validate(sc_);
    validate(rc_);
    arrivals_by_step_.assign(sc_.horizon, {});
    for (std::size_t i = 0; i < sc_.sessions.size(); ++i)
        arrivals_by_step_[sc_.sessions[i].arrival_step].push_back(static_cast<int>(i));
    reset();
}

void EpisodeEngine::reset() {
    st_.t = 0;
    st_.delta_t = sc_.cfg.delta_t;
    st_.chargers.assign(sc_.cfg.n_chargers, ChargerState{});
    st_.exog = sc_.exog[0];
    outcomes_.clear();
    place_arrivals(0);
}

void EpisodeEngine::place_arrivals(int t) {
    for (int idx : arrivals_by_step_[t]) {
        const ChargerSession& s = sc_.sessions[idx];
        ChargerState& c = st_.chargers[s.charger_id];
        if (c.occupied)
            throw Error(ErrorCode::ContractViolation,
                        "arrival on occupied charger " + std::to_string(s.charger_id) +
                            " at step " + std::to_string(t));
        c.occupied = true;
        c.energy = s.e_init;
        c.remaining_steps = s.departure_step - s.arrival_step;
        c.session = s;
    }
}

int EpisodeEngine::n_active() const {
    int n = 0;
    for (const auto& c : st_.chargers) n += c.occupied ? 1 : 0;
    return n;
}

StepResult EpisodeEngine::step(const std::vector<AgentAction>& actions) {
    if (done()) throw Error(ErrorCode::Runtime, "episode already finished");
    const int n = sc_.cfg.n_chargers;
    if (static_cast<int>(actions.size()) != n)
        throw Error(ErrorCode::ArityMismatch,
                    "expected " + std::to_string(n) + " actions, got " +
                        std::to_string(actions.size()));

    std::vector<AgentAction> acts(n);
    for (int j = 0; j < n; ++j) {
        const auto& a = actions[j];
        if (!std::isfinite(a.p_signed) || !std::isfinite(a.v2v_request) ||
            !std::isfinite(a.pv_request))
            throw Error(ErrorCode::Divergence, "non-finite action for charger " +
                                                   std::to_string(j) + " at step " +
                                                   std::to_string(st_.t));
        if (!st_.chargers[j].occupied) continue;  // empty chargers act as zero
        acts[j].p_signed = std::clamp(a.p_signed, -sc_.cfg.p_disch_max, sc_.cfg.p_ch_max);
        acts[j].v2v_request = std::clamp(a.v2v_request, 0.0, 1.0);
        acts[j].pv_request = std::clamp(a.pv_request, 0.0, 1.0);
    }

    StepResult res;
    const int n_t = n_active();

    // Satisfaction and fairness are evaluated on the pre-action state: every
    // occupied charger still has remaining time here.
    std::vector<double> u(n, 0.0), psi(n, 0.0);
    std::vector<int> active;
    std::vector<double> u_active;
    for (int j = 0; j < n; ++j) {
        if (!st_.chargers[j].occupied) continue;
        auto sat = satisfaction(st_.chargers[j], *st_.chargers[j].session, rc_.rho, sc_.cfg,
                                rc_.paper_literal_fap);
        u[j] = sat.u;
        active.push_back(j);
        u_active.push_back(sat.u);
    }
    auto psi_active = fairness(u_active);
    for (std::size_t k = 0; k < active.size(); ++k) psi[active[k]] = psi_active[k];

    res.flows = allocate(acts, st_.chargers, st_.exog, sc_.cfg);

    res.degradations.assign(n, DegradationOutcome{});
    for (int j = 0; j < n; ++j) {
        if (!st_.chargers[j].occupied) continue;
        res.degradations[j] = degradation(res.flows.p_ch[j], res.flows.p_disch[j],
                                          *st_.chargers[j].session, sc_.cfg.delta_t);
    }
    res.cost = step_cost(res.flows, st_.exog, res.degradations, sc_.cfg.delta_t, n_t);

    res.rewards.assign(n, 0.0);
    if (n_t > 0) {
        double r_cost =
            -(res.cost.energy_cost - res.cost.pv_sale + res.cost.battery_cost) / n_t;
        double r_grid = -rc_.grid_penalty_coeff * res.flows.grid_violation;
        for (int j : active) {
            double r_user = u[j];
            if (rc_.fairness_sign == FairnessSign::minus_psi) r_user -= psi[j];
            if (rc_.fairness_sign == FairnessSign::paper_plus) r_user += psi[j];
            res.rewards[j] = rc_.xi * r_cost + (1.0 - rc_.xi) * r_user + r_grid;
        }
    }

    for (int j = 0; j < n; ++j) {
        if (!st_.chargers[j].occupied) continue;
        st_.chargers[j] =
            step_battery(st_.chargers[j], res.flows.p_ch[j], res.flows.p_disch[j], sc_.cfg);
        if (st_.chargers[j].remaining_steps == 0) {
            res.departures.push_back({*st_.chargers[j].session, st_.chargers[j].energy});
            st_.chargers[j] = ChargerState{};
        }
    }
    outcomes_.insert(outcomes_.end(), res.departures.begin(), res.departures.end());

    st_.t += 1;
    if (st_.t < sc_.horizon) {
        st_.exog = sc_.exog[st_.t];
        place_arrivals(st_.t);
    }
    res.done = done();
    return res;
}

EpisodeTrace rollout(const Scenario& sc, Policy& policy, const RolloutOptions& opt) {
    EpisodeEngine engine(sc, opt.reward);
    policy.begin_episode(sc);
    ObservationBounds bounds = observation_bounds(sc);
    Rng fault_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);

    EpisodeTrace trace;
    trace.steps.reserve(sc.horizon);
    while (!engine.done()) {
        int t = engine.state().t;
        std::vector<AgentObservation> obs = observe_all(engine.state());
        if (opt.fault) obs = corrupt_observations(obs, *opt.fault, t, bounds, fault_rng);

        PolicyContext ctx{t, obs, engine.state(), sc};
        std::vector<AgentAction> actions = policy.act(ctx);
        if (static_cast<int>(actions.size()) != sc.cfg.n_chargers)
            throw Error(ErrorCode::ArityMismatch,
                        "policy '" + policy.name() + "' returned " +
                            std::to_string(actions.size()) + " actions for " +
                            std::to_string(sc.cfg.n_chargers) + " chargers");
        StepResult res = engine.step(actions);

        StepRecord rec;
        rec.t = t;
        rec.obs = obs;
        rec.actions = actions;
        rec.rewards = res.rewards;
        rec.flows = res.flows;
        rec.cost = res.cost;
        rec.energy.resize(sc.cfg.n_chargers);
        for (int j = 0; j < sc.cfg.n_chargers; ++j)
            rec.energy[j] = engine.state().chargers[j].energy;
        for (double r : res.rewards) trace.total_reward += r;
        trace.total_cost += res.cost.energy_cost - res.cost.pv_sale + res.cost.battery_cost;
        trace.grid_violation += res.flows.grid_violation;
        trace.steps.push_back(std::move(rec));
    }
    trace.outcomes = engine.outcomes();
    trace.mean_reward = sc.horizon > 0 ? trace.total_reward / sc.horizon : 0.0;
    trace.completion = completion_ratio(trace.outcomes);
    trace.completion_dispersion = completion_std(trace.outcomes);
    return trace;
}

void save_trace_jsonl(const EpisodeTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    for (const auto& s : trace.steps) {
        double g2v = 0.0, v2g = 0.0, pvev = 0.0, v2v = 0.0;
        for (int j = 0; j < s.flows.size(); ++j) {
            g2v += s.flows.p_g2v[j];
            v2g += s.flows.p_v2g[j];
            pvev += s.flows.p_pvev[j];
            v2v += s.flows.p_v2v_c[j];
        }
        out << "{\"t\":" << s.t << ",\"actions\":[";
        for (std::size_t j = 0; j < s.actions.size(); ++j) {
            if (j) out << ",";
            out << "{\"p\":" << fmt(s.actions[j].p_signed)
                << ",\"v2v\":" << fmt(s.actions[j].v2v_request)
                << ",\"pv\":" << fmt(s.actions[j].pv_request) << "}";
        }
        out << "],\"rewards\":[";
        for (std::size_t j = 0; j < s.rewards.size(); ++j) {
            if (j) out << ",";
            out << fmt(s.rewards[j]);
        }
        out << "],\"energy\":[";
        for (std::size_t j = 0; j < s.energy.size(); ++j) {
            if (j) out << ",";
            out << fmt(s.energy[j]);
        }
        out << "],\"p_g2v\":" << fmt(g2v) << ",\"p_v2g\":" << fmt(v2g)
            << ",\"p_pvev\":" << fmt(pvev) << ",\"p_v2v\":" << fmt(v2v)
            << ",\"p_pvg\":" << fmt(s.flows.p_pvg)
            << ",\"grid_violation\":" << fmt(s.flows.grid_violation)
            << ",\"energy_cost\":" << fmt(s.cost.energy_cost)
            << ",\"pv_sale\":" << fmt(s.cost.pv_sale)
            << ",\"battery_cost\":" << fmt(s.cost.battery_cost)
            << ",\"n_active\":" << s.cost.n_active << "}\n";
    }
}

}  // namespace voltmesh
