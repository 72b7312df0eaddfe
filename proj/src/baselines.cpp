#include "voltmesh/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace voltmesh {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

constexpr double kTiny = 1e-12;

}  // namespace

// ---- uncontrolled ----------------------------------------------------------

std::vector<AgentAction> UncontrolledPolicy::act(const PolicyContext& ctx) {
    std::vector<AgentAction> out(ctx.obs.size());
    for (std::size_t j = 0; j < ctx.obs.size(); ++j) {
        if (ctx.obs[j].t_rem > 0.0) out[j].p_signed = ctx.scenario.cfg.p_ch_max;
    }
    return out;
}

// ---- rolling-horizon optimization ------------------------------------------

std::vector<ExogenousStep> make_forecast(const Scenario& sc, ForecastMode mode) {
    if (mode == ForecastMode::perfect) return sc.exog;
    int spd = steps_per_day(sc.cfg.delta_t);
    std::vector<ExogenousStep> f(sc.horizon);
    for (int t = 0; t < sc.horizon; ++t) f[t] = t < spd ? sc.exog[t] : sc.exog[t - spd];
    return f;
}

int rho_window_steps(const Scenario& sc, const RhoConfig& cfg) {
    if (cfg.window_mode == RhoWindowMode::fixed) {
        if (cfg.fixed_window < 1)
            throw Error(ErrorCode::InvalidArgument, "rho fixed window must be >= 1");
        return cfg.fixed_window;
    }
    int longest = 1;
    for (const auto& s : sc.sessions)
        longest = std::max(longest, s.departure_step - s.arrival_step);
    return longest;
}

std::vector<std::vector<AgentAction>> rho_plan(const StationState& state, const Scenario& sc,
                                               const std::vector<ExogenousStep>& forecast,
                                               const RhoConfig& cfg) {
    if (static_cast<int>(forecast.size()) != sc.horizon)
        throw Error(ErrorCode::ArityMismatch, "forecast length must equal the horizon");
    const int t0 = state.t;
    const int n = sc.cfg.n_chargers;
    const double dt = sc.cfg.delta_t;
    const int K = std::min(rho_window_steps(sc, cfg), sc.horizon - t0);
    if (K <= 0) throw Error(ErrorCode::InvalidArgument, "rho_plan called past the horizon");

    std::vector<std::vector<AgentAction>> plan(K, std::vector<AgentAction>(n));

    struct Ev {
        int charger;
        const ChargerSession* s;
        double e0;
        int steps;  // active steps inside the window
    };
    std::vector<Ev> evs;
    for (int j = 0; j < n; ++j) {
        const ChargerState& c = state.chargers[j];
        if (!c.occupied) continue;
        evs.push_back({j, &*c.session, c.energy, std::min(c.remaining_steps, K)});
    }
    if (evs.empty()) return plan;

    double buy_max = 0.0;
    for (int tau = 0; tau < K; ++tau)
        buy_max = std::max(buy_max, forecast[t0 + tau].kappa_buy);
    const double unmet_penalty = cfg.rho * buy_max;

    LpBuilder b(false);
    const int ne = static_cast<int>(evs.size());

    // Variables. Flow variables are kW over one step; e_after is the battery
    // level at the end of each window step.
    std::vector<int> pvg(K);
    for (int tau = 0; tau < K; ++tau) {
        double pv_f = std::max(0.0, forecast[t0 + tau].pv_gen);
        pvg[tau] = b.add_var(0.0, pv_f, -forecast[t0 + tau].kappa_sell * dt);
    }
    std::vector<std::vector<int>> pvev(ne), v2vc(ne), g2v(ne), v2g(ne), v2vd(ne), e_after(ne);
    std::vector<int> unmet(ne);
    for (int i = 0; i < ne; ++i) {
        const Ev& ev = evs[i];
        const ChargerSession& s = *ev.s;
        double deg_ch = s.kappa_batt / (2.0 * s.e_cap * s.l_cyc) * s.eta_ch * dt;
        double deg_dis = s.kappa_batt / (2.0 * s.e_cap * s.l_cyc) * dt / s.eta_disch;
        pvev[i].resize(ev.steps);
        v2vc[i].resize(ev.steps);
        g2v[i].resize(ev.steps);
        v2g[i].resize(ev.steps);
        v2vd[i].resize(ev.steps);
        e_after[i].resize(ev.steps);
        for (int tau = 0; tau < ev.steps; ++tau) {
            double buy = forecast[t0 + tau].kappa_buy;
            double sell = forecast[t0 + tau].kappa_sell;
            pvev[i][tau] = b.add_var(0.0, sc.cfg.p_ch_max, deg_ch);
            v2vc[i][tau] = b.add_var(0.0, sc.cfg.p_ch_max, deg_ch);
            g2v[i][tau] = b.add_var(0.0, sc.cfg.p_ch_max, buy * dt + deg_ch);
            v2g[i][tau] = b.add_var(0.0, sc.cfg.p_disch_max, -sell * dt + deg_dis);
            v2vd[i][tau] = b.add_var(0.0, sc.cfg.p_disch_max, deg_dis);
            e_after[i][tau] = b.add_var(s.e_min, s.e_max, 0.0);
        }
        unmet[i] = b.add_var(0.0, std::numeric_limits<double>::infinity(), unmet_penalty);
    }

    // Battery dynamics: e_after[tau] - e_after[tau-1]
    //   = eta_ch*dt*(pvev+v2vc+g2v) - dt/eta_disch*(v2g+v2vd).
    for (int i = 0; i < ne; ++i) {
        const ChargerSession& s = *evs[i].s;
        for (int tau = 0; tau < evs[i].steps; ++tau) {
            int row = b.add_row(RowSense::eq, tau == 0 ? evs[i].e0 : 0.0);
            b.add_term(row, e_after[i][tau], 1.0);
            if (tau > 0) b.add_term(row, e_after[i][tau - 1], -1.0);
            b.add_term(row, pvev[i][tau], -s.eta_ch * dt);
            b.add_term(row, v2vc[i][tau], -s.eta_ch * dt);
            b.add_term(row, g2v[i][tau], -s.eta_ch * dt);
            b.add_term(row, v2g[i][tau], dt / s.eta_disch);
            b.add_term(row, v2vd[i][tau], dt / s.eta_disch);
        }
        // Per-charger power caps on the split sums.
        for (int tau = 0; tau < evs[i].steps; ++tau) {
            int rc = b.add_row(RowSense::le, sc.cfg.p_ch_max);
            b.add_term(rc, pvev[i][tau], 1.0);
            b.add_term(rc, v2vc[i][tau], 1.0);
            b.add_term(rc, g2v[i][tau], 1.0);
            int rd = b.add_row(RowSense::le, sc.cfg.p_disch_max);
            b.add_term(rd, v2g[i][tau], 1.0);
            b.add_term(rd, v2vd[i][tau], 1.0);
        }
        // Soft demand target at departure or window end.
        int rt = b.add_row(RowSense::ge, evs[i].s->e_demand);
        b.add_term(rt, e_after[i][evs[i].steps - 1], 1.0);
        b.add_term(rt, unmet[i], 1.0);
    }

    // Station-level coupling per window step.
    for (int tau = 0; tau < K; ++tau) {
        double pv_f = std::max(0.0, forecast[t0 + tau].pv_gen);
        int rpv = b.add_row(RowSense::le, pv_f);
        b.add_term(rpv, pvg[tau], 1.0);
        int rexp = b.add_row(RowSense::le, sc.cfg.g_max);
        b.add_term(rexp, pvg[tau], 1.0);
        int rimp = -1, rv2v = -1;
        for (int i = 0; i < ne; ++i) {
            if (tau >= evs[i].steps) continue;
            b.add_term(rpv, pvev[i][tau], 1.0);
            b.add_term(rexp, v2g[i][tau], 1.0);
            if (rimp < 0) rimp = b.add_row(RowSense::le, sc.cfg.g_max);
            b.add_term(rimp, g2v[i][tau], 1.0);
            if (rv2v < 0) rv2v = b.add_row(RowSense::eq, 0.0);
            b.add_term(rv2v, v2vc[i][tau], 1.0);
            b.add_term(rv2v, v2vd[i][tau], -1.0);
        }
    }

    LpResult sol = solve_lp(b.build());
    if (sol.status != LpStatus::optimal)
        throw Error(ErrorCode::NumericalFailure,
                    "rho window program at step " + std::to_string(t0) + " came back " +
                        to_string(sol.status));

    for (int i = 0; i < ne; ++i) {
        for (int tau = 0; tau < evs[i].steps; ++tau) {
            double f_pvev = sol.x[pvev[i][tau]];
            double f_v2vc = sol.x[v2vc[i][tau]];
            double f_g2v = sol.x[g2v[i][tau]];
            double f_v2g = sol.x[v2g[i][tau]];
            double f_v2vd = sol.x[v2vd[i][tau]];
            double pch = f_pvev + f_v2vc + f_g2v;
            double pdis = f_v2g + f_v2vd;
            // Net any residual simultaneous pair (possible only up to solver
            // tolerance since both directions carry degradation cost).
            double q = std::min(pch, pdis);
            if (q > 0.0) {
                pch -= q;
                pdis -= q;
            }
            AgentAction a;
            if (pch > kTiny) {
                a.p_signed = pch;
                a.pv_request = std::clamp(f_pvev / pch, 0.0, 1.0);
                double resid = pch - std::min(f_pvev, pch);
                a.v2v_request = resid > kTiny ? std::clamp(f_v2vc / resid, 0.0, 1.0) : 0.0;
            } else if (pdis > kTiny) {
                a.p_signed = -pdis;
                a.v2v_request = std::clamp(f_v2vd / pdis, 0.0, 1.0);
            }
            plan[tau][evs[i].charger] = a;
        }
    }
    return plan;
}

void RhoPolicy::begin_episode(const Scenario& sc) {
    forecast_ = make_forecast(sc, cfg_.forecast);
    plan_.clear();
    plan_t0_ = -1;
    arrival_at_step_.assign(sc.horizon, false);
    for (const auto& s : sc.sessions) arrival_at_step_[s.arrival_step] = true;
}

std::vector<AgentAction> RhoPolicy::act(const PolicyContext& ctx) {
    if (forecast_.empty()) begin_episode(ctx.scenario);
    const int t = ctx.t;
    bool replan = plan_t0_ < 0 || t < plan_t0_ || t - plan_t0_ >= static_cast<int>(plan_.size());
    if (cfg_.resolve == ResolveTrigger::every_step)
        replan = true;
    else if (t < static_cast<int>(arrival_at_step_.size()) && arrival_at_step_[t])
        replan = true;
    if (replan) {
        plan_ = rho_plan(ctx.state, ctx.scenario, forecast_, cfg_);
        plan_t0_ = t;
    }
    return plan_[t - plan_t0_];
}

// ---- centralized MADQN -------------------------------------------------------

void validate(const MadqnConfig& cfg) {
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
        throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0,1)");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "tau must lie in (0,1]");
    if (cfg.episodes <= 0 || cfg.batch_size <= 0 || cfg.update_every <= 0)
        throw Error(ErrorCode::InvalidArgument, "episodes/batch/update_every must be positive");
    if (!(cfg.eps_start >= 0.0 && cfg.eps_start <= 1.0 && cfg.eps_end >= 0.0 &&
          cfg.eps_end <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "epsilon schedule must lie in [0,1]");
    validate(cfg.reward);
}

std::vector<double> madqn_power_levels(const StationConfig& cfg) {
    return {-cfg.p_disch_max, -cfg.p_disch_max / 2.0, 0.0, cfg.p_ch_max / 2.0, cfg.p_ch_max};
}

AgentAction madqn_action(int index, const std::vector<double>& power_levels) {
    if (index < 0 || index >= kMadqnActions)
        throw Error(ErrorCode::InvalidArgument, "madqn action index out of range");
    if (power_levels.size() != 5)
        throw Error(ErrorCode::InvalidArgument, "madqn expects 5 power levels");
    AgentAction a;
    a.p_signed = power_levels[index / 4];
    a.pv_request = (index % 4) / 2 ? 1.0 : 0.0;
    a.v2v_request = index % 2 ? 1.0 : 0.0;
    return a;
}

MadqnPolicy::MadqnPolicy(std::vector<DenseNet> qnets, std::array<double, kObsDim> obs_scale,
                         std::vector<double> power_levels)
    : qnets_(std::move(qnets)), obs_scale_(obs_scale), power_levels_(std::move(power_levels)) {}

int MadqnPolicy::greedy_action(const Eigen::VectorXd& joint_features, int agent) {
    if (agent < 0 || agent >= n_agents())
        throw Error(ErrorCode::InvalidArgument, "madqn agent index out of range");
    Mat q = qnets_[agent].forward(joint_features.transpose());
    int best = 0;
    for (int a = 1; a < kMadqnActions; ++a)
        if (q(0, a) > q(0, best)) best = a;  // ties keep the lowest index
    return best;
}

std::vector<AgentAction> MadqnPolicy::act(const PolicyContext& ctx) {
    const int n = n_agents();
    if (static_cast<int>(ctx.obs.size()) != n)
        throw Error(ErrorCode::ArityMismatch,
                    "checkpoint has " + std::to_string(n) + " agents but scenario has " +
                        std::to_string(ctx.obs.size()) + " chargers");
    Eigen::VectorXd jf(n * kObsDim);
    for (int j = 0; j < n; ++j)
        jf.segment(j * kObsDim, kObsDim) = obs_features(ctx.obs[j], obs_scale_);
    std::vector<AgentAction> out(n);
    for (int j = 0; j < n; ++j) out[j] = madqn_action(greedy_action(jf, j), power_levels_);
    return out;
}

void MadqnPolicy::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "voltmesh-madqn 1\n";
    out << "agents " << qnets_.size() << "\n";
    out << "power_levels";
    for (double p : power_levels_) out << " " << fmt(p);
    out << "\n";
    out << "obs_scale";
    for (double s : obs_scale_) out << " " << fmt(s);
    out << "\n";
    for (std::size_t j = 0; j < qnets_.size(); ++j) {
        out << "qnet " << j << "\n";
        save_net(qnets_[j], out);
    }
}

MadqnPolicy MadqnPolicy::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::string magic, word;
    int version = 0;
    if (!(in >> magic >> version) || magic != "voltmesh-madqn" || version != 1)
        throw Error(ErrorCode::Parse, path + ": not a madqn checkpoint (or wrong version)");
    std::size_t n = 0;
    if (!(in >> word >> n) || word != "agents" || n == 0 || n > 1024)
        throw Error(ErrorCode::Parse, path + ": bad agent count");
    MadqnPolicy p;
    if (!(in >> word) || word != "power_levels")
        throw Error(ErrorCode::Parse, path + ": missing power_levels");
    p.power_levels_.resize(5);
    for (double& v : p.power_levels_)
        if (!(in >> v)) throw Error(ErrorCode::Parse, path + ": truncated power_levels");
    if (!(in >> word) || word != "obs_scale")
        throw Error(ErrorCode::Parse, path + ": missing obs_scale");
    for (int k = 0; k < kObsDim; ++k)
        if (!(in >> p.obs_scale_[k]))
            throw Error(ErrorCode::Parse, path + ": truncated obs_scale");
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t idx = 0;
        if (!(in >> word >> idx) || word != "qnet" || idx != j)
            throw Error(ErrorCode::Parse, path + ": missing qnet " + std::to_string(j));
        p.qnets_.push_back(load_net(in));
        if (p.qnets_.back().input_dim() != static_cast<int>(n) * kObsDim ||
            p.qnets_.back().output_dim() != kMadqnActions)
            throw Error(ErrorCode::Parse, path + ": qnet has wrong input/output width");
    }
    return p;
}

MadqnTrainResult madqn_train(const std::vector<Scenario>& scenarios, const MadqnConfig& cfg,
                             std::uint64_t seed) {
    if (scenarios.empty())
        throw Error(ErrorCode::InvalidArgument, "madqn_train: no scenarios given");
    validate(cfg);
    for (const auto& sc : scenarios) validate(sc);
    const int n = scenarios.front().cfg.n_chargers;
    for (const auto& sc : scenarios)
        if (sc.cfg.n_chargers != n)
            throw Error(ErrorCode::ArityMismatch,
                        "all training scenarios must share the charger count");

    Rng rng(seed);
    ObservationBounds bounds = observation_bounds(scenarios.front());
    for (std::size_t s = 1; s < scenarios.size(); ++s) {
        ObservationBounds bb = observation_bounds(scenarios[s]);
        for (int k = 0; k < kObsDim; ++k) bounds.hi[k] = std::max(bounds.hi[k], bb.hi[k]);
    }
    std::array<double, kObsDim> scale;
    for (int k = 0; k < kObsDim; ++k) scale[k] = bounds.hi[k] > 0.0 ? bounds.hi[k] : 1.0;

    std::vector<int> sizes{n * kObsDim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(kMadqnActions);
    std::vector<Activation> acts(sizes.size() - 2, Activation::relu);
    acts.push_back(Activation::identity);

    std::vector<DenseNet> qnets, targets;
    std::vector<Adam> opts;
    for (int j = 0; j < n; ++j) {
        qnets.emplace_back(sizes, acts, false, rng);
        targets.push_back(qnets.back());
        opts.emplace_back(cfg.lr);
    }
    std::vector<double> power_levels = madqn_power_levels(scenarios.front().cfg);

    ReplayBuffer buffer(cfg.buffer_capacity);
    MadqnTrainResult result;
    long global_step = 0;

    auto joint_features = [&](const std::vector<AgentObservation>& obs) {
        Eigen::VectorXd jf(n * kObsDim);
        for (int j = 0; j < n; ++j)
            jf.segment(j * kObsDim, kObsDim) = obs_features(obs[j], scale);
        return jf;
    };
    auto greedy = [&](DenseNet& net, const Eigen::VectorXd& jf) {
        Mat q = net.forward(jf.transpose());
        int best = 0;
        for (int a = 1; a < kMadqnActions; ++a)
            if (q(0, a) > q(0, best)) best = a;
        return best;
    };

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const Scenario& sc = scenarios[ep % scenarios.size()];
        EpisodeEngine engine(sc, cfg.reward);
        double frac = cfg.episodes > 1 ? static_cast<double>(ep) / (cfg.episodes - 1) : 0.0;
        double eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;

        double ep_reward = 0.0, ep_cost = 0.0;
        Eigen::VectorXd jf = joint_features(observe_all(engine.state()));
        while (!engine.done()) {
            Eigen::VectorXd chosen(n);
            std::vector<AgentAction> actions(n);
            for (int j = 0; j < n; ++j) {
                int a = rng.uniform() < eps ? static_cast<int>(rng.uniform_int(kMadqnActions))
                                            : greedy(qnets[j], jf);
                chosen[j] = a;
                actions[j] = madqn_action(a, power_levels);
            }
            StepResult res = engine.step(actions);
            ep_cost += res.cost.energy_cost - res.cost.pv_sale + res.cost.battery_cost;
            Eigen::VectorXd jf2 = joint_features(observe_all(engine.state()));

            TransitionRecord tr;
            tr.obs = jf;
            tr.act = chosen;
            tr.rew = Eigen::Map<const Eigen::VectorXd>(res.rewards.data(), n);
            tr.next_obs = jf2;
            tr.terminal = res.done ? 1.0 : 0.0;
            ep_reward += tr.rew.sum();
            buffer.push(std::move(tr));
            jf = jf2;
            ++global_step;

            if (static_cast<long>(buffer.size()) >= cfg.warmup_transitions &&
                global_step % cfg.update_every == 0) {
                auto idx = buffer.sample_indices(cfg.batch_size, rng);
                const int B = static_cast<int>(idx.size());
                Mat S(B, n * kObsDim), S2(B, n * kObsDim);
                Mat R(B, n);
                Eigen::VectorXd term(B);
                Eigen::MatrixXi A(B, n);
                for (int i = 0; i < B; ++i) {
                    const TransitionRecord& t = buffer[idx[i]];
                    S.row(i) = t.obs.transpose();
                    S2.row(i) = t.next_obs.transpose();
                    R.row(i) = t.rew.transpose();
                    term[i] = t.terminal;
                    for (int j = 0; j < n; ++j) A(i, j) = static_cast<int>(t.act[j]);
                }
                for (int j = 0; j < n; ++j) {
                    Eigen::VectorXd q2max = targets[j].forward(S2).rowwise().maxCoeff();
                    Eigen::VectorXd y = td_targets(R.col(j), cfg.gamma, q2max, term);
                    Mat q = qnets[j].forward(S);
                    Mat dq = Mat::Zero(B, kMadqnActions);
                    for (int i = 0; i < B; ++i)
                        dq(i, A(i, j)) = 2.0 * (q(i, A(i, j)) - y[i]) / B;
                    qnets[j].zero_grad();
                    qnets[j].backward(dq);
                    opts[j].step(qnets[j]);
                    soft_update(qnets[j], targets[j], cfg.tau);
                }
            }
        }
        double mean_reward = ep_reward / sc.horizon;
        if (!std::isfinite(mean_reward))
            throw Error(ErrorCode::Divergence,
                        "madqn training diverged at episode " + std::to_string(ep));
        result.curve.push_back({ep, mean_reward, completion_ratio(engine.outcomes()), ep_cost});
    }
    result.policy = MadqnPolicy(std::move(qnets), scale, std::move(power_levels));
    return result;
}

std::unique_ptr<Policy> load_policy_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::string magic;
    in >> magic;
    in.close();
    if (magic == "voltmesh-maddpg")
        return std::make_unique<MaddpgPolicy>(MaddpgPolicy::load(path));
    if (magic == "voltmesh-madqn")
        return std::make_unique<MadqnPolicy>(MadqnPolicy::load(path));
    throw Error(ErrorCode::Parse, path + ": unrecognized checkpoint format");
}

}  // namespace voltmesh
