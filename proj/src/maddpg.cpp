#include "voltmesh/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace voltmesh {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::array<double, kObsDim> scale_from_bounds(const ObservationBounds& b) {
    std::array<double, kObsDim> s;
    for (int k = 0; k < kObsDim; ++k) s[k] = b.hi[k] > 0.0 ? b.hi[k] : 1.0;
    return s;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error(ErrorCode::InvalidArgument, "replay capacity must be > 0");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(TransitionRecord t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
        return;
    }
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

std::vector<int> ReplayBuffer::sample_indices(int k, Rng& rng) const {
    const int n = static_cast<int>(data_.size());
    if (n == 0) throw Error(ErrorCode::Runtime, "sampling from empty replay buffer");
    k = std::min(k, n);
    // Partial Fisher-Yates: k distinct uniform indices.
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) {
        std::size_t j = i + rng.uniform_int(static_cast<std::uint64_t>(n - i));
        std::swap(idx[i], idx[j]);
        out[i] = idx[i];
    }
    return out;
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
        throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0,1)");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "tau must lie in (0,1]");
    if (cfg.episodes <= 0 || cfg.batch_size <= 0 || cfg.update_every <= 0)
        throw Error(ErrorCode::InvalidArgument, "episodes/batch/update_every must be positive");
    validate(cfg.reward);
}

AgentAction action_from_unit(const std::array<double, kActionDim>& y, const StationConfig& cfg) {
    AgentAction a;
    double y0 = std::clamp(y[0], -1.0, 1.0);
    a.p_signed = y0 >= 0.0 ? y0 * cfg.p_ch_max : y0 * cfg.p_disch_max;
    a.v2v_request = (std::clamp(y[1], -1.0, 1.0) + 1.0) / 2.0;
    a.pv_request = (std::clamp(y[2], -1.0, 1.0) + 1.0) / 2.0;
    return a;
}

Eigen::VectorXd obs_features(const AgentObservation& o, const std::array<double, kObsDim>& scale) {
    auto raw = to_array(o);
    Eigen::VectorXd f(kObsDim);
    for (int k = 0; k < kObsDim; ++k) f[k] = raw[k] / (scale[k] > 0.0 ? scale[k] : 1.0);
    return f;
}

double td_target(double r, double gamma, double q_next, bool terminal) {
    return r + (terminal ? 0.0 : gamma * q_next);
}

Eigen::VectorXd td_targets(const Eigen::VectorXd& r, double gamma, const Eigen::VectorXd& q_next,
                           const Eigen::VectorXd& terminal) {
    if (r.size() != q_next.size() || r.size() != terminal.size())
        throw Error(ErrorCode::ArityMismatch, "td_targets: length mismatch");
    return r.array() + gamma * (1.0 - terminal.array()) * q_next.array();
}

double critic_loss_and_grad(DenseNet& critic, const Mat& obs, const Mat& act,
                            const Eigen::VectorXd& target) {
    const int B = static_cast<int>(obs.rows());
    if (act.rows() != B || target.size() != B)
        throw Error(ErrorCode::ArityMismatch, "critic batch shapes disagree");
    Mat in(B, obs.cols() + act.cols());
    in << obs, act;
    Mat q = critic.forward(in);
    Eigen::VectorXd diff = q.col(0) - target;
    double loss = diff.squaredNorm() / B;
    Mat dq = (2.0 / B) * diff;
    critic.backward(dq);
    return loss;
}

double actor_objective_and_grad(DenseNet& actor, DenseNet& critic, const Mat& joint_obs,
                                const Mat& joint_act, const Mat& local_obs, int action_offset) {
    const int B = static_cast<int>(joint_obs.rows());
    if (joint_act.rows() != B || local_obs.rows() != B)
        throw Error(ErrorCode::ArityMismatch, "actor batch shapes disagree");
    if (action_offset < 0 || action_offset + kActionDim > joint_act.cols())
        throw Error(ErrorCode::InvalidArgument, "actor action offset out of range");
    Mat y = actor.forward(local_obs);  // B x kActionDim
    Mat act = joint_act;
    act.middleCols(action_offset, kActionDim) = y;
    Mat in(B, joint_obs.cols() + act.cols());
    in << joint_obs, act;
    Mat q = critic.forward(in);
    double objective = q.col(0).mean();
    critic.zero_grad();
    Mat d_in = critic.backward(Mat::Constant(B, 1, -1.0 / B));  // d(-J)/d input
    Mat dy = d_in.middleCols(joint_obs.cols() + action_offset, kActionDim);
    actor.backward(dy);
    critic.zero_grad();
    return objective;
}

MaddpgPolicy::MaddpgPolicy(std::vector<DenseNet> actors, std::array<double, kObsDim> obs_scale,
                           double p_ch_max, double p_disch_max)
    : actors_(std::move(actors)),
      obs_scale_(obs_scale),
      p_ch_max_(p_ch_max),
      p_disch_max_(p_disch_max) {
    for (auto& a : actors_) a.clear_noise();
}

AgentAction MaddpgPolicy::act_single(const AgentObservation& o, int agent) {
    if (agent < 0 || agent >= n_agents())
        throw Error(ErrorCode::InvalidArgument, "actor index out of range");
    Eigen::VectorXd f = obs_features(o, obs_scale_);
    Mat y = actors_[agent].forward(f.transpose());
    StationConfig cfg;
    cfg.p_ch_max = p_ch_max_;
    cfg.p_disch_max = p_disch_max_;
    return action_from_unit({y(0, 0), y(0, 1), y(0, 2)}, cfg);
}

std::vector<AgentAction> MaddpgPolicy::act(const PolicyContext& ctx) {
    if (static_cast<int>(ctx.obs.size()) != n_agents())
        throw Error(ErrorCode::ArityMismatch,
                    "checkpoint has " + std::to_string(n_agents()) + " actors but scenario has " +
                        std::to_string(ctx.obs.size()) + " chargers");
    std::vector<AgentAction> out(ctx.obs.size());
    for (std::size_t j = 0; j < ctx.obs.size(); ++j)
        out[j] = act_single(ctx.obs[j], static_cast<int>(j));
    return out;
}

void MaddpgPolicy::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "voltmesh-maddpg 1\n";
    out << "agents " << actors_.size() << "\n";
    out << "p_ch_max " << fmt(p_ch_max_) << "\n";
    out << "p_disch_max " << fmt(p_disch_max_) << "\n";
    out << "obs_scale";
    for (double s : obs_scale_) out << " " << fmt(s);
    out << "\n";
    for (std::size_t j = 0; j < actors_.size(); ++j) {
        out << "actor " << j << "\n";
        save_net(actors_[j], out);
    }
}

MaddpgPolicy MaddpgPolicy::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::string magic, word;
    int version = 0;
    if (!(in >> magic >> version) || magic != "voltmesh-maddpg" || version != 1)
        throw Error(ErrorCode::Parse, path + ": not a maddpg checkpoint (or wrong version)");
    std::size_t n = 0;
    if (!(in >> word >> n) || word != "agents" || n == 0 || n > 1024)
        throw Error(ErrorCode::Parse, path + ": bad agent count");
    MaddpgPolicy p;
    if (!(in >> word >> p.p_ch_max_) || word != "p_ch_max")
        throw Error(ErrorCode::Parse, path + ": missing p_ch_max");
    if (!(in >> word >> p.p_disch_max_) || word != "p_disch_max")
        throw Error(ErrorCode::Parse, path + ": missing p_disch_max");
    if (!(in >> word) || word != "obs_scale")
        throw Error(ErrorCode::Parse, path + ": missing obs_scale");
    for (int k = 0; k < kObsDim; ++k)
        if (!(in >> p.obs_scale_[k]))
            throw Error(ErrorCode::Parse, path + ": truncated obs_scale");
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t idx = 0;
        if (!(in >> word >> idx) || word != "actor" || idx != j)
            throw Error(ErrorCode::Parse, path + ": missing actor " + std::to_string(j));
        p.actors_.push_back(load_net(in));
        if (p.actors_.back().input_dim() != kObsDim ||
            p.actors_.back().output_dim() != kActionDim)
            throw Error(ErrorCode::Parse, path + ": actor has wrong input/output width");
    }
    return p;
}

void save_learning_curve(const std::vector<EpisodePoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "episode,mean_reward,completion,cost\n";
    for (const auto& p : curve)
        out << p.episode << "," << fmt(p.mean_reward) << "," << fmt(p.completion) << ","
            << fmt(p.cost) << "\n";
}

namespace {

struct Batch {
    Mat obs, act, next_obs;  // B x (n*obs), B x (n*act)
    Mat rew;                 // B x n
    Eigen::VectorXd terminal;
};

Batch build_batch(const ReplayBuffer& buf, const std::vector<int>& idx, int n_agents) {
    Batch b;
    const int B = static_cast<int>(idx.size());
    const int od = n_agents * kObsDim, ad = n_agents * kActionDim;
    b.obs.resize(B, od);
    b.act.resize(B, ad);
    b.next_obs.resize(B, od);
    b.rew.resize(B, n_agents);
    b.terminal.resize(B);
    for (int i = 0; i < B; ++i) {
        const TransitionRecord& t = buf[idx[i]];
        b.obs.row(i) = t.obs.transpose();
        b.act.row(i) = t.act.transpose();
        b.next_obs.row(i) = t.next_obs.transpose();
        b.rew.row(i) = t.rew.transpose();
        b.terminal[i] = t.terminal;
    }
    return b;
}

}  // namespace

TrainResult maddpg_train(const std::vector<Scenario>& scenarios, const TrainConfig& cfg,
                         std::uint64_t seed) {
    if (scenarios.empty())
        throw Error(ErrorCode::InvalidArgument, "maddpg_train: no scenarios given");
    validate(cfg);
    for (const auto& sc : scenarios) validate(sc);
    const int n = scenarios.front().cfg.n_chargers;
    for (const auto& sc : scenarios)
        if (sc.cfg.n_chargers != n)
            throw Error(ErrorCode::ArityMismatch,
                        "all training scenarios must share the charger count");

    Rng rng(seed);
    const bool noisy = cfg.exploration == ExplorationMode::noisy;

    // Observation scale: elementwise max over the scenario set.
    ObservationBounds bounds = observation_bounds(scenarios.front());
    for (std::size_t s = 1; s < scenarios.size(); ++s) {
        ObservationBounds b = observation_bounds(scenarios[s]);
        for (int k = 0; k < kObsDim; ++k) bounds.hi[k] = std::max(bounds.hi[k], b.hi[k]);
    }
    std::array<double, kObsDim> scale = scale_from_bounds(bounds);

    std::vector<int> actor_sizes{kObsDim};
    actor_sizes.insert(actor_sizes.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
    actor_sizes.push_back(kActionDim);
    std::vector<Activation> actor_acts(actor_sizes.size() - 2, Activation::relu);
    actor_acts.push_back(Activation::tanh);

    const int critic_in = n * kObsDim + n * kActionDim;
    std::vector<int> critic_sizes{critic_in};
    critic_sizes.insert(critic_sizes.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
    critic_sizes.push_back(1);
    std::vector<Activation> critic_acts(critic_sizes.size() - 2, Activation::relu);
    critic_acts.push_back(Activation::identity);

    std::vector<AgentLearner> learners;
    learners.reserve(n);
    for (int j = 0; j < n; ++j) {
        AgentLearner L{DenseNet(actor_sizes, actor_acts, noisy, rng, cfg.sigma_init),
                       DenseNet(),
                       DenseNet(critic_sizes, critic_acts, false, rng),
                       DenseNet(),
                       Adam(cfg.actor_lr),
                       Adam(cfg.critic_lr)};
        L.target_actor = L.actor;    // targets start equal to online nets
        L.target_critic = L.critic;
        learners.push_back(std::move(L));
    }

    ReplayBuffer buffer(cfg.buffer_capacity);
    TrainResult result;
    long global_step = 0;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const Scenario& sc = scenarios[ep % scenarios.size()];
        EpisodeEngine engine(sc, cfg.reward);
        double frac = cfg.episodes > 1 ? static_cast<double>(ep) / (cfg.episodes - 1) : 0.0;
        double noise_std =
            cfg.action_noise_start + (cfg.action_noise_end - cfg.action_noise_start) * frac;

        double ep_reward = 0.0, ep_cost = 0.0;
        Eigen::VectorXd joint_obs(n * kObsDim);
        {
            auto obs = observe_all(engine.state());
            for (int j = 0; j < n; ++j)
                joint_obs.segment(j * kObsDim, kObsDim) = obs_features(obs[j], scale);
        }
        while (!engine.done()) {
            // Exploration: fresh parameter noise each step (noisy mode) or
            // annealed Gaussian on the unit actions (action-noise mode).
            if (noisy)
                for (auto& L : learners) L.actor.sample_noise(rng);
            Eigen::VectorXd joint_act(n * kActionDim);
            std::vector<AgentAction> actions(n);
            for (int j = 0; j < n; ++j) {
                Mat y = learners[j].actor.forward(joint_obs.segment(j * kObsDim, kObsDim)
                                                      .transpose());
                std::array<double, kActionDim> u{};
                for (int k = 0; k < kActionDim; ++k) {
                    double v = y(0, k);
                    if (!noisy) v += noise_std * rng.normal();
                    u[k] = std::clamp(v, -1.0, 1.0);
                    joint_act[j * kActionDim + k] = u[k];
                }
                actions[j] = action_from_unit(u, sc.cfg);
            }

            StepResult res = engine.step(actions);
            ep_cost += res.cost.energy_cost - res.cost.pv_sale + res.cost.battery_cost;

            Eigen::VectorXd next_obs(n * kObsDim);
            auto obs2 = observe_all(engine.state());
            for (int j = 0; j < n; ++j)
                next_obs.segment(j * kObsDim, kObsDim) = obs_features(obs2[j], scale);

            TransitionRecord tr;
            tr.obs = joint_obs;
            tr.act = joint_act;
            tr.rew = Eigen::Map<const Eigen::VectorXd>(res.rewards.data(), n);
            tr.next_obs = next_obs;
            tr.terminal = res.done ? 1.0 : 0.0;
            ep_reward += tr.rew.sum();
            buffer.push(std::move(tr));
            joint_obs = next_obs;
            ++global_step;

            if (static_cast<long>(buffer.size()) >= cfg.warmup_transitions &&
                global_step % cfg.update_every == 0) {
                auto idx = buffer.sample_indices(cfg.batch_size, rng);
                Batch batch = build_batch(buffer, idx, n);
                const int B = static_cast<int>(idx.size());

                // One fresh noise draw per minibatch: online and target actors.
                if (noisy) {
                    for (auto& L : learners) L.actor.sample_noise(rng);
                    for (auto& L : learners) L.target_actor.sample_noise(rng);
                }

                // Target joint actions from target actors on local next-state.
                Mat next_act(B, n * kActionDim);
                for (int k = 0; k < n; ++k)
                    next_act.middleCols(k * kActionDim, kActionDim) =
                        learners[k].target_actor.forward(
                            batch.next_obs.middleCols(k * kObsDim, kObsDim));

                for (int j = 0; j < n; ++j) {
                    AgentLearner& L = learners[j];
                    Mat in2(B, batch.next_obs.cols() + next_act.cols());
                    in2 << batch.next_obs, next_act;
                    Eigen::VectorXd q_next = L.target_critic.forward(in2).col(0);
                    Eigen::VectorXd y =
                        td_targets(batch.rew.col(j), cfg.gamma, q_next, batch.terminal);
                    L.critic.zero_grad();
                    critic_loss_and_grad(L.critic, batch.obs, batch.act, y);
                    L.critic_opt.step(L.critic);

                    L.actor.zero_grad();
                    actor_objective_and_grad(L.actor, L.critic, batch.obs, batch.act,
                                             batch.obs.middleCols(j * kObsDim, kObsDim),
                                             j * kActionDim);
                    L.actor_opt.step(L.actor);
                }
                for (auto& L : learners) {
                    soft_update(L.actor, L.target_actor, cfg.tau);
                    soft_update(L.critic, L.target_critic, cfg.tau);
                }
            }
        }

        double mean_reward = ep_reward / sc.horizon;
        if (!std::isfinite(mean_reward))
            throw Error(ErrorCode::Divergence,
                        "training diverged at episode " + std::to_string(ep));
        result.curve.push_back(
            {ep, mean_reward, completion_ratio(engine.outcomes()), ep_cost});
    }

    std::vector<DenseNet> actors;
    actors.reserve(n);
    for (auto& L : learners) {
        L.actor.clear_noise();
        actors.push_back(L.actor);
    }
    result.policy = MaddpgPolicy(std::move(actors), scale, scenarios.front().cfg.p_ch_max,
                                 scenarios.front().cfg.p_disch_max);
    return result;
}

}  // namespace voltmesh
