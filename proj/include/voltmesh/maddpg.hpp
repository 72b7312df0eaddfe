#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voltmesh/episode.hpp"
#include "voltmesh/nn.hpp"

namespace voltmesh {

inline constexpr int kActionDim = 3;  // signed power, v2v request, pv request

enum class ExplorationMode { noisy, action_noise };

// The replay tuple: joint observation, joint unit actions, per-agent rewards,
// next joint observation, terminal flag.
struct TransitionRecord {
    Eigen::VectorXd obs;       // n * kObsDim, normalized
    Eigen::VectorXd act;       // n * kActionDim, in [-1,1]
    Eigen::VectorXd rew;       // n
    Eigen::VectorXd next_obs;  // n * kObsDim
    double terminal = 0.0;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(TransitionRecord t);
    std::size_t size() const { return data_.size(); }
    const TransitionRecord& operator[](std::size_t i) const { return data_[i]; }
    // k distinct indices, uniform over the buffer.
    std::vector<int> sample_indices(int k, Rng& rng) const;

  private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // next slot to overwrite once full
    std::vector<TransitionRecord> data_;
};

struct TrainConfig {
    int episodes = 500;
    ExplorationMode exploration = ExplorationMode::noisy;
    double gamma = 0.95;
    double tau = 0.01;
    int batch_size = 256;
    std::size_t buffer_capacity = 100000;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    int warmup_transitions = 1000;
    int update_every = 1;  // environment steps between gradient updates
    std::vector<int> actor_hidden{64, 64};
    std::vector<int> critic_hidden{128, 128};
    double sigma_init = 0.017;
    double action_noise_start = 0.3;  // Gaussian stddev on unit actions,
    double action_noise_end = 0.01;   // annealed linearly across episodes
    RewardConfig reward;
};

void validate(const TrainConfig& cfg);

// ---- unit-action mapping -------------------------------------------------
// Actors emit tanh outputs y in [-1,1]^3; the environment action is
// p = y0 * (p_ch_max if y0 >= 0 else p_disch_max), requests = (y+1)/2.
AgentAction action_from_unit(const std::array<double, kActionDim>& y, const StationConfig& cfg);
Eigen::VectorXd obs_features(const AgentObservation& o, const std::array<double, kObsDim>& scale);

// ---- differentiable pieces (exposed for gradient verification) ------------
double td_target(double r, double gamma, double q_next, bool terminal);
Eigen::VectorXd td_targets(const Eigen::VectorXd& r, double gamma, const Eigen::VectorXd& q_next,
                           const Eigen::VectorXd& terminal);

// Mean squared TD loss over the batch; accumulates critic parameter
// gradients (no optimizer step). Input rows are [joint obs | joint actions].
double critic_loss_and_grad(DenseNet& critic, const Mat& obs, const Mat& act,
                            const Eigen::VectorXd& target);

// Mean critic value with the agent's own action block replaced by the actor
// output; accumulates d(-J)/dtheta into the actor (no step). The critic's
// gradient buffers are used as scratch and cleared.
double actor_objective_and_grad(DenseNet& actor, DenseNet& critic, const Mat& joint_obs,
                                const Mat& joint_act, const Mat& local_obs, int action_offset);

// ---- learners --------------------------------------------------------------
struct AgentLearner {
    DenseNet actor, target_actor;
    DenseNet critic, target_critic;
    Adam actor_opt, critic_opt;
};

// The trained, decentralized execution policy: each agent's action is a
// function of its own observation only.
class MaddpgPolicy : public Policy {
  public:
    MaddpgPolicy() = default;
    MaddpgPolicy(std::vector<DenseNet> actors, std::array<double, kObsDim> obs_scale,
                 double p_ch_max, double p_disch_max);

    std::vector<AgentAction> act(const PolicyContext& ctx) override;
    bool decentralized() const override { return true; }
    std::string name() const override { return "maddpg"; }

    AgentAction act_single(const AgentObservation& o, int agent) ;
    int n_agents() const { return static_cast<int>(actors_.size()); }

    void save(const std::string& path) const;
    static MaddpgPolicy load(const std::string& path);

  private:
    std::vector<DenseNet> actors_;
    std::array<double, kObsDim> obs_scale_{1, 1, 1, 1, 1, 1};
    double p_ch_max_ = 16.0;
    double p_disch_max_ = 16.0;
};

struct EpisodePoint {
    int episode = 0;
    double mean_reward = 0.0;
    double completion = 0.0;
    double cost = 0.0;
};

struct TrainResult {
    std::vector<EpisodePoint> curve;
    MaddpgPolicy policy;
};

void save_learning_curve(const std::vector<EpisodePoint>& curve, const std::string& path);

// Centralized training over the scenario set (cycled per episode),
// decentralized execution in the returned policy. Deterministic per seed.
TrainResult maddpg_train(const std::vector<Scenario>& scenarios, const TrainConfig& cfg,
                         std::uint64_t seed);

}  // namespace voltmesh
