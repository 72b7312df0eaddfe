#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "voltmesh/episode.hpp"
#include "voltmesh/lp.hpp"
#include "voltmesh/maddpg.hpp"

namespace voltmesh {

// ---- uncontrolled ----------------------------------------------------------
// Charge at full rated power whenever plugged in; no PV/V2V requests.
class UncontrolledPolicy : public Policy {
  public:
    std::vector<AgentAction> act(const PolicyContext& ctx) override;
    bool decentralized() const override { return true; }
    std::string name() const override { return "uncontrolled"; }
};

// ---- rolling-horizon optimization ------------------------------------------
enum class RhoWindowMode { longest_parking, fixed };
enum class ForecastMode { perfect, persistence };
enum class ResolveTrigger { every_step, on_arrival };

struct RhoConfig {
    RhoWindowMode window_mode = RhoWindowMode::longest_parking;
    int fixed_window = 24;  // steps, used by RhoWindowMode::fixed
    ForecastMode forecast = ForecastMode::perfect;
    ResolveTrigger resolve = ResolveTrigger::on_arrival;
    double rho = 1.0;  // scales the unmet-demand penalty (rho * max window buy price)
};

// Forecast series for the whole horizon under the configured mode:
// perfect returns the true series; persistence repeats the previous day's
// actual values (the first day uses the truth).
std::vector<ExogenousStep> make_forecast(const Scenario& sc, ForecastMode mode);

// Window length in steps for the scenario under the configured mode.
int rho_window_steps(const Scenario& sc, const RhoConfig& cfg);

// Solve the window program for the EVs currently plugged in and return the
// planned actions for each window step (index 0 = the current step).
// Demand is always soft: an unmet-demand slack per EV keeps the program
// feasible and is priced at cfg.rho times the window's max buy price.
std::vector<std::vector<AgentAction>> rho_plan(const StationState& state, const Scenario& sc,
                                               const std::vector<ExogenousStep>& forecast,
                                               const RhoConfig& cfg);

class RhoPolicy : public Policy {
  public:
    explicit RhoPolicy(RhoConfig cfg = {}) : cfg_(cfg) {}
    void begin_episode(const Scenario& sc) override;
    std::vector<AgentAction> act(const PolicyContext& ctx) override;
    std::string name() const override {
        return cfg_.forecast == ForecastMode::perfect ? "rho" : "rho-persistence";
    }

  private:
    RhoConfig cfg_;
    std::vector<ExogenousStep> forecast_;
    std::vector<std::vector<AgentAction>> plan_;  // plan_[t - plan_t0_]
    int plan_t0_ = -1;
    std::vector<bool> arrival_at_step_;
};

// ---- centralized MADQN -------------------------------------------------------
struct MadqnConfig {
    int episodes = 500;
    double gamma = 0.95;
    double tau = 0.01;
    double lr = 1e-3;
    int batch_size = 256;
    std::size_t buffer_capacity = 100000;
    int warmup_transitions = 1000;
    int update_every = 1;
    std::vector<int> hidden{128, 128};
    double eps_start = 1.0;  // epsilon-greedy exploration, annealed linearly
    double eps_end = 0.05;
    RewardConfig reward;
};

void validate(const MadqnConfig& cfg);

// The discrete action set: power in {-Pd, -Pd/2, 0, Pch/2, Pch} crossed with
// pv_request in {0,1} and v2v_request in {0,1} -> 20 actions.
std::vector<double> madqn_power_levels(const StationConfig& cfg);
inline constexpr int kMadqnActions = 20;
AgentAction madqn_action(int index, const std::vector<double>& power_levels);

// Each agent's Q-network reads the concatenated joint observation, so
// execution is centralized: corrupting one charger's observation perturbs
// every agent's input.
class MadqnPolicy : public Policy {
  public:
    MadqnPolicy() = default;
    MadqnPolicy(std::vector<DenseNet> qnets, std::array<double, kObsDim> obs_scale,
                std::vector<double> power_levels);

    std::vector<AgentAction> act(const PolicyContext& ctx) override;
    bool decentralized() const override { return false; }
    std::string name() const override { return "madqn"; }

    int n_agents() const { return static_cast<int>(qnets_.size()); }
    int greedy_action(const Eigen::VectorXd& joint_features, int agent);

    void save(const std::string& path) const;
    static MadqnPolicy load(const std::string& path);

  private:
    std::vector<DenseNet> qnets_;
    std::array<double, kObsDim> obs_scale_{1, 1, 1, 1, 1, 1};
    std::vector<double> power_levels_;
};

struct MadqnTrainResult {
    std::vector<EpisodePoint> curve;
    MadqnPolicy policy;
};

MadqnTrainResult madqn_train(const std::vector<Scenario>& scenarios, const MadqnConfig& cfg,
                             std::uint64_t seed);

// Reads the checkpoint magic and loads the matching policy type.
std::unique_ptr<Policy> load_policy_checkpoint(const std::string& path);

}  // namespace voltmesh
