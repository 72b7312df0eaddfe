#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voltmesh/dispatch.hpp"
#include "voltmesh/metrics.hpp"
#include "voltmesh/scenario.hpp"
#include "voltmesh/station.hpp"

namespace voltmesh {

// Local observation of one agent: action-related fields (own battery, demand)
// plus shared exogenous fields. All zero when the charger is empty.
struct AgentObservation {
    double e = 0.0;      // kWh
    double t_rem = 0.0;  // hours
    double e_dem = 0.0;  // kWh
    double k_buy = 0.0;
    double k_sell = 0.0;
    double pv_gen = 0.0;  // kW
};

inline constexpr int kObsDim = 6;

std::array<double, kObsDim> to_array(const AgentObservation& o);
AgentObservation observation_from_array(const std::array<double, kObsDim>& a);

// How the per-agent reward is composed.
enum class FairnessSign {
    minus_psi,   // R_user = U - psi (aligned with the cost objective)
    paper_plus,  // R_user = U + psi
    off,         // R_user = U (fairness term disabled)
};

struct RewardConfig {
    double xi = 0.5;   // weight on the cost term, in [0,1]
    double rho = 1.0;  // satisfaction coefficient
    double grid_penalty_coeff = 1.0;  // currency per kW of pre-clip grid excess
    FairnessSign fairness_sign = FairnessSign::minus_psi;
    bool paper_literal_fap = false;  // allow negative FAP once demand is met
};

void validate(const RewardConfig& rc);

struct FaultSpec {
    int fault_step = 0;
    std::vector<int> faulty_chargers;
};

// Per-field [lo, hi] ranges used to draw corrupted observations.
struct ObservationBounds {
    std::array<double, kObsDim> lo{};
    std::array<double, kObsDim> hi{};
};

ObservationBounds observation_bounds(const Scenario& sc);

// Replace faulty chargers' observations with uniform draws inside `bounds`
// when t >= fault_step. Healthy chargers pass through untouched.
std::vector<AgentObservation> corrupt_observations(const std::vector<AgentObservation>& obs,
                                                   const FaultSpec& fault, int t,
                                                   const ObservationBounds& bounds, Rng& rng);

// Full station snapshot at one step.
struct StationState {
    int t = 0;
    double delta_t = 0.25;  // hours per step, for observation time units
    std::vector<ChargerState> chargers;
    ExogenousStep exog;
};

AgentObservation observe(const StationState& st, int j);
std::vector<AgentObservation> observe_all(const StationState& st);

struct StepResult {
    std::vector<double> rewards;  // one per charger; 0 for inactive agents
    PowerFlows flows;
    StepCost cost;
    std::vector<DegradationOutcome> degradations;
    std::vector<SessionOutcome> departures;  // sessions that ended this step
    bool done = false;

    StepResult() : flows(0) {}
};

// Drives one scenario through time: applies actions, advances batteries,
// handles arrivals/departures, and composes per-agent rewards.
class EpisodeEngine {
  public:
    EpisodeEngine(Scenario sc, RewardConfig rc);

    void reset();
    const StationState& state() const { return st_; }
    const Scenario& scenario() const { return sc_; }
    const RewardConfig& reward_config() const { return rc_; }
    bool done() const { return st_.t >= sc_.horizon; }
    int n_active() const;

    // Advance one step. Actions are clamped into the action box; battery
    // feasibility clamping happens inside the allocator.
    StepResult step(const std::vector<AgentAction>& actions);

    // Outcomes of every session that has departed so far.
    const std::vector<SessionOutcome>& outcomes() const { return outcomes_; }

  private:
    void place_arrivals(int t);

    Scenario sc_;
    RewardConfig rc_;
    StationState st_;
    std::vector<SessionOutcome> outcomes_;
    std::vector<std::vector<int>> arrivals_by_step_;  // session indices by arrival step
};

// A policy maps observations to joint actions once per step.
struct PolicyContext {
    int t = 0;
    const std::vector<AgentObservation>& obs;  // possibly fault-corrupted
    const StationState& state;                 // ground truth, for planner baselines
    const Scenario& scenario;
};

class Policy {
  public:
    virtual ~Policy() = default;
    virtual void begin_episode(const Scenario& sc) { (void)sc; }
    virtual std::vector<AgentAction> act(const PolicyContext& ctx) = 0;
    // True when each agent's action is a function of its own observation only.
    virtual bool decentralized() const { return false; }
    virtual std::string name() const = 0;
};

struct StepRecord {
    int t = 0;
    std::vector<AgentObservation> obs;  // as seen by the policy
    std::vector<AgentAction> actions;
    std::vector<double> rewards;
    PowerFlows flows;
    StepCost cost;
    std::vector<double> energy;  // post-step battery levels

    StepRecord() : flows(0) {}
};

struct EpisodeTrace {
    std::vector<StepRecord> steps;
    std::vector<SessionOutcome> outcomes;
    double total_cost = 0.0;    // sum of energy_cost - pv_sale + battery_cost
    double total_reward = 0.0;  // summed over steps and agents
    double mean_reward = 0.0;   // total_reward / horizon
    double completion = 0.0;    // mean completion percentage
    double completion_dispersion = 0.0;  // std of per-session completion
    double grid_violation = 0.0;         // summed pre-clip excess, kW
};

struct RolloutOptions {
    std::optional<FaultSpec> fault;
    std::uint64_t seed = 0;
    RewardConfig reward;
};

EpisodeTrace rollout(const Scenario& sc, Policy& policy, const RolloutOptions& opt);

void save_trace_jsonl(const EpisodeTrace& trace, const std::string& path);

}  // namespace voltmesh
