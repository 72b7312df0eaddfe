#ifndef VOLTMESH_H
#define VOLTMESH_H

/* C interface to the voltmesh charging-station simulator and trainers.
 * All functions return vm_status; on failure vm_last_error() carries a
 * message for the calling thread. Handles are opaque and owned by the
 * caller until passed to the matching *_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VM_API __declspec(dllexport)
#else
#define VM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vm_status {
    VM_OK = 0,
    VM_ERR_INVALID_ARGUMENT = 1,
    VM_ERR_IO = 2,
    VM_ERR_PARSE = 3,
    VM_ERR_RUNTIME = 4,
    VM_ERR_ARITY_MISMATCH = 5,
    VM_ERR_DIVERGENCE = 6,
    VM_ERR_CONTRACT_VIOLATION = 7,
    VM_ERR_NUMERICAL_FAILURE = 8
} vm_status;

VM_API const char* vm_version(void);

/* Message from the most recent failing call on this thread ("" if none). */
VM_API const char* vm_last_error(void);

typedef struct vm_scenario vm_scenario;
typedef struct vm_policy vm_policy;

/* ---- scenarios ---- */

/* Load a scenario directory (config.txt, sessions.csv, prices.csv, solar.csv). */
VM_API vm_status vm_scenario_load(const char* dir, vm_scenario** out);

/* Generate a synthetic scenario. spec is e.g. "2x96" or
 * "n=4,days=2,profile=busy" (empty string for defaults). */
VM_API vm_status vm_scenario_synthetic(const char* spec, uint64_t seed, vm_scenario** out);

VM_API vm_status vm_scenario_save(const vm_scenario* sc, const char* dir);
VM_API vm_status vm_scenario_info(const vm_scenario* sc, int* n_chargers, int* horizon,
                                  double* delta_t);
VM_API void vm_scenario_free(vm_scenario* sc);

/* ---- training ---- */

typedef struct vm_train_options {
    const char* algo;        /* "maddpg" | "madqn" */
    const char* exploration; /* "noisy" | "action-noise"; ignored for madqn; NULL -> noisy */
    int episodes;            /* > 0 */
    double xi;               /* cost/satisfaction trade-off in [0,1] */
    uint64_t seed;
    /* Tuning knobs; <= 0 selects the built-in default. */
    int batch_size;
    int update_every;
    int warmup_transitions;
    int hidden_width;  /* width of each hidden layer */
    /* Satisfaction shaping: "u-minus-psi" (default), "u-plus-psi", "off"; NULL ok. */
    const char* fairness;
    double grid_penalty; /* < 0 selects the default (1.0) */
} vm_train_options;

typedef struct vm_train_summary {
    int episodes;
    double final_mean_reward; /* mean of per-episode mean rewards, last 50 episodes */
    double final_completion;  /* last episode, percent */
    double final_cost;        /* last episode, currency */
} vm_train_summary;

/* Train on one or more scenarios (round-robin). Writes the learning curve
 * as CSV (episode,mean_reward,completion,cost) when curve_csv_path is
 * non-NULL. Returns the greedy policy. */
VM_API vm_status vm_train(const vm_scenario* const* scenarios, size_t n_scenarios,
                          const vm_train_options* opt, const char* curve_csv_path,
                          vm_policy** out_policy, vm_train_summary* out_summary);

/* ---- policies ---- */

/* Load a checkpoint written by vm_policy_save (maddpg or madqn). */
VM_API vm_status vm_policy_load(const char* path, vm_policy** out);
VM_API vm_status vm_policy_save(const vm_policy* policy, const char* path);

/* Built-in baselines: "uncontrolled", "rho", "rho-persistence". */
VM_API vm_status vm_policy_builtin(const char* name, vm_policy** out);

VM_API const char* vm_policy_name(const vm_policy* policy);

/* 1 when the policy acts on per-agent observations only. */
VM_API vm_status vm_policy_decentralized(const vm_policy* policy, int* out);

VM_API void vm_policy_free(vm_policy* policy);

/* ---- evaluation ---- */

typedef struct vm_fault_options {
    int fault_step; /* observations of the listed chargers are replaced with
                       in-range random values from this step onward */
    const int* faulty_chargers;
    size_t n_faulty;
} vm_fault_options;

typedef struct vm_eval_summary {
    double total_cost;
    double total_reward;
    double mean_reward;
    double completion;     /* mean session completion, percent */
    double completion_std; /* dispersion of completion across sessions */
    double grid_violation; /* summed kW beyond the grid limit */
    /* Fault comparison (fault != NULL only; otherwise -1): healthy-charger
     * actions that differ from the fault-free run at steps >= fault_step. */
    int healthy_actions_changed;
    int healthy_actions_total;
} vm_eval_summary;

/* Roll the policy over one episode. Optionally injects the observation
 * fault, writes a per-step JSON-lines trace and a one-row aggregate
 * metrics CSV. With a fault the episode is rolled twice (with and
 * without) to fill the healthy-action comparison. */
VM_API vm_status vm_evaluate(const vm_scenario* sc, vm_policy* policy, uint64_t seed,
                             const vm_fault_options* fault, const char* trace_jsonl_path,
                             const char* metrics_csv_path, vm_eval_summary* out);

#ifdef __cplusplus
}
#endif

#endif /* VOLTMESH_H */
