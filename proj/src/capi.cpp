#include "voltmesh.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "voltmesh/baselines.hpp"
#include "voltmesh/episode.hpp"
#include "voltmesh/maddpg.hpp"
#include "voltmesh/scenario.hpp"

struct vm_scenario {
    voltmesh::Scenario sc;
};

struct vm_policy {
    std::unique_ptr<voltmesh::Policy> p;
    std::string name;
};

namespace {

thread_local std::string g_last_error;

vm_status map_code(voltmesh::ErrorCode code) {
    using voltmesh::ErrorCode;
    switch (code) {
        case ErrorCode::InvalidArgument: return VM_ERR_INVALID_ARGUMENT;
        case ErrorCode::Io: return VM_ERR_IO;
        case ErrorCode::Parse: return VM_ERR_PARSE;
        case ErrorCode::Runtime: return VM_ERR_RUNTIME;
        case ErrorCode::ArityMismatch: return VM_ERR_ARITY_MISMATCH;
        case ErrorCode::Divergence: return VM_ERR_DIVERGENCE;
        case ErrorCode::ContractViolation: return VM_ERR_CONTRACT_VIOLATION;
        case ErrorCode::NumericalFailure: return VM_ERR_NUMERICAL_FAILURE;
    }
    return VM_ERR_RUNTIME;
}

template <typename F>
vm_status guarded(F&& f) {
    try {
        f();
        return VM_OK;
    } catch (const voltmesh::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return VM_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown failure";
        return VM_ERR_RUNTIME;
    }
}

vm_status fail(vm_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_metrics_csv(const std::string& path, const std::string& policy,
                       const voltmesh::Scenario& sc, uint64_t seed,
                       const voltmesh::EpisodeTrace& tr) {
    std::ofstream out(path);
    if (!out) throw voltmesh::Error(voltmesh::ErrorCode::Io, "cannot write " + path);
    out << "policy,n_chargers,horizon,seed,total_cost,total_reward,mean_reward,"
           "completion,completion_std,grid_violation\n";
    out << policy << ',' << sc.cfg.n_chargers << ',' << sc.horizon << ',' << seed << ','
        << fmt(tr.total_cost) << ',' << fmt(tr.total_reward) << ',' << fmt(tr.mean_reward) << ','
        << fmt(tr.completion) << ',' << fmt(tr.completion_dispersion) << ','
        << fmt(tr.grid_violation) << "\n";
}

bool same_action(const voltmesh::AgentAction& a, const voltmesh::AgentAction& b) {
    return a.p_signed == b.p_signed && a.v2v_request == b.v2v_request &&
           a.pv_request == b.pv_request;
}

}  // namespace

extern "C" {

const char* vm_version(void) { return "1.0.0"; }

const char* vm_last_error(void) { return g_last_error.c_str(); }

vm_status vm_scenario_load(const char* dir, vm_scenario** out) {
    if (!dir || !out) return fail(VM_ERR_INVALID_ARGUMENT, "dir and out must be non-NULL");
    return guarded([&] {
        auto h = std::make_unique<vm_scenario>();
        h->sc = voltmesh::load_scenario(dir);
        *out = h.release();
    });
}

vm_status vm_scenario_synthetic(const char* spec, uint64_t seed, vm_scenario** out) {
    if (!out) return fail(VM_ERR_INVALID_ARGUMENT, "out must be non-NULL");
    return guarded([&] {
        voltmesh::SyntheticSpec s = voltmesh::parse_synthetic_spec(spec ? spec : "");
        s.seed = seed;
        auto h = std::make_unique<vm_scenario>();
        h->sc = voltmesh::generate_synthetic(s);
        *out = h.release();
    });
}

vm_status vm_scenario_save(const vm_scenario* sc, const char* dir) {
    if (!sc || !dir) return fail(VM_ERR_INVALID_ARGUMENT, "scenario and dir must be non-NULL");
    return guarded([&] { voltmesh::save_scenario(sc->sc, dir); });
}

vm_status vm_scenario_info(const vm_scenario* sc, int* n_chargers, int* horizon,
                           double* delta_t) {
    if (!sc) return fail(VM_ERR_INVALID_ARGUMENT, "scenario must be non-NULL");
    if (n_chargers) *n_chargers = sc->sc.cfg.n_chargers;
    if (horizon) *horizon = sc->sc.horizon;
    if (delta_t) *delta_t = sc->sc.cfg.delta_t;
    return VM_OK;
}

void vm_scenario_free(vm_scenario* sc) { delete sc; }

vm_status vm_train(const vm_scenario* const* scenarios, size_t n_scenarios,
                   const vm_train_options* opt, const char* curve_csv_path,
                   vm_policy** out_policy, vm_train_summary* out_summary) {
    if (!scenarios || n_scenarios == 0 || !opt || !out_policy)
        return fail(VM_ERR_INVALID_ARGUMENT, "scenarios, options and out_policy are required");
    if (!opt->algo) return fail(VM_ERR_INVALID_ARGUMENT, "algo must be set");
    return guarded([&] {
        using namespace voltmesh;
        std::vector<Scenario> scs;
        scs.reserve(n_scenarios);
        for (size_t i = 0; i < n_scenarios; ++i) {
            if (!scenarios[i]) throw Error(ErrorCode::InvalidArgument, "NULL scenario handle");
            scs.push_back(scenarios[i]->sc);
        }
        if (!(opt->xi >= 0.0 && opt->xi <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "xi must lie in [0,1]");
        if (opt->episodes <= 0)
            throw Error(ErrorCode::InvalidArgument, "episodes must be positive");

        RewardConfig reward;
        reward.xi = opt->xi;
        if (opt->grid_penalty >= 0.0) reward.grid_penalty_coeff = opt->grid_penalty;
        std::string fairness = opt->fairness ? opt->fairness : "";
        if (fairness.empty() || fairness == "u-minus-psi")
            reward.fairness_sign = FairnessSign::minus_psi;
        else if (fairness == "u-plus-psi")
            reward.fairness_sign = FairnessSign::paper_plus;
        else if (fairness == "off")
            reward.fairness_sign = FairnessSign::off;
        else
            throw Error(ErrorCode::InvalidArgument, "unknown fairness mode: " + fairness);

        std::string algo = opt->algo;
        std::vector<EpisodePoint> curve;
        std::unique_ptr<Policy> policy;
        std::string name;
        if (algo == "maddpg") {
            TrainConfig cfg;
            cfg.episodes = opt->episodes;
            cfg.reward = reward;
            std::string expl = opt->exploration ? opt->exploration : "noisy";
            if (expl == "noisy")
                cfg.exploration = ExplorationMode::noisy;
            else if (expl == "action-noise")
                cfg.exploration = ExplorationMode::action_noise;
            else
                throw Error(ErrorCode::InvalidArgument, "unknown exploration mode: " + expl);
            if (opt->batch_size > 0) cfg.batch_size = opt->batch_size;
            if (opt->update_every > 0) cfg.update_every = opt->update_every;
            if (opt->warmup_transitions > 0) cfg.warmup_transitions = opt->warmup_transitions;
            if (opt->hidden_width > 0) {
                cfg.actor_hidden = {opt->hidden_width, opt->hidden_width};
                cfg.critic_hidden = {2 * opt->hidden_width, 2 * opt->hidden_width};
            }
            TrainResult res = maddpg_train(scs, cfg, opt->seed);
            curve = std::move(res.curve);
            policy = std::make_unique<MaddpgPolicy>(std::move(res.policy));
            name = "maddpg";
        } else if (algo == "madqn") {
            MadqnConfig cfg;
            cfg.episodes = opt->episodes;
            cfg.reward = reward;
            if (opt->batch_size > 0) cfg.batch_size = opt->batch_size;
            if (opt->update_every > 0) cfg.update_every = opt->update_every;
            if (opt->warmup_transitions > 0) cfg.warmup_transitions = opt->warmup_transitions;
            if (opt->hidden_width > 0) cfg.hidden = {opt->hidden_width, opt->hidden_width};
            MadqnTrainResult res = madqn_train(scs, cfg, opt->seed);
            curve = std::move(res.curve);
            policy = std::make_unique<MadqnPolicy>(std::move(res.policy));
            name = "madqn";
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown algo: " + algo);
        }

        if (curve_csv_path) save_learning_curve(curve, curve_csv_path);
        if (out_summary) {
            out_summary->episodes = static_cast<int>(curve.size());
            std::size_t tail = std::min<std::size_t>(50, curve.size());
            double acc = 0.0;
            for (std::size_t i = curve.size() - tail; i < curve.size(); ++i)
                acc += curve[i].mean_reward;
            out_summary->final_mean_reward = tail ? acc / tail : 0.0;
            out_summary->final_completion = curve.empty() ? 0.0 : curve.back().completion;
            out_summary->final_cost = curve.empty() ? 0.0 : curve.back().cost;
        }
        auto h = std::make_unique<vm_policy>();
        h->p = std::move(policy);
        h->name = name;
        *out_policy = h.release();
    });
}

vm_status vm_policy_load(const char* path, vm_policy** out) {
    if (!path || !out) return fail(VM_ERR_INVALID_ARGUMENT, "path and out must be non-NULL");
    return guarded([&] {
        auto h = std::make_unique<vm_policy>();
        h->p = voltmesh::load_policy_checkpoint(path);
        h->name = h->p->name();
        *out = h.release();
    });
}

vm_status vm_policy_save(const vm_policy* policy, const char* path) {
    if (!policy || !path)
        return fail(VM_ERR_INVALID_ARGUMENT, "policy and path must be non-NULL");
    return guarded([&] {
        using namespace voltmesh;
        if (auto* m = dynamic_cast<const MaddpgPolicy*>(policy->p.get()))
            m->save(path);
        else if (auto* q = dynamic_cast<const MadqnPolicy*>(policy->p.get()))
            q->save(path);
        else
            throw Error(ErrorCode::InvalidArgument,
                        "policy \"" + policy->name + "\" has no checkpoint form");
    });
}

vm_status vm_policy_builtin(const char* name, vm_policy** out) {
    if (!name || !out) return fail(VM_ERR_INVALID_ARGUMENT, "name and out must be non-NULL");
    return guarded([&] {
        using namespace voltmesh;
        auto h = std::make_unique<vm_policy>();
        std::string n = name;
        if (n == "uncontrolled") {
            h->p = std::make_unique<UncontrolledPolicy>();
        } else if (n == "rho") {
            h->p = std::make_unique<RhoPolicy>();
        } else if (n == "rho-persistence") {
            RhoConfig cfg;
            cfg.forecast = ForecastMode::persistence;
            h->p = std::make_unique<RhoPolicy>(cfg);
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown builtin policy: " + n);
        }
        h->name = n;
        *out = h.release();
    });
}

const char* vm_policy_name(const vm_policy* policy) {
    return policy ? policy->name.c_str() : "";
}

vm_status vm_policy_decentralized(const vm_policy* policy, int* out) {
    if (!policy || !out)
        return fail(VM_ERR_INVALID_ARGUMENT, "policy and out must be non-NULL");
    *out = policy->p->decentralized() ? 1 : 0;
    return VM_OK;
}

void vm_policy_free(vm_policy* policy) { delete policy; }

vm_status vm_evaluate(const vm_scenario* sc, vm_policy* policy, uint64_t seed,
                      const vm_fault_options* fault, const char* trace_jsonl_path,
                      const char* metrics_csv_path, vm_eval_summary* out) {
    if (!sc || !policy)
        return fail(VM_ERR_INVALID_ARGUMENT, "scenario and policy must be non-NULL");
    return guarded([&] {
        using namespace voltmesh;
        RolloutOptions opts;
        opts.seed = seed;
        EpisodeTrace healthy;
        bool have_healthy = false;
        if (fault) {
            if (fault->fault_step < 0 || fault->fault_step >= sc->sc.horizon)
                throw Error(ErrorCode::InvalidArgument, "fault step outside the horizon");
            FaultSpec fs;
            fs.fault_step = fault->fault_step;
            for (size_t i = 0; i < fault->n_faulty; ++i) {
                int c = fault->faulty_chargers ? fault->faulty_chargers[i] : -1;
                if (c < 0 || c >= sc->sc.cfg.n_chargers)
                    throw Error(ErrorCode::InvalidArgument, "faulty charger index out of range");
                fs.faulty_chargers.push_back(c);
            }
            healthy = rollout(sc->sc, *policy->p, opts);
            have_healthy = true;
            opts.fault = fs;
        }
        EpisodeTrace tr = rollout(sc->sc, *policy->p, opts);
        if (trace_jsonl_path) save_trace_jsonl(tr, trace_jsonl_path);
        if (metrics_csv_path)
            write_metrics_csv(metrics_csv_path, policy->name, sc->sc, seed, tr);
        if (out) {
            out->total_cost = tr.total_cost;
            out->total_reward = tr.total_reward;
            out->mean_reward = tr.mean_reward;
            out->completion = tr.completion;
            out->completion_std = tr.completion_dispersion;
            out->grid_violation = tr.grid_violation;
            out->healthy_actions_changed = -1;
            out->healthy_actions_total = -1;
            if (have_healthy) {
                int changed = 0, total = 0;
                const auto& faulty = opts.fault->faulty_chargers;
                for (int t = opts.fault->fault_step; t < sc->sc.horizon; ++t) {
                    const auto& a = healthy.steps[t].actions;
                    const auto& b = tr.steps[t].actions;
                    for (int j = 0; j < sc->sc.cfg.n_chargers; ++j) {
                        if (std::find(faulty.begin(), faulty.end(), j) != faulty.end()) continue;
                        ++total;
                        if (!same_action(a[j], b[j])) ++changed;
                    }
                }
                out->healthy_actions_changed = changed;
                out->healthy_actions_total = total;
            }
        }
    });
}

}  // extern "C"
