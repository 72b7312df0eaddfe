// Experiment runner for the voltmesh library. Talks to the core through the
// C interface only. Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voltmesh.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int runtime_fail(const std::string& what) {
    std::fprintf(stderr, "error: %s: %s\n", what.c_str(), vm_last_error());
    return 1;
}

int usage_fail(const std::string& msg) {
    std::fprintf(stderr, "usage error: %s\n", msg.c_str());
    return 2;
}

// --scenario is either a directory or "synthetic:<spec>".
vm_status make_scenario(const std::string& arg, uint64_t seed, vm_scenario** out) {
    const std::string prefix = "synthetic:";
    if (arg.rfind(prefix, 0) == 0)
        return vm_scenario_synthetic(arg.substr(prefix.size()).c_str(), seed, out);
    return vm_scenario_load(arg.c_str(), out);
}

struct FaultArg {
    int step = -1;
    std::vector<int> chargers;
};

// "step=S,chargers=c0,c1,..."
bool parse_fault(const std::string& text, FaultArg& out) {
    const std::string skey = "step=", ckey = "chargers=";
    if (text.rfind(skey, 0) != 0) return false;
    std::size_t comma = text.find(',');
    if (comma == std::string::npos) return false;
    try {
        std::size_t used = 0;
        out.step = std::stoi(text.substr(skey.size(), comma - skey.size()), &used);
        if (used != comma - skey.size()) return false;
        std::string rest = text.substr(comma + 1);
        if (rest.rfind(ckey, 0) != 0) return false;
        rest = rest.substr(ckey.size());
        if (rest.empty()) return false;
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            std::size_t next = rest.find(',', pos);
            std::string tok = rest.substr(pos, next == std::string::npos ? next : next - pos);
            if (tok.empty()) return false;
            out.chargers.push_back(std::stoi(tok, &used));
            if (used != tok.size()) return false;
            if (next == std::string::npos) break;
            pos = next + 1;
        }
    } catch (const std::exception&) {
        return false;
    }
    return out.step >= 0 && !out.chargers.empty();
}

struct SweepParam {
    std::string name;            // "xi" or "size"
    std::vector<double> values;  // sizes stored as whole numbers
};

// "xi=a:b:k" (inclusive linear grid) or "xi=v1,v2,..." or "size=4,8".
bool parse_sweep_param(const std::string& text, SweepParam& out) {
    std::size_t eq = text.find('=');
    if (eq == std::string::npos) return false;
    out.name = text.substr(0, eq);
    if (out.name != "xi" && out.name != "size") return false;
    std::string spec = text.substr(eq + 1);
    if (spec.empty()) return false;
    try {
        if (spec.find(':') != std::string::npos) {
            std::size_t c1 = spec.find(':');
            std::size_t c2 = spec.find(':', c1 + 1);
            if (c2 == std::string::npos) return false;
            double lo = std::stod(spec.substr(0, c1));
            double hi = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
            int k = std::stoi(spec.substr(c2 + 1));
            if (k < 1) return false;
            for (int i = 0; i < k; ++i)
                out.values.push_back(k == 1 ? lo : lo + (hi - lo) * i / (k - 1));
        } else {
            std::size_t pos = 0;
            while (pos <= spec.size()) {
                std::size_t next = spec.find(',', pos);
                std::string tok =
                    spec.substr(pos, next == std::string::npos ? next : next - pos);
                if (tok.empty()) return false;
                out.values.push_back(std::stod(tok));
                if (next == std::string::npos) break;
                pos = next + 1;
            }
        }
    } catch (const std::exception&) {
        return false;
    }
    if (out.values.empty()) return false;
    if (out.name == "size")
        for (double v : out.values)
            if (v < 1 || v != std::floor(v)) return false;
    return true;
}

int thread_budget(std::size_t n_jobs) {
    unsigned hw = std::thread::hardware_concurrency();
    long want = hw ? hw : 1;
    if (const char* env = std::getenv("VOLTMESH_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) want = v;
    }
    if (want > static_cast<long>(n_jobs)) want = static_cast<long>(n_jobs);
    return static_cast<int>(want < 1 ? 1 : want);
}

struct CommonArgs {
    std::string scenario;
    std::string algo = "maddpg";
    std::string exploration = "noisy";
    int episodes = 500;
    double xi = 0.5;
    uint64_t seed = 0;
    std::string out_dir = "out";
    int batch_size = 0;
    int update_every = 0;
    int warmup = 0;
    int hidden = 0;
};

vm_train_options train_options(const CommonArgs& a, double xi, uint64_t seed) {
    vm_train_options o{};
    o.algo = a.algo.c_str();
    o.exploration = a.exploration.c_str();
    o.episodes = a.episodes;
    o.xi = xi;
    o.seed = seed;
    o.batch_size = a.batch_size;
    o.update_every = a.update_every;
    o.warmup_transitions = a.warmup;
    o.hidden_width = a.hidden;
    o.fairness = nullptr;
    o.grid_penalty = -1.0;
    return o;
}

int run_train(const CommonArgs& a) {
    fs::create_directories(a.out_dir);
    vm_scenario* sc = nullptr;
    if (make_scenario(a.scenario, a.seed, &sc) != VM_OK)
        return runtime_fail("loading scenario");
    std::string curve_path = (fs::path(a.out_dir) / "learning_curve.csv").string();
    std::string ckpt_path = (fs::path(a.out_dir) / "policy.ckpt").string();

    vm_train_options opt = train_options(a, a.xi, a.seed);
    const vm_scenario* scs[1] = {sc};
    vm_policy* pol = nullptr;
    vm_train_summary ts{};
    if (vm_train(scs, 1, &opt, curve_path.c_str(), &pol, &ts) != VM_OK) {
        vm_scenario_free(sc);
        return runtime_fail("training");
    }
    if (vm_policy_save(pol, ckpt_path.c_str()) != VM_OK) {
        vm_policy_free(pol);
        vm_scenario_free(sc);
        return runtime_fail("saving checkpoint");
    }
    vm_eval_summary es{};
    if (vm_evaluate(sc, pol, a.seed, nullptr, nullptr, nullptr, &es) != VM_OK) {
        vm_policy_free(pol);
        vm_scenario_free(sc);
        return runtime_fail("evaluating trained policy");
    }

    json summary;
    summary["algo"] = a.algo;
    summary["exploration"] = a.algo == "maddpg" ? a.exploration : "epsilon-greedy";
    summary["episodes"] = ts.episodes;
    summary["xi"] = a.xi;
    summary["seed"] = a.seed;
    summary["scenario"] = a.scenario;
    summary["train"] = {{"final_mean_reward", ts.final_mean_reward},
                        {"final_completion", ts.final_completion},
                        {"final_cost", ts.final_cost}};
    summary["eval"] = {{"total_cost", es.total_cost},
                       {"total_reward", es.total_reward},
                       {"mean_reward", es.mean_reward},
                       {"completion", es.completion},
                       {"completion_std", es.completion_std},
                       {"grid_violation", es.grid_violation}};
    summary["artifacts"] = {{"policy", "policy.ckpt"},
                            {"learning_curve", "learning_curve.csv"}};
    std::ofstream out(fs::path(a.out_dir) / "summary.json");
    if (!out) {
        vm_policy_free(pol);
        vm_scenario_free(sc);
        std::fprintf(stderr, "error: cannot write summary.json\n");
        return 1;
    }
    out << summary.dump(2) << "\n";
    vm_policy_free(pol);
    vm_scenario_free(sc);
    return 0;
}

int run_evaluate(const CommonArgs& a, const std::string& policy_arg,
                 const std::string& fault_arg) {
    FaultArg fault;
    if (!fault_arg.empty() && !parse_fault(fault_arg, fault))
        return usage_fail("--fault must look like step=S,chargers=c0,c1,...");

    fs::create_directories(a.out_dir);
    vm_scenario* sc = nullptr;
    if (make_scenario(a.scenario, a.seed, &sc) != VM_OK)
        return runtime_fail("loading scenario");

    vm_policy* pol = nullptr;
    vm_status st;
    if (policy_arg == "uncontrolled" || policy_arg == "rho" || policy_arg == "rho-persistence")
        st = vm_policy_builtin(policy_arg.c_str(), &pol);
    else
        st = vm_policy_load(policy_arg.c_str(), &pol);
    if (st != VM_OK) {
        vm_scenario_free(sc);
        return runtime_fail("loading policy");
    }

    vm_fault_options fopt{};
    vm_fault_options* fopt_ptr = nullptr;
    if (fault.step >= 0) {
        fopt.fault_step = fault.step;
        fopt.faulty_chargers = fault.chargers.data();
        fopt.n_faulty = fault.chargers.size();
        fopt_ptr = &fopt;
    }
    std::string trace_path = (fs::path(a.out_dir) / "trace.jsonl").string();
    std::string metrics_path = (fs::path(a.out_dir) / "metrics.csv").string();
    vm_eval_summary es{};
    if (vm_evaluate(sc, pol, a.seed, fopt_ptr, trace_path.c_str(), metrics_path.c_str(),
                    &es) != VM_OK) {
        vm_policy_free(pol);
        vm_scenario_free(sc);
        return runtime_fail("evaluating");
    }
    if (fopt_ptr) {
        int decentralized = 0;
        vm_policy_decentralized(pol, &decentralized);
        json report;
        report["policy"] = vm_policy_name(pol);
        report["decentralized"] = decentralized == 1;
        report["fault_step"] = fault.step;
        report["faulty_chargers"] = fault.chargers;
        report["healthy_actions_total"] = es.healthy_actions_total;
        report["healthy_actions_changed"] = es.healthy_actions_changed;
        report["healthy_actions_equal"] = es.healthy_actions_changed == 0;
        std::ofstream out(fs::path(a.out_dir) / "fault_report.json");
        if (!out) {
            vm_policy_free(pol);
            vm_scenario_free(sc);
            std::fprintf(stderr, "error: cannot write fault_report.json\n");
            return 1;
        }
        out << report.dump(2) << "\n";
    }
    std::printf("policy=%s cost=%s completion=%s grid_violation=%s\n", vm_policy_name(pol),
                fmt(es.total_cost).c_str(), fmt(es.completion).c_str(),
                fmt(es.grid_violation).c_str());
    vm_policy_free(pol);
    vm_scenario_free(sc);
    return 0;
}

struct SweepJob {
    double value = 0.0;
    int rep = 0;
    uint64_t seed = 0;
};

struct SweepResult {
    bool ok = false;
    std::string err;
    double cost = 0.0;
    double completion = 0.0;
    double per_charger_cost = 0.0;
};

void run_sweep_job(const CommonArgs& a, const SweepParam& param, const SweepJob& job,
                   SweepResult& res) {
    std::string scenario_arg = a.scenario;
    double xi = a.xi;
    if (param.name == "size") {
        const std::string prefix = "synthetic:";
        std::string spec = scenario_arg.substr(prefix.size());
        if (!spec.empty()) spec += ",";
        spec += "n=" + std::to_string(static_cast<int>(job.value));
        scenario_arg = prefix + spec;
    } else {
        xi = job.value;
    }
    vm_scenario* sc = nullptr;
    if (make_scenario(scenario_arg, job.seed, &sc) != VM_OK) {
        res.err = std::string("scenario: ") + vm_last_error();
        return;
    }
    int n_chargers = 0;
    vm_scenario_info(sc, &n_chargers, nullptr, nullptr);
    vm_train_options opt = train_options(a, xi, job.seed);
    const vm_scenario* scs[1] = {sc};
    vm_policy* pol = nullptr;
    if (vm_train(scs, 1, &opt, nullptr, &pol, nullptr) != VM_OK) {
        res.err = std::string("train: ") + vm_last_error();
        vm_scenario_free(sc);
        return;
    }
    vm_eval_summary es{};
    if (vm_evaluate(sc, pol, job.seed, nullptr, nullptr, nullptr, &es) != VM_OK) {
        res.err = std::string("evaluate: ") + vm_last_error();
        vm_policy_free(pol);
        vm_scenario_free(sc);
        return;
    }
    res.cost = es.total_cost;
    res.completion = es.completion;
    res.per_charger_cost = n_chargers > 0 ? es.total_cost / n_chargers : 0.0;
    res.ok = true;
    vm_policy_free(pol);
    vm_scenario_free(sc);
}

int run_sweep(const CommonArgs& a, const std::string& param_arg, int repeat) {
    SweepParam param;
    if (!parse_sweep_param(param_arg, param))
        return usage_fail("--param must be xi=a:b:k, xi=v1,v2,... or size=n1,n2,...");
    if (repeat < 1) return usage_fail("--repeat must be >= 1");
    if (param.name == "size" && a.scenario.rfind("synthetic:", 0) != 0)
        return usage_fail("size sweeps need a synthetic:<spec> scenario");

    std::vector<SweepJob> jobs;
    for (double v : param.values)
        for (int r = 0; r < repeat; ++r) jobs.push_back({v, r, a.seed + static_cast<uint64_t>(r)});
    std::vector<SweepResult> results(jobs.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) break;
            run_sweep_job(a, param, jobs[i], results[i]);
        }
    };
    int n_threads = thread_budget(jobs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (!results[i].ok) {
            std::fprintf(stderr, "error: sweep job %zu failed: %s\n", i,
                         results[i].err.c_str());
            return 1;
        }

    fs::create_directories(a.out_dir);
    std::ofstream out(fs::path(a.out_dir) / "sweep.csv");
    if (!out) {
        std::fprintf(stderr, "error: cannot write sweep.csv\n");
        return 1;
    }
    out << "param,value,runs,mean_cost,std_cost,mean_completion,std_completion,"
           "mean_per_charger_cost\n";
    for (std::size_t vi = 0; vi < param.values.size(); ++vi) {
        double mc = 0, mcomp = 0, mper = 0;
        for (int r = 0; r < repeat; ++r) {
            const SweepResult& res = results[vi * repeat + r];
            mc += res.cost;
            mcomp += res.completion;
            mper += res.per_charger_cost;
        }
        mc /= repeat;
        mcomp /= repeat;
        mper /= repeat;
        double vc = 0, vcomp = 0;
        for (int r = 0; r < repeat; ++r) {
            const SweepResult& res = results[vi * repeat + r];
            vc += (res.cost - mc) * (res.cost - mc);
            vcomp += (res.completion - mcomp) * (res.completion - mcomp);
        }
        out << param.name << ',' << fmt(param.values[vi]) << ',' << repeat << ',' << fmt(mc)
            << ',' << fmt(std::sqrt(vc / repeat)) << ',' << fmt(mcomp) << ','
            << fmt(std::sqrt(vcomp / repeat)) << ',' << fmt(mper) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voltmesh: EV charging-station simulation, training and baselines"};
    app.require_subcommand(1);

    CommonArgs targ, earg, sarg;
    std::string policy_arg, fault_arg, param_arg;
    int repeat = 1;

    CLI::App* train = app.add_subcommand("train", "train a policy and save artifacts");
    train->add_option("--algo", targ.algo)->check(CLI::IsMember({"maddpg", "madqn"}));
    train->add_option("--exploration", targ.exploration)
        ->check(CLI::IsMember({"noisy", "action-noise"}));
    train->add_option("--scenario", targ.scenario, "directory or synthetic:<spec>")
        ->required();
    train->add_option("--seed", targ.seed);
    train->add_option("--episodes", targ.episodes)->check(CLI::PositiveNumber);
    train->add_option("--xi", targ.xi)->check(CLI::Range(0.0, 1.0));
    train->add_option("--out", targ.out_dir);
    train->add_option("--batch-size", targ.batch_size);
    train->add_option("--update-every", targ.update_every);
    train->add_option("--warmup", targ.warmup);
    train->add_option("--hidden", targ.hidden);

    CLI::App* evaluate = app.add_subcommand("evaluate", "roll a policy over a scenario");
    evaluate->add_option("--policy", policy_arg, "checkpoint path, uncontrolled, rho, rho-persistence")
        ->required();
    evaluate->add_option("--scenario", earg.scenario, "directory or synthetic:<spec>")
        ->required();
    evaluate->add_option("--fault", fault_arg, "step=S,chargers=c0,c1,...");
    evaluate->add_option("--seed", earg.seed);
    evaluate->add_option("--out", earg.out_dir);

    CLI::App* sweep = app.add_subcommand("sweep", "grid of train+evaluate runs");
    sweep->add_option("--param", param_arg, "xi=a:b:k or size=n1,n2,...")->required();
    sweep->add_option("--repeat", repeat);
    sweep->add_option("--algo", sarg.algo)->check(CLI::IsMember({"maddpg", "madqn"}));
    sweep->add_option("--exploration", sarg.exploration)
        ->check(CLI::IsMember({"noisy", "action-noise"}));
    sweep->add_option("--scenario", sarg.scenario);
    sweep->add_option("--seed", sarg.seed);
    sweep->add_option("--episodes", sarg.episodes)->check(CLI::PositiveNumber);
    sweep->add_option("--xi", sarg.xi)->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--out", sarg.out_dir);
    sweep->add_option("--batch-size", sarg.batch_size);
    sweep->add_option("--update-every", sarg.update_every);
    sweep->add_option("--warmup", sarg.warmup);
    sweep->add_option("--hidden", sarg.hidden);
    sarg.scenario = "synthetic:4x96";

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (train->parsed()) return run_train(targ);
    if (evaluate->parsed()) return run_evaluate(earg, policy_arg, fault_arg);
    if (sweep->parsed()) return run_sweep(sarg, param_arg, repeat);
    return 2;
}
