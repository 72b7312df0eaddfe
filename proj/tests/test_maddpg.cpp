#include "voltmesh/maddpg.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "test_util.hpp"

using namespace voltmesh;

namespace {

Scenario one_ev_scenario() {
    Scenario sc;
    sc.cfg.n_chargers = 1;
    sc.horizon = 8;
    sc.exog.assign(8, {0.2, 0.1, 0.15, 2.0});
    ChargerSession s;
    s.charger_id = 0;
    s.arrival_step = 0;
    s.departure_step = 8;
    s.e_demand = 20.0;
    s.e_init = 10.0;
    sc.sessions = {s};
    validate(sc);
    return sc;
}

void test_td_targets() {
    CHECK_NEAR(td_target(1.0, 0.95, 2.0, false), 2.9, 1e-15);
    CHECK_NEAR(td_target(1.0, 0.95, 2.0, true), 1.0, 0.0);
    CHECK_NEAR(td_target(-0.5, 0.9, -1.0, false), -1.4, 1e-15);

    Eigen::VectorXd r(3), q(3), term(3);
    r << 1.0, 1.0, -0.5;
    q << 2.0, 2.0, -1.0;
    term << 0.0, 1.0, 0.0;
    Eigen::VectorXd y = td_targets(r, 0.95, q, term);
    CHECK_NEAR(y[0], 2.9, 1e-15);
    CHECK_NEAR(y[1], 1.0, 0.0);
    CHECK_NEAR(y[2], -1.45, 1e-15);

    Eigen::VectorXd short_term(2);
    short_term << 0.0, 0.0;
    CHECK_THROWS(td_targets(r, 0.95, q, short_term), ErrorCode::ArityMismatch);
}

void test_action_mapping() {
    StationConfig cfg;
    cfg.p_ch_max = 16.0;
    cfg.p_disch_max = 8.0;

    AgentAction a = action_from_unit({0.5, 0.0, 1.0}, cfg);
    CHECK_NEAR(a.p_signed, 8.0, 1e-15);
    CHECK_NEAR(a.v2v_request, 0.5, 1e-15);
    CHECK_NEAR(a.pv_request, 1.0, 0.0);

    AgentAction b = action_from_unit({-0.5, -1.0, -1.0}, cfg);
    CHECK_NEAR(b.p_signed, -4.0, 1e-15);
    CHECK_NEAR(b.v2v_request, 0.0, 0.0);
    CHECK_NEAR(b.pv_request, 0.0, 0.0);

    // Values beyond [-1,1] clamp instead of extrapolating.
    AgentAction c = action_from_unit({2.0, 3.0, -4.0}, cfg);
    CHECK_NEAR(c.p_signed, 16.0, 0.0);
    CHECK_NEAR(c.v2v_request, 1.0, 0.0);
    CHECK_NEAR(c.pv_request, 0.0, 0.0);

    AgentAction z = action_from_unit({0.0, 0.0, 0.0}, cfg);
    CHECK_NEAR(z.p_signed, 0.0, 0.0);
    CHECK_NEAR(z.v2v_request, 0.5, 1e-15);
}

void test_obs_features() {
    AgentObservation o;
    o.e = 20.0;
    o.t_rem = 5.0;
    o.e_dem = 30.0;
    o.k_buy = 0.2;
    o.k_sell = 0.1;
    o.pv_gen = 25.0;
    std::array<double, kObsDim> scale{40.0, 10.0, 40.0, 1.0, 1.0, 50.0};
    Eigen::VectorXd f = obs_features(o, scale);
    CHECK_NEAR(f[0], 0.5, 1e-15);
    CHECK_NEAR(f[1], 0.5, 1e-15);
    CHECK_NEAR(f[2], 0.75, 1e-15);
    CHECK_NEAR(f[3], 0.2, 1e-15);
    CHECK_NEAR(f[4], 0.1, 1e-15);
    CHECK_NEAR(f[5], 0.5, 1e-15);

    // Non-positive scales fall back to unscaled rather than dividing by zero.
    std::array<double, kObsDim> degenerate{0.0, -1.0, 1.0, 1.0, 1.0, 1.0};
    Eigen::VectorXd g = obs_features(o, degenerate);
    CHECK_NEAR(g[0], 20.0, 0.0);
    CHECK_NEAR(g[1], 5.0, 0.0);
}

TransitionRecord tagged_record(double tag) {
    TransitionRecord t;
    t.obs = Eigen::VectorXd::Constant(6, tag);
    t.act = Eigen::VectorXd::Constant(3, tag);
    t.rew = Eigen::VectorXd::Constant(1, tag);
    t.next_obs = Eigen::VectorXd::Constant(6, tag);
    return t;
}

void test_replay_buffer() {
    CHECK_THROWS(ReplayBuffer(0), ErrorCode::InvalidArgument);

    ReplayBuffer buf(4);
    for (int i = 0; i < 6; ++i) buf.push(tagged_record(i));
    CHECK(buf.size() == 4);
    // Slots fill 0..3 with tags 0..3, then 4 and 5 overwrite the oldest two.
    CHECK(buf[0].rew[0] == 4.0);
    CHECK(buf[1].rew[0] == 5.0);
    CHECK(buf[2].rew[0] == 2.0);
    CHECK(buf[3].rew[0] == 3.0);

    Rng rng(1);
    ReplayBuffer big(100);
    for (int i = 0; i < 10; ++i) big.push(tagged_record(i));
    std::set<int> seen;
    for (int trial = 0; trial < 200; ++trial) {
        auto idx = big.sample_indices(4, rng);
        CHECK(idx.size() == 4);
        std::set<int> uniq(idx.begin(), idx.end());
        CHECK(uniq.size() == 4);  // distinct within one draw
        for (int i : idx) {
            CHECK(i >= 0 && i < 10);
            seen.insert(i);
        }
    }
    CHECK(seen.size() == 10);  // every index eventually sampled

    // Asking for more than the buffer holds returns everything once.
    auto all = big.sample_indices(50, rng);
    CHECK(all.size() == 10);

    ReplayBuffer empty(4);
    CHECK_THROWS(empty.sample_indices(1, rng), ErrorCode::Runtime);
}

void test_critic_gradient_fd() {
    Rng rng(17);
    const int O = 4, A = 2, B = 5;
    DenseNet critic({O + A, 8, 1}, {Activation::relu, Activation::identity}, false, rng);
    Mat obs(B, O), act(B, A);
    Eigen::VectorXd target(B);
    for (int i = 0; i < obs.size(); ++i) obs.data()[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < act.size(); ++i) act.data()[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < B; ++i) target[i] = rng.uniform(-1.0, 1.0);

    critic.zero_grad();
    double loss = critic_loss_and_grad(critic, obs, act, target);
    CHECK(std::isfinite(loss) && loss >= 0.0);
    std::vector<Mat> analytic;
    for (auto& p : critic.params()) analytic.push_back(*p.grad);

    auto loss_only = [&]() {
        Mat in(B, O + A);
        in << obs, act;
        Mat q = critic.forward(in);
        return (q.col(0) - target).squaredNorm() / B;
    };
    const double h = 1e-6;
    auto refs = critic.params();
    for (std::size_t pi = 0; pi < refs.size(); ++pi) {
        Mat& theta = *refs[pi].value;
        for (int i = 0; i < theta.rows(); ++i)
            for (int j = 0; j < theta.cols(); ++j) {
                double keep = theta(i, j);
                theta(i, j) = keep + h;
                double lp = loss_only();
                theta(i, j) = keep - h;
                double lm = loss_only();
                theta(i, j) = keep;
                double fd = (lp - lm) / (2.0 * h);
                double an = analytic[pi](i, j);
                double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
                CHECK(std::abs(fd - an) / scale <= 1e-4);
            }
    }

    Eigen::VectorXd bad_target(B + 1);
    bad_target.setZero();
    CHECK_THROWS(critic_loss_and_grad(critic, obs, act, bad_target), ErrorCode::ArityMismatch);
}

void test_actor_gradient_fd() {
    Rng rng(23);
    const int local = 4, n_agents = 2, B = 6;
    const int JO = n_agents * local, JA = n_agents * kActionDim;
    // Noisy actor: the objective gradient must flow into sigma as well.
    DenseNet actor({local, 6, kActionDim}, {Activation::tanh, Activation::tanh}, true, rng,
                   0.05);
    actor.sample_noise(rng);
    DenseNet critic({JO + JA, 10, 1}, {Activation::tanh, Activation::identity}, false, rng);

    Mat joint_obs(B, JO), joint_act(B, JA), local_obs(B, local);
    for (int i = 0; i < joint_obs.size(); ++i) joint_obs.data()[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < joint_act.size(); ++i) joint_act.data()[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < local_obs.size(); ++i) local_obs.data()[i] = rng.uniform(-1.0, 1.0);
    const int offset = kActionDim;  // second agent's block

    actor.zero_grad();
    double j0 = actor_objective_and_grad(actor, critic, joint_obs, joint_act, local_obs, offset);
    CHECK(std::isfinite(j0));
    std::vector<Mat> analytic;
    for (auto& p : actor.params()) analytic.push_back(*p.grad);

    // The critic is scratch space here: params untouched, grads left clear.
    for (auto& p : critic.params()) CHECK(p.grad->cwiseAbs().maxCoeff() == 0.0);

    auto objective_only = [&]() {
        Mat y = actor.forward(local_obs);
        Mat act = joint_act;
        act.middleCols(offset, kActionDim) = y;
        Mat in(B, JO + JA);
        in << joint_obs, act;
        return critic.forward(in).col(0).mean();
    };
    CHECK_NEAR(objective_only(), j0, 1e-12);

    const double h = 1e-6;
    auto refs = actor.params();
    for (std::size_t pi = 0; pi < refs.size(); ++pi) {
        Mat& theta = *refs[pi].value;
        for (int i = 0; i < theta.rows(); ++i)
            for (int j = 0; j < theta.cols(); ++j) {
                double keep = theta(i, j);
                theta(i, j) = keep + h;
                double jp = objective_only();
                theta(i, j) = keep - h;
                double jm = objective_only();
                theta(i, j) = keep;
                // Accumulated gradient is d(-J)/dtheta.
                double fd = -(jp - jm) / (2.0 * h);
                double an = analytic[pi](i, j);
                double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
                CHECK(std::abs(fd - an) / scale <= 1e-4);
            }
    }

    CHECK_THROWS(
        actor_objective_and_grad(actor, critic, joint_obs, joint_act, local_obs, JA - 1),
        ErrorCode::InvalidArgument);
    Mat short_obs(B - 1, JO);
    short_obs.setZero();
    CHECK_THROWS(actor_objective_and_grad(actor, critic, short_obs, joint_act, local_obs, 0),
                 ErrorCode::ArityMismatch);
}

void test_policy_roundtrip() {
    Rng rng(31);
    std::vector<DenseNet> actors;
    for (int j = 0; j < 2; ++j)
        actors.emplace_back(std::vector<int>{kObsDim, 8, kActionDim},
                            std::vector<Activation>{Activation::relu, Activation::tanh}, false,
                            rng);
    std::array<double, kObsDim> scale{40, 24, 40, 1, 1, 30};
    MaddpgPolicy pol(actors, scale, 16.0, 8.0);
    CHECK(pol.n_agents() == 2);
    CHECK(pol.decentralized());
    CHECK(pol.name() == "maddpg");

    AgentObservation o;
    o.e = 12.0;
    o.t_rem = 3.0;
    o.e_dem = 25.0;
    o.k_buy = 0.18;
    o.k_sell = 0.07;
    o.pv_gen = 4.0;

    // act_single agrees with running the actor by hand.
    Eigen::VectorXd f = obs_features(o, scale);
    Mat y = actors[0].forward(f.transpose());
    StationConfig cfg;
    cfg.p_ch_max = 16.0;
    cfg.p_disch_max = 8.0;
    AgentAction want = action_from_unit({y(0, 0), y(0, 1), y(0, 2)}, cfg);
    AgentAction got = pol.act_single(o, 0);
    CHECK(got.p_signed == want.p_signed);
    CHECK(got.v2v_request == want.v2v_request);
    CHECK(got.pv_request == want.pv_request);
    CHECK_THROWS(pol.act_single(o, 2), ErrorCode::InvalidArgument);

    const std::string path = "/tmp/voltmesh_test_policy.ckpt";
    pol.save(path);
    MaddpgPolicy back = MaddpgPolicy::load(path);
    CHECK(back.n_agents() == 2);
    for (int j = 0; j < 2; ++j) {
        AgentAction a1 = pol.act_single(o, j);
        AgentAction a2 = back.act_single(o, j);
        CHECK(a1.p_signed == a2.p_signed);
        CHECK(a1.v2v_request == a2.v2v_request);
        CHECK(a1.pv_request == a2.pv_request);
    }

    CHECK_THROWS(MaddpgPolicy::load("/tmp/voltmesh_does_not_exist.ckpt"), ErrorCode::Io);
    {
        std::FILE* fp = std::fopen("/tmp/voltmesh_bad.ckpt", "w");
        std::fputs("not a checkpoint\n", fp);
        std::fclose(fp);
    }
    CHECK_THROWS(MaddpgPolicy::load("/tmp/voltmesh_bad.ckpt"), ErrorCode::Parse);
}

void test_config_validation() {
    TrainConfig ok;
    validate(ok);

    TrainConfig bad = ok;
    bad.gamma = 1.0;
    CHECK_THROWS(validate(bad), ErrorCode::InvalidArgument);
    bad = ok;
    bad.tau = 0.0;
    CHECK_THROWS(validate(bad), ErrorCode::InvalidArgument);
    bad = ok;
    bad.episodes = 0;
    CHECK_THROWS(validate(bad), ErrorCode::InvalidArgument);
    bad = ok;
    bad.batch_size = 0;
    CHECK_THROWS(validate(bad), ErrorCode::InvalidArgument);
    bad = ok;
    bad.reward.xi = 1.5;
    CHECK_THROWS(validate(bad), ErrorCode::InvalidArgument);
}

TrainConfig tiny_config(ExplorationMode mode) {
    TrainConfig cfg;
    cfg.episodes = 30;
    cfg.exploration = mode;
    cfg.batch_size = 32;
    cfg.warmup_transitions = 50;
    cfg.update_every = 4;
    cfg.actor_hidden = {16, 16};
    cfg.critic_hidden = {32, 32};
    return cfg;
}

void test_training_runs_and_is_deterministic() {
    Scenario sc = one_ev_scenario();
    TrainConfig cfg = tiny_config(ExplorationMode::noisy);

    TrainResult r1 = maddpg_train({sc}, cfg, 7);
    CHECK(static_cast<int>(r1.curve.size()) == cfg.episodes);
    CHECK(r1.policy.n_agents() == 1);
    for (int i = 0; i < cfg.episodes; ++i) {
        CHECK(r1.curve[i].episode == i);
        CHECK(std::isfinite(r1.curve[i].mean_reward));
        CHECK(std::isfinite(r1.curve[i].completion));
        CHECK(std::isfinite(r1.curve[i].cost));
        CHECK(r1.curve[i].completion <= 100.0);  // can dip below 0 on net discharge
    }

    TrainResult r2 = maddpg_train({sc}, cfg, 7);
    for (int i = 0; i < cfg.episodes; ++i) {
        CHECK(r1.curve[i].mean_reward == r2.curve[i].mean_reward);
        CHECK(r1.curve[i].cost == r2.curve[i].cost);
    }
    AgentObservation o;
    o.e = 12.0;
    o.t_rem = 1.0;
    o.e_dem = 20.0;
    o.k_buy = 0.2;
    o.k_sell = 0.1;
    o.pv_gen = 2.0;
    AgentAction a1 = r1.policy.act_single(o, 0);
    AgentAction a2 = r2.policy.act_single(o, 0);
    CHECK(a1.p_signed == a2.p_signed && a1.pv_request == a2.pv_request);

    TrainResult r3 = maddpg_train({sc}, cfg, 8);
    bool any_diff = false;
    for (int i = 0; i < cfg.episodes && !any_diff; ++i)
        any_diff = r1.curve[i].mean_reward != r3.curve[i].mean_reward;
    CHECK(any_diff);

    // The action-noise variant runs through the same machinery.
    TrainConfig an = tiny_config(ExplorationMode::action_noise);
    an.episodes = 10;
    TrainResult r4 = maddpg_train({sc}, an, 7);
    CHECK(static_cast<int>(r4.curve.size()) == 10);

    save_learning_curve(r1.curve, "/tmp/voltmesh_curve.csv");
    auto rows = read_csv("/tmp/voltmesh_curve.csv", "episode,mean_reward,completion,cost");
    CHECK(static_cast<int>(rows.size()) == cfg.episodes);
}

}  // namespace

int main() {
    test_td_targets();
    test_action_mapping();
    test_obs_features();
    test_replay_buffer();
    test_critic_gradient_fd();
    test_actor_gradient_fd();
    test_policy_roundtrip();
    test_config_validation();
    test_training_runs_and_is_deterministic();
    return test_done("test_maddpg");
}
