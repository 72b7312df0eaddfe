#include "voltmesh/dispatch.hpp"

#include <vector>

#include "test_util.hpp"

using namespace voltmesh;

namespace {

ChargerState plugged(double energy, double e_max = 40.0) {
    ChargerState c;
    c.energy = energy;
    c.remaining_steps = 20;
    c.occupied = true;
    ChargerSession s;
    s.departure_step = 40;
    s.e_demand = 30.0;
    s.e_init = energy;
    s.e_max = e_max;
    c.session = s;
    return c;
}

void test_pv_proportional_split() {
    StationConfig cfg;
    cfg.n_chargers = 2;
    std::vector<ChargerState> states{plugged(10.0), plugged(10.0)};
    // Requested PV shares 10 kW and 20 kW against 15 kW of generation
    // split proportionally: 5 and 10.
    std::vector<AgentAction> acts{{10.0, 0.0, 1.0}, {16.0, 0.0, 1.25}};
    ExogenousStep ex{0.2, 0.05, 0.125, 15.0};
    // pv_request above 1 is clamped, so charger 1 wants 16 kW of PV.
    acts[1].pv_request = 1.0;
    PowerFlows f = allocate(acts, states, ex, cfg);
    double want0 = 10.0, want1 = 16.0;
    double scale = 15.0 / (want0 + want1);
    CHECK_NEAR(f.p_pvev[0], want0 * scale, 1e-12);
    CHECK_NEAR(f.p_pvev[1], want1 * scale, 1e-12);
    CHECK_NEAR(f.p_pvg, 0.0, 1e-12);
    CHECK(verify_flows(f, ex, cfg).empty());

    // Generation beyond requests goes to the grid.
    ex.pv_gen = 30.0;
    PowerFlows g = allocate(acts, states, ex, cfg);
    CHECK_NEAR(g.p_pvev[0], 10.0, 1e-12);
    CHECK_NEAR(g.p_pvev[1], 16.0, 1e-12);
    CHECK_NEAR(g.p_pvg, 4.0, 1e-12);
    CHECK(verify_flows(g, ex, cfg).empty());
}

void test_v2v_matching() {
    StationConfig cfg;
    cfg.n_chargers = 3;
    std::vector<ChargerState> states{plugged(10.0), plugged(30.0), plugged(20.0)};
    // Charger 0 wants 10 kW via V2V; charger 1 offers its full 12 kW
    // discharge; charger 2 idles. Matched volume is min(10, 12) = 10.
    std::vector<AgentAction> acts{{10.0, 1.0, 0.0}, {-12.0, 1.0, 0.0}, {0.0, 0.0, 0.0}};
    ExogenousStep ex{0.2, 0.05, 0.125, 0.0};
    PowerFlows f = allocate(acts, states, ex, cfg);
    CHECK_NEAR(f.p_v2v_c[0], 10.0, 1e-12);
    CHECK_NEAR(f.p_v2v_d[1], 10.0, 1e-12);
    CHECK_NEAR(f.p_g2v[0], 0.0, 1e-12);
    CHECK_NEAR(f.p_v2g[1], 2.0, 1e-12);
    CHECK(verify_flows(f, ex, cfg).empty());

    // Partial V2V request leaves the rest to the grid.
    acts[0].v2v_request = 0.5;
    PowerFlows h = allocate(acts, states, ex, cfg);
    CHECK_NEAR(h.p_v2v_c[0], 5.0, 1e-12);
    CHECK_NEAR(h.p_g2v[0], 5.0, 1e-12);
    CHECK(verify_flows(h, ex, cfg).empty());
}

void test_grid_caps() {
    StationConfig cfg;
    cfg.n_chargers = 2;
    cfg.g_max = 10.0;
    std::vector<ChargerState> states{plugged(10.0), plugged(10.0)};
    std::vector<AgentAction> acts{{16.0, 0.0, 0.0}, {16.0, 0.0, 0.0}};
    ExogenousStep ex{0.2, 0.05, 0.125, 0.0};
    PowerFlows f = allocate(acts, states, ex, cfg);
    // 32 kW of import demand against a 10 kW cap: scaled evenly, excess
    // reported, and the verifier stays clean because flows are clipped.
    CHECK_NEAR(f.p_g2v[0], 5.0, 1e-12);
    CHECK_NEAR(f.p_g2v[1], 5.0, 1e-12);
    CHECK_NEAR(f.grid_violation, 22.0, 1e-12);
    CHECK(verify_flows(f, ex, cfg).empty());

    // Export side: two dischargers plus PV into a small cap.
    std::vector<AgentAction> dis{{-16.0, 0.0, 0.0}, {-16.0, 0.0, 0.0}};
    ExogenousStep ex2{0.2, 0.05, 0.125, 8.0};
    PowerFlows g = allocate(dis, states, ex2, cfg);
    double total = g.p_v2g[0] + g.p_v2g[1] + g.p_pvg;
    CHECK_NEAR(total, 10.0, 1e-9);
    CHECK_NEAR(g.grid_violation, 32.0 + 8.0 - 10.0, 1e-9);
    CHECK(verify_flows(g, ex2, cfg).empty());
}

void test_unoccupied_and_errors() {
    StationConfig cfg;
    cfg.n_chargers = 2;
    std::vector<ChargerState> states{ChargerState{}, plugged(10.0)};
    std::vector<AgentAction> acts{{16.0, 1.0, 1.0}, {8.0, 0.0, 0.0}};
    ExogenousStep ex{0.2, 0.05, 0.125, 5.0};
    PowerFlows f = allocate(acts, states, ex, cfg);
    CHECK(f.p_ch[0] == 0.0 && f.p_disch[0] == 0.0);
    CHECK_NEAR(f.p_g2v[1], 8.0, 1e-12);
    CHECK_NEAR(f.p_pvg, 5.0, 1e-12);  // no PV request from the idle charger

    std::vector<AgentAction> wrong(3);
    CHECK_THROWS(allocate(wrong, states, ex, cfg), ErrorCode::ArityMismatch);

    std::vector<AgentAction> nan_act{{std::nan(""), 0.0, 0.0}, {0.0, 0.0, 0.0}};
    CHECK_THROWS(allocate(nan_act, states, ex, cfg), ErrorCode::InvalidArgument);
}

void test_headroom_rule() {
    StationConfig cfg;
    cfg.n_chargers = 2;
    // Same requests, very different headroom: the headroom rule skews PV
    // toward the emptier battery.
    std::vector<ChargerState> states{plugged(5.0), plugged(35.0)};
    std::vector<AgentAction> acts{{16.0, 0.0, 1.0}, {16.0, 0.0, 1.0}};
    ExogenousStep ex{0.2, 0.05, 0.125, 10.0};
    PowerFlows f = allocate(acts, states, ex, cfg, PvShareRule::EnergyHeadroom);
    // headrooms 35 and 5 -> shares 8.75 and 1.25
    CHECK_NEAR(f.p_pvev[0], 8.75, 1e-12);
    CHECK_NEAR(f.p_pvev[1], 1.25, 1e-12);
    CHECK(verify_flows(f, ex, cfg).empty());
}

void test_fuzz() {
    StationConfig cfg;
    Rng rng(1234);
    for (int iter = 0; iter < 20000; ++iter) {
        int n = 1 + (int)rng.uniform_int(6);
        cfg.n_chargers = n;
        cfg.g_max = rng.uniform(0.5, 60.0);
        std::vector<ChargerState> states(n);
        std::vector<AgentAction> acts(n);
        for (int j = 0; j < n; ++j) {
            if (rng.uniform() < 0.75) states[j] = plugged(rng.uniform(0.0, 40.0));
            acts[j].p_signed = rng.uniform(-25.0, 25.0);
            acts[j].v2v_request = rng.uniform(-0.5, 1.5);
            acts[j].pv_request = rng.uniform(-0.5, 1.5);
        }
        ExogenousStep ex{rng.uniform(0.0, 1.0), rng.uniform(0.0, 0.5), 0.1,
                         rng.uniform(0.0, 80.0)};
        PvShareRule rule =
            rng.uniform() < 0.5 ? PvShareRule::RequestedPower : PvShareRule::EnergyHeadroom;
        PowerFlows f = allocate(acts, states, ex, cfg, rule);
        auto violations = verify_flows(f, ex, cfg);
        if (!violations.empty()) {
            std::fprintf(stderr, "fuzz iter %d: %s (%s), magnitude %.3e\n", iter,
                         violations[0].equation.c_str(), violations[0].detail.c_str(),
                         violations[0].magnitude);
            CHECK(violations.empty());
        }
    }
}

}  // namespace

int main() {
    test_pv_proportional_split();
    test_v2v_matching();
    test_grid_caps();
    test_unoccupied_and_errors();
    test_headroom_rule();
    test_fuzz();
    return test_done("test_dispatch");
}
