#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "fedsim/server.hpp"

using namespace fedsim;

namespace {

LocalUpdate make_update(int device, ParamVector delta, int tau, int epochs_run) {
    LocalUpdate u;
    u.device_id = device;
    u.delta = std::move(delta);
    u.tau = tau;
    u.epochs_run = epochs_run;
    u.sample_count = 10;
    return u;
}

}  // namespace

TEST_CASE("strategy names round trip and reject junk") {
    for (Strategy s : {Strategy::FedLga, Strategy::FedAvg, Strategy::FedProx, Strategy::FedNova})
        CHECK(strategy_from_name(strategy_name(s)) == s);
    CHECK(strategy_name(Strategy::FedLga) == "fedlga");
    CHECK_THROWS_AS(strategy_from_name("fedsgd"), std::invalid_argument);
}

TEST_CASE("sample_devices draws K in-range slots, deterministically per rng") {
    Rng a(4), b(4), c(5);
    std::vector<int> s1 = sample_devices(50, 10, a);
    std::vector<int> s2 = sample_devices(50, 10, b);
    std::vector<int> s3 = sample_devices(50, 10, c);
    REQUIRE(s1.size() == 10);
    for (int d : s1) {
        CHECK(d >= 0);
        CHECK(d < 50);
    }
    CHECK(s1 == s2);
    CHECK(s1 != s3);
}

TEST_CASE("plan_round makes round(rho * K) stragglers on distinct slots") {
    std::vector<int> selected(10, 0);

    Rng rng(1);
    RoundPlan none = plan_round(selected, 0.0, 4, rng);
    CHECK(none.n_stragglers == 0);
    for (int t : none.tau) CHECK(t == 1);

    RoundPlan half = plan_round(selected, 0.5, 4, rng);
    CHECK(half.n_stragglers == 5);
    int found = 0;
    for (int t : half.tau) {
        if (t > 1) {
            ++found;
            CHECK(t >= 2);
            CHECK(t <= 4);
        }
    }
    CHECK(found == 5);

    RoundPlan quarter = plan_round(selected, 0.25, 4, rng);
    CHECK(quarter.n_stragglers == 3);  // lround(2.5) rounds half away from zero

    RoundPlan all = plan_round(selected, 1.0, 4, rng);
    CHECK(all.n_stragglers == 10);
    for (int t : all.tau) CHECK(t >= 2);

    CHECK_THROWS_AS(plan_round(selected, -0.1, 4, rng), std::invalid_argument);
    CHECK_THROWS_AS(plan_round(selected, 1.1, 4, rng), std::invalid_argument);
    CHECK_THROWS_AS(plan_round(selected, 0.5, 1, rng), std::invalid_argument);
}

TEST_CASE("straggler staleness covers its whole menu across rounds") {
    std::vector<int> selected(10, 0);
    std::set<int> taus_seen;
    for (int r = 0; r < 200; ++r) {
        Rng rng(1000 + r);
        for (int t : plan_round(selected, 0.5, 4, rng).tau)
            if (t > 1) taus_seen.insert(t);
    }
    CHECK(taus_seen == std::set<int>({2, 3, 4}));
}

TEST_CASE("full-model estimate is w_t plus the mean full-worker delta") {
    ParamVector w_t = {0.0};
    LocalUpdate a = make_update(1, {1.0}, 1, 5);
    LocalUpdate b = make_update(2, {3.0}, 1, 5);
    bool fallback = true;
    ParamVector w_hat = estimate_full_model(w_t, {&a, &b}, &fallback);
    CHECK_FALSE(fallback);
    REQUIRE(w_hat.size() == 1);
    CHECK(w_hat[0] == 2.0);

    ParamVector w_fb = estimate_full_model(w_t, {}, &fallback);
    CHECK(fallback);
    CHECK(w_fb == w_t);

    LocalUpdate straggler = make_update(3, {1.0}, 2, 4);
    CHECK_THROWS_AS(estimate_full_model(w_t, {&straggler}, &fallback), std::invalid_argument);
}

TEST_CASE("hessian-vector product: frozen example and dense-oracle agreement") {
    ParamVector g = {1.0, 2.0};
    ParamVector v = {3.0, 4.0};
    ParamVector hv = hessian_vector_apply(g, v);
    REQUIRE(hv.size() == 2);
    CHECK(hv[0] == 11.0);  // <g, v> = 11
    CHECK(hv[1] == 22.0);

    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        const int dim = 1 + static_cast<int>(rng.below(8));
        ParamVector gg(dim), vv(dim);
        for (int i = 0; i < dim; ++i) {
            gg[i] = rng.normal();
            vv[i] = rng.normal();
        }
        ParamVector fast = hessian_vector_apply(gg, vv);
        // dense outer-product matrix applied row by row
        for (int i = 0; i < dim; ++i) {
            double row = 0.0;
            for (int j = 0; j < dim; ++j) row += gg[i] * gg[j] * vv[j];
            CHECK(fast[i] == doctest::Approx(row).epsilon(1e-12));
        }
    }
}

TEST_CASE("taylor correction: frozen worked example") {
    // delta=[0.1,-0.2], eta=0.1, E_i=2 -> g=[-0.5,1.0]; w_hat-(w_t+delta)=[-0.05,0.05]
    // <g,disp>=0.075 -> correction=[-0.0375,0.075] -> delta_hat=[0.0625,-0.125]
    LocalUpdate u = make_update(7, {0.1, -0.2}, 4, 2);
    ParamVector w_t = {0.0, 0.0};
    ParamVector w_hat = {0.05, -0.15};
    ApproxDiagnostics diag;
    ParamVector delta_hat = approximate_update(u, w_t, w_hat, 0.1, &diag);
    REQUIRE(delta_hat.size() == 2);
    CHECK(delta_hat[0] == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(delta_hat[1] == doctest::Approx(-0.125).epsilon(1e-14));
    CHECK(diag.device_id == 7);
    CHECK(diag.delta_norm == doctest::Approx(std::sqrt(0.05)).epsilon(1e-14));
    CHECK(diag.correction_norm == doctest::Approx(0.0375 * std::sqrt(5.0)).epsilon(1e-14));
}

TEST_CASE("taylor correction refuses full workers and degenerate scales") {
    ParamVector w_t = {0.0}, w_hat = {1.0};
    LocalUpdate full = make_update(1, {0.5}, 1, 5);
    CHECK_THROWS_AS(approximate_update(full, w_t, w_hat, 0.1, nullptr), std::invalid_argument);
    LocalUpdate no_steps = make_update(1, {0.5}, 2, 0);
    CHECK_THROWS_AS(approximate_update(no_steps, w_t, w_hat, 0.1, nullptr), std::invalid_argument);
    LocalUpdate ok = make_update(1, {0.5}, 2, 4);
    CHECK_THROWS_AS(approximate_update(ok, w_t, w_hat, 0.0, nullptr), std::invalid_argument);
}

TEST_CASE("aggregation rules: frozen singles") {
    ParamVector w_t = {1.0};
    std::vector<LocalUpdate> updates;
    updates.push_back(make_update(0, {1.0}, 1, 1));
    updates.push_back(make_update(1, {3.0}, 1, 2));
    std::vector<const ParamVector*> deltas = {&updates[0].delta, &updates[1].delta};

    StrategyConfig fedavg{Strategy::FedAvg, 1.0, 0.0};
    CHECK(aggregate(fedavg, w_t, updates, deltas)[0] == 3.0);  // 1 + (1+3)/2

    StrategyConfig fedlga{Strategy::FedLga, 2.0, 0.0};
    CHECK(aggregate(fedlga, w_t, updates, deltas)[0] == 5.0);  // 1 + (2/2)*4

    StrategyConfig fednova{Strategy::FedNova, 1.0, 0.0};
    // tau_eff = mean(E_i) = 1.5; sum(delta/E_i) = 1/1 + 3/2 = 2.5 -> 1 + 1.5*2.5/2
    CHECK(aggregate(fednova, w_t, updates, deltas)[0] == doctest::Approx(2.875).epsilon(1e-15));

    StrategyConfig fedprox{Strategy::FedProx, 1.0, 1.0};
    CHECK(aggregate(fedprox, w_t, updates, deltas)[0] == 3.0);  // server side same as fedavg
}

TEST_CASE("fedavg and unit-step fedlga aggregate bit-identically") {
    Rng rng(17);
    ParamVector w_t(20);
    for (double& v : w_t) v = rng.normal();
    std::vector<LocalUpdate> updates;
    for (int k = 0; k < 7; ++k) {
        ParamVector d(20);
        for (double& v : d) v = rng.normal();
        updates.push_back(make_update(k, std::move(d), 1, 5));
    }
    std::vector<const ParamVector*> deltas;
    for (const LocalUpdate& u : updates) deltas.push_back(&u.delta);

    ParamVector avg = aggregate({Strategy::FedAvg, 1.0, 0.0}, w_t, updates, deltas);
    ParamVector lga = aggregate({Strategy::FedLga, 1.0, 0.0}, w_t, updates, deltas);
    REQUIRE(avg.size() == lga.size());
    for (size_t i = 0; i < avg.size(); ++i) CHECK(avg[i] == lga[i]);
}

TEST_CASE("aggregation consumes the effective deltas, not the raw ones") {
    ParamVector w_t = {0.0};
    std::vector<LocalUpdate> updates;
    updates.push_back(make_update(0, {100.0}, 2, 4));
    ParamVector corrected = {2.0};
    std::vector<const ParamVector*> deltas = {&corrected};
    CHECK(aggregate({Strategy::FedLga, 1.0, 0.0}, w_t, updates, deltas)[0] == 2.0);
}

TEST_CASE("non-finite aggregation output names the strategy") {
    ParamVector w_t = {0.0};
    std::vector<LocalUpdate> updates;
    updates.push_back(make_update(0, {std::numeric_limits<double>::infinity()}, 1, 5));
    std::vector<const ParamVector*> deltas = {&updates[0].delta};
    CHECK_THROWS_WITH_AS(aggregate({Strategy::FedAvg, 1.0, 0.0}, w_t, updates, deltas),
                         doctest::Contains("fedavg"), std::runtime_error);
}
