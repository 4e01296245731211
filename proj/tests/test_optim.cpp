#include <doctest.h>

#include <cmath>
#include <vector>

#include "dwp/optim.hpp"

using namespace dwp;

namespace {

struct Trace {
    std::vector<real> losses;
    std::vector<int> drop_epochs;      // 1-based epochs where lr is reduced
    std::vector<real> lr_after_drop;
    int stop_epoch = -1;
};

Trace run_schedule(const std::vector<real>& losses, int patience = 10) {
    Trace t;
    PlateauState st = plateau_init(1e-3, patience, 0.1, 1e-4, 1e-6);
    for (size_t i = 0; i < losses.size(); ++i) {
        auto dec = plateau_step(st, losses[i]);
        if (dec.dropped) {
            t.drop_epochs.push_back(static_cast<int>(i) + 1);
            t.lr_after_drop.push_back(dec.lr);
        }
        if (dec.stop && t.stop_epoch < 0) t.stop_epoch = static_cast<int>(i) + 1;
    }
    return t;
}

}  // namespace

TEST_CASE("plateau: flat stream drops at epochs 11, 22, 33 and stops") {
    std::vector<real> flat(40, 1.0);
    auto t = run_schedule(flat);
    CHECK(t.drop_epochs == std::vector<int>{11, 22, 33});
    REQUIRE(t.lr_after_drop.size() == 3);
    CHECK(t.lr_after_drop[0] == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(t.lr_after_drop[1] == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(t.lr_after_drop[2] == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(t.stop_epoch == 33);
}

TEST_CASE("plateau: strictly improving stream never drops") {
    std::vector<real> improving;
    for (int i = 0; i < 500; ++i) improving.push_back(1.0 - 0.001 * i);
    auto t = run_schedule(improving);
    CHECK(t.drop_epochs.empty());
    CHECK(t.stop_epoch == -1);
}

TEST_CASE("plateau: improvements below min_delta do not count") {
    // loss creeps down by 1e-6 per epoch: within min_delta, treated as flat
    std::vector<real> creeping;
    for (int i = 0; i < 40; ++i) creeping.push_back(1.0 - 1e-6 * i);
    auto t = run_schedule(creeping);
    CHECK(t.drop_epochs == std::vector<int>{11, 22, 33});
}

TEST_CASE("plateau: NaN losses are treated as no improvement") {
    std::vector<real> vals(40, std::nan(""));
    vals[0] = 1.0;
    auto t = run_schedule(vals);
    CHECK(t.drop_epochs == std::vector<int>{11, 22, 33});
}

TEST_CASE("plateau: staircase stream") {
    // improves every 6 epochs: never accumulates 10 bad epochs
    std::vector<real> stair;
    real level = 1.0;
    for (int i = 0; i < 60; ++i) {
        if (i % 6 == 0) level -= 0.01;
        stair.push_back(level);
    }
    auto t = run_schedule(stair);
    CHECK(t.drop_epochs.empty());

    // improves every 12 epochs: one drop per stretch
    std::vector<real> slow;
    level = 1.0;
    for (int i = 0; i < 24; ++i) {
        if (i % 12 == 0) level -= 0.01;
        slow.push_back(level);
    }
    auto t2 = run_schedule(slow);
    CHECK(t2.drop_epochs == std::vector<int>{11, 23});
}

TEST_CASE("cyclical restart resets lr and counters") {
    PlateauState st = plateau_init(1e-3, 10, 0.1, 1e-4, 1e-6);
    CHECK_THROWS_AS(cyclical_restart(st), std::logic_error);

    for (int i = 0; i < 33; ++i) plateau_step(st, 1.0);
    CHECK(st.stopped);
    cyclical_restart(st);
    CHECK(st.lr == 1e-3);
    CHECK(st.stopped == false);

    // fresh full patience window after the restart: the first epoch
    // re-baselines best, then patience bad epochs accumulate (same trace as a
    // new schedule)
    int drop_at = -1;
    for (int i = 1; i <= 20; ++i) {
        auto dec = plateau_step(st, 1.0);
        if (dec.dropped) {
            drop_at = i;
            break;
        }
    }
    CHECK(drop_at == 11);
}

TEST_CASE("adam: zero lr leaves parameters unchanged; frozen tensors untouched") {
    Tensor x = Tensor::full({4}, 1.0);
    Tensor g = Tensor::full({4}, 0.5);
    Adam opt;
    opt.add_params({{&x, &g}});
    opt.lr = 0.0;
    opt.step();
    for (real v : x.v) CHECK(v == 1.0);

    opt.lr = 1e-2;
    opt.step();
    for (real v : x.v) CHECK(v < 1.0);
}

TEST_CASE("adam minimizes a quadratic") {
    Tensor x = Tensor::full({2}, 5.0);
    Tensor g({2});
    Adam opt;
    opt.lr = 0.1;
    opt.add_params({{&x, &g}});
    for (int i = 0; i < 500; ++i) {
        g[0] = 2.0 * (x[0] - 1.0);
        g[1] = 2.0 * (x[1] + 2.0);
        opt.step();
    }
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-2));
}
