#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "herglotz/mechanics.hpp"
#include "test_util.hpp"

using namespace herglotz;
using namespace testutil;
using mechanics::ConstraintKind;
using mechanics::PhaseState;

namespace {

const double kPi = std::acos(-1.0);

SystemSpec oscillator(ConstraintKind kind = ConstraintKind::None) {
    return make_system({"q"}, "0.5*vq^2 - 0.5*q^2 - gamma*s", {{"gamma", 0.2}}, kind);
}

SystemSpec rolling_disk(ConstraintKind kind = ConstraintKind::Nonholonomic) {
    return make_system({"x", "y", "theta", "phi"},
                       "0.5*(vx^2 + vy^2 + vtheta^2 + vphi^2) + delta*s", {{"delta", 0.1}}, kind,
                       kind == ConstraintKind::None
                           ? std::vector<std::pair<std::string, std::string>>{}
                           : std::vector<std::pair<std::string, std::string>>{
                                 {"phi1", "vx - vtheta*cos(phi)"}, {"phi2", "vy - vtheta*sin(phi)"}});
}

SystemSpec sleigh(double alpha, double beta, double gamma) {
    return make_system(
        {"x", "y", "theta"},
        "0.5*((alpha*cos(theta) - beta*sin(theta))*vtheta + vy)^2 + "
        "0.5*((beta*cos(theta) + alpha*sin(theta))*vtheta - vx)^2 + vtheta^2 + gamma*s",
        {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}}, ConstraintKind::Nonholonomic,
        {{"phi1", "vx*sin(theta) - vy*cos(theta)"}});
}

// disk state satisfying both rolling constraints
PhaseState disk_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    PhaseState st;
    st.q = {d(rng), d(rng), d(rng), d(rng)};
    const double vtheta = 1.0 + 0.5 * d(rng), vphi = d(rng);
    st.v = {vtheta * std::cos(st.q[3]), vtheta * std::sin(st.q[3]), vtheta, vphi};
    st.s = 0.3 * d(rng);
    return st;
}

}  // namespace

TEST_CASE("build_cache: oscillator partials") {
    auto sys = oscillator();
    auto cache = mechanics::build_cache(sys);
    CHECK(cache.dL_dv[0].same_as(symexpr::Expr::variable("vq")));
    auto st = make_state({0.7}, {-0.3}, 0.2);
    auto b = mechanics::state_binding(sys, st);
    CHECK(symexpr::eval(cache.dL_ds, b) == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(symexpr::eval(cache.d2L_vv[0][0], b) == 1.0);
    CHECK(cache.d2L_qv[0][0].is_constant(0.0));
    CHECK(cache.d2L_sv[0].is_constant(0.0));
}

TEST_CASE("build_cache: rolling disk has identity Hessian and constant dL/ds") {
    auto sys = rolling_disk();
    auto cache = mechanics::build_cache(sys);
    std::mt19937_64 rng(3u);
    auto st = disk_state(rng);
    auto b = mechanics::state_binding(sys, st);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(symexpr::eval(cache.d2L_vv[i][j], b) == (i == j ? 1.0 : 0.0));
            CHECK(cache.d2L_qv[i][j].is_constant(0.0));
        }
        CHECK(cache.d2L_sv[i].is_constant(0.0));
    }
    CHECK(symexpr::eval(cache.dL_ds, b) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(cache.constraints[0].s_independent);
}

TEST_CASE("build_cache: sleigh dissipation coefficient") {
    auto sys = sleigh(0.1, 0.1, 0.3);
    auto cache = mechanics::build_cache(sys);
    auto st = make_state({0, 0, 0.4}, {1, 0.2, 0.5}, 0.1);
    CHECK(symexpr::eval(cache.dL_ds, mechanics::state_binding(sys, st)) ==
          doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("cache validates against finite differences at a state") {
    for (auto sys : {oscillator(), rolling_disk(), sleigh(0.1, 0.1, 0.3)}) {
        auto cache = mechanics::build_cache(sys);
        PhaseState st;
        st.q.assign(sys.dof(), 0.4);
        st.v.assign(sys.dof(), 0.8);
        st.s = 0.2;
        CHECK(mechanics::cache_fd_error(sys, cache, st) <= 1e-5);
    }
}

TEST_CASE("herglotz_field: damped oscillator oracle") {
    auto sys = oscillator();
    auto cache = mechanics::build_cache(sys);
    auto st = make_state({1.0}, {0.0}, 0.0);
    auto fe = mechanics::herglotz_field(sys, cache, st);
    // closed form of the eliminated equation: vdot = -q - gamma v
    CHECK(fe.vdot[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(fe.sdot == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(fe.energy == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(fe.dissipative_multiplier == doctest::Approx(-0.2).epsilon(1e-15));
    // G from the tangency of v_s - L: v dL/dq + B dL/dv + L dL/ds
    CHECK(fe.vsdot == doctest::Approx(-0.5 * -0.2).epsilon(1e-14));
}

TEST_CASE("herglotz_field: free particle and gamma = 0 reduce to classical dynamics") {
    auto free_sys = make_system({"q"}, "0.5*vq^2", {});
    auto cache = mechanics::build_cache(free_sys);
    auto fe = mechanics::herglotz_field(free_sys, cache, make_state({0.3}, {1.4}, 0.0));
    CHECK(fe.vdot[0] == 0.0);
    CHECK(fe.energy_rate_actual == 0.0);
    CHECK(*fe.energy_rate_predicted == 0.0);

    auto classical = make_system({"q"}, "0.5*vq^2 - 0.5*q^2", {});
    auto cache2 = mechanics::build_cache(classical);
    auto fe2 = mechanics::herglotz_field(classical, cache2, make_state({0.7}, {0.1}, 0.0));
    CHECK(fe2.vdot[0] == doctest::Approx(-0.7).epsilon(1e-15));
}

TEST_CASE("herglotz_field: unconstrained disk accelerates each velocity by delta") {
    auto sys = rolling_disk(ConstraintKind::None);
    auto cache = mechanics::build_cache(sys);
    auto st = make_state({0, 0, 0, 0}, {1, 1, 1, 1}, 0.0);
    auto fe = mechanics::herglotz_field(sys, cache, st);
    for (double b : fe.vdot) CHECK(b == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("field invariants: second order, sdot = L, multiplier identity") {
    auto sys = rolling_disk();
    auto cache = mechanics::build_cache(sys);
    std::mt19937_64 rng(17u);
    for (int i = 0; i < 20; ++i) {
        auto st = disk_state(rng);
        auto fe = mechanics::nonholonomic_field(sys, cache, st);
        for (std::size_t j = 0; j < 4; ++j) CHECK(fe.qdot[j] == st.v[j]);  // bitwise
        const double L = symexpr::eval(sys.lagrangian, mechanics::state_binding(sys, st));
        CHECK(fe.sdot == doctest::Approx(L).epsilon(1e-14));
        const double dLds = symexpr::eval(cache.dL_ds, mechanics::state_binding(sys, st));
        CHECK(fe.dissipative_multiplier == dLds);  // analytic, never solved for
    }
}

TEST_CASE("nonholonomic_field: rolling disk multiplier oracle") {
    auto sys = rolling_disk();
    auto cache = mechanics::build_cache(sys);

    PhaseState st = make_state({0, 0, 0, kPi / 2}, {0, 1, 1, 1}, 0.0);
    auto fe = mechanics::nonholonomic_field(sys, cache, st);
    CHECK(fe.multipliers[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(fe.multipliers[1]) <= 1e-12);
    CHECK(fe.vdot[2] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(fe.vdot[3] == doctest::Approx(0.1).epsilon(1e-12));

    std::mt19937_64 rng(23u);
    for (int i = 0; i < 50; ++i) {
        auto state = disk_state(rng);
        auto eval = mechanics::nonholonomic_field(sys, cache, state);
        const double vtheta = state.v[2], vphi = state.v[3], phi = state.q[3];
        CHECK(std::abs(eval.multipliers[0] - DiskOracle::lambda1(vtheta, vphi, phi)) <= 1e-12);
        CHECK(std::abs(eval.multipliers[1] - DiskOracle::lambda2(vtheta, vphi, phi)) <= 1e-12);
        CHECK(std::abs(eval.vdot[2] - 0.1 * vtheta) <= 1e-12);
        CHECK(std::abs(eval.vdot[3] - 0.1 * vphi) <= 1e-12);
    }
}

TEST_CASE("nonholonomic_field: empty constraint block equals herglotz_field") {
    auto sys_n = rolling_disk(ConstraintKind::Nonholonomic);
    sys_n.constraints.clear();
    auto sys_h = rolling_disk(ConstraintKind::None);
    auto cache = mechanics::build_cache(sys_h);
    std::mt19937_64 rng(31u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        PhaseState st;
        st.q = {d(rng), d(rng), d(rng), d(rng)};
        st.v = {d(rng), d(rng), d(rng), d(rng)};
        st.s = d(rng);
        auto a = mechanics::herglotz_field(sys_h, cache, st);
        auto b = mechanics::nonholonomic_field(sys_n, cache, st);
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(a.vdot[j] - b.vdot[j]) <= 1e-12);
        CHECK(std::abs(a.sdot - b.sdot) <= 1e-12);
        CHECK(std::abs(a.vsdot - b.vsdot) <= 1e-12);
    }
}

TEST_CASE("nonholonomic_field: sleigh with centered pivot against a reference solve") {
    auto sys = sleigh(0.0, 0.0, 0.3);
    auto cache = mechanics::build_cache(sys);
    const double gamma = 0.3;

    std::mt19937_64 rng(37u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const double theta = kPi * d(rng), u = 1.0 + 0.5 * d(rng);
        // motion along the blade, no rotation: the reaction force vanishes
        PhaseState st = make_state({d(rng), d(rng), theta},
                                   {u * std::cos(theta), u * std::sin(theta), 0.0}, 0.2 * d(rng));
        auto fe = mechanics::nonholonomic_field(sys, cache, st);
        CHECK(std::abs(fe.multipliers[0]) <= 1e-12);
        CHECK(fe.vdot[0] == doctest::Approx(gamma * u * std::cos(theta)).epsilon(1e-12));
        CHECK(fe.vdot[1] == doctest::Approx(gamma * u * std::sin(theta)).epsilon(1e-12));
        CHECK(std::abs(fe.vdot[2]) <= 1e-12);
    }

    // brute-force solve of the hand-assembled augmented system (W = diag(1,1,2))
    for (int i = 0; i < 20; ++i) {
        const double theta = kPi * d(rng), u = 1.0 + 0.5 * d(rng), vth = d(rng);
        PhaseState st = make_state({d(rng), d(rng), theta},
                                   {u * std::cos(theta), u * std::sin(theta), vth}, 0.1 * d(rng));
        auto fe = mechanics::nonholonomic_field(sys, cache, st);
        const double sn = std::sin(theta), cs = std::cos(theta);
        const std::vector<std::vector<double>> aug = {
            {1, 0, 0, sn},
            {0, 1, 0, -cs},
            {0, 0, 2, 0},
            {sn, -cs, 0, 0},
        };
        const std::vector<double> rhs = {gamma * st.v[0], gamma * st.v[1], 2 * gamma * vth,
                                         -vth * (st.v[0] * cs + st.v[1] * sn)};
        const auto ref = reference_solve(aug, rhs);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(fe.vdot[j] - ref[j]) <= 1e-12);
        CHECK(std::abs(fe.multipliers[0] - ref[3]) <= 1e-12);
        CHECK(std::abs(fe.multipliers[0] - u * vth) <= 1e-12);
    }
}

TEST_CASE("nonholonomic_field: rank and regularity failures") {
    auto sys = make_system({"x", "y", "z"}, "0.5*(vx^2 + vy^2 + vz^2)", {},
                           ConstraintKind::Nonholonomic,
                           {{"c1", "vx - vy"}, {"c2", "2*vx - 2*vy"}});
    auto cache = mechanics::build_cache(sys);
    auto st = make_state({0, 0, 0}, {1, 1, 0}, 0.0);
    CHECK_THROWS_AS(mechanics::nonholonomic_field(sys, cache, st),
                    mechanics::RankDeficientConstraints);

    auto degen = make_system({"q"}, "0.5*q*vq^2", {});
    auto dcache = mechanics::build_cache(degen);
    CHECK_THROWS_AS(mechanics::herglotz_field(degen, dcache, make_state({0.0}, {1.0}, 0.0)),
                    mechanics::RegularityFailure);
}

TEST_CASE("vakonomic_field: no constraints reduces to herglotz plus mu flow") {
    auto sys_v = oscillator(ConstraintKind::Vakonomic);
    auto sys_h = oscillator();
    auto cache = mechanics::build_cache(sys_h);
    std::mt19937_64 rng(41u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        PhaseState st = make_state({d(rng)}, {d(rng)}, d(rng));
        st.mu = 0.4 * d(rng);
        auto h = mechanics::herglotz_field(sys_h, cache, st);
        auto v = mechanics::vakonomic_field(sys_v, cache, st);
        CHECK(std::abs(h.vdot[0] - v.vdot[0]) <= 1e-12);
        CHECK(std::abs(h.sdot - v.sdot) <= 1e-12);
        CHECK(std::abs(h.vsdot - v.vsdot) <= 1e-12);
        CHECK(v.mudot == doctest::Approx((1.0 + st.mu) * -0.2).epsilon(1e-14));
    }
}

TEST_CASE("vakonomic_field: frozen-coordinate constraint exerts no force") {
    auto sys = make_system({"a", "b"}, "0.5*(va^2 + vb^2)", {}, ConstraintKind::Vakonomic,
                           {{"freeze", "va"}});
    auto cache = mechanics::build_cache(sys);
    PhaseState st = make_state({0.2, -0.4}, {0.0, 0.9}, 0.0);
    st.nu = {0.0};
    auto fe = mechanics::vakonomic_field(sys, cache, st);
    CHECK(std::abs(fe.vdot[0]) <= 1e-14);
    CHECK(std::abs(fe.vdot[1]) <= 1e-14);
    CHECK(std::abs(fe.multipliers[0]) <= 1e-14);
    CHECK(fe.mudot == 0.0);
    CHECK(!fe.energy_rate_predicted.has_value());
}

TEST_CASE("vakonomic_field: excluded multiplier value") {
    auto sys = oscillator(ConstraintKind::Vakonomic);
    auto cache = mechanics::build_cache(sys);
    PhaseState st = make_state({1.0}, {0.0}, 0.0);
    st.mu = -1.0;
    CHECK_THROWS_AS(mechanics::vakonomic_field(sys, cache, st), mechanics::DegenerateMultiplier);
}

TEST_CASE("energy: spec values") {
    auto sys = oscillator();
    auto cache = mechanics::build_cache(sys);
    CHECK(mechanics::energy(sys, cache, make_state({1.0}, {0.0}, 0.0)) ==
          doctest::Approx(0.5).epsilon(1e-15));

    auto disk = rolling_disk(ConstraintKind::None);
    auto dcache = mechanics::build_cache(disk);
    CHECK(mechanics::energy(disk, dcache, make_state({0, 0, 0, 0}, {1, 1, 1, 1}, 0.0)) ==
          doctest::Approx(2.0).epsilon(1e-15));

    // L linear in v: E = -(v-independent part)
    auto linear = make_system({"q"}, "q*vq + q^2", {});
    auto lcache = mechanics::build_cache(linear);
    CHECK(mechanics::energy(linear, lcache, make_state({0.7}, {1.3}, 0.0)) ==
          doctest::Approx(-0.49).epsilon(1e-14));
}

TEST_CASE("diagnostics: oscillator energy law and pairing") {
    auto sys = oscillator();
    auto cache = mechanics::build_cache(sys);
    std::mt19937_64 rng(43u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 25; ++i) {
        auto st = make_state({d(rng)}, {d(rng)}, d(rng));
        auto fe = mechanics::herglotz_field(sys, cache, st);
        auto rec = mechanics::diagnostics(sys, cache, st, fe);
        CHECK(std::abs(rec.pairing_residual) <= 1e-12);
        CHECK(std::abs(rec.energy_rate_actual - (-0.2) * fe.energy) <= 1e-10);
        CHECK(*rec.energy_rate_predicted == doctest::Approx(-0.2 * fe.energy).epsilon(1e-13));
    }
}

TEST_CASE("diagnostics: disk on-constraint energy law with multiplier term") {
    auto sys = rolling_disk();
    auto cache = mechanics::build_cache(sys);
    std::mt19937_64 rng(47u);
    for (int i = 0; i < 25; ++i) {
        auto st = disk_state(rng);
        auto fe = mechanics::nonholonomic_field(sys, cache, st);
        auto rec = mechanics::diagnostics(sys, cache, st, fe);
        const double phi = st.q[3];
        const double predicted =
            0.1 * fe.energy + fe.multipliers[0] * st.v[0] + fe.multipliers[1] * st.v[1] +
            (fe.multipliers[0] * -std::cos(phi) + fe.multipliers[1] * -std::sin(phi)) * st.v[2];
        CHECK(std::abs(rec.energy_rate_actual - predicted) <= 1e-10);
        CHECK(std::abs(rec.energy_rate_actual - *rec.energy_rate_predicted) <=
              1e-9 * (1.0 + std::abs(fe.energy)));
        CHECK(std::abs(rec.pairing_residual) <= 1e-12);
    }
}

TEST_CASE("augmented solve: substituting the solution back is residual-free") {
    auto sys = rolling_disk();
    auto cache = mechanics::build_cache(sys);
    std::mt19937_64 rng(53u);
    for (int i = 0; i < 20; ++i) {
        auto st = disk_state(rng);
        auto fe = mechanics::nonholonomic_field(sys, cache, st);
        // rebuild rows from scratch: W B + dphi/dv^T lambda = r, tangency = 0
        auto b = mechanics::state_binding(sys, st);
        const double L = symexpr::eval(sys.lagrangian, b);
        const double dLds = symexpr::eval(cache.dL_ds, b);
        for (std::size_t row = 0; row < 4; ++row) {
            double lhs = 0.0;
            for (std::size_t j = 0; j < 4; ++j)
                lhs += symexpr::eval(cache.d2L_vv[row][j], b) * fe.vdot[j];
            for (std::size_t a = 0; a < 2; ++a)
                lhs += symexpr::eval(cache.constraints[a].dc_dv[row], b) * fe.multipliers[a];
            double r = symexpr::eval(cache.dL_dq[row], b) +
                       dLds * symexpr::eval(cache.dL_dv[row], b);
            for (std::size_t j = 0; j < 4; ++j)
                r -= st.v[j] * symexpr::eval(cache.d2L_qv[row][j], b);
            r -= L * symexpr::eval(cache.d2L_sv[row], b);
            CHECK(std::abs(lhs - r) <= 1e-9);
        }
        // tangency of each constraint along the field
        for (std::size_t a = 0; a < 2; ++a) {
            double tang = symexpr::eval(cache.constraints[a].dc_ds, b) * fe.sdot;
            for (std::size_t j = 0; j < 4; ++j)
                tang += symexpr::eval(cache.constraints[a].dc_dq[j], b) * st.v[j] +
                        symexpr::eval(cache.constraints[a].dc_dv[j], b) * fe.vdot[j];
            CHECK(std::abs(tang) <= 1e-10);
        }
    }
}

TEST_CASE("el_operator: sleigh matches the hand-derived transcription") {
    auto sys = sleigh(0.1, 0.1, 0.3);
    auto cache = mechanics::build_cache(sys);
    const SleighOracle oracle{0.1, 0.1, 0.3};
    std::mt19937_64 rng(59u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        PhaseState st = make_state({d(rng), d(rng), kPi * d(rng)}, {d(rng), d(rng), d(rng)},
                                   0.3 * d(rng));
        const std::vector<double> accel = {d(rng), d(rng), d(rng)};
        const auto got = mechanics::el_operator(sys, cache, st, accel);
        const auto want = oracle.el(st, accel);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-10);
    }
}

TEST_CASE("el_operator: solved fields satisfy their defining equations") {
    auto sys = sleigh(0.1, 0.1, 0.3);
    auto cache = mechanics::build_cache(sys);
    std::mt19937_64 rng(61u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const double theta = kPi * d(rng), u = 1.0 + 0.4 * d(rng);
        PhaseState st = make_state({d(rng), d(rng), theta},
                                   {u * std::cos(theta), u * std::sin(theta), d(rng)},
                                   0.2 * d(rng));
        auto fe = mechanics::nonholonomic_field(sys, cache, st);
        auto b = mechanics::state_binding(sys, st);
        const double dLds = symexpr::eval(cache.dL_ds, b);
        const auto el = mechanics::el_operator(sys, cache, st, fe.vdot);
        for (std::size_t j = 0; j < 3; ++j) {
            const double rhs = -dLds * symexpr::eval(cache.dL_dv[j], b) +
                               fe.multipliers[0] * symexpr::eval(cache.constraints[0].dc_dv[j], b);
            CHECK(std::abs(el[j] - rhs) <= 1e-10);
        }
    }
}

TEST_CASE("equivalence: all three formulations agree without constraints") {
    // messier Lagrangian than the builtins: trig coupling and s-dependence
    auto base = make_system(
        {"a", "b"},
        "0.5*(va^2 + 2*vb^2) + 0.3*va*vb*cos(a) - 0.25*a^2*b^2 - 0.1*s*a - 0.2*s", {});
    std::mt19937_64 rng(67u);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    auto cache = mechanics::build_cache(base);
    auto sys_h = base;
    auto sys_n = base;
    sys_n.kind = ConstraintKind::Nonholonomic;
    auto sys_v = base;
    sys_v.kind = ConstraintKind::Vakonomic;
    for (int i = 0; i < 100; ++i) {
        PhaseState st = make_state({d(rng), d(rng)}, {d(rng), d(rng)}, d(rng));
        auto h = mechanics::herglotz_field(sys_h, cache, st);
        auto n = mechanics::nonholonomic_field(sys_n, cache, st);
        auto v = mechanics::vakonomic_field(sys_v, cache, st);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(std::abs(h.vdot[j] - n.vdot[j]) <= 1e-12);
            CHECK(std::abs(h.vdot[j] - v.vdot[j]) <= 1e-12);
        }
        CHECK(std::abs(h.sdot - n.sdot) <= 1e-12);
        CHECK(std::abs(h.sdot - v.sdot) <= 1e-12);
        CHECK(std::abs(h.vsdot - n.vsdot) <= 1e-12);
        CHECK(std::abs(h.vsdot - v.vsdot) <= 1e-12);
    }
}

TEST_CASE("s-dependent constraints enter the tangency row") {
    // constraint vx - s: tangency forces B_x = sdot = L
    auto sys = make_system({"x", "y"}, "0.5*(vx^2 + vy^2)", {}, ConstraintKind::Nonholonomic,
                           {{"c", "vx - s"}});
    auto cache = mechanics::build_cache(sys);
    CHECK(!cache.constraints[0].s_independent);
    PhaseState st = make_state({0.0, 0.0}, {0.25, 0.5}, 0.25);  // admissible: vx = s
    auto fe = mechanics::nonholonomic_field(sys, cache, st);
    const double L = 0.5 * (0.25 * 0.25 + 0.5 * 0.5);
    CHECK(fe.vdot[0] == doctest::Approx(L).epsilon(1e-13));
    CHECK(fe.vdot[1] == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("vakonomic_field: s-dependent constraint, hand-solved oracle") {
    // L = (va^2 + vb^2)/2, psi = va - s. By hand: tangency gives B_a = L,
    // sigma = nu, and the first row B_a + nudot = nu(va - nu) yields
    // nudot = nu(va - nu) - L, B_b = nu vb, mudot = -(1+mu) nu.
    auto sys = make_system({"a", "b"}, "0.5*(va^2 + vb^2)", {}, ConstraintKind::Vakonomic,
                           {{"lag", "va - s"}});
    auto cache = mechanics::build_cache(sys);
    PhaseState st = make_state({0.0, 0.0}, {0.5, 1.0}, 0.5);  // admissible: va = s
    st.nu = {0.2};
    st.mu = 0.0;
    auto fe = mechanics::vakonomic_field(sys, cache, st);
    const double L = 0.5 * (0.25 + 1.0);
    CHECK(fe.vdot[0] == doctest::Approx(L).epsilon(1e-14));
    CHECK(fe.vdot[1] == doctest::Approx(0.2 * 1.0).epsilon(1e-14));
    CHECK(fe.multipliers[0] == doctest::Approx(0.2 * (0.5 - 0.2) - L).epsilon(1e-14));
    CHECK(fe.mudot == doctest::Approx(-0.2).epsilon(1e-14));
}

TEST_CASE("SystemSpec validation rejects bad declarations") {
    CHECK_THROWS_AS(make_system({"s"}, "0.5*vs^2", {}).validate(), herglotz::Error);
    CHECK_THROWS_AS(make_system({"q", "q"}, "q", {}).validate(), herglotz::Error);
    // velocity name collision: coordinate "vq" collides with q's velocity
    SystemSpec sys;
    sys.coordinates = {"q", "vq"};
    sys.lagrangian = symexpr::Expr::constant(0.0);
    CHECK_THROWS_AS(sys.validate(), herglotz::Error);
    // too many constraints
    auto bad = make_system({"q"}, "0.5*vq^2", {});
    bad.kind = ConstraintKind::Nonholonomic;
    bad.constraints.push_back({"c", symexpr::Expr::variable("vq")});
    CHECK_THROWS_AS(bad.validate(), herglotz::Error);
}
