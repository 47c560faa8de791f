#include "herglotz/integrate.hpp"

#include <algorithm>
#include <cmath>

namespace herglotz::ode {

using mechanics::FieldEval;
using mechanics::PartialCache;
using mechanics::PhaseState;
using mechanics::SystemSpec;

void IntegratorConfig::validate() const {
    if (!(dt > 0.0)) throw Error("integrator: dt must be positive");
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw Error("integrator: tolerances must be positive");
    if (!(dt_min > 0.0) || !(dt_max >= dt_min)) throw Error("integrator: bad step bounds");
    if (record_every < 1) throw Error("integrator: record_every must be >= 1");
}

namespace {

std::size_t packed_size(const SystemSpec& sys, const PhaseState& st) {
    std::size_t m = 2 * sys.dof() + 1;
    if (sys.kind == mechanics::ConstraintKind::Vakonomic) m += st.nu.size() + 1;
    return m;
}

void pack(const SystemSpec& sys, const PhaseState& st, std::vector<double>& y) {
    const std::size_t n = sys.dof();
    y.resize(packed_size(sys, st));
    std::copy(st.q.begin(), st.q.end(), y.begin());
    std::copy(st.v.begin(), st.v.end(), y.begin() + n);
    y[2 * n] = st.s;
    if (sys.kind == mechanics::ConstraintKind::Vakonomic) {
        std::copy(st.nu.begin(), st.nu.end(), y.begin() + 2 * n + 1);
        y.back() = st.mu;
    }
}

PhaseState unpack(const SystemSpec& sys, const std::vector<double>& y, double t,
                  std::size_t n_nu) {
    const std::size_t n = sys.dof();
    PhaseState st;
    st.t = t;
    st.q.assign(y.begin(), y.begin() + n);
    st.v.assign(y.begin() + n, y.begin() + 2 * n);
    st.s = y[2 * n];
    if (sys.kind == mechanics::ConstraintKind::Vakonomic) {
        st.nu.assign(y.begin() + 2 * n + 1, y.begin() + 2 * n + 1 + n_nu);
        st.mu = y.back();
    }
    return st;
}

void pack_derivative(const SystemSpec& sys, const FieldEval& fe, std::vector<double>& dy) {
    const std::size_t n = sys.dof();
    dy.resize(2 * n + 1 + (sys.kind == mechanics::ConstraintKind::Vakonomic
                               ? fe.multipliers.size() + 1
                               : 0));
    std::copy(fe.qdot.begin(), fe.qdot.end(), dy.begin());
    std::copy(fe.vdot.begin(), fe.vdot.end(), dy.begin() + n);
    dy[2 * n] = fe.sdot;
    if (sys.kind == mechanics::ConstraintKind::Vakonomic) {
        std::copy(fe.multipliers.begin(), fe.multipliers.end(), dy.begin() + 2 * n + 1);
        dy.back() = fe.mudot;
    }
}

struct Stepper {
    const SystemSpec& sys;
    const PartialCache& cache;
    std::size_t n_nu;

    std::vector<double> derivative(const std::vector<double>& y, double t) const {
        const PhaseState st = unpack(sys, y, t, n_nu);
        std::vector<double> dy;
        pack_derivative(sys, mechanics::eval_field(sys, cache, st), dy);
        return dy;
    }

    // k1 is the field at the step's start state, shared with monitoring.
    std::vector<double> rk4(const std::vector<double>& y, double t,
                            const std::vector<double>& k1, double dt) const {
        const std::size_t m = y.size();
        std::vector<double> tmp(m), out(m);
        for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
        const std::vector<double> k2 = derivative(tmp, t + 0.5 * dt);
        for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
        const std::vector<double> k3 = derivative(tmp, t + 0.5 * dt);
        for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + dt * k3[i];
        const std::vector<double> k4 = derivative(tmp, t + dt);
        for (std::size_t i = 0; i < m; ++i)
            out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        return out;
    }

    // Fehlberg embedded 4(5) pair; advances the 4th-order solution and
    // returns the max-norm of the difference against the 5th-order one.
    std::vector<double> rkf45(const std::vector<double>& y, double t,
                              const std::vector<double>& k1, double dt, double& err) const {
        static const double a2[] = {1.0 / 4};
        static const double a3[] = {3.0 / 32, 9.0 / 32};
        static const double a4[] = {1932.0 / 2197, -7200.0 / 2197, 7296.0 / 2197};
        static const double a5[] = {439.0 / 216, -8.0, 3680.0 / 513, -845.0 / 4104};
        static const double a6[] = {-8.0 / 27, 2.0, -3544.0 / 2565, 1859.0 / 4104, -11.0 / 40};
        static const double c[] = {0.0, 1.0 / 4, 3.0 / 8, 12.0 / 13, 1.0, 1.0 / 2};
        static const double b4[] = {25.0 / 216, 0.0, 1408.0 / 2565, 2197.0 / 4104, -1.0 / 5, 0.0};
        static const double b5[] = {16.0 / 135,      0.0,       6656.0 / 12825,
                                    28561.0 / 56430, -9.0 / 50, 2.0 / 55};

        const std::size_t m = y.size();
        std::vector<std::vector<double>> k(6);
        k[0] = k1;
        std::vector<double> tmp(m);
        const double* rows[] = {nullptr, a2, a3, a4, a5, a6};
        for (int s = 1; s < 6; ++s) {
            for (std::size_t i = 0; i < m; ++i) {
                double acc = y[i];
                for (int j = 0; j < s; ++j) acc += dt * rows[s][j] * k[j][i];
                tmp[i] = acc;
            }
            k[s] = derivative(tmp, t + c[s] * dt);
        }
        std::vector<double> out(m);
        err = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double y4 = y[i], y5 = y[i];
            for (int s = 0; s < 6; ++s) {
                y4 += dt * b4[s] * k[s][i];
                y5 += dt * b5[s] * k[s][i];
            }
            out[i] = y4;
            err = std::max(err, std::abs(y5 - y4));
        }
        return out;
    }
};

double max_constraint_residual(const FieldEval& fe) {
    double m = 0.0;
    for (double r : fe.constraint_residuals) m = std::max(m, std::abs(r));
    return m;
}

void check_admissible(const FieldEval& fe, double tol) {
    const double r = max_constraint_residual(fe);
    if (r > tol)
        throw AdmissibilityError("initial state violates the constraints: residual " +
                                 symexpr::format_double(r) + " exceeds " +
                                 symexpr::format_double(tol));
}

// One Newton correction of the velocities onto the constraint manifold:
// v += (dphi/dv)^T x with (dphi/dv)(dphi/dv)^T x = -phi. Exact for
// velocity-affine constraints.
void project_velocities(const SystemSpec& sys, const PartialCache& cache, PhaseState& st) {
    const std::size_t h = sys.constraints.size();
    if (h == 0) return;
    const std::size_t n = sys.dof();
    const symexpr::Binding b = mechanics::state_binding(sys, st);
    densela::Matrix jac(h, n);
    std::vector<double> phi(h);
    for (std::size_t a = 0; a < h; ++a) {
        phi[a] = -symexpr::eval(cache.constraints[a].value, b);
        for (std::size_t j = 0; j < n; ++j)
            jac(a, j) = symexpr::eval(cache.constraints[a].dc_dv[j], b);
    }
    densela::Matrix gram(h, h);
    for (std::size_t a = 0; a < h; ++a)
        for (std::size_t bb = 0; bb < h; ++bb) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += jac(a, j) * jac(bb, j);
            gram(a, bb) = acc;
        }
    const std::vector<double> x = densela::solve(gram, phi);
    for (std::size_t j = 0; j < n; ++j) {
        double dv = 0.0;
        for (std::size_t a = 0; a < h; ++a) dv += jac(a, j) * x[a];
        st.v[j] += dv;
    }
}

}  // namespace

PhaseState step_rk4(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st,
                    double dt) {
    Stepper stepper{sys, cache, st.nu.size()};
    std::vector<double> y;
    pack(sys, st, y);
    const std::vector<double> k1 = stepper.derivative(y, st.t);
    return unpack(sys, stepper.rk4(y, st.t, k1, dt), st.t + dt, st.nu.size());
}

Trajectory integrate(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st0,
                     const IntegratorConfig& cfg) {
    cfg.validate();
    if (!(cfg.t_end >= st0.t)) throw Error("integrator: t_end precedes the initial time");

    Trajectory traj;
    Stepper stepper{sys, cache, st0.nu.size()};

    PhaseState st = st0;
    FieldEval fe = mechanics::eval_field(sys, cache, st);
    check_admissible(fe, cfg.admissibility_tol);

    auto observe = [&traj](const FieldEval& f) {
        auto& s = traj.summary;
        s.max_constraint_residual = std::max(s.max_constraint_residual, max_constraint_residual(f));
        s.max_pairing_residual = std::max(s.max_pairing_residual, std::abs(f.pairing_residual));
        if (f.energy_rate_predicted)
            s.max_energy_law_residual =
                std::max(s.max_energy_law_residual,
                         std::abs(f.energy_rate_actual - *f.energy_rate_predicted) /
                             (1.0 + std::abs(f.energy)));
    };
    auto record = [&traj](const PhaseState& state, const FieldEval& f) {
        traj.samples.push_back({state.t, state, f.energy, f.lagrangian, f.dissipative_multiplier,
                                f.multipliers, f.energy_rate_actual, f.energy_rate_predicted,
                                f.pairing_residual, f.constraint_residuals});
    };

    observe(fe);
    record(st, fe);

    const double t0 = st0.t;
    std::vector<double> y, k1;
    pack(sys, st, y);

    if (cfg.method == IntegratorConfig::Method::Rk4) {
        for (std::size_t i = 0; st.t < cfg.t_end; ++i) {
            // march on the grid t0 + k*dt, snapping the last step onto t_end
            double target = t0 + (i + 1) * cfg.dt;
            if (target >= cfg.t_end || std::abs(target - cfg.t_end) <= 1e-9 * cfg.dt)
                target = cfg.t_end;
            const double dt = target - st.t;
            pack_derivative(sys, fe, k1);
            y = stepper.rk4(y, st.t, k1, dt);
            st = unpack(sys, y, target, st0.nu.size());
            if (cfg.project_velocities) {
                project_velocities(sys, cache, st);
                pack(sys, st, y);
            }
            fe = mechanics::eval_field(sys, cache, st);
            ++traj.summary.steps;
            observe(fe);
            if (traj.summary.steps % static_cast<std::size_t>(cfg.record_every) == 0 &&
                st.t < cfg.t_end)
                record(st, fe);
        }
    } else {
        double dt = std::min(cfg.dt, cfg.dt_max);
        while (st.t < cfg.t_end) {
            dt = std::min(dt, cfg.t_end - st.t);
            pack_derivative(sys, fe, k1);
            double err = 0.0;
            std::vector<double> y_next = stepper.rkf45(y, st.t, k1, dt, err);
            double scale = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i)
                scale = std::max(scale, std::abs(y[i]));
            const double tol = cfg.abs_tol + cfg.rel_tol * scale;
            if (err <= tol) {
                double t_next = st.t + dt;
                if (std::abs(t_next - cfg.t_end) <= 1e-9 * dt) t_next = cfg.t_end;
                y = std::move(y_next);
                st = unpack(sys, y, t_next, st0.nu.size());
                if (cfg.project_velocities) {
                    project_velocities(sys, cache, st);
                    pack(sys, st, y);
                }
                fe = mechanics::eval_field(sys, cache, st);
                ++traj.summary.steps;
                observe(fe);
                if (traj.summary.steps % static_cast<std::size_t>(cfg.record_every) == 0 &&
                    st.t < cfg.t_end)
                    record(st, fe);
            } else {
                ++traj.summary.rejected_steps;
                if (dt <= cfg.dt_min * (1.0 + 1e-12))
                    throw StepFailure("rk45 cannot meet the tolerance at dt_min = " +
                                      symexpr::format_double(cfg.dt_min) + " (t = " +
                                      symexpr::format_double(st.t) + ")");
            }
            const double factor =
                err > 0.0 ? std::clamp(0.9 * std::pow(tol / err, 0.2), 0.2, 5.0) : 5.0;
            dt = std::clamp(dt * factor, cfg.dt_min, cfg.dt_max);
        }
    }

    if (traj.samples.back().t < st.t) record(st, fe);
    return traj;
}

}  // namespace herglotz::ode
