#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "herglotz/mechanics.hpp"

namespace herglotz::ode {

struct StepFailure : Error {
    using Error::Error;
};

struct AdmissibilityError : Error {
    using Error::Error;
};

struct IntegratorConfig {
    enum class Method { Rk4, Rk45 };

    Method method = Method::Rk4;
    double dt = 1e-3;  // fixed step (rk4) or initial step (rk45)
    double t_end = 1.0;
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double dt_min = 1e-12;
    double dt_max = 1e-1;
    int record_every = 10;
    double admissibility_tol = 1e-9;
    // Off for every acceptance run; drift is monitored, not corrected. Useful
    // for long runs: projects velocities back onto the constraint manifold
    // after each accepted step.
    bool project_velocities = false;

    void validate() const;
};

struct TrajectorySample {
    double t;
    mechanics::PhaseState state;
    double energy;
    double lagrangian;
    double dissipative_multiplier;    // dL/ds at the sample
    std::vector<double> multipliers;  // lambda_alpha or nudot per kind
    double energy_rate_actual;
    std::optional<double> energy_rate_predicted;
    double pairing_residual;
    std::vector<double> constraint_residuals;
};

struct TrajectorySummary {
    double max_constraint_residual = 0.0;
    double max_energy_law_residual = 0.0;  // |actual - predicted| / (1 + |E|)
    double max_pairing_residual = 0.0;
    std::size_t steps = 0;
    std::size_t rejected_steps = 0;
};

/// Time-ordered samples plus drift statistics gathered at every accepted step
/// (not just the recorded ones).
struct Trajectory {
    std::vector<TrajectorySample> samples;
    TrajectorySummary summary;

    const TrajectorySample& front() const { return samples.front(); }
    const TrajectorySample& back() const { return samples.back(); }
};

/// One classical Runge-Kutta step of (q, v, s [, nu, mu]).
mechanics::PhaseState step_rk4(const mechanics::SystemSpec& sys,
                               const mechanics::PartialCache& cache,
                               const mechanics::PhaseState& st, double dt);

/// Advance st0 to cfg.t_end, recording every cfg.record_every accepted steps
/// plus the final state. The initial state must satisfy the constraints to
/// cfg.admissibility_tol.
Trajectory integrate(const mechanics::SystemSpec& sys, const mechanics::PartialCache& cache,
                     const mechanics::PhaseState& st0, const IntegratorConfig& cfg);

}  // namespace herglotz::ode
