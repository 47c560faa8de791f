#pragma once

#include <optional>
#include <string>
#include <vector>

#include "herglotz/expr.hpp"
#include "herglotz/linalg.hpp"

namespace herglotz::mechanics {

enum class ConstraintKind { None, Nonholonomic, Vakonomic };

std::string to_string(ConstraintKind k);

/// A parsed dissipative Lagrangian system: coordinates q^1..q^n, Lagrangian
/// L(q, v, s) with parameters bound by name, and an optional set of velocity
/// constraints. Velocities are named "v" + coordinate ("theta" -> "vtheta");
/// "s" is the dissipation variable and "vs" is reserved — the engine
/// eliminates it analytically (sdot = L).
struct SystemSpec {
    struct Constraint {
        std::string name;
        symexpr::Expr expr;
    };

    std::vector<std::string> coordinates;
    symexpr::Expr lagrangian;
    symexpr::Binding params;
    ConstraintKind kind = ConstraintKind::None;
    std::vector<Constraint> constraints;

    std::size_t dof() const { return coordinates.size(); }
    std::string velocity_name(std::size_t i) const { return "v" + coordinates[i]; }

    /// Checks naming rules, 0 <= h < n, and that every expression only
    /// references declared symbols. Throws Error on violation.
    void validate() const;
};

/// Numeric point of the dynamics. `nu` and `mu` are meaningful for the
/// vakonomic kind only (reduced constraint multipliers and the reconstructed
/// dissipative multiplier).
struct PhaseState {
    double t = 0.0;
    std::vector<double> q, v;
    double s = 0.0;
    std::vector<double> nu;
    double mu = 0.0;
};

/// Simplified symbolic partials of L and of every constraint, built once per
/// system. d2*_qv[i][j] stores d(d*/dv_i)/dq_j; d2*_vv is the velocity
/// Hessian block; d2*_sv[i] is d(d*/dv_i)/ds.
struct PartialCache {
    std::vector<symexpr::Expr> dL_dq, dL_dv;
    symexpr::Expr dL_ds;
    std::vector<std::vector<symexpr::Expr>> d2L_qv, d2L_vv;
    std::vector<symexpr::Expr> d2L_sv;

    struct ConstraintPartials {
        symexpr::Expr value;
        std::vector<symexpr::Expr> dc_dq, dc_dv;
        symexpr::Expr dc_ds;
        std::vector<std::vector<symexpr::Expr>> d2c_qv, d2c_vv;
        std::vector<symexpr::Expr> d2c_sv;
        bool s_independent = false;  // dc/ds simplified to the literal 0
    };
    std::vector<ConstraintPartials> constraints;
};

/// One evaluation of the dynamical vector field at a state.
struct FieldEval {
    std::vector<double> qdot;  // equals the state velocities exactly
    std::vector<double> vdot;  // accelerations B
    double sdot = 0.0;         // equals L at the state
    double vsdot = 0.0;        // G, from the tangency of v_s - L
    double lagrangian = 0.0;

    double dissipative_multiplier = 0.0;  // dL/ds, analytic
    std::vector<double> multipliers;      // lambda_alpha, or nudot_beta
    double mudot = 0.0;                   // vakonomic kinds only

    double energy = 0.0;
    double energy_rate_actual = 0.0;
    std::optional<double> energy_rate_predicted;  // absent: constrained vakonomic
    double pairing_residual = 0.0;
    std::vector<double> constraint_residuals;
};

struct DiagnosticsRecord {
    double energy_rate_actual = 0.0;
    std::optional<double> energy_rate_predicted;
    double pairing_residual = 0.0;
    std::vector<double> constraint_residuals;
};

/// The regularity hypothesis failed: the (possibly constraint-augmented)
/// velocity Hessian is singular at this state.
struct RegularityFailure : Error {
    RegularityFailure(const PhaseState& st, const std::string& detail);
    double t;
};

/// rank(dconstraints/dv) dropped below the constraint count at this state.
struct RankDeficientConstraints : Error {
    explicit RankDeficientConstraints(const PhaseState& st);
    double t;
};

/// 1 + mu reached zero; the excluded multiplier value mu = -1.
struct DegenerateMultiplier : Error {
    explicit DegenerateMultiplier(const PhaseState& st);
    double t;
};

symexpr::Binding state_binding(const SystemSpec& sys, const PhaseState& st);

PartialCache build_cache(const SystemSpec& sys);

/// Unconstrained dissipative dynamics: W B = r with
///   r_i = dL/dq_i + (dL/ds)(dL/dv_i) - v_j d(dL/dv_i)/dq_j - L d(dL/dv_i)/ds,
/// sdot = L, and G fixed by tangency of v_s - L.
FieldEval herglotz_field(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st);

/// Constrained dynamics with reaction-force multipliers: the (n+h) system
///   W B + (dphi/dv)^T lambda = r,   dphi/dq v + dphi/dv B + dphi/ds L = 0.
FieldEval nonholonomic_field(const SystemSpec& sys, const PartialCache& cache,
                             const PhaseState& st);

/// Constrained dynamics with variational multipliers in reduced form: the
/// (n+k) system in (B, nudot)
///   (W - nu_b d2psi^b/dvdv) B + (dpsi/dv)^T nudot = rtilde,
///   dpsi/dq v + dpsi/dv B + dpsi/ds L = 0,
/// plus the reconstruction ODE mudot = (1+mu)(dL/ds + nu_b dpsi^b/ds).
FieldEval vakonomic_field(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st);

/// Dispatch on sys.kind.
FieldEval eval_field(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st);

/// Lagrangian energy E = v_i dL/dv_i - L.
double energy(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st);

/// Energy rate along the field (computed algebraically from the cache), the
/// per-kind predicted rate, the contact pairing residual (sdot - dL/dv qdot)
/// + E, and the constraint residual vector.
DiagnosticsRecord diagnostics(const SystemSpec& sys, const PartialCache& cache,
                              const PhaseState& st, const FieldEval& fe);

/// Euler-Lagrange operator components dL/dq_i - d/dt(dL/dv_i) evaluated from
/// the cache at a state with prescribed accelerations (total derivatives
/// expanded with sdot = L).
std::vector<double> el_operator(const SystemSpec& sys, const PartialCache& cache,
                                const PhaseState& st, const std::vector<double>& accel);

/// Largest relative mismatch between every cached partial and a centered
/// finite difference of its parent at `st`.
double cache_fd_error(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st);

}  // namespace herglotz::mechanics
