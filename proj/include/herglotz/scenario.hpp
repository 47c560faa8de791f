#pragma once

#include <string>
#include <vector>

#include "herglotz/integrate.hpp"
#include "herglotz/mechanics.hpp"

namespace herglotz::scenarios {

struct ScenarioError : Error {
    ScenarioError(const std::string& what, std::size_t line);
    std::size_t line;  // 1-based; 0 when no line applies
};

/// A named invariant checked against a finished trajectory. Residual kinds
/// are computed by the engine; expression kinds evaluate |expr| over the
/// sample bindings (state, parameters, E, multipliers).
struct Check {
    enum class Kind {
        MaxPairingResidual,    // summary bound
        MaxEnergyLawResidual,  // relative to 1 + |E|
        MaxConstraintDrift,
        MuClosedForm,   // |(1+mu) - (1+mu0) exp(int dL/ds)| at the endpoint
        ExprMaxAbs,     // max over samples
        ExprFinalAbs,   // at the final sample
    };
    std::string name;
    Kind kind;
    double tolerance;
    std::string expr_text;  // Expr kinds only
};

struct Scenario {
    std::string name;
    mechanics::SystemSpec system;
    mechanics::PhaseState initial;
    ode::IntegratorConfig config;
    std::vector<Check> expected_checks;
};

/// Builtin systems: damped_oscillator, rolling_disk, chaplygin_sleigh,
/// rolling_disk_vakonomic.
Scenario builtin(const std::string& name);

const std::vector<std::string>& builtin_names();

/// Parse a scenario file (see the README for the format). Strict: unknown
/// sections or keys are errors; every coordinate and velocity needs an
/// initial value; initial states must satisfy the constraints.
Scenario load(const std::string& path);

Scenario parse(const std::string& text, const std::string& display_name);

/// Canonical rendering: fixed section and key order, numbers with 17
/// significant digits, expressions re-rendered from their parse trees.
/// save(parse(text)) is a fixpoint of parse/save.
std::string save(const Scenario& sc);

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Evaluate every expected check against a finished trajectory. Expression
/// checks see the state variables, parameters, t, E, mu and the multipliers
/// (lambda_<name> or nu_<name>).
std::vector<CheckResult> evaluate_checks(const Scenario& sc, const ode::Trajectory& traj);

}  // namespace herglotz::scenarios
