#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "herglotz/integrate.hpp"
#include "herglotz/scenario.hpp"

namespace herglotz::cli {

using mechanics::ConstraintKind;
using mechanics::PhaseState;
using scenarios::Scenario;

namespace {

// ---------------------------------------------------------------------------
// flag handling

std::map<std::string, std::string> parse_flags(const std::vector<std::string>& args,
                                               const std::set<std::string>& allowed) {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& flag = args[i];
        if (allowed.count(flag) == 0) throw UsageError("unknown flag '" + flag + "'");
        if (i + 1 >= args.size()) throw UsageError("flag '" + flag + "' needs a value");
        if (out.count(flag)) throw UsageError("flag '" + flag + "' given twice");
        out[flag] = args[++i];
    }
    return out;
}

double flag_number(const std::map<std::string, std::string>& flags, const std::string& name) {
    char* end = nullptr;
    const std::string& text = flags.at(name);
    double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || !std::isfinite(v))
        throw UsageError("bad number '" + text + "' for " + name);
    return v;
}

Scenario resolve_scenario(const std::map<std::string, std::string>& flags) {
    const bool has_builtin = flags.count("--builtin") != 0;
    const bool has_file = flags.count("--scenario") != 0;
    if (has_builtin == has_file)
        throw UsageError("exactly one of --builtin or --scenario is required");
    return has_builtin ? scenarios::builtin(flags.at("--builtin"))
                       : scenarios::load(flags.at("--scenario"));
}

// Switch a scenario to another constraint kind (cmd_compare, --kind). The
// multiplier part of the initial state follows the kind; expected checks are
// regenerated since builtin oracles are kind-specific.
Scenario with_kind(const Scenario& base, ConstraintKind kind) {
    Scenario sc = base;
    sc.system.kind = kind;
    if (kind == ConstraintKind::Vakonomic) {
        if (base.system.kind != ConstraintKind::Vakonomic) {
            sc.initial.nu.assign(sc.system.constraints.size(), 0.0);
            sc.initial.mu = 0.0;
        }
    } else {
        sc.initial.nu.clear();
        sc.initial.mu = 0.0;
    }
    sc.expected_checks.clear();
    sc = scenarios::parse(scenarios::save(sc), base.name + "+" + mechanics::to_string(kind));
    return sc;
}

void apply_overrides(Scenario& sc, const std::map<std::string, std::string>& flags) {
    if (flags.count("--t-end")) sc.config.t_end = flag_number(flags, "--t-end");
    if (flags.count("--dt")) sc.config.dt = flag_number(flags, "--dt");
    if (flags.count("--method")) {
        const std::string& m = flags.at("--method");
        if (m == "rk4")
            sc.config.method = ode::IntegratorConfig::Method::Rk4;
        else if (m == "rk45")
            sc.config.method = ode::IntegratorConfig::Method::Rk45;
        else
            throw UsageError("bad --method '" + m + "' (rk4|rk45)");
    }
    if (flags.count("--kind")) {
        const std::string& k = flags.at("--kind");
        ConstraintKind kind;
        if (k == "none")
            kind = ConstraintKind::None;
        else if (k == "nonholonomic")
            kind = ConstraintKind::Nonholonomic;
        else if (k == "vakonomic")
            kind = ConstraintKind::Vakonomic;
        else
            throw UsageError("bad --kind '" + k + "' (none|nonholonomic|vakonomic)");
        sc = with_kind(sc, kind);
    }
}

// ---------------------------------------------------------------------------
// CSV

std::string csv_render(const Scenario& sc, const ode::Trajectory& traj) {
    const auto& sys = sc.system;
    const bool vak = sys.kind == ConstraintKind::Vakonomic;
    std::ostringstream out;

    out << "t";
    for (const auto& c : sys.coordinates) out << "," << c;
    for (std::size_t i = 0; i < sys.dof(); ++i) out << "," << sys.velocity_name(i);
    out << ",s";
    if (vak) out << ",mu";
    for (const auto& c : sys.constraints)
        out << "," << (vak ? "nu_" : "lambda_") << c.name;
    out << ",E,energy_rate_actual,energy_rate_predicted";
    for (const auto& c : sys.constraints) out << ",res_" << c.name;
    out << "\n";

    const auto num = symexpr::format_double;
    for (const auto& sample : traj.samples) {
        out << num(sample.t);
        for (double q : sample.state.q) out << "," << num(q);
        for (double v : sample.state.v) out << "," << num(v);
        out << "," << num(sample.state.s);
        if (vak) out << "," << num(sample.state.mu);
        if (vak)
            for (double nu : sample.state.nu) out << "," << num(nu);
        else
            for (double lam : sample.multipliers) out << "," << num(lam);
        out << "," << num(sample.energy) << "," << num(sample.energy_rate_actual) << ",";
        if (sample.energy_rate_predicted) out << num(*sample.energy_rate_predicted);
        for (double r : sample.constraint_residuals) out << "," << num(r);
        out << "\n";
    }
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write '" + path + "'");
    f << content;
    if (!f) throw UsageError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// report

void print_state(std::ostream& out, const Scenario& sc, const PhaseState& st) {
    const auto num = symexpr::format_double;
    out << "t = " << num(st.t);
    for (std::size_t i = 0; i < sc.system.dof(); ++i)
        out << ", " << sc.system.coordinates[i] << " = " << num(st.q[i]);
    for (std::size_t i = 0; i < sc.system.dof(); ++i)
        out << ", " << sc.system.velocity_name(i) << " = " << num(st.v[i]);
    out << ", s = " << num(st.s);
    if (sc.system.kind == ConstraintKind::Vakonomic) {
        for (std::size_t i = 0; i < sc.system.constraints.size(); ++i)
            out << ", nu_" << sc.system.constraints[i].name << " = " << num(st.nu[i]);
        out << ", mu = " << num(st.mu);
    }
    out << "\n";
}

bool print_report(std::ostream& out, const Scenario& sc, const ode::Trajectory& traj,
                  double seconds) {
    out << "scenario: " << sc.name << " (kind " << mechanics::to_string(sc.system.kind) << ")\n";
    out << "steps: " << traj.summary.steps;
    if (traj.summary.rejected_steps) out << " (+" << traj.summary.rejected_steps << " rejected)";
    out << ", wall time: ";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f s", seconds);
    out << buf << "\n";
    out << "final state: ";
    print_state(out, sc, traj.back().state);
    out << "max constraint drift: "
        << symexpr::format_double(traj.summary.max_constraint_residual) << "\n";
    out << "max energy-law residual: "
        << symexpr::format_double(traj.summary.max_energy_law_residual) << "\n";
    out << "max pairing residual: "
        << symexpr::format_double(traj.summary.max_pairing_residual) << "\n";

    bool all_passed = true;
    const auto results = scenarios::evaluate_checks(sc, traj);
    if (!results.empty()) out << "checks:\n";
    for (const auto& r : results) {
        all_passed = all_passed && r.passed;
        out << "  " << (r.passed ? "PASS" : "FAIL") << " " << r.name << " (measured "
            << symexpr::format_double(r.measured) << ", tolerance "
            << symexpr::format_double(r.tolerance) << ")\n";
    }
    return all_passed;
}

int to_exit_code(const Error& e, std::ostream& err, int code) {
    err << "error: " << e.what() << "\n";
    return code;
}

}  // namespace

// ---------------------------------------------------------------------------
// run

int cmd_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const auto flags = parse_flags(
            args, {"--scenario", "--builtin", "--out", "--t-end", "--dt", "--method", "--kind"});
        Scenario sc = resolve_scenario(flags);
        apply_overrides(sc, flags);

        const auto cache = mechanics::build_cache(sc.system);
        const auto start = std::chrono::steady_clock::now();
        const ode::Trajectory traj = ode::integrate(sc.system, cache, sc.initial, sc.config);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        if (flags.count("--out")) write_file(flags.at("--out"), csv_render(sc, traj));
        print_report(out, sc, traj, seconds);
        return 0;
    } catch (const UsageError& e) {
        return to_exit_code(e, err, 1);
    } catch (const scenarios::ScenarioError& e) {
        return to_exit_code(e, err, 1);
    } catch (const Error& e) {
        return to_exit_code(e, err, 2);
    }
}

// ---------------------------------------------------------------------------
// check

namespace {

struct CheckOutcome {
    bool failed = false;
    std::string first_failed;

    void report(std::ostream& out, const std::string& name, bool ok, const std::string& detail) {
        out << "  " << (ok ? "PASS" : "FAIL") << " " << name;
        if (!detail.empty()) out << " (" << detail << ")";
        out << "\n";
        if (!ok && !failed) {
            failed = true;
            first_failed = name;
        }
    }

    void skip(std::ostream& out, const std::string& name, const std::string& why) {
        out << "  skip " << name << " (" << why << ")\n";
    }
};

std::string measured_vs(double measured, double tol) {
    return "measured " + symexpr::format_double(measured) + ", tolerance " +
           symexpr::format_double(tol);
}

// Max deviation in (B, sdot, G) across the three field formulations at
// random states; meaningful for systems with an empty constraint list.
double equivalence_deviation(const Scenario& sc, const mechanics::PartialCache& cache,
                             int n_states, int* evaluated) {
    Scenario none = with_kind(sc, ConstraintKind::None);
    Scenario nonh = with_kind(sc, ConstraintKind::Nonholonomic);
    Scenario vak = with_kind(sc, ConstraintKind::Vakonomic);

    std::mt19937_64 rng(20230517u);
    std::uniform_real_distribution<double> delta(-0.5, 0.5);
    double worst = 0.0;
    *evaluated = 0;
    for (int iter = 0; iter < n_states; ++iter) {
        PhaseState st = sc.initial;
        st.nu.clear();
        st.mu = 0.0;
        for (double& q : st.q) q += delta(rng);
        for (double& v : st.v) v += delta(rng);
        st.s += delta(rng);
        try {
            const auto fe_h = mechanics::herglotz_field(none.system, cache, st);
            const auto fe_n = mechanics::nonholonomic_field(nonh.system, cache, st);
            const auto fe_v = mechanics::vakonomic_field(vak.system, cache, st);
            for (std::size_t i = 0; i < st.q.size(); ++i) {
                worst = std::max(worst, std::abs(fe_h.vdot[i] - fe_n.vdot[i]));
                worst = std::max(worst, std::abs(fe_h.vdot[i] - fe_v.vdot[i]));
            }
            worst = std::max({worst, std::abs(fe_h.sdot - fe_n.sdot),
                              std::abs(fe_h.sdot - fe_v.sdot), std::abs(fe_h.vsdot - fe_n.vsdot),
                              std::abs(fe_h.vsdot - fe_v.vsdot)});
            ++*evaluated;
        } catch (const symexpr::EvalDomainError&) {
            // random state left the Lagrangian's domain; try another
        } catch (const mechanics::RegularityFailure&) {
        }
    }
    return worst;
}

double max_tangency_residual(const Scenario& sc, const mechanics::PartialCache& cache,
                             const ode::Trajectory& traj) {
    double worst = 0.0;
    for (const auto& sample : traj.samples) {
        const auto fe = mechanics::eval_field(sc.system, cache, sample.state);
        const symexpr::Binding b = mechanics::state_binding(sc.system, sample.state);
        for (const auto& cp : cache.constraints) {
            double acc = symexpr::eval(cp.dc_ds, b) * fe.sdot;
            for (std::size_t j = 0; j < sc.system.dof(); ++j)
                acc += symexpr::eval(cp.dc_dq[j], b) * sample.state.v[j] +
                       symexpr::eval(cp.dc_dv[j], b) * fe.vdot[j];
            worst = std::max(worst, std::abs(acc));
        }
    }
    return worst;
}

bool constraints_s_independent(const Scenario& sc, const mechanics::PartialCache& cache,
                               const ode::Trajectory& traj) {
    for (std::size_t a = 0; a < cache.constraints.size(); ++a) {
        if (cache.constraints[a].s_independent) continue;
        // not structurally zero; probe along the trajectory
        for (const auto& sample : traj.samples) {
            const symexpr::Binding b = mechanics::state_binding(sc.system, sample.state);
            if (std::abs(symexpr::eval(cache.constraints[a].dc_ds, b)) > 1e-13) return false;
        }
    }
    return true;
}

double order_convergence_ratio(const Scenario& sc, const mechanics::PartialCache& cache) {
    ode::IntegratorConfig cfg = sc.config;
    cfg.method = ode::IntegratorConfig::Method::Rk4;
    cfg.record_every = 1 << 20;  // endpoints only
    auto endpoint = [&](double dt) {
        cfg.dt = dt;
        return ode::integrate(sc.system, cache, sc.initial, cfg).back().state;
    };
    const PhaseState coarse = endpoint(2e-3);
    const PhaseState mid = endpoint(1e-3);
    const PhaseState ref = endpoint(5e-4);
    auto dist = [&](const PhaseState& a, const PhaseState& b) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.q.size(); ++i) {
            m = std::max(m, std::abs(a.q[i] - b.q[i]));
            m = std::max(m, std::abs(a.v[i] - b.v[i]));
        }
        return std::max(m, std::abs(a.s - b.s));
    };
    return dist(coarse, ref) / dist(mid, ref);
}

}  // namespace

int cmd_check(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const auto flags = parse_flags(args, {"--scenario", "--builtin"});
        Scenario sc = resolve_scenario(flags);
        const auto cache = mechanics::build_cache(sc.system);
        out << "checking " << sc.name << " (kind " << mechanics::to_string(sc.system.kind)
            << ")\n";
        CheckOutcome outcome;

        {
            const double e = mechanics::cache_fd_error(sc.system, cache, sc.initial);
            outcome.report(out, "cache_finite_difference", e <= 1e-5, measured_vs(e, 1e-5));
        }

        if (sc.system.constraints.empty()) {
            int evaluated = 0;
            const double dev = equivalence_deviation(sc, cache, 100, &evaluated);
            outcome.report(out, "formulation_equivalence", evaluated >= 50 && dev <= 1e-12,
                           measured_vs(dev, 1e-12) + ", " + std::to_string(evaluated) + " states");
        } else {
            outcome.skip(out, "formulation_equivalence", "system has velocity constraints");
        }

        const ode::Trajectory traj = ode::integrate(sc.system, cache, sc.initial, sc.config);

        if (!sc.system.constraints.empty()) {
            const double tang = max_tangency_residual(sc, cache, traj);
            outcome.report(out, "tangency", tang <= 1e-10, measured_vs(tang, 1e-10));
        } else {
            outcome.skip(out, "tangency", "no velocity constraints");
        }

        outcome.report(out, "contact_pairing", traj.summary.max_pairing_residual <= 1e-12,
                       measured_vs(traj.summary.max_pairing_residual, 1e-12));

        if (sc.system.kind != ConstraintKind::Vakonomic || sc.system.constraints.empty()) {
            outcome.report(out, "energy_rate_law", traj.summary.max_energy_law_residual <= 1e-9,
                           measured_vs(traj.summary.max_energy_law_residual, 1e-9));
        } else {
            outcome.skip(out, "energy_rate_law", "no closed law for constrained vakonomic runs");
        }

        if (sc.system.kind == ConstraintKind::Vakonomic) {
            if (constraints_s_independent(sc, cache, traj)) {
                Scenario probe = sc;
                probe.expected_checks = {{"mu_closed_form",
                                          scenarios::Check::Kind::MuClosedForm, 1e-8, ""}};
                const auto res = scenarios::evaluate_checks(probe, traj).front();
                outcome.report(out, "mu_closed_form", res.passed,
                               measured_vs(res.measured, res.tolerance));
            } else {
                outcome.skip(out, "mu_closed_form", "constraints depend on s");
            }
        }

        for (const auto& res : scenarios::evaluate_checks(sc, traj))
            outcome.report(out, "expected:" + res.name, res.passed,
                           measured_vs(res.measured, res.tolerance));

        {
            const double ratio = order_convergence_ratio(sc, cache);
            outcome.report(out, "integrator_order", ratio >= 12.0 && ratio <= 20.0,
                           "error ratio " + symexpr::format_double(ratio) + ", window [12, 20]");
        }

        if (outcome.failed) {
            err << "check failed: " << outcome.first_failed << "\n";
            return 3;
        }
        out << "all checks passed\n";
        return 0;
    } catch (const UsageError& e) {
        return to_exit_code(e, err, 1);
    } catch (const scenarios::ScenarioError& e) {
        return to_exit_code(e, err, 1);
    } catch (const Error& e) {
        return to_exit_code(e, err, 2);
    }
}

// ---------------------------------------------------------------------------
// compare

int cmd_compare(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const auto flags =
            parse_flags(args, {"--scenario", "--builtin", "--out", "--t-end", "--dt"});
        Scenario base = resolve_scenario(flags);
        if (flags.count("--t-end")) base.config.t_end = flag_number(flags, "--t-end");
        if (flags.count("--dt")) base.config.dt = flag_number(flags, "--dt");
        if (base.system.constraints.empty())
            throw UsageError("compare needs a scenario with velocity constraints");
        if (flags.count("--out") == 0) throw UsageError("compare needs --out <prefix>");
        const std::string prefix = flags.at("--out");

        // fixed-step runs keep both trajectories on one time grid
        Scenario nonh = with_kind(base, ConstraintKind::Nonholonomic);
        Scenario vak = with_kind(base, ConstraintKind::Vakonomic);
        nonh.config.method = ode::IntegratorConfig::Method::Rk4;
        vak.config.method = ode::IntegratorConfig::Method::Rk4;

        const auto cache_n = mechanics::build_cache(nonh.system);
        const auto cache_v = mechanics::build_cache(vak.system);
        const ode::Trajectory tn = ode::integrate(nonh.system, cache_n, nonh.initial, nonh.config);
        const ode::Trajectory tv = ode::integrate(vak.system, cache_v, vak.initial, vak.config);

        if (tn.samples.size() != tv.samples.size())
            throw Error("comparison runs fell out of lockstep");

        std::ostringstream div;
        div << "t,dq_inf,dv_inf,ds\n";
        const auto num = symexpr::format_double;
        for (std::size_t i = 0; i < tn.samples.size(); ++i) {
            const auto& a = tn.samples[i].state;
            const auto& b = tv.samples[i].state;
            double dq = 0.0, dv = 0.0;
            for (std::size_t j = 0; j < a.q.size(); ++j) {
                dq = std::max(dq, std::abs(a.q[j] - b.q[j]));
                dv = std::max(dv, std::abs(a.v[j] - b.v[j]));
            }
            div << num(tn.samples[i].t) << "," << num(dq) << "," << num(dv) << ","
                << num(b.s - a.s) << "\n";
        }

        write_file(prefix + "_nonholonomic.csv", csv_render(nonh, tn));
        write_file(prefix + "_vakonomic.csv", csv_render(vak, tv));
        write_file(prefix + "_divergence.csv", div.str());

        const auto& last = tn.samples.back();
        const auto& lastv = tv.samples.back();
        double dq = 0.0, dvv = 0.0;
        for (std::size_t j = 0; j < last.state.q.size(); ++j) {
            dq = std::max(dq, std::abs(last.state.q[j] - lastv.state.q[j]));
            dvv = std::max(dvv, std::abs(last.state.v[j] - lastv.state.v[j]));
        }
        out << "compared " << base.name << " over [" << num(base.initial.t) << ", "
            << num(base.config.t_end) << "]\n";
        out << "endpoint divergence: dq_inf = " << num(dq) << ", dv_inf = " << num(dvv)
            << ", ds = " << num(lastv.state.s - last.state.s) << "\n";
        out << "wrote " << prefix << "_nonholonomic.csv, " << prefix << "_vakonomic.csv, "
            << prefix << "_divergence.csv\n";
        return 0;
    } catch (const UsageError& e) {
        return to_exit_code(e, err, 1);
    } catch (const scenarios::ScenarioError& e) {
        return to_exit_code(e, err, 1);
    } catch (const Error& e) {
        return to_exit_code(e, err, 2);
    }
}

int cmd_list(std::ostream& out) {
    for (const auto& name : scenarios::builtin_names()) out << name << "\n";
    return 0;
}

int main_impl(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    const std::vector<std::string> args(argv + std::min(argc, 2), argv + argc);
    const std::string cmd = argc > 1 ? argv[1] : "";
    if (cmd == "run") return cmd_run(args, out, err);
    if (cmd == "check") return cmd_check(args, out, err);
    if (cmd == "compare") return cmd_compare(args, out, err);
    if (cmd == "list") return cmd_list(out);
    const bool wanted_help = cmd == "--help" || cmd == "help";
    (wanted_help ? out : err)
        << "usage: herglotz <run|check|compare|list> [flags]\n"
           "  run     --builtin <name>|--scenario <path> [--out <csv>] [--t-end <t>]\n"
           "          [--dt <dt>] [--method rk4|rk45] [--kind none|nonholonomic|vakonomic]\n"
           "  check   --builtin <name>|--scenario <path>\n"
           "  compare --builtin <name>|--scenario <path> --out <prefix> [--t-end] [--dt]\n"
           "  list\n";
    return wanted_help ? 0 : 1;
}

}  // namespace herglotz::cli
