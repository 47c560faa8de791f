#include "herglotz/mechanics.hpp"

#include <cmath>
#include <set>

namespace herglotz::mechanics {

using symexpr::Binding;
using symexpr::Expr;
using densela::Matrix;

std::string to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::None: return "none";
        case ConstraintKind::Nonholonomic: return "nonholonomic";
        case ConstraintKind::Vakonomic: return "vakonomic";
    }
    return "?";
}

namespace {

std::string render_state(const PhaseState& st) {
    auto list = [](const std::vector<double>& xs) {
        std::string out = "(";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i) out += ", ";
            out += symexpr::format_double(xs[i]);
        }
        return out + ")";
    };
    std::string out = "t=" + symexpr::format_double(st.t) + " q=" + list(st.q) +
                      " v=" + list(st.v) + " s=" + symexpr::format_double(st.s);
    if (!st.nu.empty()) out += " nu=" + list(st.nu);
    return out;
}

}  // namespace

RegularityFailure::RegularityFailure(const PhaseState& st, const std::string& detail)
    : Error("regularity failure at " + render_state(st) + ": " + detail), t(st.t) {}

RankDeficientConstraints::RankDeficientConstraints(const PhaseState& st)
    : Error("constraints rank-deficient in the velocities at " + render_state(st)), t(st.t) {}

DegenerateMultiplier::DegenerateMultiplier(const PhaseState& st)
    : Error("vakonomic multiplier reached the excluded value mu = -1 at " + render_state(st)),
      t(st.t) {}

void SystemSpec::validate() const {
    const std::size_t n = coordinates.size();
    if (n < 1) throw Error("system needs at least one coordinate");

    std::set<std::string> symbols;
    auto declare = [&symbols](const std::string& name, const std::string& role) {
        if (!symexpr::is_identifier(name)) throw Error("invalid " + role + " name '" + name + "'");
        if (name == "vs") throw Error("'vs' is reserved and may not be declared as a " + role);
        if (!symbols.insert(name).second)
            throw Error(role + " name '" + name + "' collides with another symbol");
    };
    symbols.insert("s");
    for (std::size_t i = 0; i < n; ++i) {
        if (coordinates[i] == "s") throw Error("'s' is reserved and may not be a coordinate");
        declare(coordinates[i], "coordinate");
        declare(velocity_name(i), "velocity");
    }
    for (const auto& [name, value] : params.values()) {
        (void)value;
        declare(name, "parameter");
    }

    for (const std::string& v : symexpr::free_variables(lagrangian))
        if (symbols.count(v) == 0) throw Error("lagrangian references undeclared symbol '" + v + "'");

    if (kind == ConstraintKind::None && !constraints.empty())
        throw Error("constraints given but kind is none");
    if (!constraints.empty() && constraints.size() >= n)
        throw Error("constraint count must be smaller than the coordinate count");
    std::set<std::string> cnames;
    for (const auto& c : constraints) {
        if (!symexpr::is_identifier(c.name)) throw Error("invalid constraint name '" + c.name + "'");
        if (!cnames.insert(c.name).second) throw Error("duplicate constraint name '" + c.name + "'");
        for (const std::string& v : symexpr::free_variables(c.expr))
            if (symbols.count(v) == 0)
                throw Error("constraint '" + c.name + "' references undeclared symbol '" + v + "'");
    }
}

Binding state_binding(const SystemSpec& sys, const PhaseState& st) {
    Binding b = sys.params;
    for (std::size_t i = 0; i < sys.dof(); ++i) {
        b.set(sys.coordinates[i], st.q[i]);
        b.set(sys.velocity_name(i), st.v[i]);
    }
    b.set("s", st.s);
    return b;
}

PartialCache build_cache(const SystemSpec& sys) {
    sys.validate();
    const std::size_t n = sys.dof();
    PartialCache cache;

    auto partials_of = [&](const Expr& f, std::vector<Expr>& dq, std::vector<Expr>& dv, Expr& ds,
                           std::vector<std::vector<Expr>>& qv, std::vector<std::vector<Expr>>& vv,
                           std::vector<Expr>& sv) {
        dq.reserve(n);
        dv.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            dq.push_back(symexpr::differentiate(f, sys.coordinates[i]));
            dv.push_back(symexpr::differentiate(f, sys.velocity_name(i)));
        }
        ds = symexpr::differentiate(f, "s");
        qv.assign(n, {});
        vv.assign(n, {});
        sv.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                qv[i].push_back(symexpr::differentiate(dv[i], sys.coordinates[j]));
                vv[i].push_back(symexpr::differentiate(dv[i], sys.velocity_name(j)));
            }
            sv.push_back(symexpr::differentiate(dv[i], "s"));
        }
    };

    partials_of(sys.lagrangian, cache.dL_dq, cache.dL_dv, cache.dL_ds, cache.d2L_qv, cache.d2L_vv,
                cache.d2L_sv);

    cache.constraints.reserve(sys.constraints.size());
    for (const auto& c : sys.constraints) {
        PartialCache::ConstraintPartials cp;
        cp.value = symexpr::simplify(c.expr);
        partials_of(c.expr, cp.dc_dq, cp.dc_dv, cp.dc_ds, cp.d2c_qv, cp.d2c_vv, cp.d2c_sv);
        cp.s_independent = cp.dc_ds.is_constant(0.0);
        cache.constraints.push_back(std::move(cp));
    }
    return cache;
}

namespace {

// Numeric snapshot of every cached partial at one state.
struct NumericContext {
    std::size_t n;
    double L;
    std::vector<double> dL_dq, dL_dv;
    double dL_ds;
    Matrix d2L_qv, W;
    std::vector<double> d2L_sv;

    struct ConstraintValues {
        double value;
        std::vector<double> dc_dq, dc_dv;
        double dc_ds;
        Matrix d2c_qv, d2c_vv;
        std::vector<double> d2c_sv;
    };
    std::vector<ConstraintValues> cons;

    NumericContext(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st)
        : n(sys.dof()), d2L_qv(n, n), W(n, n) {
        const Binding b = state_binding(sys, st);
        L = symexpr::eval(sys.lagrangian, b);
        dL_dq.resize(n);
        dL_dv.resize(n);
        d2L_sv.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            dL_dq[i] = symexpr::eval(cache.dL_dq[i], b);
            dL_dv[i] = symexpr::eval(cache.dL_dv[i], b);
            d2L_sv[i] = symexpr::eval(cache.d2L_sv[i], b);
            for (std::size_t j = 0; j < n; ++j) {
                d2L_qv(i, j) = symexpr::eval(cache.d2L_qv[i][j], b);
                W(i, j) = symexpr::eval(cache.d2L_vv[i][j], b);
            }
        }
        dL_ds = symexpr::eval(cache.dL_ds, b);

        cons.reserve(cache.constraints.size());
        for (const auto& cp : cache.constraints) {
            ConstraintValues cv{0.0, {}, {}, 0.0, Matrix(n, n), Matrix(n, n), {}};
            cv.value = symexpr::eval(cp.value, b);
            cv.dc_dq.resize(n);
            cv.dc_dv.resize(n);
            cv.d2c_sv.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                cv.dc_dq[i] = symexpr::eval(cp.dc_dq[i], b);
                cv.dc_dv[i] = symexpr::eval(cp.dc_dv[i], b);
                cv.d2c_sv[i] = symexpr::eval(cp.d2c_sv[i], b);
                for (std::size_t j = 0; j < n; ++j) {
                    cv.d2c_qv(i, j) = symexpr::eval(cp.d2c_qv[i][j], b);
                    cv.d2c_vv(i, j) = symexpr::eval(cp.d2c_vv[i][j], b);
                }
            }
            cv.dc_ds = symexpr::eval(cp.dc_ds, b);
            cons.push_back(std::move(cv));
        }
    }

    bool finite() const {
        auto ok = [](double x) { return std::isfinite(x); };
        auto all = [&ok](const std::vector<double>& xs) {
            for (double x : xs)
                if (!ok(x)) return false;
            return true;
        };
        auto allm = [&ok](const Matrix& m) {
            for (std::size_t i = 0; i < m.rows(); ++i)
                for (std::size_t j = 0; j < m.cols(); ++j)
                    if (!ok(m(i, j))) return false;
            return true;
        };
        if (!(ok(L) && ok(dL_ds) && all(dL_dq) && all(dL_dv) && all(d2L_sv) && allm(d2L_qv) &&
              allm(W)))
            return false;
        for (const auto& c : cons)
            if (!(ok(c.value) && ok(c.dc_ds) && all(c.dc_dq) && all(c.dc_dv) && all(c.d2c_sv) &&
                  allm(c.d2c_qv) && allm(c.d2c_vv)))
                return false;
        return true;
    }

    // r_i = dL/dq_i + (dL/ds)(dL/dv_i) - v_j d(dL/dv_i)/dq_j - L d(dL/dv_i)/ds
    std::vector<double> herglotz_rhs(const PhaseState& st) const {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = dL_dq[i] + dL_ds * dL_dv[i];
            for (std::size_t j = 0; j < n; ++j) acc -= st.v[j] * d2L_qv(i, j);
            acc -= L * d2L_sv[i];
            r[i] = acc;
        }
        return r;
    }

    double tangency_rhs(std::size_t alpha, const PhaseState& st) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += cons[alpha].dc_dq[j] * st.v[j];
        acc += cons[alpha].dc_ds * L;
        return -acc;
    }
};

void fill_diagnostics(const NumericContext& ctx, const PhaseState& st, FieldEval& fe,
                      ConstraintKind kind) {
    const std::size_t n = ctx.n;

    double e = -ctx.L;
    for (std::size_t i = 0; i < n; ++i) e += st.v[i] * ctx.dL_dv[i];
    fe.energy = e;

    // <dE, X> with dE expanded through the cached second partials
    double rate = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double dE_dqj = -ctx.dL_dq[j];
        double dE_dvj = 0.0;
        for (std::size_t h = 0; h < n; ++h) {
            dE_dqj += st.v[h] * ctx.d2L_qv(h, j);
            dE_dvj += st.v[h] * ctx.W(h, j);
        }
        rate += st.v[j] * dE_dqj + fe.vdot[j] * dE_dvj;
    }
    double dE_ds = -ctx.dL_ds;
    for (std::size_t h = 0; h < n; ++h) dE_ds += st.v[h] * ctx.d2L_sv[h];
    rate += ctx.L * dE_ds;
    fe.energy_rate_actual = rate;

    switch (kind) {
        case ConstraintKind::None:
            fe.energy_rate_predicted = ctx.dL_ds * e;
            break;
        case ConstraintKind::Nonholonomic: {
            double pred = ctx.dL_ds * e;
            for (std::size_t a = 0; a < ctx.cons.size(); ++a) {
                double vdphi = 0.0;
                for (std::size_t i = 0; i < n; ++i) vdphi += st.v[i] * ctx.cons[a].dc_dv[i];
                pred += fe.multipliers[a] * vdphi;
            }
            fe.energy_rate_predicted = pred;
            break;
        }
        case ConstraintKind::Vakonomic:
            // no closed rate law once vakonomic constraints are present
            if (ctx.cons.empty())
                fe.energy_rate_predicted = ctx.dL_ds * e;
            else
                fe.energy_rate_predicted.reset();
            break;
    }

    double pairing = fe.sdot;
    for (std::size_t i = 0; i < n; ++i) pairing -= ctx.dL_dv[i] * fe.qdot[i];
    fe.pairing_residual = pairing + e;

    fe.constraint_residuals.resize(ctx.cons.size());
    for (std::size_t a = 0; a < ctx.cons.size(); ++a)
        fe.constraint_residuals[a] = ctx.cons[a].value;
}

FieldEval finish_field(const NumericContext& ctx, const PhaseState& st, std::vector<double> accel,
                       std::vector<double> multipliers, ConstraintKind kind) {
    const std::size_t n = ctx.n;
    FieldEval fe;
    fe.qdot = st.v;
    fe.vdot = std::move(accel);
    fe.sdot = ctx.L;
    fe.lagrangian = ctx.L;
    fe.dissipative_multiplier = ctx.dL_ds;
    fe.multipliers = std::move(multipliers);

    double g = ctx.L * ctx.dL_ds;
    for (std::size_t i = 0; i < n; ++i) g += st.v[i] * ctx.dL_dq[i] + fe.vdot[i] * ctx.dL_dv[i];
    fe.vsdot = g;

    fill_diagnostics(ctx, st, fe, kind);
    return fe;
}

void check_constraint_rank(const NumericContext& ctx, const PhaseState& st) {
    const std::size_t h = ctx.cons.size();
    if (h == 0) return;
    Matrix c(h, ctx.n);
    for (std::size_t a = 0; a < h; ++a)
        for (std::size_t j = 0; j < ctx.n; ++j) c(a, j) = ctx.cons[a].dc_dv[j];
    if (densela::rank_estimate(c, 1e-9) != h) throw RankDeficientConstraints(st);
}

}  // namespace

FieldEval herglotz_field(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st) {
    NumericContext ctx(sys, cache, st);
    if (!ctx.finite())
        throw RegularityFailure(st, "non-finite values in the assembled system");
    std::vector<double> accel;
    try {
        accel = densela::solve(ctx.W, ctx.herglotz_rhs(st));
    } catch (const densela::SingularMatrixError& e) {
        throw RegularityFailure(st, e.what());
    }
    return finish_field(ctx, st, std::move(accel), {}, ConstraintKind::None);
}

FieldEval nonholonomic_field(const SystemSpec& sys, const PartialCache& cache,
                             const PhaseState& st) {
    NumericContext ctx(sys, cache, st);
    if (!ctx.finite())
        throw RegularityFailure(st, "non-finite values in the assembled system");
    const std::size_t n = ctx.n, h = ctx.cons.size();
    check_constraint_rank(ctx, st);

    Matrix aug(n + h, n + h);
    std::vector<double> rhs(n + h, 0.0);
    const std::vector<double> r = ctx.herglotz_rhs(st);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) aug(i, j) = ctx.W(i, j);
        for (std::size_t a = 0; a < h; ++a) aug(i, n + a) = ctx.cons[a].dc_dv[i];
        rhs[i] = r[i];
    }
    for (std::size_t a = 0; a < h; ++a) {
        for (std::size_t j = 0; j < n; ++j) aug(n + a, j) = ctx.cons[a].dc_dv[j];
        rhs[n + a] = ctx.tangency_rhs(a, st);
    }

    std::vector<double> sol;
    try {
        sol = densela::solve(aug, rhs);
    } catch (const densela::SingularMatrixError& e) {
        throw RegularityFailure(st, e.what());
    }
    std::vector<double> accel(sol.begin(), sol.begin() + n);
    std::vector<double> lambdas(sol.begin() + n, sol.end());
    return finish_field(ctx, st, std::move(accel), std::move(lambdas),
                        ConstraintKind::Nonholonomic);
}

FieldEval vakonomic_field(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st) {
    NumericContext ctx(sys, cache, st);
    if (!ctx.finite())
        throw RegularityFailure(st, "non-finite values in the assembled system");
    const std::size_t n = ctx.n, k = ctx.cons.size();
    if (st.nu.size() != k) throw Error("state carries " + std::to_string(st.nu.size()) +
                                       " multipliers for " + std::to_string(k) + " constraints");
    if (std::abs(1.0 + st.mu) <= 1e-12) throw DegenerateMultiplier(st);
    check_constraint_rank(ctx, st);

    // sigma = dL/ds - nu_a dpsi^a/ds; vanishes into dL/ds when the
    // constraints do not involve s
    double sigma = ctx.dL_ds;
    for (std::size_t b = 0; b < k; ++b) sigma -= st.nu[b] * ctx.cons[b].dc_ds;

    Matrix aug(n + k, n + k);
    std::vector<double> rhs(n + k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double m = ctx.W(i, j);
            for (std::size_t b = 0; b < k; ++b) m -= st.nu[b] * ctx.cons[b].d2c_vv(i, j);
            aug(i, j) = m;
        }
        for (std::size_t b = 0; b < k; ++b) aug(i, n + b) = ctx.cons[b].dc_dv[i];

        double acc = ctx.dL_dq[i];
        for (std::size_t b = 0; b < k; ++b) acc -= st.nu[b] * ctx.cons[b].dc_dq[i];
        for (std::size_t j = 0; j < n; ++j) {
            double mixed = ctx.d2L_qv(i, j);
            for (std::size_t b = 0; b < k; ++b) mixed -= st.nu[b] * ctx.cons[b].d2c_qv(i, j);
            acc -= st.v[j] * mixed;
        }
        double sv = ctx.d2L_sv[i];
        for (std::size_t b = 0; b < k; ++b) sv -= st.nu[b] * ctx.cons[b].d2c_sv[i];
        acc -= ctx.L * sv;
        double dv = ctx.dL_dv[i];
        for (std::size_t b = 0; b < k; ++b) dv -= st.nu[b] * ctx.cons[b].dc_dv[i];
        acc += sigma * dv;
        rhs[i] = acc;
    }
    for (std::size_t b = 0; b < k; ++b) {
        for (std::size_t j = 0; j < n; ++j) aug(n + b, j) = ctx.cons[b].dc_dv[j];
        rhs[n + b] = ctx.tangency_rhs(b, st);
    }

    std::vector<double> sol;
    try {
        sol = densela::solve(aug, rhs);
    } catch (const densela::SingularMatrixError& e) {
        throw RegularityFailure(st, e.what());
    }
    std::vector<double> accel(sol.begin(), sol.begin() + n);
    std::vector<double> nudot(sol.begin() + n, sol.end());

    double mudot_rate = ctx.dL_ds;
    for (std::size_t b = 0; b < k; ++b) mudot_rate += st.nu[b] * ctx.cons[b].dc_ds;
    FieldEval fe =
        finish_field(ctx, st, std::move(accel), std::move(nudot), ConstraintKind::Vakonomic);
    fe.mudot = (1.0 + st.mu) * mudot_rate;
    return fe;
}

FieldEval eval_field(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st) {
    switch (sys.kind) {
        case ConstraintKind::None: return herglotz_field(sys, cache, st);
        case ConstraintKind::Nonholonomic: return nonholonomic_field(sys, cache, st);
        case ConstraintKind::Vakonomic: return vakonomic_field(sys, cache, st);
    }
    throw Error("unknown constraint kind");
}

double energy(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st) {
    const Binding b = state_binding(sys, st);
    double e = -symexpr::eval(sys.lagrangian, b);
    for (std::size_t i = 0; i < sys.dof(); ++i)
        e += st.v[i] * symexpr::eval(cache.dL_dv[i], b);
    return e;
}

DiagnosticsRecord diagnostics(const SystemSpec& sys, const PartialCache& cache,
                              const PhaseState& st, const FieldEval& fe) {
    NumericContext ctx(sys, cache, st);
    FieldEval scratch = fe;
    fill_diagnostics(ctx, st, scratch, sys.kind);
    DiagnosticsRecord rec;
    rec.energy_rate_actual = scratch.energy_rate_actual;
    rec.energy_rate_predicted = scratch.energy_rate_predicted;
    rec.pairing_residual = scratch.pairing_residual;
    rec.constraint_residuals = std::move(scratch.constraint_residuals);
    return rec;
}

std::vector<double> el_operator(const SystemSpec& sys, const PartialCache& cache,
                                const PhaseState& st, const std::vector<double>& accel) {
    NumericContext ctx(sys, cache, st);
    std::vector<double> out(ctx.n);
    for (std::size_t i = 0; i < ctx.n; ++i) {
        double ddt = ctx.L * ctx.d2L_sv[i];
        for (std::size_t j = 0; j < ctx.n; ++j)
            ddt += st.v[j] * ctx.d2L_qv(i, j) + accel[j] * ctx.W(i, j);
        out[i] = ctx.dL_dq[i] - ddt;
    }
    return out;
}

namespace {

double fd_error(const Expr& parent, const Expr& child, const SystemSpec& sys, const PhaseState& st,
                const std::string& var) {
    Binding b = state_binding(sys, st);
    const double x = b.get(var);
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    b.set(var, x + h);
    const double fp = symexpr::eval(parent, b);
    b.set(var, x - h);
    const double fm = symexpr::eval(parent, b);
    b.set(var, x);
    const double fd = (fp - fm) / (2.0 * h);
    const double exact = symexpr::eval(child, b);
    return std::abs(exact - fd) / (1.0 + std::abs(exact));
}

}  // namespace

double cache_fd_error(const SystemSpec& sys, const PartialCache& cache, const PhaseState& st) {
    const std::size_t n = sys.dof();
    double worst = 0.0;
    auto track = [&worst](double e) { worst = std::max(worst, e); };

    auto check_block = [&](const Expr& f, const std::vector<Expr>& dq, const std::vector<Expr>& dv,
                           const Expr& ds, const std::vector<std::vector<Expr>>& qv,
                           const std::vector<std::vector<Expr>>& vv, const std::vector<Expr>& sv) {
        for (std::size_t i = 0; i < n; ++i) {
            track(fd_error(f, dq[i], sys, st, sys.coordinates[i]));
            track(fd_error(f, dv[i], sys, st, sys.velocity_name(i)));
            for (std::size_t j = 0; j < n; ++j) {
                track(fd_error(dv[i], qv[i][j], sys, st, sys.coordinates[j]));
                track(fd_error(dv[i], vv[i][j], sys, st, sys.velocity_name(j)));
            }
            track(fd_error(dv[i], sv[i], sys, st, "s"));
        }
        track(fd_error(f, ds, sys, st, "s"));
    };

    check_block(sys.lagrangian, cache.dL_dq, cache.dL_dv, cache.dL_ds, cache.d2L_qv, cache.d2L_vv,
                cache.d2L_sv);
    for (std::size_t c = 0; c < sys.constraints.size(); ++c) {
        const auto& cp = cache.constraints[c];
        check_block(sys.constraints[c].expr, cp.dc_dq, cp.dc_dv, cp.dc_ds, cp.d2c_qv, cp.d2c_vv,
                    cp.d2c_sv);
    }
    return worst;
}

}  // namespace herglotz::mechanics
