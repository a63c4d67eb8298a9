#include "deqann/fixedpoint.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <utility>

namespace deqann {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

DenseTensor call_map(const FixedPointMap& f, const std::vector<double>& z_flat,
                     const DenseTensor& x, const std::vector<std::size_t>& shape) {
    DenseTensor z(shape, z_flat);
    DenseTensor out = f(z, x);
    if (!out.same_shape(z)) {
        throw ShapeError("fixed-point map changed shape " + z.shape_string() + " to " +
                         out.shape_string());
    }
    return out;
}

}  // namespace

void SolverConfig::validate() const {
    if (m < 1) throw ConfigError("solver window m must be >= 1");
    if (max_iter < 2) throw ConfigError("solver max_iter must be >= 2");
    if (!(beta > 0.0) || beta > 1.0) throw ConfigError("solver beta must lie in (0, 1]");
    if (!(tol > 0.0)) throw ConfigError("solver tol must be positive");
    if (lambda < 0.0) throw ConfigError("solver lambda must be nonnegative");
}

void SolverTrace::record(double residual, double elapsed_seconds) {
    residuals.push_back(residual);
    times.push_back(elapsed_seconds);
    iterations = residuals.size();
}

void AndersonState::init(std::size_t window, std::size_t length) {
    m = window;
    k = 0;
    X.assign(m, std::vector<double>(length, 0.0));
    F.assign(m, std::vector<double>(length, 0.0));
}

void AndersonState::push(std::vector<double> z, std::vector<double> fz) {
    const std::size_t slot = k % m;
    X[slot] = std::move(z);
    F[slot] = std::move(fz);
    ++k;
}

const std::vector<double>& AndersonState::z_recent(std::size_t j) const {
    return X[(k - 1 - j) % m];
}

const std::vector<double>& AndersonState::f_recent(std::size_t j) const {
    return F[(k - 1 - j) % m];
}

double relative_residual(const std::vector<double>& fz, const std::vector<double>& z,
                         double lambda) {
    if (fz.size() != z.size()) {
        throw ShapeError("relative_residual operands differ in size: " +
                         std::to_string(fz.size()) + " vs " + std::to_string(z.size()));
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fz.size(); ++i) {
        const double d = fz[i] - z[i];
        num += d * d;
        den += fz[i] * fz[i];
    }
    return std::sqrt(num) / (std::sqrt(den) + lambda);
}

double relative_residual(const DenseTensor& fz, const DenseTensor& z, double lambda) {
    if (!fz.same_shape(z)) {
        throw ShapeError("relative_residual shape mismatch: " + fz.shape_string() + " vs " +
                         z.shape_string());
    }
    return relative_residual(fz.raw(), z.raw(), lambda);
}

std::pair<DenseTensor, SolverTrace> forward_iterate(const FixedPointMap& f, const DenseTensor& x,
                                                    const DenseTensor& z0,
                                                    const SolverConfig& cfg) {
    cfg.validate();
    const auto t0 = Clock::now();
    SolverTrace trace;
    std::vector<double> z = z0.raw();
    const auto& shape = z0.shape();
    for (std::size_t k = 1; k <= cfg.max_iter; ++k) {
        std::vector<double> fz = call_map(f, z, x, shape).raw();
        ++trace.f_evals;
        if (!all_finite(fz)) {
            throw DivergenceError("forward iteration produced non-finite values at iteration " +
                                      std::to_string(k),
                                  trace);
        }
        const double res = relative_residual(fz, z, cfg.lambda);
        trace.record(res, seconds_since(t0));
        if (res < cfg.tol) {
            trace.converged = true;
            break;
        }
        // On the final pass keep z as the measured iterate, so the returned
        // value is always the one residuals.back() certifies.
        if (k < cfg.max_iter) z = std::move(fz);
    }
    return {DenseTensor(shape, std::move(z)), trace};
}

DenseTensor build_difference_matrix(const AndersonState& state, std::size_t n_cols) {
    if (n_cols == 0 || n_cols > state.window_size()) {
        throw ShapeError("difference matrix needs 1.." + std::to_string(state.window_size()) +
                         " columns, got " + std::to_string(n_cols));
    }
    const std::size_t length = state.z_recent(0).size();
    DenseTensor g({length, n_cols});
    for (std::size_t j = 0; j < n_cols; ++j) {
        const auto& zj = state.z_recent(j);
        const auto& fj = state.f_recent(j);
        for (std::size_t i = 0; i < length; ++i) g[i * n_cols + j] = fj[i] - zj[i];
    }
    return g;
}

std::pair<std::vector<double>, double> solve_alpha(const DenseTensor& G, double lambda) {
    if (G.ndim() != 2 || G.dim(1) == 0) {
        throw ShapeError("solve_alpha requires a matrix with >= 1 column, got " +
                         G.shape_string());
    }
    const std::size_t rows = G.dim(0), n = G.dim(1);

    DenseTensor kkt({n + 1, n + 1});
    for (std::size_t j = 0; j < n; ++j) {
        kkt[0 * (n + 1) + (j + 1)] = 1.0;
        kkt[(j + 1) * (n + 1) + 0] = 1.0;
    }
    // H = GᵀG + λI, filled in place.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < rows; ++r) acc += G[r * n + i] * G[r * n + j];
            if (i == j) acc += lambda;
            kkt[(i + 1) * (n + 1) + (j + 1)] = acc;
            kkt[(j + 1) * (n + 1) + (i + 1)] = acc;
        }
    }

    DenseTensor rhs({n + 1});
    rhs[0] = 1.0;
    DenseTensor sol = solve_dense(kkt, rhs);

    std::vector<double> alpha(n);
    for (std::size_t j = 0; j < n; ++j) alpha[j] = sol[j + 1];
    return {std::move(alpha), sol[0]};
}

std::vector<double> anderson_update(const AndersonState& state, const std::vector<double>& alpha,
                                    double beta) {
    const std::size_t n = alpha.size();
    if (n == 0 || n > state.window_size()) {
        throw ShapeError("anderson_update alpha length " + std::to_string(n) +
                         " exceeds window " + std::to_string(state.window_size()));
    }
    const std::size_t length = state.z_recent(0).size();
    std::vector<double> out(length, 0.0);
    if (beta == 1.0) {
        // Pure f-mixing; keeping this branch free of the (1-β) term makes the
        // window-1 update bit-identical to a forward step.
        for (std::size_t j = 0; j < n; ++j) {
            const auto& fj = state.f_recent(j);
            const double a = alpha[j];
            for (std::size_t i = 0; i < length; ++i) out[i] += a * fj[i];
        }
        return out;
    }
    for (std::size_t j = 0; j < n; ++j) {
        const auto& zj = state.z_recent(j);
        const auto& fj = state.f_recent(j);
        const double az = (1.0 - beta) * alpha[j];
        const double af = beta * alpha[j];
        for (std::size_t i = 0; i < length; ++i) out[i] += az * zj[i] + af * fj[i];
    }
    return out;
}

std::pair<DenseTensor, SolverTrace> anderson_solve(const FixedPointMap& f, const DenseTensor& x,
                                                   const DenseTensor& z0,
                                                   const SolverConfig& cfg) {
    cfg.validate();
    const auto t0 = Clock::now();
    SolverTrace trace;
    const auto& shape = z0.shape();

    AndersonState state;
    state.init(cfg.m, z0.size());

    // Two seeding evaluations: (z0, f(z0)) and (f(z0), f(f(z0))).
    std::vector<double> z = z0.raw();
    std::vector<double> fz = call_map(f, z, x, shape).raw();
    ++trace.f_evals;
    if (!all_finite(fz)) throw DivergenceError("non-finite seed evaluation", trace);
    state.push(std::move(z), fz);
    z = std::move(fz);
    fz = call_map(f, z, x, shape).raw();
    ++trace.f_evals;
    if (!all_finite(fz)) throw DivergenceError("non-finite seed evaluation", trace);
    state.push(std::move(z), std::move(fz));

    for (std::size_t k = 2; k <= cfg.max_iter; ++k) {
        const std::size_t n = state.window_size();
        DenseTensor g = build_difference_matrix(state, n);
        auto [alpha, nu] = solve_alpha(g, cfg.lambda);
        (void)nu;
        std::vector<double> z_new = anderson_update(state, alpha, cfg.beta);
        if (!all_finite(z_new)) {
            throw DivergenceError("non-finite extrapolate at iteration " + std::to_string(k),
                                  trace);
        }
        std::vector<double> fz_new = call_map(f, z_new, x, shape).raw();
        ++trace.f_evals;
        if (!all_finite(fz_new)) {
            throw DivergenceError("map produced non-finite values at iteration " +
                                      std::to_string(k),
                                  trace);
        }
        const double res = relative_residual(fz_new, z_new, cfg.lambda);
        state.push(std::move(z_new), std::move(fz_new));
        trace.record(res, seconds_since(t0));
        if (res < cfg.tol) {
            trace.converged = true;
            break;
        }
    }
    return {DenseTensor(shape, state.z_recent(0)), trace};
}

void write_trace_csv(const SolverTrace& trace, std::ostream& out) {
    out << "iter,residual,elapsed_seconds\n";
    char buf[96];
    for (std::size_t i = 0; i < trace.residuals.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i + 1, trace.residuals[i],
                      trace.times[i]);
        out << buf;
    }
}

}  // namespace deqann
