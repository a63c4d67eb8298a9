#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "deqann/errors.hpp"
#include "deqann/tensor.hpp"

namespace deqann {

// z_next = f(z, x); must preserve the shape of z.
using FixedPointMap = std::function<DenseTensor(const DenseTensor&, const DenseTensor&)>;

struct SolverConfig {
    std::size_t m = 5;        // extrapolation window
    double lambda = 1e-5;     // regularizer, also the residual-denominator guard
    double beta = 1.0;        // mixing in (0, 1]
    double tol = 1e-2;        // relative-residual stop
    std::size_t max_iter = 1000;

    void validate() const;
};

struct SolverTrace {
    std::vector<double> residuals;  // one entry per executed loop iteration
    std::vector<double> times;      // cumulative wall seconds, same length
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t f_evals = 0;  // includes seed evaluations not reflected in residuals

    void record(double residual, double elapsed_seconds);
};

// A solve hit non-finite values; `trace` holds everything recorded before the blowup.
struct DivergenceError : Error {
    SolverTrace trace;
    DivergenceError(const std::string& msg, SolverTrace t) : Error(msg), trace(std::move(t)) {}
};

// Ring buffers of the last min(k, m) iterates and their images under f,
// both flattened. Slot for iterate k is k mod m; k counts every iterate
// ever stored, so the buffers hold iterates k-1, k-2, ..., k-min(k,m).
struct AndersonState {
    std::size_t m = 0;
    std::size_t k = 0;
    std::vector<std::vector<double>> X;
    std::vector<std::vector<double>> F;

    void init(std::size_t window, std::size_t length);
    void push(std::vector<double> z, std::vector<double> fz);
    std::size_t window_size() const { return k < m ? k : m; }
    // j = 0 is the most recent iterate.
    const std::vector<double>& z_recent(std::size_t j) const;
    const std::vector<double>& f_recent(std::size_t j) const;
};

// ‖fz − z‖₂ / (‖fz‖₂ + lambda)
double relative_residual(const std::vector<double>& fz, const std::vector<double>& z,
                         double lambda);
double relative_residual(const DenseTensor& fz, const DenseTensor& z, double lambda);

// Plain iteration z ← f(z, x) until the relative residual drops below cfg.tol.
std::pair<DenseTensor, SolverTrace> forward_iterate(const FixedPointMap& f, const DenseTensor& x,
                                                    const DenseTensor& z0,
                                                    const SolverConfig& cfg);

// G with column j = f_recent(j) − z_recent(j), most recent first.
DenseTensor build_difference_matrix(const AndersonState& state, std::size_t n_cols);

// Minimizes ‖Gα‖² + λ‖α‖² subject to 1ᵀα = 1 through the bordered system
// [0 1ᵀ; 1 H][ν; α] = [1; 0] with H = GᵀG + λI. Returns (α, ν).
std::pair<std::vector<double>, double> solve_alpha(const DenseTensor& G, double lambda);

// (1−β)·Σ αⱼ z_recent(j) + β·Σ αⱼ f_recent(j); pairing matches
// build_difference_matrix column order.
std::vector<double> anderson_update(const AndersonState& state, const std::vector<double>& alpha,
                                    double beta);

// Windowed extrapolation: two seeding evaluations of f, then per iteration
// build G, solve for α, mix, evaluate f, check the residual.
std::pair<DenseTensor, SolverTrace> anderson_solve(const FixedPointMap& f, const DenseTensor& x,
                                                   const DenseTensor& z0, const SolverConfig& cfg);

// Header `iter,residual,elapsed_seconds`, one row per iteration, 1-based.
void write_trace_csv(const SolverTrace& trace, std::ostream& out);

}  // namespace deqann
