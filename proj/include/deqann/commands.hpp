#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "deqann/config.hpp"
#include "deqann/fixedpoint.hpp"
#include "deqann/tensor.hpp"

namespace deqann {

inline const char* solver_name(bool accelerated) {
    return accelerated ? "accelerated" : "standard";
}

// f(z) = tanh(Az + b) or Az + b with A symmetric Gaussian rescaled to the
// given spectral norm. Symmetry makes the spectral radius equal the norm, so
// the linear variant is a certified contraction. Deterministic in seed.
struct ContractionProblem {
    DenseTensor a;  // (dim, dim)
    DenseTensor b;  // (dim)
};

ContractionProblem make_contraction_problem(std::size_t dim, double spectral_norm,
                                            std::uint64_t seed);
FixedPointMap tanh_contraction_map(const ContractionProblem& p);
FixedPointMap linear_contraction_map(const ContractionProblem& p);

// Each command reads what it needs from cfg, writes artifacts under
// cfg.output_dir, logs a short summary to `out`, and returns a process exit
// code: 0 success, 1 numerical failure, 2 unusable input or config.

// Renders the dataset and writes manifest.csv (plus manifest_test.csv when a
// test split is configured) and the class balance.
int cmd_prepare(const RunConfig& cfg, std::ostream& out);

// Trains one solver variant; writes model_<solver>.bin, history_<solver>.csv,
// run_meta_<solver>.txt (a replayable config), eval_<solver>.csv and
// per-split confusion CSVs. Divergence keeps the partial history and exits 1.
int cmd_train(const RunConfig& cfg, bool accelerated, std::ostream& out);

// Classifies the given PPM images with a trained model and writes
// predictions.csv (image_path,predicted_class,confidence).
int cmd_infer(const RunConfig& cfg, bool accelerated, const std::string& model_override,
              const std::vector<std::string>& images, std::ostream& out);

// Runs both solvers on identical seeded problems; writes per-case trace CSVs
// plus summary.csv, speedup.csv and medians.csv under <output_dir>/bench.
int cmd_bench(const RunConfig& cfg, std::ostream& out);

// Grid search over (m, beta) on the configured problem; writes tune.csv with
// one row per cell.
int cmd_tune(const RunConfig& cfg, std::ostream& out);

// Aggregates training artifacts from both solver variants into
// <output_dir>/report: accuracy table, speedup table, scatter rows and
// copies of the confusion matrices. Missing inputs are named explicitly.
int cmd_report(const RunConfig& cfg, std::ostream& out);

// argv-level entry point: parses flags, loads --config, applies --seed/--out
// overrides, dispatches to the cmd_* functions and maps exceptions to exit
// codes (0 success, 1 numerical failure, 2 input or config error).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deqann
