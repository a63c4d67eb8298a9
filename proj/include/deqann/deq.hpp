#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deqann/fixedpoint.hpp"
#include "deqann/graphimage.hpp"
#include "deqann/tensor.hpp"

namespace deqann {

// Residual cell z ↦ normalize(tanh(W_out·tanh(W_in·z + U·x + b1) + b2) + z),
// all transforms acting per spatial position on (n, d, H, W) tensors.
struct DeqLayerParams {
    std::size_t d = 0;   // outer channels, equals the input channel count
    std::size_t k1 = 0;  // inner expansion channels
    DenseTensor w_in;      // (k1, d)
    DenseTensor b1;        // (k1)
    DenseTensor u_inject;  // (k1, d)
    DenseTensor w_out;     // (d, k1)
    DenseTensor b2;        // (d)

    void validate() const;
};

// Per-sample RMS normalization gain and floor; the gain below 1 plus the
// spectrally rescaled init keep the cell Jacobian contractive at z*.
inline constexpr double kCellGain = 0.9;
inline constexpr double kCellEps = 1e-3;

struct DeqModel {
    DeqLayerParams layer;
    DenseTensor w_head;  // (C, d)
    DenseTensor b_head;  // (C)
    SolverConfig solver;
    DenseTensor norm_mean;  // (d), input standardization
    DenseTensor norm_std;   // (d)

    std::size_t classes() const { return b_head.size(); }
    void validate() const;
};

struct TrainConfig {
    double learning_rate = 1.0;  // nonnegative; 0 leaves parameters untouched
    std::size_t epochs = 20;
    std::size_t batch_size = 25;
    bool cosine_annealing = false;
    std::uint64_t seed = 0;
    double backward_tol = 0.0;  // 0 → solver tol / 100
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean cross-entropy over the epoch
    double accuracy = 0.0;  // running train accuracy
    double elapsed_seconds = 0.0;  // cumulative wall seconds since training began
};

struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;  // row-major, rows = true class, cols = predicted

    explicit ConfusionMatrix(std::size_t c = 0) : classes(c), counts(c * c, 0) {}
    std::size_t& at(std::size_t true_c, std::size_t pred_c) {
        return counts[true_c * classes + pred_c];
    }
    std::size_t at(std::size_t true_c, std::size_t pred_c) const {
        return counts[true_c * classes + pred_c];
    }
    std::size_t total() const;
    std::size_t correct() const;  // trace
    double accuracy() const;
};

struct DeqGradients {
    DenseTensor w_in, b1, u_inject, w_out, b2;  // layer, shapes as in DeqLayerParams
    DenseTensor w_head, b_head;
};

struct ForwardResult {
    DenseTensor zstar;  // (n, d, H, W)
    DenseTensor logits;  // (n, C)
    SolverTrace trace;
};

struct EvalResult {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    std::size_t failed = 0;  // samples whose solve diverged, excluded from counts
};

// A training solve diverged; history covers the completed epochs.
struct TrainDivergenceError : Error {
    std::vector<EpochStats> history;
    TrainDivergenceError(const std::string& msg, std::vector<EpochStats> h)
        : Error(msg), history(std::move(h)) {}
};

// Gaussian init with W_in/W_out rescaled to spectral norm sqrt(0.5) each, so
// the inner path has product norm 0.5; zero head. Deterministic in seed.
DeqModel init_deq_model(std::size_t d, std::size_t k1, std::size_t classes,
                        const SolverConfig& solver, std::uint64_t seed);

DenseTensor deq_cell(const DeqLayerParams& params, const DenseTensor& z, const DenseTensor& x);

DenseTensor standardize_input(const DeqModel& model, const DenseTensor& x);
DenseTensor mean_pool(const DenseTensor& z);                            // (n,d,H,W) → (n,d)
DenseTensor head_logits(const DeqModel& model, const DenseTensor& feats);  // (n,d) → (n,C)

// Solves z* = cell(z, x̃) from z0 = 0 (x̃ = standardized input), then pools and
// applies the head. Converged traces are re-checked against tol.
ForwardResult deq_forward(const DeqModel& model, const DenseTensor& x, bool accelerated);

// Implicit-function-theorem gradients: the adjoint u solves the linear fixed
// point u = (∂cell/∂z)ᵀu + loss_grad_at_zstar via anderson_solve, then flows
// into the layer parameters; head gradients come straight from
// loss_grad_at_logits and the pooled features. backward_tol 0 → tol/100.
DeqGradients deq_backward(const DeqModel& model, const DenseTensor& x, const DenseTensor& zstar,
                          const DenseTensor& loss_grad_at_zstar,
                          const DenseTensor& loss_grad_at_logits, double backward_tol = 0.0);

struct SoftmaxResult {
    double loss_sum = 0.0;   // summed cross-entropy
    DenseTensor probs;       // (n, C)
};

SoftmaxResult softmax_cross_entropy(const DenseTensor& logits, const std::vector<int>& labels);

// Packs images[start .. start+count) into a (count, 3, H, W) tensor in [0, 1]
// plus the label list. All images must share one size.
std::pair<DenseTensor, std::vector<int>> images_to_tensor(const std::vector<LabeledImage>& images,
                                                          std::size_t start, std::size_t count);
DenseTensor image_to_tensor(const ImageBuffer& image);

// Seeded mini-batch SGD on softmax cross-entropy. Sets the model's input
// standardization from the data, then runs `epochs` passes; optional cosine
// annealing of the learning rate. Bit-deterministic apart from timing.
std::pair<DeqModel, std::vector<EpochStats>> train(DeqModel model,
                                                   const std::vector<LabeledImage>& data,
                                                   const TrainConfig& cfg, bool accelerated);

// Argmax evaluation; solver divergence marks samples failed instead of aborting.
EvalResult evaluate(const DeqModel& model, const std::vector<LabeledImage>& data,
                    bool accelerated);

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out);

// Flat binary container: magic DEQANN1, 64-bit LE tensor count, a shape table
// (rank then dims per tensor), then every payload as 64-bit LE doubles.
// Tensor order: w_in, b1, u_inject, w_out, b2, w_head, b_head, norm_mean,
// norm_std, solver block [m, lambda, beta, tol, max_iter].
void write_model(const DeqModel& model, const std::string& path);
DeqModel read_model(const std::string& path);

}  // namespace deqann
