#include "deqann/deq.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace deqann {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct CellCache {
    DenseTensor h;  // (n, k1, P)
    DenseTensor s;  // (n, d, P)
    DenseTensor r;  // (n, d, P)
    std::vector<double> rho;  // per sample
};

void check_cell_shapes(const DeqLayerParams& p, const DenseTensor& z, const DenseTensor& x) {
    p.validate();
    if (z.ndim() != 4) {
        throw ShapeError("cell expects (n, d, H, W) input, got " + z.shape_string());
    }
    if (!z.same_shape(x)) {
        throw ShapeError("cell z shape " + z.shape_string() + " differs from x shape " +
                         x.shape_string());
    }
    if (z.dim(1) != p.d) {
        throw ShapeError("cell input has " + std::to_string(z.dim(1)) + " channels, params want " +
                         std::to_string(p.d));
    }
}

DenseTensor cell_forward(const DeqLayerParams& p, const DenseTensor& z, const DenseTensor& x,
                         CellCache* cache) {
    check_cell_shapes(p, z, x);
    const std::size_t n = z.dim(0), d = p.d, k1 = p.k1;
    const std::size_t P = z.dim(2) * z.dim(3);
    const std::size_t M = d * P;

    DenseTensor out(z.shape());
    if (cache) {
        cache->h = DenseTensor({n, k1, P});
        cache->s = DenseTensor({n, d, P});
        cache->r = DenseTensor({n, d, P});
        cache->rho.assign(n, 0.0);
    }

    const double* wi = p.w_in.data();
    const double* wo = p.w_out.data();
    const double* ui = p.u_inject.data();
    const double* pb1 = p.b1.data();
    const double* pb2 = p.b2.data();

    std::vector<double> a(k1), rbuf(M);
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = z.data() + i * M;
        const double* xi = x.data() + i * M;
        double sumsq = 0.0;
        for (std::size_t pos = 0; pos < P; ++pos) {
            for (std::size_t j = 0; j < k1; ++j) {
                double acc = pb1[j];
                for (std::size_t c = 0; c < d; ++c) {
                    acc += wi[j * d + c] * zi[c * P + pos] + ui[j * d + c] * xi[c * P + pos];
                }
                a[j] = std::tanh(acc);
            }
            if (cache) {
                double* hc = cache->h.data() + (i * k1) * P;
                for (std::size_t j = 0; j < k1; ++j) hc[j * P + pos] = a[j];
            }
            for (std::size_t c = 0; c < d; ++c) {
                double acc = pb2[c];
                for (std::size_t j = 0; j < k1; ++j) acc += wo[c * k1 + j] * a[j];
                const double sv = std::tanh(acc);
                const double rv = sv + zi[c * P + pos];
                rbuf[c * P + pos] = rv;
                sumsq += rv * rv;
                if (cache) cache->s.data()[(i * d + c) * P + pos] = sv;
            }
        }
        const double rho = std::sqrt(sumsq / static_cast<double>(M) + kCellEps);
        if (cache) {
            cache->rho[i] = rho;
            std::copy(rbuf.begin(), rbuf.end(), cache->r.data() + i * M);
        }
        double* oi = out.data() + i * M;
        const double g = kCellGain / rho;
        for (std::size_t t = 0; t < M; ++t) oi[t] = g * rbuf[t];
    }
    return out;
}

// Caches the activations of one cell evaluation at (z, x) so that repeated
// Jacobian-transpose products during the adjoint solve stay cheap.
class CellLinearization {
  public:
    CellLinearization(const DeqLayerParams& p, const DenseTensor& z, const DenseTensor& x)
        : p_(p), z_(z), x_(x) {
        cell_forward(p, z, x, &cache_);
        n_ = z.dim(0);
        P_ = z.dim(2) * z.dim(3);
    }

    DenseTensor vjp_z(const DenseTensor& g) const {
        DenseTensor gz(z_.shape());
        backprop(g, &gz, nullptr);
        return gz;
    }

    void accumulate_param_grads(const DenseTensor& g, DeqGradients& grads) const {
        backprop(g, nullptr, &grads);
    }

  private:
    void backprop(const DenseTensor& g, DenseTensor* gz, DeqGradients* grads) const {
        if (!g.same_shape(z_)) {
            throw ShapeError("upstream gradient shape " + g.shape_string() +
                             " does not match state shape " + z_.shape_string());
        }
        const std::size_t d = p_.d, k1 = p_.k1, P = P_, M = d * P;
        const double* wi = p_.w_in.data();
        const double* wo = p_.w_out.data();

        std::vector<double> gr(M), gc(d), ga(k1);
        for (std::size_t i = 0; i < n_; ++i) {
            const double* gi = g.data() + i * M;
            const double* ri = cache_.r.data() + i * M;
            const double* si = cache_.s.data() + i * M;
            const double* hi = cache_.h.data() + i * k1 * P;
            const double* zi = z_.data() + i * M;
            const double* xi = x_.data() + i * M;
            const double rho = cache_.rho[i];

            // out = gain * r / rho(r): the normalization couples every entry
            // of the sample through <g, r>.
            double dot = 0.0;
            for (std::size_t t = 0; t < M; ++t) dot += gi[t] * ri[t];
            const double c1 = kCellGain / rho;
            const double c2 = kCellGain * dot / (static_cast<double>(M) * rho * rho * rho);
            for (std::size_t t = 0; t < M; ++t) gr[t] = c1 * gi[t] - c2 * ri[t];

            for (std::size_t pos = 0; pos < P; ++pos) {
                for (std::size_t c = 0; c < d; ++c) {
                    const double sv = si[c * P + pos];
                    gc[c] = gr[c * P + pos] * (1.0 - sv * sv);
                }
                for (std::size_t j = 0; j < k1; ++j) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) acc += wo[c * k1 + j] * gc[c];
                    const double hv = hi[j * P + pos];
                    ga[j] = acc * (1.0 - hv * hv);
                }
                if (gz) {
                    double* gzi = gz->data() + i * M;
                    for (std::size_t c = 0; c < d; ++c) {
                        double acc = gr[c * P + pos];
                        for (std::size_t j = 0; j < k1; ++j) acc += wi[j * d + c] * ga[j];
                        gzi[c * P + pos] = acc;
                    }
                }
                if (grads) {
                    for (std::size_t c = 0; c < d; ++c) {
                        const double gcv = gc[c];
                        grads->b2[c] += gcv;
                        double* row = grads->w_out.data() + c * k1;
                        for (std::size_t j = 0; j < k1; ++j) row[j] += gcv * hi[j * P + pos];
                    }
                    for (std::size_t j = 0; j < k1; ++j) {
                        const double gav = ga[j];
                        grads->b1[j] += gav;
                        double* wrow = grads->w_in.data() + j * d;
                        double* urow = grads->u_inject.data() + j * d;
                        for (std::size_t c = 0; c < d; ++c) {
                            wrow[c] += gav * zi[c * P + pos];
                            urow[c] += gav * xi[c * P + pos];
                        }
                    }
                }
            }
        }
    }

    const DeqLayerParams& p_;
    const DenseTensor& z_;
    const DenseTensor& x_;
    CellCache cache_;
    std::size_t n_ = 0, P_ = 0;
};

double spectral_norm_2d(const DenseTensor& w) {
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    std::vector<double> v(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> u(rows);
    for (int iter = 0; iter < 150; ++iter) {
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
            u[r] = acc;
        }
        double norm = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < rows; ++r) acc += w[r * cols + c] * u[r];
            v[c] = acc;
            norm += acc * acc;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (double& x : v) x /= norm;
    }
    double sigma_sq = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
        sigma_sq += acc * acc;
    }
    return std::sqrt(sigma_sq);
}

DeqGradients zero_gradients(const DeqModel& model) {
    DeqGradients g;
    g.w_in = DenseTensor(model.layer.w_in.shape());
    g.b1 = DenseTensor(model.layer.b1.shape());
    g.u_inject = DenseTensor(model.layer.u_inject.shape());
    g.w_out = DenseTensor(model.layer.w_out.shape());
    g.b2 = DenseTensor(model.layer.b2.shape());
    g.w_head = DenseTensor(model.w_head.shape());
    g.b_head = DenseTensor(model.b_head.shape());
    return g;
}

std::size_t argmax_row(const DenseTensor& m, std::size_t row) {
    const std::size_t cols = m.dim(1);
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
        if (m[row * cols + c] > m[row * cols + best]) best = c;
    }
    return best;
}

std::pair<DenseTensor, std::vector<int>> gather_batch(const std::vector<LabeledImage>& data,
                                                      const std::vector<std::size_t>& order,
                                                      std::size_t start, std::size_t count) {
    const std::size_t h = data[order[start]].image.height;
    const std::size_t w = data[order[start]].image.width;
    DenseTensor x({count, 3, h, w});
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        const LabeledImage& li = data[order[start + i]];
        if (li.image.height != h || li.image.width != w) {
            throw ShapeError("dataset images disagree in size");
        }
        labels[i] = li.label;
        double* dst = x.data() + i * 3 * h * w;
        const std::uint8_t* src = li.image.pixels.data();
        for (std::size_t pos = 0; pos < h * w; ++pos) {
            for (std::size_t c = 0; c < 3; ++c) {
                dst[c * h * w + pos] = static_cast<double>(src[pos * 3 + c]) / 255.0;
            }
        }
    }
    return {std::move(x), std::move(labels)};
}

}  // namespace

void DeqLayerParams::validate() const {
    if (d < 1 || k1 < 1) throw Error("cell needs d >= 1 and k1 >= 1");
    auto want = [](const DenseTensor& t, std::vector<std::size_t> shape, const char* name) {
        if (t.shape() != shape) {
            throw ShapeError(std::string(name) + " has shape " + t.shape_string());
        }
        if (!all_finite(t)) throw Error(std::string(name) + " contains non-finite values");
    };
    want(w_in, {k1, d}, "w_in");
    want(b1, {k1}, "b1");
    want(u_inject, {k1, d}, "u_inject");
    want(w_out, {d, k1}, "w_out");
    want(b2, {d}, "b2");
}

void DeqModel::validate() const {
    layer.validate();
    const std::size_t c = classes();
    if (c < 2) throw Error("model needs at least 2 classes");
    if (w_head.ndim() != 2 || w_head.dim(0) != c || w_head.dim(1) != layer.d) {
        throw ShapeError("head weights have shape " + w_head.shape_string());
    }
    if (norm_mean.shape() != std::vector<std::size_t>{layer.d} ||
        norm_std.shape() != std::vector<std::size_t>{layer.d}) {
        throw ShapeError("normalization statistics must have length d");
    }
    for (std::size_t i = 0; i < norm_std.size(); ++i) {
        if (!(norm_std[i] > 0.0)) throw Error("normalization std entries must be positive");
    }
    if (!all_finite(w_head) || !all_finite(b_head)) throw Error("head contains non-finite values");
    solver.validate();
}

std::size_t ConfusionMatrix::total() const {
    std::size_t t = 0;
    for (std::size_t c : counts) t += c;
    return t;
}

std::size_t ConfusionMatrix::correct() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
    return t;
}

double ConfusionMatrix::accuracy() const {
    const std::size_t n = total();
    return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

DeqModel init_deq_model(std::size_t d, std::size_t k1, std::size_t classes,
                        const SolverConfig& solver, std::uint64_t seed) {
    if (d < 1 || k1 < 1 || classes < 2) throw Error("model needs d >= 1, k1 >= 1, classes >= 2");
    solver.validate();
    Rng rng(seed);

    DeqModel m;
    m.layer.d = d;
    m.layer.k1 = k1;
    m.layer.w_in = DenseTensor({k1, d});
    for (std::size_t i = 0; i < m.layer.w_in.size(); ++i) m.layer.w_in[i] = rng.normal();
    m.layer.b1 = DenseTensor({k1});
    for (std::size_t i = 0; i < k1; ++i) m.layer.b1[i] = rng.normal(0.0, 0.1);
    m.layer.u_inject = DenseTensor({k1, d});
    const double u_std = 0.5 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < m.layer.u_inject.size(); ++i) {
        m.layer.u_inject[i] = rng.normal(0.0, u_std);
    }
    m.layer.w_out = DenseTensor({d, k1});
    for (std::size_t i = 0; i < m.layer.w_out.size(); ++i) m.layer.w_out[i] = rng.normal();
    m.layer.b2 = DenseTensor({d});
    for (std::size_t i = 0; i < d; ++i) m.layer.b2[i] = rng.normal(0.0, 0.1);

    // Rescale so the through-path W_out∘W_in has operator norm 0.5; together
    // with the gain this certifies a contractive cell at init.
    const double target = std::sqrt(0.5);
    const double s_in = spectral_norm_2d(m.layer.w_in);
    const double s_out = spectral_norm_2d(m.layer.w_out);
    for (std::size_t i = 0; i < m.layer.w_in.size(); ++i) m.layer.w_in[i] *= target / s_in;
    for (std::size_t i = 0; i < m.layer.w_out.size(); ++i) m.layer.w_out[i] *= target / s_out;

    m.w_head = DenseTensor({classes, d});
    m.b_head = DenseTensor({classes});
    m.solver = solver;
    m.norm_mean = DenseTensor({d});
    m.norm_std = DenseTensor({d}, 1.0);
    return m;
}

DenseTensor deq_cell(const DeqLayerParams& params, const DenseTensor& z, const DenseTensor& x) {
    return cell_forward(params, z, x, nullptr);
}

DenseTensor standardize_input(const DeqModel& model, const DenseTensor& x) {
    const std::size_t n = x.dim(0), d = x.dim(1), P = x.dim(2) * x.dim(3);
    DenseTensor out(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            const double mean = model.norm_mean[c];
            const double inv = 1.0 / model.norm_std[c];
            const double* src = x.data() + (i * d + c) * P;
            double* dst = out.data() + (i * d + c) * P;
            for (std::size_t t = 0; t < P; ++t) dst[t] = (src[t] - mean) * inv;
        }
    }
    return out;
}

DenseTensor mean_pool(const DenseTensor& z) {
    if (z.ndim() != 4) throw ShapeError("mean_pool expects (n, d, H, W), got " + z.shape_string());
    const std::size_t n = z.dim(0), d = z.dim(1), P = z.dim(2) * z.dim(3);
    DenseTensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            const double* src = z.data() + (i * d + c) * P;
            double acc = 0.0;
            for (std::size_t t = 0; t < P; ++t) acc += src[t];
            out[i * d + c] = acc / static_cast<double>(P);
        }
    }
    return out;
}

DenseTensor head_logits(const DeqModel& model, const DenseTensor& feats) {
    const std::size_t n = feats.dim(0), d = feats.dim(1), c = model.classes();
    if (d != model.layer.d) {
        throw ShapeError("head expects " + std::to_string(model.layer.d) + " features, got " +
                         std::to_string(d));
    }
    DenseTensor logits({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            double acc = model.b_head[k];
            for (std::size_t j = 0; j < d; ++j) {
                acc += model.w_head[k * d + j] * feats[i * d + j];
            }
            logits[i * c + k] = acc;
        }
    }
    return logits;
}

ForwardResult deq_forward(const DeqModel& model, const DenseTensor& x, bool accelerated) {
    model.validate();
    if (x.ndim() != 4 || x.dim(1) != model.layer.d) {
        throw ShapeError("forward expects (n, " + std::to_string(model.layer.d) +
                         ", H, W) input, got " + x.shape_string());
    }
    if (!all_finite(x)) throw Error("forward input contains non-finite values");

    const DenseTensor xs = standardize_input(model, x);
    const DenseTensor z0(x.shape());
    const FixedPointMap map = [&model](const DenseTensor& z, const DenseTensor& xx) {
        return deq_cell(model.layer, z, xx);
    };

    ForwardResult result;
    auto solved = accelerated ? anderson_solve(map, xs, z0, model.solver)
                              : forward_iterate(map, xs, z0, model.solver);
    result.zstar = std::move(solved.first);
    result.trace = std::move(solved.second);
    if (result.trace.converged && !(result.trace.residuals.back() < model.solver.tol)) {
        throw Error("equilibrium certificate violated: converged trace ends above tol");
    }
    result.logits = head_logits(model, mean_pool(result.zstar));
    return result;
}

DeqGradients deq_backward(const DeqModel& model, const DenseTensor& x, const DenseTensor& zstar,
                          const DenseTensor& loss_grad_at_zstar,
                          const DenseTensor& loss_grad_at_logits, double backward_tol) {
    model.validate();
    if (!x.same_shape(zstar) || !x.same_shape(loss_grad_at_zstar)) {
        throw ShapeError("backward operands disagree in shape");
    }
    const std::size_t n = x.dim(0), c = model.classes();
    if (loss_grad_at_logits.ndim() != 2 || loss_grad_at_logits.dim(0) != n ||
        loss_grad_at_logits.dim(1) != c) {
        throw ShapeError("logits gradient has shape " + loss_grad_at_logits.shape_string());
    }

    const DenseTensor xs = standardize_input(model, x);
    const CellLinearization lin(model.layer, zstar, xs);

    SolverConfig adj_cfg = model.solver;
    adj_cfg.tol = backward_tol > 0.0 ? backward_tol : model.solver.tol / 100.0;

    // Linear fixed point u = Jᵀu + v; v rides in the map's x slot.
    const FixedPointMap adjoint = [&lin](const DenseTensor& u, const DenseTensor& v) {
        DenseTensor out = lin.vjp_z(u);
        axpy(out, 1.0, v);
        return out;
    };

    DenseTensor u;
    try {
        auto solved = anderson_solve(adjoint, loss_grad_at_zstar, DenseTensor(x.shape()), adj_cfg);
        u = std::move(solved.first);
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("adjoint solve diverged (cell Jacobian not "
                                          "contractive at this equilibrium): ") +
                                  e.what(),
                              e.trace);
    }

    DeqGradients grads = zero_gradients(model);
    lin.accumulate_param_grads(u, grads);

    const DenseTensor feats = mean_pool(zstar);
    const std::size_t d = model.layer.d;
    for (std::size_t k = 0; k < c; ++k) {
        double bacc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gl = loss_grad_at_logits[i * c + k];
            bacc += gl;
            for (std::size_t j = 0; j < d; ++j) {
                grads.w_head[k * d + j] += gl * feats[i * d + j];
            }
        }
        grads.b_head[k] = bacc;
    }
    return grads;
}

SoftmaxResult softmax_cross_entropy(const DenseTensor& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) throw ShapeError("label count does not match logits rows");
    SoftmaxResult res;
    res.probs = DenseTensor({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw Error("label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(c) + ")");
        }
        const double* row = logits.data() + i * c;
        double mx = row[0];
        for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) sum += std::exp(row[k] - mx);
        for (std::size_t k = 0; k < c; ++k) res.probs[i * c + k] = std::exp(row[k] - mx) / sum;
        res.loss_sum += std::log(sum) - (row[static_cast<std::size_t>(labels[i])] - mx);
    }
    return res;
}

DenseTensor image_to_tensor(const ImageBuffer& image) {
    const std::size_t h = image.height, w = image.width;
    DenseTensor x({1, 3, h, w});
    for (std::size_t pos = 0; pos < h * w; ++pos) {
        for (std::size_t c = 0; c < 3; ++c) {
            x[c * h * w + pos] = static_cast<double>(image.pixels[pos * 3 + c]) / 255.0;
        }
    }
    return x;
}

std::pair<DenseTensor, std::vector<int>> images_to_tensor(const std::vector<LabeledImage>& images,
                                                          std::size_t start, std::size_t count) {
    if (start + count > images.size()) throw Error("batch range exceeds dataset");
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    return gather_batch(images, order, start, count);
}

std::pair<DeqModel, std::vector<EpochStats>> train(DeqModel model,
                                                   const std::vector<LabeledImage>& data,
                                                   const TrainConfig& cfg, bool accelerated) {
    model.validate();
    if (data.empty()) throw Error("training data is empty");
    if (model.layer.d != 3) throw Error("training expects 3-channel image models");
    if (cfg.batch_size < 1 || cfg.batch_size > data.size()) {
        throw ConfigError("batch_size must lie in [1, dataset size]");
    }
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.learning_rate < 0.0) throw ConfigError("learning_rate must be nonnegative");
    const std::size_t n = data.size();
    const std::size_t classes = model.classes();
    for (const auto& li : data) {
        if (li.label < 0 || static_cast<std::size_t>(li.label) >= classes) {
            throw Error("label " + std::to_string(li.label) + " outside [0, " +
                        std::to_string(classes) + ")");
        }
    }

    // Per-channel standardization statistics from the training set.
    {
        double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
        std::size_t total = 0;
        for (const auto& li : data) total += li.image.width * li.image.height;
        for (const auto& li : data) {
            const auto& px = li.image.pixels;
            for (std::size_t pos = 0; pos * 3 < px.size(); ++pos) {
                for (std::size_t c = 0; c < 3; ++c) {
                    mean[c] += static_cast<double>(px[pos * 3 + c]) / 255.0;
                }
            }
        }
        for (std::size_t c = 0; c < 3; ++c) mean[c] /= static_cast<double>(total);
        for (const auto& li : data) {
            const auto& px = li.image.pixels;
            for (std::size_t pos = 0; pos * 3 < px.size(); ++pos) {
                for (std::size_t c = 0; c < 3; ++c) {
                    const double dv = static_cast<double>(px[pos * 3 + c]) / 255.0 - mean[c];
                    var[c] += dv * dv;
                }
            }
        }
        for (std::size_t c = 0; c < 3; ++c) {
            model.norm_mean[c] = mean[c];
            const double sd = std::sqrt(var[c] / static_cast<double>(total));
            model.norm_std[c] = sd > 1e-8 ? sd : 1.0;
        }
    }

    const auto t0 = Clock::now();
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<EpochStats> history;
    constexpr double kPi = 3.14159265358979323846;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = cfg.cosine_annealing
                              ? cfg.learning_rate * 0.5 *
                                    (1.0 + std::cos(kPi * static_cast<double>(epoch - 1) /
                                                    static_cast<double>(cfg.epochs)))
                              : cfg.learning_rate;
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            auto [x, labels] = gather_batch(data, order, start, count);
            ForwardResult fr;
            try {
                fr = deq_forward(model, x, accelerated);
            } catch (const DivergenceError& e) {
                throw TrainDivergenceError(std::string("forward solve diverged in epoch ") +
                                               std::to_string(epoch) + ": " + e.what(),
                                           history);
            }
            const SoftmaxResult sm = softmax_cross_entropy(fr.logits, labels);
            loss_sum += sm.loss_sum;
            for (std::size_t i = 0; i < count; ++i) {
                if (argmax_row(fr.logits, i) == static_cast<std::size_t>(labels[i])) ++correct;
            }

            DenseTensor dlogits({count, classes});
            for (std::size_t i = 0; i < count; ++i) {
                for (std::size_t k = 0; k < classes; ++k) {
                    const double onehot = (static_cast<std::size_t>(labels[i]) == k) ? 1.0 : 0.0;
                    dlogits[i * classes + k] =
                        (sm.probs[i * classes + k] - onehot) / static_cast<double>(count);
                }
            }
            const std::size_t P = x.dim(2) * x.dim(3);
            DenseTensor v(x.shape());
            for (std::size_t i = 0; i < count; ++i) {
                for (std::size_t c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < classes; ++k) {
                        acc += dlogits[i * classes + k] * model.w_head[k * 3 + c];
                    }
                    acc /= static_cast<double>(P);
                    double* dst = v.data() + (i * 3 + c) * P;
                    for (std::size_t t = 0; t < P; ++t) dst[t] = acc;
                }
            }

            DeqGradients grads;
            try {
                grads = deq_backward(model, x, fr.zstar, v, dlogits, cfg.backward_tol);
            } catch (const DivergenceError& e) {
                throw TrainDivergenceError(std::string("backward solve diverged in epoch ") +
                                               std::to_string(epoch) + ": " + e.what(),
                                           history);
            }

            axpy(model.layer.w_in, -lr, grads.w_in);
            axpy(model.layer.b1, -lr, grads.b1);
            axpy(model.layer.u_inject, -lr, grads.u_inject);
            axpy(model.layer.w_out, -lr, grads.w_out);
            axpy(model.layer.b2, -lr, grads.b2);
            axpy(model.w_head, -lr, grads.w_head);
            axpy(model.b_head, -lr, grads.b_head);
        }
        history.push_back({epoch, loss_sum / static_cast<double>(n),
                           static_cast<double>(correct) / static_cast<double>(n),
                           seconds_since(t0)});
    }
    return {std::move(model), std::move(history)};
}

EvalResult evaluate(const DeqModel& model, const std::vector<LabeledImage>& data,
                    bool accelerated) {
    model.validate();
    if (data.empty()) throw Error("evaluation data is empty");
    const std::size_t classes = model.classes();

    EvalResult res;
    res.confusion = ConfusionMatrix(classes);
    constexpr std::size_t kBatch = 64;
    for (std::size_t start = 0; start < data.size(); start += kBatch) {
        const std::size_t count = std::min(kBatch, data.size() - start);
        auto record = [&](const DenseTensor& logits, const std::vector<int>& labels,
                          std::size_t rows) {
            for (std::size_t i = 0; i < rows; ++i) {
                const auto truth = static_cast<std::size_t>(labels[i]);
                if (truth >= classes) throw Error("label outside class range");
                res.confusion.at(truth, argmax_row(logits, i)) += 1;
            }
        };
        try {
            auto [x, labels] = images_to_tensor(data, start, count);
            const ForwardResult fr = deq_forward(model, x, accelerated);
            record(fr.logits, labels, count);
        } catch (const DivergenceError&) {
            // Retry one sample at a time so a single bad solve only costs
            // that sample.
            for (std::size_t i = 0; i < count; ++i) {
                try {
                    auto [x, labels] = images_to_tensor(data, start + i, 1);
                    const ForwardResult fr = deq_forward(model, x, accelerated);
                    record(fr.logits, labels, 1);
                } catch (const DivergenceError&) {
                    ++res.failed;
                }
            }
        }
    }
    res.accuracy = res.confusion.accuracy();
    return res;
}

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out) {
    out << "epoch,loss,accuracy,elapsed_seconds\n";
    char buf[128];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", row.epoch, row.loss,
                      row.accuracy, row.elapsed_seconds);
        out << buf;
    }
}

}  // namespace deqann
