#include "deqann/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "deqann/csv.hpp"
#include "deqann/deq.hpp"
#include "deqann/errors.hpp"
#include "deqann/graphimage.hpp"
#include "deqann/rng.hpp"

namespace deqann {

namespace fs = std::filesystem;

namespace {

constexpr double kProblemNorm = 0.9;

// Power iteration; for a symmetric matrix the limit is the spectral norm.
double symmetric_spectral_norm(const DenseTensor& a) {
    const std::size_t n = a.dim(0);
    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> av(n);
    double norm = 0.0;
    for (int it = 0; it < 200; ++it) {
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < n; ++c) acc += a[r * n + c] * v[c];
            av[r] = acc;
        }
        norm = 0.0;
        for (double x : av) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (std::size_t r = 0; r < n; ++r) v[r] = av[r] / norm;
    }
    return norm;
}

std::vector<double> affine_apply(const ContractionProblem& p, const DenseTensor& z) {
    const std::size_t n = p.b.size();
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        double acc = p.b[r];
        for (std::size_t c = 0; c < n; ++c) acc += p.a[r * n + c] * z[c];
        out[r] = acc;
    }
    return out;
}

std::vector<double> softmax_row(const DenseTensor& logits, std::size_t row) {
    const std::size_t cols = logits.dim(1);
    double mx = logits[row * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, logits[row * cols + c]);
    std::vector<double> p(cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
        p[c] = std::exp(logits[row * cols + c] - mx);
        sum += p[c];
    }
    for (double& v : p) v /= sum;
    return p;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double final_residual(const SolverTrace& t) {
    return t.residuals.empty() ? std::numeric_limits<double>::quiet_NaN() : t.residuals.back();
}

double final_elapsed(const SolverTrace& t) { return t.times.empty() ? 0.0 : t.times.back(); }

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
}

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// Writes every image to <out_dir>/<subdir>/<id>.ppm and returns the manifest
// rows sorted by id.
Manifest write_labeled_images(const std::vector<LabeledImage>& set, const fs::path& out_dir,
                              const std::string& subdir) {
    fs::create_directories(out_dir / subdir);
    Manifest m;
    for (const LabeledImage& li : set) {
        const std::string rel = subdir + "/" + li.source_id + ".ppm";
        write_ppm(li.image, (out_dir / rel).string());
        m.rows.push_back({li.source_id, rel, li.label});
    }
    std::sort(m.rows.begin(), m.rows.end(),
              [](const ManifestRow& a, const ManifestRow& b) { return a.id < b.id; });
    return m;
}

std::string class_balance_line(const Manifest& m) {
    std::map<int, std::size_t> counts;
    for (const ManifestRow& row : m.rows) ++counts[row.label];
    std::string out;
    for (const auto& [label, count] : counts) {
        if (!out.empty()) out += ", ";
        out += "class " + std::to_string(label) + ": " + std::to_string(count);
    }
    return out.empty() ? "empty" : out;
}

// First `# task = <name>` comment of a manifest, or "unknown".
std::string read_manifest_task(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("# task = ", 0) == 0) return line.substr(9);
        if (!line.empty() && line[0] != '#') break;
    }
    return "unknown";
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
    std::ostringstream out;
    out << "true_class";
    for (std::size_t c = 0; c < cm.classes; ++c) out << ",pred_" << c;
    out << "\n";
    for (std::size_t t = 0; t < cm.classes; ++t) {
        out << t;
        for (std::size_t c = 0; c < cm.classes; ++c) out << "," << cm.at(t, c);
        out << "\n";
    }
    write_text(path, out.str());
}

DenseTensor random_image_batch(std::size_t d, std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    DenseTensor x({1, d, side, side});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    return x;
}

DeqModel bench_model(const RunConfig& cfg) {
    if (cfg.bench.model_path.empty()) {
        return init_deq_model(cfg.model.d, cfg.model.k1, cfg.model.classes, cfg.solver,
                              cfg.train.seed);
    }
    DeqModel m = read_model(cfg.bench.model_path);
    m.solver = cfg.solver;  // benchmarks compare the configured solver settings
    return m;
}

struct EvalRow {
    std::string split;
    std::size_t samples = 0;
    double accuracy = 0.0;
    std::size_t failed = 0;
};

std::vector<EvalRow> read_eval_csv(const std::string& path) {
    const csv::Table t = csv::read_table_file(path);
    const std::size_t split_col = t.column("split");
    const std::size_t samples_col = t.column("samples");
    const std::size_t acc_col = t.column("accuracy");
    const std::size_t failed_col = t.column("failed");
    std::vector<EvalRow> rows;
    for (const auto& r : t.rows) {
        EvalRow row;
        row.split = r[split_col];
        row.samples = static_cast<std::size_t>(csv::parse_long(r[samples_col], path));
        row.accuracy = csv::parse_double(r[acc_col], path);
        row.failed = static_cast<std::size_t>(csv::parse_long(r[failed_col], path));
        rows.push_back(row);
    }
    return rows;
}

// The elapsed column is cumulative, so the total is the last row's value.
double history_total_seconds(const std::string& path) {
    const csv::Table t = csv::read_table_file(path);
    const std::size_t col = t.column("elapsed_seconds");
    if (t.rows.empty()) return 0.0;
    return csv::parse_double(t.rows.back()[col], path);
}

}  // namespace

ContractionProblem make_contraction_problem(std::size_t dim, double spectral_norm,
                                            std::uint64_t seed) {
    if (dim == 0) throw ShapeError("contraction problem needs dim >= 1");
    Rng rng(seed);
    DenseTensor raw({dim, dim});
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = rng.normal();
    ContractionProblem p;
    p.a = DenseTensor({dim, dim});
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            p.a[i * dim + j] = 0.5 * (raw[i * dim + j] + raw[j * dim + i]);
        }
    }
    const double sigma = symmetric_spectral_norm(p.a);
    if (sigma > 0.0) p.a = scale(p.a, spectral_norm / sigma);
    p.b = DenseTensor({dim});
    for (std::size_t i = 0; i < dim; ++i) p.b[i] = rng.normal(0.0, 0.1);
    return p;
}

FixedPointMap tanh_contraction_map(const ContractionProblem& p) {
    return [p](const DenseTensor& z, const DenseTensor&) {
        std::vector<double> v = affine_apply(p, z);
        for (double& x : v) x = std::tanh(x);
        return DenseTensor(z.shape(), std::move(v));
    };
}

FixedPointMap linear_contraction_map(const ContractionProblem& p) {
    return [p](const DenseTensor& z, const DenseTensor&) {
        return DenseTensor(z.shape(), affine_apply(p, z));
    };
}

int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    const std::size_t side = cfg.model.image_size;

    Manifest train_m;
    Manifest test_m;
    bool have_test = false;
    std::size_t skipped = 0;

    if (cfg.data.synthetic) {
        if (cfg.data.n_train_per_class == 0) {
            throw ConfigError("data.n_train_per_class must be at least 1");
        }
        const auto train_set =
            generate_synthetic_dataset(cfg.data.n_train_per_class, cfg.data.seed, side, side);
        train_m = write_labeled_images(train_set, dir, "images");
        const auto header = [&](std::uint64_t seed, std::size_t n) {
            return std::vector<std::pair<std::string, std::string>>{
                {"task", "synthetic-topology"},
                {"cutoff", csv::format_double(2.0)},
                {"width", std::to_string(side)},
                {"height", std::to_string(side)},
                {"seed", std::to_string(seed)},
                {"n_per_class", std::to_string(n)},
            };
        };
        write_manifest_rows(train_m, header(cfg.data.seed, cfg.data.n_train_per_class),
                            (dir / "manifest.csv").string());
        if (cfg.data.n_test_per_class > 0) {
            const auto test_set = generate_synthetic_dataset(cfg.data.n_test_per_class,
                                                             cfg.data.seed + 1, side, side);
            test_m = write_labeled_images(test_set, dir, "images_test");
            write_manifest_rows(test_m, header(cfg.data.seed + 1, cfg.data.n_test_per_class),
                                (dir / "manifest_test.csv").string());
            have_test = true;
        }
    } else {
        PrepareOptions opt;
        opt.task = parse_label_task(cfg.data.task);
        opt.cutoff = cfg.data.cutoff;
        opt.thresholds = cfg.data.thresholds;
        opt.width = side;
        opt.height = side;
        const Manifest full =
            prepare_dataset(cfg.data.structure_dir, cfg.data.property_csv, opt, dir.string());
        skipped = full.skipped.size();
        train_m = full;
        if (cfg.data.test_fraction > 0.0) {
            if (cfg.data.test_fraction >= 1.0) {
                throw ConfigError("data.test_fraction must be below 1");
            }
            const auto stride = std::max<std::size_t>(
                2, static_cast<std::size_t>(std::llround(1.0 / cfg.data.test_fraction)));
            train_m.rows.clear();
            for (std::size_t i = 0; i < full.rows.size(); ++i) {
                (i % stride == 0 ? test_m : train_m).rows.push_back(full.rows[i]);
            }
            const auto header = manifest_header_fields(opt);
            write_manifest_rows(train_m, header, (dir / "manifest.csv").string());
            write_manifest_rows(test_m, header, (dir / "manifest_test.csv").string());
            have_test = true;
        }
    }

    out << "manifest: " << (dir / "manifest.csv").string() << " (" << train_m.rows.size()
        << " rows)\n";
    out << "class balance: " << class_balance_line(train_m) << "\n";
    if (have_test) {
        out << "test manifest: " << (dir / "manifest_test.csv").string() << " ("
            << test_m.rows.size() << " rows)\n";
        out << "test class balance: " << class_balance_line(test_m) << "\n";
    }
    if (skipped > 0) {
        out << "skipped " << skipped << " structures, see " << (dir / "skipped.txt").string()
            << "\n";
    }
    return 0;
}

int cmd_train(const RunConfig& cfg, bool accelerated, std::ostream& out) {
    const fs::path dir = cfg.output_dir;
    const std::string sname = solver_name(accelerated);
    const std::string manifest_path = (dir / "manifest.csv").string();
    if (!fs::exists(manifest_path)) {
        throw ConfigError("manifest '" + manifest_path + "' not found; run prepare first");
    }
    const std::vector<LabeledImage> train_data = load_manifest_images(manifest_path);

    const DeqModel init = init_deq_model(cfg.model.d, cfg.model.k1, cfg.model.classes, cfg.solver,
                                         cfg.train.seed);
    DeqModel model;
    std::vector<EpochStats> history;
    std::string divergence;
    try {
        std::tie(model, history) = train(init, train_data, cfg.train, accelerated);
    } catch (const TrainDivergenceError& e) {
        history = e.history;
        divergence = e.what();
    }

    const std::string history_path = (dir / ("history_" + sname + ".csv")).string();
    {
        std::ofstream h(history_path, std::ios::binary);
        if (!h) throw Error("cannot write '" + history_path + "'");
        write_history_csv(history, h);
    }
    if (!divergence.empty()) {
        out << "training diverged: " << divergence << "\n";
        out << "partial history: " << history_path << "\n";
        return 1;
    }

    const std::string model_path = (dir / ("model_" + sname + ".bin")).string();
    write_model(model, model_path);

    std::ostringstream meta;
    meta << "# deqann run metadata\n";
    meta << "# command = train\n";
    meta << "# solver = " << sname << "\n";
    meta << echo_config(cfg);
    write_text((dir / ("run_meta_" + sname + ".txt")).string(), meta.str());

    std::vector<std::pair<std::string, EvalResult>> evals;
    evals.emplace_back("train", evaluate(model, train_data, accelerated));
    const std::string test_path = (dir / "manifest_test.csv").string();
    if (fs::exists(test_path)) {
        evals.emplace_back("test", evaluate(model, load_manifest_images(test_path), accelerated));
    }

    std::ostringstream eval_csv;
    eval_csv << "split,samples,accuracy,failed\n";
    for (const auto& [split, res] : evals) {
        eval_csv << split << "," << (res.confusion.total() + res.failed) << ","
                 << csv::format_double(res.accuracy) << "," << res.failed << "\n";
        write_confusion_csv(res.confusion,
                            (dir / ("confusion_" + sname + "_" + split + ".csv")).string());
    }
    write_text((dir / ("eval_" + sname + ".csv")).string(), eval_csv.str());

    if (!history.empty()) {
        const EpochStats& last = history.back();
        out << sname << " training: " << history.size() << " epochs, final loss "
            << fixed3(last.loss) << ", train accuracy " << fixed3(last.accuracy) << ", "
            << fixed3(last.elapsed_seconds) << " s\n";
    }
    for (const auto& [split, res] : evals) {
        out << split << " accuracy: " << fixed3(res.accuracy) << " ("
            << (res.confusion.total() + res.failed) << " samples";
        if (res.failed > 0) out << ", " << res.failed << " failed solves";
        out << ")\n";
    }
    out << "model: " << model_path << "\n";
    return 0;
}

int cmd_infer(const RunConfig& cfg, bool accelerated, const std::string& model_override,
              const std::vector<std::string>& images, std::ostream& out) {
    const fs::path dir = cfg.output_dir;
    const std::string sname = solver_name(accelerated);
    const std::string model_path =
        model_override.empty() ? (dir / ("model_" + sname + ".bin")).string() : model_override;
    if (!fs::exists(model_path)) {
        throw ConfigError("model '" + model_path + "' not found; train first or pass --model");
    }
    const DeqModel model = read_model(model_path);

    std::ostringstream rows;
    rows << "image_path,predicted_class,confidence\n";
    for (const std::string& path : images) {
        const ImageBuffer img = read_ppm(path);
        const DenseTensor x = image_to_tensor(img);
        const ForwardResult fr = deq_forward(model, x, accelerated);
        const std::vector<double> probs = softmax_row(fr.logits, 0);
        std::size_t pred = 0;
        for (std::size_t c = 1; c < probs.size(); ++c) {
            if (probs[c] > probs[pred]) pred = c;
        }
        rows << path << "," << pred << "," << csv::format_double(probs[pred]) << "\n";
        out << path << ": class " << pred << " (confidence " << fixed3(probs[pred]) << ")\n";
    }

    fs::create_directories(dir);
    const std::string pred_path = (dir / "predictions.csv").string();
    write_text(pred_path, rows.str());
    out << "predictions: " << pred_path << " (" << images.size() << " rows)\n";
    return 0;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
    cfg.solver.validate();
    if (cfg.bench.cases == 0) throw ConfigError("bench.cases must be at least 1");
    const bool deq_problem = cfg.bench.problem == "deq";
    const fs::path bdir = fs::path(cfg.output_dir) / "bench";
    fs::create_directories(bdir);

    DeqModel model;
    if (deq_problem) model = bench_model(cfg);

    struct RunRow {
        std::size_t case_idx = 0;
        bool accelerated = false;
        SolverTrace trace;
        bool diverged = false;
    };
    std::vector<RunRow> runs;

    for (std::size_t k = 0; k < cfg.bench.cases; ++k) {
        FixedPointMap map;
        DenseTensor z0;
        DenseTensor x({1});
        if (deq_problem) {
            x = random_image_batch(cfg.model.d, cfg.model.image_size,
                                   cfg.train.seed + 7919 * (k + 1));
        } else {
            const ContractionProblem p =
                make_contraction_problem(cfg.bench.dim, kProblemNorm, cfg.train.seed + k);
            map = tanh_contraction_map(p);
            z0 = DenseTensor({cfg.bench.dim});
        }
        for (const bool acc : {false, true}) {
            RunRow row;
            row.case_idx = k;
            row.accelerated = acc;
            try {
                if (deq_problem) {
                    row.trace = deq_forward(model, x, acc).trace;
                } else {
                    row.trace = acc ? anderson_solve(map, x, z0, cfg.solver).second
                                    : forward_iterate(map, x, z0, cfg.solver).second;
                }
            } catch (const DivergenceError& e) {
                row.trace = e.trace;
                row.diverged = true;
            }
            const std::string trace_path =
                (bdir / ("trace_case" + std::to_string(k) + "_" + solver_name(acc) + ".csv"))
                    .string();
            std::ofstream tf(trace_path, std::ios::binary);
            if (!tf) throw Error("cannot write '" + trace_path + "'");
            write_trace_csv(row.trace, tf);
            runs.push_back(std::move(row));
        }
    }

    std::ostringstream summary;
    summary << "case,solver,status,iterations,final_residual,elapsed_seconds,f_evals\n";
    for (const RunRow& r : runs) {
        const char* status =
            r.diverged ? "diverged" : (r.trace.converged ? "converged" : "max_iter");
        summary << r.case_idx << "," << solver_name(r.accelerated) << "," << status << ","
                << r.trace.iterations << "," << csv::format_double(final_residual(r.trace)) << ","
                << csv::format_double(final_elapsed(r.trace)) << "," << r.trace.f_evals << "\n";
    }
    write_text((bdir / "summary.csv").string(), summary.str());

    std::ostringstream speedup_csv;
    speedup_csv << "case,standard_seconds,accelerated_seconds,speedup,compute_saved\n";
    std::vector<double> speedups;
    std::vector<double> iters_std, iters_acc, secs_std, secs_acc;
    for (std::size_t k = 0; k < cfg.bench.cases; ++k) {
        const RunRow& std_run = runs[2 * k];
        const RunRow& acc_run = runs[2 * k + 1];
        const double ss = final_elapsed(std_run.trace);
        const double as = final_elapsed(acc_run.trace);
        const double speedup = as > 0.0 ? ss / as : std::numeric_limits<double>::quiet_NaN();
        const double saved = std::isfinite(speedup) ? 1.0 - 1.0 / speedup
                                                    : std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(speedup)) speedups.push_back(speedup);
        iters_std.push_back(static_cast<double>(std_run.trace.iterations));
        iters_acc.push_back(static_cast<double>(acc_run.trace.iterations));
        secs_std.push_back(ss);
        secs_acc.push_back(as);
        speedup_csv << k << "," << csv::format_double(ss) << "," << csv::format_double(as) << ","
                    << csv::format_double(speedup) << "," << csv::format_double(saved) << "\n";
    }
    write_text((bdir / "speedup.csv").string(), speedup_csv.str());

    std::ostringstream medians;
    medians << "solver,median_iterations,median_seconds\n";
    medians << "standard," << csv::format_double(median(iters_std)) << ","
            << csv::format_double(median(secs_std)) << "\n";
    medians << "accelerated," << csv::format_double(median(iters_acc)) << ","
            << csv::format_double(median(secs_acc)) << "\n";
    write_text((bdir / "medians.csv").string(), medians.str());

    out << "bench: " << cfg.bench.cases << " cases of " << cfg.bench.problem << "\n";
    out << "median iterations: standard " << median(iters_std) << ", accelerated "
        << median(iters_acc) << "\n";
    out << "median speedup: " << fixed3(median(speedups)) << "x\n";
    out << "artifacts: " << bdir.string() << "\n";
    return 0;
}

int cmd_tune(const RunConfig& cfg, std::ostream& out) {
    if (cfg.tune.m_grid.empty() || cfg.tune.beta_grid.empty()) {
        throw ConfigError("tune.m_grid and tune.beta_grid must be nonempty");
    }
    const bool deq_problem = cfg.tune.problem == "deq";
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);

    FixedPointMap map;
    DenseTensor z0;
    DenseTensor x({1});
    DeqModel model;
    if (deq_problem) {
        model = init_deq_model(cfg.model.d, cfg.model.k1, cfg.model.classes, cfg.solver,
                               cfg.train.seed);
        x = random_image_batch(cfg.model.d, cfg.model.image_size, cfg.train.seed + 1);
    } else {
        const ContractionProblem p =
            make_contraction_problem(cfg.tune.dim, kProblemNorm, cfg.train.seed);
        map = linear_contraction_map(p);
        z0 = DenseTensor({cfg.tune.dim});
    }

    struct Cell {
        std::size_t m = 0;
        double beta = 0.0;
        SolverTrace trace;
    };
    std::vector<Cell> cells;
    for (const std::size_t m : cfg.tune.m_grid) {
        for (const double beta : cfg.tune.beta_grid) {
            SolverConfig sc = cfg.solver;
            sc.m = m;
            sc.beta = beta;
            sc.validate();
            Cell cell;
            cell.m = m;
            cell.beta = beta;
            try {
                if (deq_problem) {
                    DeqModel tuned = model;
                    tuned.solver = sc;
                    cell.trace = deq_forward(tuned, x, true).trace;
                } else {
                    cell.trace = anderson_solve(map, x, z0, sc).second;
                }
            } catch (const DivergenceError& e) {
                cell.trace = e.trace;
            }
            cells.push_back(std::move(cell));
        }
    }

    std::ostringstream grid;
    grid << "m,beta,iterations,final_residual,elapsed_seconds\n";
    for (const Cell& c : cells) {
        grid << c.m << "," << csv::format_double(c.beta) << "," << c.trace.iterations << ","
             << csv::format_double(final_residual(c.trace)) << ","
             << csv::format_double(final_elapsed(c.trace)) << "\n";
    }
    const std::string grid_path = (dir / "tune.csv").string();
    write_text(grid_path, grid.str());

    const Cell* best = &cells.front();
    for (const Cell& c : cells) {
        const bool better = c.trace.converged &&
                            (!best->trace.converged || c.trace.iterations < best->trace.iterations);
        if (better) best = &c;
    }
    out << "tune: " << cells.size() << " cells on " << cfg.tune.problem << "\n";
    out << "best: m = " << best->m << ", beta = " << csv::format_double(best->beta) << " ("
        << best->trace.iterations << " iterations, residual "
        << csv::format_double(final_residual(best->trace)) << ")\n";
    out << "grid: " << grid_path << "\n";
    return 0;
}

int cmd_report(const RunConfig& cfg, std::ostream& out) {
    const fs::path dir = cfg.output_dir;
    const fs::path rdir = dir / "report";

    std::vector<std::string> missing;
    const auto need = [&missing](const fs::path& p) {
        if (!fs::exists(p)) missing.push_back(p.string());
        return p.string();
    };
    const std::string manifest_path = need(dir / "manifest.csv");
    const std::string hist_std = need(dir / "history_standard.csv");
    const std::string hist_acc = need(dir / "history_accelerated.csv");
    const std::string eval_std = need(dir / "eval_standard.csv");
    const std::string eval_acc = need(dir / "eval_accelerated.csv");
    if (!missing.empty()) {
        std::string list;
        for (const std::string& m : missing) {
            if (!list.empty()) list += ", ";
            list += m;
        }
        throw ConfigError("missing artifacts: " + list +
                          "; run prepare and train for both solvers first");
    }
    fs::create_directories(rdir);

    const std::string task = read_manifest_task(manifest_path);
    const std::map<std::string, std::vector<EvalRow>> evals = {
        {"standard", read_eval_csv(eval_std)},
        {"accelerated", read_eval_csv(eval_acc)},
    };
    const double sec_std = history_total_seconds(hist_std);
    const double sec_acc = history_total_seconds(hist_acc);
    const double speedup = sec_acc > 0.0 ? sec_std / sec_acc
                                         : std::numeric_limits<double>::quiet_NaN();
    const double saved = std::isfinite(speedup) ? 1.0 - 1.0 / speedup
                                                : std::numeric_limits<double>::quiet_NaN();

    std::ostringstream acc_table;
    acc_table << "solver,split,samples,accuracy,failed\n";
    for (const char* solver : {"standard", "accelerated"}) {
        for (const EvalRow& r : evals.at(solver)) {
            acc_table << solver << "," << r.split << "," << r.samples << ","
                      << csv::format_double(r.accuracy) << "," << r.failed << "\n";
        }
    }
    write_text((rdir / "accuracy_table.csv").string(), acc_table.str());

    std::ostringstream speed_table;
    speed_table << "solver,train_seconds,speedup,compute_saved\n";
    speed_table << "standard," << csv::format_double(sec_std) << ",1,0\n";
    speed_table << "accelerated," << csv::format_double(sec_acc) << ","
                << csv::format_double(speedup) << "," << csv::format_double(saved) << "\n";
    write_text((rdir / "speedup_table.csv").string(), speed_table.str());

    const auto headline_accuracy = [](const std::vector<EvalRow>& rows) {
        for (const EvalRow& r : rows) {
            if (r.split == "test") return r.accuracy;
        }
        return rows.empty() ? std::numeric_limits<double>::quiet_NaN() : rows.front().accuracy;
    };
    std::ostringstream scatter;
    scatter << "task,solver,train_seconds,test_accuracy,speedup\n";
    scatter << task << ",standard," << csv::format_double(sec_std) << ","
            << csv::format_double(headline_accuracy(evals.at("standard"))) << ",1\n";
    scatter << task << ",accelerated," << csv::format_double(sec_acc) << ","
            << csv::format_double(headline_accuracy(evals.at("accelerated"))) << ","
            << csv::format_double(speedup) << "\n";
    write_text((rdir / "scatter.csv").string(), scatter.str());

    for (const char* solver : {"standard", "accelerated"}) {
        for (const char* split : {"train", "test"}) {
            const fs::path src = dir / ("confusion_" + std::string(solver) + "_" + split + ".csv");
            if (fs::exists(src)) {
                fs::copy_file(src, rdir / src.filename(), fs::copy_options::overwrite_existing);
            }
        }
    }

    out << "task: " << task << "\n";
    for (const char* solver : {"standard", "accelerated"}) {
        for (const EvalRow& r : evals.at(solver)) {
            out << solver << " " << r.split << " accuracy: " << fixed3(r.accuracy) << " ("
                << r.samples << " samples)\n";
        }
    }
    out << "training wall: standard " << fixed3(sec_std) << " s, accelerated " << fixed3(sec_acc)
        << " s, speedup " << fixed3(speedup) << "x, compute saved "
        << fixed3(100.0 * saved) << "%\n";
    out << "report artifacts: " << rdir.string() << "\n";
    return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"deep-equilibrium classifier over molecular graph images, with an accelerated "
                 "fixed-point solver"};
    app.name("deqann");
    app.require_subcommand(1);

    std::string config_path;
    bool flag_accelerated = false;
    bool flag_standard = false;
    std::int64_t seed = 0;
    std::string out_dir;
    std::vector<std::string> images;
    std::string model_override;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file of key = value lines")->required();
        auto* a = sub->add_flag("--accelerated", flag_accelerated,
                                "use windowed extrapolation (default)");
        auto* s = sub->add_flag("--standard", flag_standard, "use plain forward iteration");
        a->excludes(s);
        s->excludes(a);
        sub->add_option("--seed", seed, "override train.seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out_dir, "override output_dir");
        return sub;
    };

    CLI::App* prepare =
        add_common(app.add_subcommand("prepare", "render the dataset and write manifests"));
    CLI::App* train_cmd = add_common(app.add_subcommand("train", "train one solver variant"));
    CLI::App* infer =
        add_common(app.add_subcommand("infer", "classify PPM images with a trained model"));
    infer->add_option("images", images, "PPM images to classify");
    infer->add_option("--model", model_override, "model file (default <out>/model_<solver>.bin)");
    CLI::App* bench =
        add_common(app.add_subcommand("bench", "run both solvers on seeded problems"));
    CLI::App* tune =
        add_common(app.add_subcommand("tune", "grid search over window size and mixing"));
    CLI::App* report = add_common(app.add_subcommand("report", "aggregate training artifacts"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = parse_config_file(config_path);
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed") > 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
        if (sub->count("--out") > 0) cfg.output_dir = out_dir;
        const bool accelerated = !flag_standard;

        if (sub == prepare) return cmd_prepare(cfg, out);
        if (sub == train_cmd) return cmd_train(cfg, accelerated, out);
        if (sub == infer) return cmd_infer(cfg, accelerated, model_override, images, out);
        if (sub == bench) return cmd_bench(cfg, out);
        if (sub == tune) return cmd_tune(cfg, out);
        if (sub == report) return cmd_report(cfg, out);
        err << "error: unknown subcommand\n";
        return 2;
    } catch (const TrainDivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const SingularMatrixError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace deqann
