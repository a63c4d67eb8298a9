#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deqann/deq.hpp"
#include "deqann/fixedpoint.hpp"
#include "deqann/graphimage.hpp"

namespace deqann {

// Shape of the classifier and its input images.
struct ModelConfig {
    std::size_t d = 3;
    std::size_t k1 = 16;
    std::size_t classes = 2;
    std::size_t image_size = 32;
};

// Dataset source. With synthetic=true, prepare generates the chain/ring set
// and ignores structure_dir/property_csv/task. With synthetic=false those
// three are required and test_fraction controls the train/test split.
struct DataConfig {
    bool synthetic = true;
    std::string structure_dir;
    std::string property_csv;
    std::string task = "band-gap";
    double cutoff = 2.0;
    std::size_t n_train_per_class = 100;
    std::size_t n_test_per_class = 50;
    std::uint64_t seed = 1;
    double test_fraction = 0.0;
    LabelThresholds thresholds;
};

// Benchmark problem: "contractions" runs random tanh contraction maps,
// "deq" runs forward passes of the configured model on random inputs.
struct BenchConfig {
    std::string problem = "contractions";
    std::size_t cases = 20;
    std::size_t dim = 50;
    std::string model_path;
};

// Grid search over (m, beta) on a fixed problem: "linear" is a seeded
// linear contraction of tune.dim dimensions, "deq" a model forward pass.
struct TuneConfig {
    std::string problem = "linear";
    std::size_t dim = 10;
    std::vector<std::size_t> m_grid = {1, 2, 5, 10};
    std::vector<double> beta_grid = {0.25, 0.5, 0.75, 1.0};
};

struct RunConfig {
    std::string output_dir = "run";
    SolverConfig solver;
    TrainConfig train;
    ModelConfig model;
    DataConfig data;
    BenchConfig bench;
    TuneConfig tune;

    RunConfig();
};

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
// Keys are dotted (solver.m, data.cutoff, ...). Unknown keys and malformed
// values throw ConfigError naming the key and source location.
RunConfig parse_config_text(const std::string& text, const std::string& source);
RunConfig parse_config_file(const std::string& path);

// Canonical listing of every setting as parseable `key = value` lines.
// Feeding the result back through parse_config_text reproduces the config,
// so run metadata doubles as a replay config.
std::string echo_config(const RunConfig& cfg);

}  // namespace deqann
