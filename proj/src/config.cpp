#include "deqann/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deqann/csv.hpp"
#include "deqann/errors.hpp"

namespace deqann {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& source, std::size_t line,
                            const std::string& key, const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(line) +
                      ": invalid value for '" + key + "': " + what);
}

double to_double(const std::string& v, const std::string& source,
                 std::size_t line, const std::string& key) {
    try {
        return csv::parse_double(v, key);
    } catch (const ParseError&) {
        bad_value(source, line, key, "expected a number, got '" + v + "'");
    }
}

std::size_t to_size(const std::string& v, const std::string& source,
                    std::size_t line, const std::string& key) {
    long n = 0;
    try {
        n = csv::parse_long(v, key);
    } catch (const ParseError&) {
        bad_value(source, line, key, "expected an integer, got '" + v + "'");
    }
    if (n < 0) bad_value(source, line, key, "must be nonnegative");
    return static_cast<std::size_t>(n);
}

std::uint64_t to_seed(const std::string& v, const std::string& source,
                      std::size_t line, const std::string& key) {
    return static_cast<std::uint64_t>(to_size(v, source, line, key));
}

bool to_bool(const std::string& v, const std::string& source,
             std::size_t line, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(source, line, key, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

std::vector<std::size_t> to_size_list(const std::string& v, const std::string& source,
                                      std::size_t line, const std::string& key) {
    std::vector<std::size_t> out;
    for (const std::string& p : split_list(v)) {
        if (p.empty()) bad_value(source, line, key, "empty list entry");
        out.push_back(to_size(p, source, line, key));
    }
    return out;
}

std::vector<double> to_double_list(const std::string& v, const std::string& source,
                                   std::size_t line, const std::string& key) {
    std::vector<double> out;
    for (const std::string& p : split_list(v)) {
        if (p.empty()) bad_value(source, line, key, "empty list entry");
        out.push_back(to_double(p, source, line, key));
    }
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(xs[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += csv::format_double(xs[i]);
    }
    return out;
}

}  // namespace

// Defaults match the reference recipe: it reaches full test accuracy on the
// synthetic dataset with the accelerated solver in about ten epochs.
RunConfig::RunConfig() {
    solver.max_iter = 300;
    train.learning_rate = 2.0;
    train.epochs = 10;
    train.batch_size = 10;
    train.cosine_annealing = true;
    train.seed = 3;
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::string line = trim(raw);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
        }

        if (key == "output_dir") {
            cfg.output_dir = value;
        } else if (key == "solver.m") {
            cfg.solver.m = to_size(value, source, lineno, key);
        } else if (key == "solver.lambda") {
            cfg.solver.lambda = to_double(value, source, lineno, key);
        } else if (key == "solver.beta") {
            cfg.solver.beta = to_double(value, source, lineno, key);
        } else if (key == "solver.tol") {
            cfg.solver.tol = to_double(value, source, lineno, key);
        } else if (key == "solver.max_iter") {
            cfg.solver.max_iter = to_size(value, source, lineno, key);
        } else if (key == "train.learning_rate") {
            cfg.train.learning_rate = to_double(value, source, lineno, key);
        } else if (key == "train.epochs") {
            cfg.train.epochs = to_size(value, source, lineno, key);
        } else if (key == "train.batch_size") {
            cfg.train.batch_size = to_size(value, source, lineno, key);
        } else if (key == "train.cosine_annealing") {
            cfg.train.cosine_annealing = to_bool(value, source, lineno, key);
        } else if (key == "train.seed") {
            cfg.train.seed = to_seed(value, source, lineno, key);
        } else if (key == "train.backward_tol") {
            cfg.train.backward_tol = to_double(value, source, lineno, key);
        } else if (key == "model.d") {
            cfg.model.d = to_size(value, source, lineno, key);
        } else if (key == "model.k1") {
            cfg.model.k1 = to_size(value, source, lineno, key);
        } else if (key == "model.classes") {
            cfg.model.classes = to_size(value, source, lineno, key);
        } else if (key == "model.image_size") {
            cfg.model.image_size = to_size(value, source, lineno, key);
        } else if (key == "data.synthetic") {
            cfg.data.synthetic = to_bool(value, source, lineno, key);
        } else if (key == "data.structure_dir") {
            cfg.data.structure_dir = value;
        } else if (key == "data.property_csv") {
            cfg.data.property_csv = value;
        } else if (key == "data.task") {
            cfg.data.task = value;
        } else if (key == "data.cutoff") {
            cfg.data.cutoff = to_double(value, source, lineno, key);
        } else if (key == "data.n_train_per_class") {
            cfg.data.n_train_per_class = to_size(value, source, lineno, key);
        } else if (key == "data.n_test_per_class") {
            cfg.data.n_test_per_class = to_size(value, source, lineno, key);
        } else if (key == "data.seed") {
            cfg.data.seed = to_seed(value, source, lineno, key);
        } else if (key == "data.test_fraction") {
            cfg.data.test_fraction = to_double(value, source, lineno, key);
        } else if (key == "data.gap_metal_max") {
            cfg.data.thresholds.gap_metal_max = to_double(value, source, lineno, key);
        } else if (key == "data.gap_insulator_min") {
            cfg.data.thresholds.gap_insulator_min = to_double(value, source, lineno, key);
        } else if (key == "data.dipole_threshold") {
            cfg.data.thresholds.dipole_threshold = to_double(value, source, lineno, key);
        } else if (key == "data.pore_threshold") {
            cfg.data.thresholds.pore_threshold = to_double(value, source, lineno, key);
            cfg.data.thresholds.pore_threshold_set = true;
        } else if (key == "bench.problem") {
            if (value != "contractions" && value != "deq") {
                bad_value(source, lineno, key, "expected contractions or deq");
            }
            cfg.bench.problem = value;
        } else if (key == "bench.cases") {
            cfg.bench.cases = to_size(value, source, lineno, key);
        } else if (key == "bench.dim") {
            cfg.bench.dim = to_size(value, source, lineno, key);
        } else if (key == "bench.model_path") {
            cfg.bench.model_path = value;
        } else if (key == "tune.problem") {
            if (value != "linear" && value != "deq") {
                bad_value(source, lineno, key, "expected linear or deq");
            }
            cfg.tune.problem = value;
        } else if (key == "tune.dim") {
            cfg.tune.dim = to_size(value, source, lineno, key);
        } else if (key == "tune.m_grid") {
            cfg.tune.m_grid = to_size_list(value, source, lineno, key);
        } else if (key == "tune.beta_grid") {
            cfg.tune.beta_grid = to_double_list(value, source, lineno, key);
        } else {
            throw ConfigError(source + ":" + std::to_string(lineno) +
                              ": unknown config key '" + key + "'");
        }
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string echo_config(const RunConfig& cfg) {
    std::ostringstream out;
    auto put = [&out](const std::string& key, const std::string& value) {
        out << key << " = " << value << "\n";
    };
    put("output_dir", cfg.output_dir);
    put("solver.m", std::to_string(cfg.solver.m));
    put("solver.lambda", csv::format_double(cfg.solver.lambda));
    put("solver.beta", csv::format_double(cfg.solver.beta));
    put("solver.tol", csv::format_double(cfg.solver.tol));
    put("solver.max_iter", std::to_string(cfg.solver.max_iter));
    put("train.learning_rate", csv::format_double(cfg.train.learning_rate));
    put("train.epochs", std::to_string(cfg.train.epochs));
    put("train.batch_size", std::to_string(cfg.train.batch_size));
    put("train.cosine_annealing", cfg.train.cosine_annealing ? "true" : "false");
    put("train.seed", std::to_string(cfg.train.seed));
    put("train.backward_tol", csv::format_double(cfg.train.backward_tol));
    put("model.d", std::to_string(cfg.model.d));
    put("model.k1", std::to_string(cfg.model.k1));
    put("model.classes", std::to_string(cfg.model.classes));
    put("model.image_size", std::to_string(cfg.model.image_size));
    put("data.synthetic", cfg.data.synthetic ? "true" : "false");
    put("data.structure_dir", cfg.data.structure_dir);
    put("data.property_csv", cfg.data.property_csv);
    put("data.task", cfg.data.task);
    put("data.cutoff", csv::format_double(cfg.data.cutoff));
    put("data.n_train_per_class", std::to_string(cfg.data.n_train_per_class));
    put("data.n_test_per_class", std::to_string(cfg.data.n_test_per_class));
    put("data.seed", std::to_string(cfg.data.seed));
    put("data.test_fraction", csv::format_double(cfg.data.test_fraction));
    put("data.gap_metal_max", csv::format_double(cfg.data.thresholds.gap_metal_max));
    put("data.gap_insulator_min", csv::format_double(cfg.data.thresholds.gap_insulator_min));
    put("data.dipole_threshold", csv::format_double(cfg.data.thresholds.dipole_threshold));
    if (cfg.data.thresholds.pore_threshold_set) {
        put("data.pore_threshold", csv::format_double(cfg.data.thresholds.pore_threshold));
    }
    put("bench.problem", cfg.bench.problem);
    put("bench.cases", std::to_string(cfg.bench.cases));
    put("bench.dim", std::to_string(cfg.bench.dim));
    put("bench.model_path", cfg.bench.model_path);
    put("tune.problem", cfg.tune.problem);
    put("tune.dim", std::to_string(cfg.tune.dim));
    put("tune.m_grid", join_sizes(cfg.tune.m_grid));
    put("tune.beta_grid", join_doubles(cfg.tune.beta_grid));
    return out.str();
}

}  // namespace deqann
