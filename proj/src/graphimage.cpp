#include "deqann/graphimage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "deqann/csv.hpp"

namespace deqann {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPeriodicTable[118] = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

double frac(double x) { return x - std::floor(x); }

Rgb hsv_to_rgb(double h, double s, double v) {
    const double hh = frac(h) * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    auto byte = [](double c) { return static_cast<std::uint8_t>(std::lround(255.0 * c)); };
    return Rgb{byte(r), byte(g), byte(b)};
}

// Golden-ratio style walk through HSV space: consecutive atomic numbers land
// far apart in hue, and the irrational strides keep the table collision-free.
const std::array<Rgb, 118>& color_table() {
    static const std::array<Rgb, 118> table = [] {
        std::array<Rgb, 118> t{};
        for (int z = 1; z <= 118; ++z) {
            const double h = frac(z * 0.6180339887498949);
            const double s = 0.55 + 0.45 * frac(z * 0.41421356237309515);
            const double v = 0.65 + 0.35 * frac(z * 0.7320508075688772);
            t[z - 1] = hsv_to_rgb(h, s, v);
        }
        return t;
    }();
    return table;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

double parse_coord(const std::string& tok, std::size_t lineno) {
    const char* s = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(lineno) + ": malformed coordinate '" + tok +
                         "'");
    }
    return v;
}

// Eigen-decomposition of a symmetric 3x3 by cyclic Jacobi rotations.
// Columns of v are eigenvectors paired with w.
void jacobi3(double a[3][3], double w[3], double v[3][3]) {
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) v[i][j] = (i == j) ? 1.0 : 0.0;
    }
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
        if (off == 0.0) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::fabs(a[p][q]) == 0.0) continue;
                const double tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const double app = a[p][p], aqq = a[q][q], apq = a[p][q];
                a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                const int r = 3 - p - q;
                const double arp = a[r][p], arq = a[r][q];
                a[r][p] = c * arp - s * arq;
                a[p][r] = a[r][p];
                a[r][q] = s * arp + c * arq;
                a[q][r] = a[r][q];
                for (int i = 0; i < 3; ++i) {
                    const double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    for (int i = 0; i < 3; ++i) w[i] = a[i][i];
}

struct Projected {
    std::vector<double> x, y;
};

// Positions onto the top-2 principal axes. Sign of each axis is fixed by
// making its largest-magnitude component positive, so the layout never
// depends on the eigensolver's sign choice.
Projected pca_project(const MolecularStructure& s) {
    const std::size_t n = s.atoms.size();
    double mean[3] = {0, 0, 0};
    for (const auto& atom : s.atoms) {
        for (int c = 0; c < 3; ++c) mean[c] += atom.position[c];
    }
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(n);

    double cov[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    for (const auto& atom : s.atoms) {
        double d[3];
        for (int c = 0; c < 3; ++c) d[c] = atom.position[c] - mean[c];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) cov[i][j] += d[i] * d[j];
        }
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) cov[i][j] /= static_cast<double>(n);
    }

    double w[3], v[3][3];
    jacobi3(cov, w, v);
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return w[a] > w[b]; });

    double axes[2][3];
    for (int k = 0; k < 2; ++k) {
        const int col = order[k];
        for (int c = 0; c < 3; ++c) axes[k][c] = v[c][col];
        int big = 0;
        for (int c = 1; c < 3; ++c) {
            if (std::fabs(axes[k][c]) > std::fabs(axes[k][big])) big = c;
        }
        if (axes[k][big] < 0.0) {
            for (int c = 0; c < 3; ++c) axes[k][c] = -axes[k][c];
        }
    }

    Projected out;
    out.x.resize(n);
    out.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d[3];
        for (int c = 0; c < 3; ++c) d[c] = s.atoms[i].position[c] - mean[c];
        out.x[i] = d[0] * axes[0][0] + d[1] * axes[0][1] + d[2] * axes[0][2];
        out.y[i] = d[0] * axes[1][0] + d[1] * axes[1][1] + d[2] * axes[1][2];
    }
    return out;
}

void put_pixel(ImageBuffer& img, long x, long y, Rgb color) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height))
        return;
    auto* p = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    p[0] = color.r;
    p[1] = color.g;
    p[2] = color.b;
}

void draw_line(ImageBuffer& img, long x0, long y0, long x1, long y1, Rgb color) {
    const long dx = std::labs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const long dy = -std::labs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        put_pixel(img, x0, y0, color);
        if (x0 == x1 && y0 == y1) break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void draw_disk(ImageBuffer& img, long cx, long cy, long r, Rgb color) {
    for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy <= r * r) put_pixel(img, cx + dx, cy + dy, color);
        }
    }
}

std::string format_threshold(double v, bool set) {
    return set ? csv::format_double(v) : std::string("unset");
}

}  // namespace

int atomic_number(const std::string& symbol) {
    static const std::map<std::string, int> index = [] {
        std::map<std::string, int> m;
        for (int z = 1; z <= 118; ++z) m[kPeriodicTable[z - 1]] = z;
        return m;
    }();
    auto it = index.find(symbol);
    if (it == index.end()) throw LookupError("unknown element '" + symbol + "'");
    return it->second;
}

Rgb element_color(const std::string& symbol) {
    return color_table()[atomic_number(symbol) - 1];
}

MolecularStructure parse_xyz(const std::string& text, const std::string& id) {
    std::vector<std::string> lines;
    {
        std::string cur;
        for (char c : text) {
            if (c == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) lines.push_back(cur);
    }

    if (lines.empty() || is_blank(lines[0])) {
        throw ParseError("line 1: expected atom count");
    }
    std::size_t count = 0;
    {
        auto tokens = split_ws(lines[0]);
        const char* s = tokens.size() == 1 ? tokens[0].c_str() : "";
        char* end = nullptr;
        const long v = std::strtol(s, &end, 10);
        if (tokens.size() != 1 || end == s || *end != '\0' || v < 1) {
            throw ParseError("line 1: expected atom count, got '" + lines[0] + "'");
        }
        count = static_cast<std::size_t>(v);
    }
    if (lines.size() < 2) throw ParseError("line 2: expected comment line");

    MolecularStructure s;
    s.id = id;
    s.atoms.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t lineno = 3 + i;
        if (lineno - 1 >= lines.size()) {
            throw ParseError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(count) + " atom lines, found " + std::to_string(i));
        }
        auto tokens = split_ws(lines[lineno - 1]);
        if (tokens.size() != 4) {
            throw ParseError("line " + std::to_string(lineno) + ": expected 'symbol x y z'");
        }
        try {
            atomic_number(tokens[0]);
        } catch (const LookupError&) {
            throw ParseError("line " + std::to_string(lineno) + ": unknown element '" +
                             tokens[0] + "'");
        }
        Atom atom;
        atom.element = tokens[0];
        for (int c = 0; c < 3; ++c) atom.position[c] = parse_coord(tokens[1 + c], lineno);
        s.atoms.push_back(std::move(atom));
    }
    for (std::size_t l = 2 + count; l < lines.size(); ++l) {
        if (!is_blank(lines[l])) {
            throw ParseError("line " + std::to_string(l + 1) + ": unexpected content after " +
                             std::to_string(count) + " atoms");
        }
    }
    return s;
}

NeighborGraph build_neighbor_graph(const MolecularStructure& s, double cutoff) {
    if (!(cutoff > 0.0)) throw Error("cutoff must be positive");
    NeighborGraph g;
    g.cutoff = cutoff;
    g.nodes.reserve(s.atoms.size());
    for (const auto& atom : s.atoms) g.nodes.push_back(atom.element);
    const double c2 = cutoff * cutoff;
    for (std::size_t i = 0; i < s.atoms.size(); ++i) {
        for (std::size_t j = i + 1; j < s.atoms.size(); ++j) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = s.atoms[i].position[c] - s.atoms[j].position[c];
                d2 += d * d;
            }
            if (d2 <= c2) g.edges.emplace_back(i, j);
        }
    }
    return g;
}

ImageBuffer render_graph_image(const NeighborGraph& g, const MolecularStructure& s,
                               std::size_t width, std::size_t height) {
    if (width < 32 || height < 32) throw Error("render size must be at least 32x32");
    if (s.atoms.empty()) throw Error("cannot render an empty structure");
    if (g.nodes.size() != s.atoms.size()) {
        throw ShapeError("graph has " + std::to_string(g.nodes.size()) + " nodes for " +
                         std::to_string(s.atoms.size()) + " atoms");
    }

    const Projected proj = pca_project(s);
    double min_x = proj.x[0], max_x = proj.x[0], min_y = proj.y[0], max_y = proj.y[0];
    for (std::size_t i = 1; i < proj.x.size(); ++i) {
        min_x = std::min(min_x, proj.x[i]);
        max_x = std::max(max_x, proj.x[i]);
        min_y = std::min(min_y, proj.y[i]);
        max_y = std::max(max_y, proj.y[i]);
    }
    const double margin = std::max(2.0, static_cast<double>(width) / 16.0);
    const double avail_w = (static_cast<double>(width) - 1.0) - 2.0 * margin;
    const double avail_h = (static_cast<double>(height) - 1.0) - 2.0 * margin;
    const double span_x = max_x - min_x, span_y = max_y - min_y;
    double scale = std::numeric_limits<double>::infinity();
    if (span_x > 0.0) scale = std::min(scale, avail_w / span_x);
    if (span_y > 0.0) scale = std::min(scale, avail_h / span_y);
    if (!std::isfinite(scale)) scale = 0.0;  // all atoms project to one point
    const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);

    std::vector<long> px(proj.x.size()), py(proj.y.size());
    for (std::size_t i = 0; i < proj.x.size(); ++i) {
        px[i] = std::lround((static_cast<double>(width) - 1.0) / 2.0 + (proj.x[i] - cx) * scale);
        py[i] = std::lround((static_cast<double>(height) - 1.0) / 2.0 + (proj.y[i] - cy) * scale);
    }

    ImageBuffer img;
    img.width = width;
    img.height = height;
    img.pixels.assign(width * height * 3, 255);

    const Rgb gray{128, 128, 128};
    for (const auto& [i, j] : g.edges) draw_line(img, px[i], py[i], px[j], py[j], gray);
    const long radius = std::max<long>(2, static_cast<long>(width) / 64);
    for (std::size_t i = 0; i < s.atoms.size(); ++i) {
        draw_disk(img, px[i], py[i], radius, element_color(s.atoms[i].element));
    }
    return img;
}

void write_ppm(const ImageBuffer& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw Error("short write to '" + path + "'");
}

ImageBuffer read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto fail = [&](const std::string& why) {
        throw FormatError("'" + path + "': " + why);
    };
    auto skip_space = [&] {
        while (pos < blob.size()) {
            const char c = blob[pos];
            if (c == '#') {
                while (pos < blob.size() && blob[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> std::size_t {
        skip_space();
        std::size_t start = pos;
        while (pos < blob.size() && blob[pos] >= '0' && blob[pos] <= '9') ++pos;
        if (pos == start) fail("expected integer in header");
        return static_cast<std::size_t>(std::strtoul(blob.c_str() + start, nullptr, 10));
    };

    if (blob.size() < 2 || blob[0] != 'P' || blob[1] != '6') fail("not a P6 pixmap");
    pos = 2;
    const std::size_t w = read_int();
    const std::size_t h = read_int();
    const std::size_t maxval = read_int();
    if (maxval != 255) fail("unsupported max value " + std::to_string(maxval));
    if (pos >= blob.size() || !(blob[pos] == ' ' || blob[pos] == '\t' || blob[pos] == '\r' ||
                                blob[pos] == '\n')) {
        fail("missing whitespace after header");
    }
    ++pos;
    const std::size_t need = w * h * 3;
    if (blob.size() - pos < need) fail("truncated pixel data");

    ImageBuffer img;
    img.width = w;
    img.height = h;
    img.pixels.assign(blob.begin() + static_cast<std::ptrdiff_t>(pos),
                      blob.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

PropertyTable PropertyTable::load(const std::string& path) {
    const csv::Table t = csv::read_table_file(path);
    const std::size_t id_col = [&] {
        try {
            return t.column("id");
        } catch (const LookupError&) {
            throw ParseError("'" + path + "': property CSV must have an 'id' column");
        }
    }();

    PropertyTable table;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c != id_col) table.property_names.push_back(t.header[c]);
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string& id = row[id_col];
        if (table.rows.count(id)) {
            throw ParseError("'" + path + "': duplicate id '" + id + "'");
        }
        auto& props = table.rows[id];
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (c == id_col) continue;
            const std::string context = path + " row " + std::to_string(r + 1) + " column '" +
                                        t.header[c] + "'";
            const double v = csv::parse_double(row[c], context);
            if (!std::isfinite(v)) throw ParseError(context + ": value must be finite");
            props[t.header[c]] = v;
        }
    }
    return table;
}

double PropertyTable::get(const std::string& id, const std::string& property) const {
    auto it = rows.find(id);
    if (it == rows.end()) throw LookupError("no property row for structure '" + id + "'");
    auto jt = it->second.find(property);
    if (jt == it->second.end()) {
        throw LookupError("structure '" + id + "' has no property '" + property + "'");
    }
    return jt->second;
}

LabelTask parse_label_task(const std::string& name) {
    if (name == "dipole-polarity") return LabelTask::DipolePolarity;
    if (name == "pore-size") return LabelTask::PoreSize;
    if (name == "band-gap") return LabelTask::BandGap;
    throw ConfigError("unknown label task '" + name +
                      "' (expected dipole-polarity, pore-size, or band-gap)");
}

std::string label_task_name(LabelTask task) {
    switch (task) {
        case LabelTask::DipolePolarity: return "dipole-polarity";
        case LabelTask::PoreSize: return "pore-size";
        default: return "band-gap";
    }
}

int label_class_count(LabelTask task) { return task == LabelTask::BandGap ? 3 : 2; }

int derive_label(const PropertyTable& props, const std::string& id, LabelTask task,
                 const LabelThresholds& thresholds) {
    switch (task) {
        case LabelTask::DipolePolarity: {
            const double dipole = props.get(id, "dipole");
            return std::fabs(dipole) >= thresholds.dipole_threshold ? 1 : 0;
        }
        case LabelTask::PoreSize: {
            if (!thresholds.pore_threshold_set) {
                throw ConfigError("data.pore_threshold must be set for the pore-size task");
            }
            const double diameter = props.get(id, "pore_diameter");
            return diameter >= thresholds.pore_threshold ? 1 : 0;
        }
        default: {
            const double gap = props.get(id, "band_gap");
            if (gap <= thresholds.gap_metal_max) return 0;
            if (gap >= thresholds.gap_insulator_min) return 2;
            return 1;
        }
    }
}

Manifest prepare_dataset(const std::string& structure_dir, const std::string& property_csv,
                         const PrepareOptions& opt, const std::string& out_dir) {
    if (!fs::is_directory(structure_dir)) {
        throw Error("structure directory '" + structure_dir + "' does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(structure_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".xyz") {
            files.push_back(entry.path());
        }
    }
    if (files.empty()) throw Error("no .xyz files in '" + structure_dir + "'");
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.stem() < b.stem(); });

    const PropertyTable props = PropertyTable::load(property_csv);
    fs::create_directories(fs::path(out_dir) / "images");

    Manifest manifest;
    for (const auto& file : files) {
        const std::string id = file.stem().string();
        std::ifstream in(file);
        if (!in) throw Error("cannot open '" + file.string() + "'");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        MolecularStructure s;
        try {
            s = parse_xyz(text, id);
        } catch (const ParseError& e) {
            throw ParseError(file.string() + ": " + e.what());
        }

        int label = 0;
        try {
            label = derive_label(props, id, opt.task, opt.thresholds);
        } catch (const LookupError& e) {
            manifest.skipped.emplace_back(id, e.what());
            continue;
        }

        const NeighborGraph g = build_neighbor_graph(s, opt.cutoff);
        const ImageBuffer img = render_graph_image(g, s, opt.width, opt.height);
        const std::string rel = "images/" + id + ".ppm";
        write_ppm(img, (fs::path(out_dir) / rel).string());
        manifest.rows.push_back({id, rel, label});
    }

    write_manifest(manifest, opt, out_dir);
    return manifest;
}

void write_manifest_rows(const Manifest& m,
                         const std::vector<std::pair<std::string, std::string>>& header_fields,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    for (const auto& [key, value] : header_fields) {
        out << "# " << key << " = " << value << "\n";
    }
    out << "id,image_path,label\n";
    for (const auto& row : m.rows) {
        out << row.id << "," << row.image_path << "," << row.label << "\n";
    }
}

std::vector<std::pair<std::string, std::string>> manifest_header_fields(const PrepareOptions& opt) {
    return {
        {"task", label_task_name(opt.task)},
        {"cutoff", csv::format_double(opt.cutoff)},
        {"width", std::to_string(opt.width)},
        {"height", std::to_string(opt.height)},
        {"gap_metal_max", csv::format_double(opt.thresholds.gap_metal_max)},
        {"gap_insulator_min", csv::format_double(opt.thresholds.gap_insulator_min)},
        {"dipole_threshold", csv::format_double(opt.thresholds.dipole_threshold)},
        {"pore_threshold",
         format_threshold(opt.thresholds.pore_threshold, opt.thresholds.pore_threshold_set)},
    };
}

void write_manifest(const Manifest& m, const PrepareOptions& opt, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_manifest_rows(m, manifest_header_fields(opt),
                        (fs::path(out_dir) / "manifest.csv").string());

    const std::string skip_path = (fs::path(out_dir) / "skipped.txt").string();
    std::ofstream skip(skip_path);
    if (!skip) throw Error("cannot write '" + skip_path + "'");
    for (const auto& [id, reason] : m.skipped) skip << id << "\t" << reason << "\n";
}

Manifest load_manifest(const std::string& path) {
    const csv::Table t = csv::read_table_file(path);
    const std::size_t id_col = t.column("id");
    const std::size_t path_col = t.column("image_path");
    const std::size_t label_col = t.column("label");
    Manifest m;
    for (const auto& row : t.rows) {
        const long label = csv::parse_long(row[label_col], path);
        m.rows.push_back({row[id_col], row[path_col], static_cast<int>(label)});
    }
    return m;
}

std::vector<LabeledImage> load_manifest_images(const std::string& manifest_path) {
    const Manifest m = load_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<LabeledImage> out;
    out.reserve(m.rows.size());
    for (const auto& row : m.rows) {
        LabeledImage li;
        li.image = read_ppm((base / row.image_path).string());
        li.label = row.label;
        li.source_id = row.id;
        out.push_back(std::move(li));
    }
    return out;
}

MolecularStructure synthetic_molecule(Rng& rng, bool ring, std::size_t index) {
    constexpr double kSpacing = 1.6;
    constexpr double kJitter = 0.05;
    constexpr double kPi = 3.14159265358979323846;

    const int n = rng.int_in(5, 9);
    std::vector<std::string> elements;
    elements.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        elements.push_back(kPeriodicTable[rng.int_in(1, 17) - 1]);
    }

    MolecularStructure s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu", ring ? "ring" : "chain", index);
    s.id = buf;
    auto jitter = [&] { return rng.uniform(-kJitter, kJitter); };
    if (ring) {
        const double radius = kSpacing / (2.0 * std::sin(kPi / n));
        for (int i = 0; i < n; ++i) {
            const double theta = 2.0 * kPi * i / n;
            s.atoms.push_back({elements[static_cast<std::size_t>(i)],
                               {radius * std::cos(theta) + jitter(),
                                radius * std::sin(theta) + jitter(), jitter()}});
        }
    } else {
        for (int i = 0; i < n; ++i) {
            s.atoms.push_back({elements[static_cast<std::size_t>(i)],
                               {i * kSpacing + jitter(), jitter(), jitter()}});
        }
    }
    return s;
}

std::vector<LabeledImage> generate_synthetic_dataset(std::size_t n_per_class, std::uint64_t seed,
                                                     std::size_t width, std::size_t height) {
    if (n_per_class < 1) throw Error("n_per_class must be >= 1");
    Rng rng(seed);
    std::vector<LabeledImage> out;
    out.reserve(2 * n_per_class);
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (int ring = 0; ring < 2; ++ring) {
            const MolecularStructure s = synthetic_molecule(rng, ring == 1, i);
            const NeighborGraph g = build_neighbor_graph(s, 2.0);
            LabeledImage li;
            li.image = render_graph_image(g, s, width, height);
            li.label = ring;
            li.source_id = s.id;
            out.push_back(std::move(li));
        }
    }
    return out;
}

}  // namespace deqann
