#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "deqann/errors.hpp"
#include "deqann/graphimage.hpp"
#include "deqann/rng.hpp"
#include "doctest.h"

using namespace deqann;
namespace fs = std::filesystem;

namespace {

// Independent copy of the periodic table for the injectivity sweep; not
// shared with the library's own table.
const char* kSymbols[118] = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& child) const { return (path / child).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(static_cast<bool>(out));
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(static_cast<bool>(in));
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool is_white(const ImageBuffer& img, std::size_t x, std::size_t y) {
    const std::uint8_t* p = img.at(x, y);
    return p[0] == 255 && p[1] == 255 && p[2] == 255;
}

std::size_t count_nonwhite(const ImageBuffer& img) {
    std::size_t n = 0;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            if (!is_white(img, x, y)) ++n;
        }
    }
    return n;
}

// Centroid of the pixels matching a color exactly; for a filled disk this is
// its center.
std::pair<double, double> color_centroid(const ImageBuffer& img, Rgb c) {
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const std::uint8_t* p = img.at(x, y);
            if (p[0] == c.r && p[1] == c.g && p[2] == c.b) {
                sx += static_cast<double>(x);
                sy += static_cast<double>(y);
                ++n;
            }
        }
    }
    REQUIRE(n > 0);
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

MolecularStructure random_cloud(Rng& rng, std::size_t n_atoms, double box) {
    MolecularStructure s;
    s.id = "cloud";
    for (std::size_t i = 0; i < n_atoms; ++i) {
        Atom a;
        a.element = kSymbols[rng.int_in(0, 117)];
        for (int c = 0; c < 3; ++c) a.position[c] = rng.uniform(0.0, box);
        s.atoms.push_back(std::move(a));
    }
    return s;
}

// O(N^2) double loop, written without reference to build_neighbor_graph.
std::set<std::pair<std::size_t, std::size_t>> brute_force_edges(const MolecularStructure& s,
                                                                double cutoff) {
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < s.atoms.size(); ++i) {
        for (std::size_t j = 0; j < s.atoms.size(); ++j) {
            if (i == j) continue;
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = s.atoms[i].position[c] - s.atoms[j].position[c];
                d2 += d * d;
            }
            if (std::sqrt(d2) <= cutoff) edges.insert({std::min(i, j), std::max(i, j)});
        }
    }
    return edges;
}

}  // namespace

TEST_CASE("atomic_number spot values and rejection") {
    CHECK(atomic_number("H") == 1);
    CHECK(atomic_number("C") == 6);
    CHECK(atomic_number("Fe") == 26);
    CHECK(atomic_number("Og") == 118);
    for (int z = 1; z <= 118; ++z) CHECK(atomic_number(kSymbols[z - 1]) == z);
    CHECK_THROWS_AS(atomic_number("Xx"), LookupError);
    CHECK_THROWS_AS(atomic_number("h"), LookupError);
    CHECK_THROWS_AS(atomic_number(""), LookupError);
}

TEST_CASE("element colors are stable, injective, and never white") {
    CHECK(element_color("H") == element_color("H"));
    CHECK_FALSE(element_color("H") == element_color("He"));
    std::set<std::uint32_t> seen;
    for (const char* sym : kSymbols) {
        const Rgb c = element_color(sym);
        CHECK_FALSE((c.r == 255 && c.g == 255 && c.b == 255));
        seen.insert((std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | c.b);
    }
    CHECK(seen.size() == 118);
    CHECK_THROWS_AS(element_color("Zz"), LookupError);
}

TEST_CASE("parse_xyz well-formed files") {
    const MolecularStructure one = parse_xyz("1\n\nH 0 0 0", "m1");
    CHECK(one.id == "m1");
    REQUIRE(one.atoms.size() == 1);
    CHECK(one.atoms[0].element == "H");
    CHECK(one.atoms[0].position == std::array<double, 3>{0, 0, 0});

    const MolecularStructure water =
        parse_xyz("3\nwater\nO 0 0 0\nH 0.757 0.586 0\nH -0.757 0.586 0");
    REQUIRE(water.atoms.size() == 3);
    CHECK(water.atoms[0].element == "O");
    CHECK(water.atoms[1].element == "H");
    CHECK(water.atoms[2].element == "H");
    CHECK(water.atoms[1].position[0] == 0.757);
    CHECK(water.atoms[2].position[0] == -0.757);

    // Whitespace tolerant: extra spaces, tabs, trailing blank lines.
    const MolecularStructure ws = parse_xyz("2\ncomment\n  C\t1.0  2.0\t3.0\nN 0 0 0\n\n  \n");
    REQUIRE(ws.atoms.size() == 2);
    CHECK(ws.atoms[0].element == "C");
    CHECK(ws.atoms[0].position == std::array<double, 3>{1.0, 2.0, 3.0});
}

TEST_CASE("parse_xyz errors carry line numbers") {
    const auto message = [](const auto& fn) -> std::string {
        try {
            fn();
        } catch (const ParseError& e) {
            return e.what();
        }
        return "";
    };
    CHECK(message([] { parse_xyz(""); }) == "line 1: expected atom count");
    CHECK(message([] { parse_xyz("abc\n\nH 0 0 0"); }) ==
          "line 1: expected atom count, got 'abc'");
    CHECK(message([] { parse_xyz("1"); }) == "line 2: expected comment line");
    CHECK(message([] { parse_xyz("2\n\nH 0 0 0"); }) ==
          "line 4: expected 2 atom lines, found 1");
    CHECK(message([] { parse_xyz("1\n\nH 0 0"); }) == "line 3: expected 'symbol x y z'");
    CHECK(message([] { parse_xyz("2\n\nH 0 0 0\nXx 1 0 0"); }) == "line 4: unknown element 'Xx'");
    CHECK(message([] { parse_xyz("1\n\nH 0 zero 0"); }) ==
          "line 3: malformed coordinate 'zero'");
    CHECK(message([] { parse_xyz("1\n\nH 0 0 0\nC 1 1 1"); }) ==
          "line 4: unexpected content after 1 atoms");
    CHECK(message([] { parse_xyz("0\n\n"); }) == "line 1: expected atom count, got '0'");
}

TEST_CASE("neighbor graph basic cases") {
    const MolecularStructure single = parse_xyz("1\n\nH 0 0 0");
    const NeighborGraph g1 = build_neighbor_graph(single, 2.0);
    CHECK(g1.nodes == std::vector<std::string>{"H"});
    CHECK(g1.edges.empty());

    const MolecularStructure chain = parse_xyz("3\n\nC 0 0 0\nC 1.2 0 0\nC 2.4 0 0");
    const NeighborGraph g2 = build_neighbor_graph(chain, 2.0);
    REQUIRE(g2.edges.size() == 2);
    CHECK(g2.edges[0] == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(g2.edges[1] == std::pair<std::size_t, std::size_t>{1, 2});

    // Boundary: distance exactly equal to the cutoff is an edge.
    const MolecularStructure pair = parse_xyz("2\n\nH 0 0 0\nH 2.0 0 0");
    CHECK(build_neighbor_graph(pair, 2.0).edges.size() == 1);
    CHECK(build_neighbor_graph(pair, 1.999).edges.empty());

    CHECK_THROWS(build_neighbor_graph(single, 0.0));
    CHECK_THROWS(build_neighbor_graph(single, -1.0));
}

TEST_CASE("neighbor graph matches brute-force oracle on random clouds") {
    Rng rng(8080);
    for (int trial = 0; trial < 10; ++trial) {
        const MolecularStructure s = random_cloud(rng, 50, 5.0);
        for (const double cutoff : {2.0, 3.4}) {
            const NeighborGraph g = build_neighbor_graph(s, cutoff);
            const auto oracle = brute_force_edges(s, cutoff);
            const std::set<std::pair<std::size_t, std::size_t>> got(g.edges.begin(),
                                                                    g.edges.end());
            CHECK(got.size() == g.edges.size());  // no duplicates
            CHECK(got == oracle);
            for (const auto& [i, j] : g.edges) CHECK(i < j);
        }
    }
}

TEST_CASE("render rejects bad inputs") {
    const MolecularStructure s = parse_xyz("1\n\nH 0 0 0");
    const NeighborGraph g = build_neighbor_graph(s, 2.0);
    CHECK_THROWS(render_graph_image(g, s, 31, 64));
    CHECK_THROWS(render_graph_image(g, s, 64, 16));
    MolecularStructure two = s;
    two.atoms.push_back(two.atoms[0]);
    CHECK_THROWS_AS(render_graph_image(g, two, 64, 64), ShapeError);
}

TEST_CASE("single atom renders one centered disk") {
    const MolecularStructure s = parse_xyz("1\n\nFe 0 0 0");
    const ImageBuffer img = render_graph_image(build_neighbor_graph(s, 2.0), s, 64, 64);
    CHECK(img.width == 64);
    CHECK(img.height == 64);
    // All positions project to one point, drawn at the rounded center with
    // radius max(2, 64/64) = 2: a 13-pixel disk.
    CHECK(count_nonwhite(img) == 13);
    const Rgb c = element_color("Fe");
    const auto [cx, cy] = color_centroid(img, c);
    CHECK(cx == doctest::Approx(32.0));
    CHECK(cy == doctest::Approx(32.0));
    CHECK(is_white(img, 0, 0));
    CHECK(is_white(img, 63, 63));
}

TEST_CASE("two bonded atoms match a rasterization oracle") {
    const MolecularStructure s = parse_xyz("2\n\nH 0 0 0\nO 1.2 0 0");
    const NeighborGraph g = build_neighbor_graph(s, 2.0);
    const ImageBuffer img = render_graph_image(g, s, 64, 64);

    const auto [hx, hy] = color_centroid(img, element_color("H"));
    const auto [ox, oy] = color_centroid(img, element_color("O"));
    CHECK(std::fabs(hy - oy) < 1e-9);  // bond axis is the principal axis

    // Distance-based oracle: a pixel is ink iff it lies in either disk
    // (radius 2) or within half a pixel of the segment between the centers.
    const double r = 2.0;
    std::size_t oracle = 0;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const double px = static_cast<double>(x), py = static_cast<double>(y);
            const double dh = std::hypot(px - hx, py - hy);
            const double dox = std::hypot(px - ox, py - oy);
            bool ink = dh <= r || dox <= r;
            if (!ink) {
                const double ax = ox - hx, ay = oy - hy;
                const double len2 = ax * ax + ay * ay;
                const double t = ((px - hx) * ax + (py - hy) * ay) / len2;
                if (t >= 0.0 && t <= 1.0) {
                    const double qx = hx + t * ax, qy = hy + t * ay;
                    ink = std::hypot(px - qx, py - qy) <= 0.5;
                }
            }
            if (ink) ++oracle;
        }
    }
    const auto actual = static_cast<double>(count_nonwhite(img));
    CHECK(std::fabs(actual - static_cast<double>(oracle)) <= 0.05 * actual);
}

TEST_CASE("rendering is bit-identical across calls") {
    Rng rng(4242);
    const MolecularStructure s = random_cloud(rng, 12, 4.0);
    const NeighborGraph g = build_neighbor_graph(s, 2.5);
    const ImageBuffer a = render_graph_image(g, s, 48, 48);
    const ImageBuffer b = render_graph_image(g, s, 48, 48);
    CHECK(a.pixels == b.pixels);
}

TEST_CASE("ppm writes round-trip exactly") {
    TempDir dir("deqann_test_ppm");
    Rng rng(7);
    const MolecularStructure s = random_cloud(rng, 6, 3.0);
    const ImageBuffer img = render_graph_image(build_neighbor_graph(s, 2.0), s, 32, 40);
    const std::string path = dir.sub("img.ppm");
    write_ppm(img, path);
    const ImageBuffer back = read_ppm(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.pixels == img.pixels);

    CHECK_THROWS(read_ppm(dir.sub("missing.ppm")));
    write_file(dir.sub("bad.ppm"), "P3\n2 2\n255\n");
    CHECK_THROWS_AS(read_ppm(dir.sub("bad.ppm")), FormatError);
}

TEST_CASE("property table loads and rejects") {
    TempDir dir("deqann_test_props");
    const std::string path = dir.sub("props.csv");
    write_file(path,
               "id,band_gap,dipole,pore_diameter\n"
               "mol_a,0.0,1.2,3.5\n"
               "mol_b,1.1,5.0,8.25\n");
    const PropertyTable t = PropertyTable::load(path);
    CHECK(t.property_names ==
          std::vector<std::string>{"band_gap", "dipole", "pore_diameter"});
    CHECK(t.has("mol_a"));
    CHECK_FALSE(t.has("mol_c"));
    CHECK(t.get("mol_a", "band_gap") == 0.0);
    CHECK(t.get("mol_b", "pore_diameter") == 8.25);
    CHECK_THROWS_AS(t.get("mol_c", "band_gap"), LookupError);
    CHECK_THROWS_AS(t.get("mol_a", "charge"), LookupError);

    write_file(dir.sub("noid.csv"), "name,band_gap\nmol_a,1.0\n");
    CHECK_THROWS_AS(PropertyTable::load(dir.sub("noid.csv")), ParseError);
    write_file(dir.sub("dup.csv"), "id,band_gap\nm,1.0\nm,2.0\n");
    CHECK_THROWS_AS(PropertyTable::load(dir.sub("dup.csv")), ParseError);
    write_file(dir.sub("nan.csv"), "id,band_gap\nm,nan\n");
    CHECK_THROWS_AS(PropertyTable::load(dir.sub("nan.csv")), ParseError);
    write_file(dir.sub("text.csv"), "id,band_gap\nm,wide\n");
    CHECK_THROWS(PropertyTable::load(dir.sub("text.csv")));
}

TEST_CASE("label task names round-trip") {
    for (const auto task :
         {LabelTask::DipolePolarity, LabelTask::PoreSize, LabelTask::BandGap}) {
        CHECK(parse_label_task(label_task_name(task)) == task);
    }
    CHECK(label_class_count(LabelTask::BandGap) == 3);
    CHECK(label_class_count(LabelTask::PoreSize) == 2);
    CHECK(label_class_count(LabelTask::DipolePolarity) == 2);
    CHECK_THROWS_AS(parse_label_task("polarity"), ConfigError);
}

TEST_CASE("derive_label thresholds, including exact boundaries") {
    TempDir dir("deqann_test_labels");
    const std::string path = dir.sub("props.csv");
    write_file(path,
               "id,band_gap,dipole,pore_diameter\n"
               "metal,0.0,0,0\n"
               "edge_metal,0.1,0,0\n"
               "semi,1.1,0,0\n"
               "edge_ins,3.0,0,0\n"
               "ins,5.5,0,0\n"
               "weak,0,0.0,0\n"
               "edge_polar,0,4.803,0\n"
               "neg_polar,0,-6.0,0\n"
               "small_pore,0,0,2.49\n"
               "edge_pore,0,0,2.5\n");
    const PropertyTable t = PropertyTable::load(path);
    LabelThresholds def;

    CHECK(derive_label(t, "metal", LabelTask::BandGap, def) == 0);
    CHECK(derive_label(t, "edge_metal", LabelTask::BandGap, def) == 0);  // gap <= 0.1 is metal
    CHECK(derive_label(t, "semi", LabelTask::BandGap, def) == 1);
    CHECK(derive_label(t, "edge_ins", LabelTask::BandGap, def) == 2);  // gap >= 3.0 is insulator
    CHECK(derive_label(t, "ins", LabelTask::BandGap, def) == 2);

    CHECK(derive_label(t, "weak", LabelTask::DipolePolarity, def) == 0);
    CHECK(derive_label(t, "edge_polar", LabelTask::DipolePolarity, def) == 1);  // |d| >= 4.803
    CHECK(derive_label(t, "neg_polar", LabelTask::DipolePolarity, def) == 1);

    // Pore task has no default threshold; it must be configured.
    CHECK_THROWS_AS(derive_label(t, "edge_pore", LabelTask::PoreSize, def), ConfigError);
    def.pore_threshold = 2.5;
    def.pore_threshold_set = true;
    CHECK(derive_label(t, "edge_pore", LabelTask::PoreSize, def) == 1);  // diameter >= 2.5 fits
    CHECK(derive_label(t, "small_pore", LabelTask::PoreSize, def) == 0);

    CHECK_THROWS_AS(derive_label(t, "absent", LabelTask::BandGap, def), LookupError);
}

TEST_CASE("prepare_dataset joins structures against properties") {
    TempDir dir("deqann_test_prepare");
    fs::create_directories(dir.sub("structs"));
    write_file(dir.sub("structs/mol_a.xyz"), "1\n\nH 0 0 0\n");
    write_file(dir.sub("structs/mol_b.xyz"), "2\n\nC 0 0 0\nO 1.1 0 0\n");
    write_file(dir.sub("structs/mol_c.xyz"), "1\n\nN 0 0 0\n");
    PrepareOptions opt;
    opt.width = 32;
    opt.height = 32;

    SUBCASE("full join") {
        write_file(dir.sub("props.csv"),
                   "id,band_gap\nmol_a,0.0\nmol_b,1.5\nmol_c,4.0\n");
        const Manifest m =
            prepare_dataset(dir.sub("structs"), dir.sub("props.csv"), opt, dir.sub("out"));
        REQUIRE(m.rows.size() == 3);
        CHECK(m.skipped.empty());
        CHECK(m.rows[0].id == "mol_a");
        CHECK(m.rows[1].id == "mol_b");
        CHECK(m.rows[2].id == "mol_c");
        CHECK(m.rows[0].label == 0);
        CHECK(m.rows[1].label == 1);
        CHECK(m.rows[2].label == 2);
        for (const auto& row : m.rows) {
            CHECK(fs::exists(fs::path(dir.sub("out")) / row.image_path));
        }
        const Manifest loaded = load_manifest(dir.sub("out/manifest.csv"));
        REQUIRE(loaded.rows.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(loaded.rows[i].id == m.rows[i].id);
            CHECK(loaded.rows[i].image_path == m.rows[i].image_path);
            CHECK(loaded.rows[i].label == m.rows[i].label);
        }
    }

    SUBCASE("empty property table skips every structure") {
        write_file(dir.sub("props.csv"), "id,band_gap\n");
        const Manifest m =
            prepare_dataset(dir.sub("structs"), dir.sub("props.csv"), opt, dir.sub("out"));
        CHECK(m.rows.empty());
        CHECK(m.skipped.size() == 3);
        CHECK(m.skipped[0].first == "mol_a");
        CHECK(fs::exists(dir.sub("out/skipped.txt")));
        const std::string log = read_file(dir.sub("out/skipped.txt"));
        CHECK(log.find("mol_b") != std::string::npos);
    }

    SUBCASE("partial join records skip reasons") {
        write_file(dir.sub("props.csv"), "id,band_gap\nmol_b,2.0\n");
        const Manifest m =
            prepare_dataset(dir.sub("structs"), dir.sub("props.csv"), opt, dir.sub("out"));
        REQUIRE(m.rows.size() == 1);
        CHECK(m.rows[0].id == "mol_b");
        REQUIRE(m.skipped.size() == 2);
        CHECK(m.skipped[0].first == "mol_a");
        CHECK(m.skipped[1].first == "mol_c");
        CHECK(m.skipped[0].second.find("no property row") != std::string::npos);
    }

    SUBCASE("reruns are byte-identical") {
        write_file(dir.sub("props.csv"), "id,band_gap\nmol_a,0.0\nmol_b,1.5\nmol_c,4.0\n");
        prepare_dataset(dir.sub("structs"), dir.sub("props.csv"), opt, dir.sub("out1"));
        prepare_dataset(dir.sub("structs"), dir.sub("props.csv"), opt, dir.sub("out2"));
        CHECK(read_file(dir.sub("out1/manifest.csv")) == read_file(dir.sub("out2/manifest.csv")));
        CHECK(read_file(dir.sub("out1/images/mol_b.ppm")) ==
              read_file(dir.sub("out2/images/mol_b.ppm")));
    }

    SUBCASE("bad inputs") {
        write_file(dir.sub("props.csv"), "id,band_gap\n");
        CHECK_THROWS(prepare_dataset(dir.sub("nodir"), dir.sub("props.csv"), opt, dir.sub("out")));
        fs::create_directories(dir.sub("emptydir"));
        CHECK_THROWS(
            prepare_dataset(dir.sub("emptydir"), dir.sub("props.csv"), opt, dir.sub("out")));
        write_file(dir.sub("structs/broken.xyz"), "not an xyz\n");
        try {
            prepare_dataset(dir.sub("structs"), dir.sub("props.csv"), opt, dir.sub("out"));
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("broken.xyz") != std::string::npos);
        }
    }
}

TEST_CASE("manifest rows round-trip through write and load") {
    TempDir dir("deqann_test_manifest");
    Manifest m;
    m.rows.push_back({"alpha", "images/alpha.ppm", 0});
    m.rows.push_back({"beta", "images/beta.ppm", 2});
    const std::string path = dir.sub("manifest.csv");
    write_manifest_rows(m, {{"task", "band-gap"}, {"cutoff", "2"}}, path);
    const Manifest back = load_manifest(path);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0].id == "alpha");
    CHECK(back.rows[1].label == 2);
    CHECK(back.rows[1].image_path == "images/beta.ppm");
    // Header fields live in comment lines the loader skips.
    const std::string text = read_file(path);
    CHECK(text.find("# task = band-gap") != std::string::npos);
}

TEST_CASE("synthetic molecules have the advertised topology") {
    char expected[32];
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const MolecularStructure chain = synthetic_molecule(rng, false, seed);
        std::snprintf(expected, sizeof(expected), "chain_%04llu",
                      static_cast<unsigned long long>(seed));
        CHECK(chain.id == expected);  // zero-padded so id sort matches numeric order
        CHECK(chain.atoms.size() >= 5);
        CHECK(chain.atoms.size() <= 9);
        CHECK(build_neighbor_graph(chain, 2.0).edges.size() == chain.atoms.size() - 1);

        const MolecularStructure ring = synthetic_molecule(rng, true, seed);
        std::snprintf(expected, sizeof(expected), "ring_%04llu",
                      static_cast<unsigned long long>(seed));
        CHECK(ring.id == expected);
        CHECK(build_neighbor_graph(ring, 2.0).edges.size() == ring.atoms.size());
    }

    Rng a(99), b(99);
    const MolecularStructure s1 = synthetic_molecule(a, true, 0);
    const MolecularStructure s2 = synthetic_molecule(b, true, 0);
    REQUIRE(s1.atoms.size() == s2.atoms.size());
    for (std::size_t i = 0; i < s1.atoms.size(); ++i) {
        CHECK(s1.atoms[i].element == s2.atoms[i].element);
        CHECK(s1.atoms[i].position == s2.atoms[i].position);
    }
}

TEST_CASE("synthetic dataset generation is seeded and labeled") {
    const auto tiny = generate_synthetic_dataset(1, 5, 32, 32);
    REQUIRE(tiny.size() == 2);
    CHECK(tiny[0].label == 0);
    CHECK(tiny[1].label == 1);
    CHECK(tiny[0].source_id.rfind("chain_", 0) == 0);
    CHECK(tiny[1].source_id.rfind("ring_", 0) == 0);
    CHECK(tiny[0].image.width == 32);
    CHECK(tiny[0].image.pixels.size() == 32 * 32 * 3);

    const auto again = generate_synthetic_dataset(1, 5, 32, 32);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(again[i].image.pixels == tiny[i].image.pixels);
        CHECK(again[i].source_id == tiny[i].source_id);
    }

    const auto other_seed = generate_synthetic_dataset(1, 6, 32, 32);
    CHECK(other_seed[0].image.pixels != tiny[0].image.pixels);

    CHECK_THROWS(generate_synthetic_dataset(0, 5, 32, 32));
}
