#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deqann/errors.hpp"
#include "deqann/rng.hpp"

namespace deqann {

struct Atom {
    std::string element;
    std::array<double, 3> position;  // Ångström
};

struct MolecularStructure {
    std::string id;
    std::vector<Atom> atoms;
};

// Undirected cutoff graph; edges hold index pairs with first < second,
// sorted ascending, no self loops.
struct NeighborGraph {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    double cutoff = 0.0;
};

// Row-major 8-bit RGB raster, 3 bytes per pixel.
struct ImageBuffer {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t* at(std::size_t x, std::size_t y) { return pixels.data() + 3 * (y * width + x); }
    const std::uint8_t* at(std::size_t x, std::size_t y) const {
        return pixels.data() + 3 * (y * width + x);
    }
};

struct LabeledImage {
    ImageBuffer image;
    int label = 0;
    std::string source_id;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// 1-based atomic number, or LookupError for symbols not in the periodic table.
int atomic_number(const std::string& symbol);

// Fixed injective element → color map (low-discrepancy hue/saturation/value
// walk over the atomic number). Never produces white.
Rgb element_color(const std::string& symbol);

// Standard XYZ: count line, comment line, then `symbol x y z` per atom.
// Errors carry 1-based line numbers. `id` is stored on the result untouched.
MolecularStructure parse_xyz(const std::string& text, const std::string& id = "");

// All-pairs distance test; edge iff distance <= cutoff and i != j.
NeighborGraph build_neighbor_graph(const MolecularStructure& s, double cutoff);

// Orthographic projection onto the two principal axes of the position
// covariance, scaled to fit with a margin. Edges are 1-pixel gray lines,
// nodes filled disks of radius max(2, width/64) in element_color, white
// background. Identical inputs give bit-identical pixels.
ImageBuffer render_graph_image(const NeighborGraph& g, const MolecularStructure& s,
                               std::size_t width, std::size_t height);

void write_ppm(const ImageBuffer& img, const std::string& path);
ImageBuffer read_ppm(const std::string& path);

// Structure id → property name → value. Properties are the CSV's non-id columns.
struct PropertyTable {
    std::vector<std::string> property_names;
    std::map<std::string, std::map<std::string, double>> rows;

    static PropertyTable load(const std::string& path);
    bool has(const std::string& id) const { return rows.count(id) != 0; }
    double get(const std::string& id, const std::string& property) const;
};

enum class LabelTask { DipolePolarity, PoreSize, BandGap };

LabelTask parse_label_task(const std::string& name);  // dipole-polarity | pore-size | band-gap
std::string label_task_name(LabelTask task);
int label_class_count(LabelTask task);

struct LabelThresholds {
    double gap_metal_max = 0.1;      // eV; metal iff gap <= this
    double gap_insulator_min = 3.0;  // eV; insulator iff gap >= this
    double dipole_threshold = 4.803;  // debye; strongly polar iff |dipole| >= this
    double pore_threshold = 0.0;      // Ångström; fits iff diameter >= this; no default,
    bool pore_threshold_set = false;  // must be configured for the pore task
};

// dipole-polarity: 0 = weakly polar, 1 = strongly polar.
// pore-size:       0 = does not fit, 1 = fits.
// band-gap:        0 = metal, 1 = semiconductor, 2 = insulator.
int derive_label(const PropertyTable& props, const std::string& id, LabelTask task,
                 const LabelThresholds& thresholds);

struct ManifestRow {
    std::string id;
    std::string image_path;  // relative to the manifest's directory
    int label = 0;
};

struct Manifest {
    std::vector<ManifestRow> rows;
    std::vector<std::pair<std::string, std::string>> skipped;  // (id, reason)
};

struct PrepareOptions {
    LabelTask task = LabelTask::BandGap;
    double cutoff = 2.0;
    LabelThresholds thresholds;
    std::size_t width = 64;
    std::size_t height = 64;
};

// Parses every .xyz in structure_dir (id = filename stem, ascending), joins
// against the property CSV, renders images to out_dir/images/<id>.ppm and
// writes manifest.csv plus skipped.txt. Returns the manifest.
Manifest prepare_dataset(const std::string& structure_dir, const std::string& property_csv,
                         const PrepareOptions& opt, const std::string& out_dir);

void write_manifest(const Manifest& m, const PrepareOptions& opt, const std::string& out_dir);

// The `# key = value` comment fields write_manifest puts above the rows.
std::vector<std::pair<std::string, std::string>> manifest_header_fields(const PrepareOptions& opt);

// Writes one manifest CSV: `# key = value` comment lines for the header
// fields, then id,image_path,label rows. write_manifest builds on this.
void write_manifest_rows(const Manifest& m,
                         const std::vector<std::pair<std::string, std::string>>& header_fields,
                         const std::string& path);

Manifest load_manifest(const std::string& path);

// Loads every image referenced by a manifest file.
std::vector<LabeledImage> load_manifest_images(const std::string& manifest_path);

// Random chain or ring pseudo-molecule: 5..9 atoms, 1.6 Å spacing, ±0.05 Å
// jitter, elements drawn from Z = 1..17. Chains get id chain_<index>, rings
// ring_<index>. With a 2.0 Å cutoff a chain of N atoms has N-1 edges and a
// ring exactly N.
MolecularStructure synthetic_molecule(Rng& rng, bool ring, std::size_t index);

// 2*n_per_class images rendered through the real pipeline; chain = label 0,
// ring = label 1, alternating. Seeded, deterministic.
std::vector<LabeledImage> generate_synthetic_dataset(std::size_t n_per_class, std::uint64_t seed,
                                                     std::size_t width, std::size_t height);

}  // namespace deqann
