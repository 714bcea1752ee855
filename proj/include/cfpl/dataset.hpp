#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfpl/image.hpp"

namespace cfpl {

inline constexpr int kSpoofLabel = 0;
inline constexpr int kLiveLabel = 1;

struct ManifestRow {
    std::string path;  // relative to the manifest's directory unless absolute
    int label = 0;
    std::string domain;
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRow> rows;
};

// CSV with header `path,label,domain`.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Dataset {
    std::vector<RgbImage> images;
    std::vector<int> labels;
    std::vector<std::string> domains;

    std::size_t size() const { return images.size(); }
    void append(const Dataset& other);
    Dataset subset(const std::vector<std::size_t>& indices) const;
    // Rows whose domain is (or, with `exclude`, is not) in `names`.
    Dataset filter_domains(const std::vector<std::string>& names, bool exclude = false) const;
};

Dataset load_dataset(const Manifest& manifest);
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct SynthOptions {
    std::size_t domains = 3;
    std::size_t per_class = 32;
    std::uint64_t seed = 7;
    std::size_t image_size = 32;
};

std::string synth_domain_name(std::size_t domain);

// Live: smooth radial blob. Spoof: the same plus a fixed-period grid. Each
// domain has its own tint and noise level.
RgbImage synth_image(std::size_t domain, int label, std::size_t index, const SynthOptions& options);
Dataset synth_in_memory(const SynthOptions& options);
// Writes `<dir>/<domain>/<label>_<index>.ppm` files plus `<dir>/manifest.csv`
// and one `<dir>/<domain>.csv` per domain. Returns the combined manifest.
Manifest synth_dataset(const std::filesystem::path& dir, const SynthOptions& options);

// Mean squared horizontal and vertical neighbour differences of the grey
// image; grids raise both.
std::pair<double, double> grid_energy(const RgbImage& image);

}  // namespace cfpl
