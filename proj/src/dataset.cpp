#include "cfpl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfpl {

namespace {

constexpr std::uint64_t kSynthStream = 0x5157;

struct DomainStyle {
    std::array<double, 3> tint;
    double brightness;
    double noise;
};

DomainStyle domain_style(std::size_t domain) {
    static const std::array<std::array<double, 3>, 6> tints = {{
        {1.00, 0.82, 0.70},
        {0.72, 0.88, 1.00},
        {0.85, 1.00, 0.74},
        {1.00, 0.76, 0.92},
        {0.92, 0.92, 0.92},
        {0.78, 0.74, 1.00},
    }};
    static const std::array<double, 4> noise = {0.010, 0.030, 0.020, 0.040};
    DomainStyle s;
    s.tint = tints[domain % tints.size()];
    s.brightness = 0.85 + 0.05 * static_cast<double>(domain % 4);
    s.noise = noise[domain % noise.size()];
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,label,domain") throw std::runtime_error("manifest header must be 'path,label,domain': " + path.string());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != 3) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
        }
        ManifestRow row;
        row.path = fields[0];
        if (fields[1] == "0" || fields[1] == "1") {
            row.label = fields[1] == "1" ? kLiveLabel : kSpoofLabel;
        } else {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": label must be 0 or 1");
        }
        row.domain = fields[2];
        m.rows.push_back(std::move(row));
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << "path,label,domain\n";
    for (const auto& r : manifest.rows) out << r.path << ',' << r.label << ',' << r.domain << '\n';
    if (!out) throw std::runtime_error("failed writing manifest: " + path.string());
}

void Dataset::append(const Dataset& other) {
    images.insert(images.end(), other.images.begin(), other.images.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    domains.insert(domains.end(), other.domains.begin(), other.domains.end());
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    for (auto i : indices) {
        out.images.push_back(images.at(i));
        out.labels.push_back(labels.at(i));
        out.domains.push_back(domains.at(i));
    }
    return out;
}

Dataset Dataset::filter_domains(const std::vector<std::string>& names, bool exclude) const {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < size(); ++i) {
        const bool listed = std::find(names.begin(), names.end(), domains[i]) != names.end();
        if (listed != exclude) keep.push_back(i);
    }
    return subset(keep);
}

Dataset load_dataset(const Manifest& manifest) {
    Dataset d;
    for (const auto& row : manifest.rows) {
        std::filesystem::path p(row.path);
        if (p.is_relative()) p = manifest.base_dir / p;
        if (!std::filesystem::exists(p)) throw std::runtime_error("manifest entry missing on disk: " + p.string());
        d.images.push_back(read_ppm(p));
        d.labels.push_back(row.label);
        d.domains.push_back(row.domain);
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) { return load_dataset(read_manifest(manifest_path)); }

std::string synth_domain_name(std::size_t domain) { return "D" + std::to_string(domain); }

RgbImage synth_image(std::size_t domain, int label, std::size_t index, const SynthOptions& options) {
    if (label != kLiveLabel && label != kSpoofLabel) throw std::invalid_argument("synthetic label must be 0 or 1");
    const std::size_t size = options.image_size;
    Rng rng(derive_seed(options.seed, kSynthStream, (domain * 2 + static_cast<std::size_t>(label)) * 1000003 + index));
    const DomainStyle style = domain_style(domain);
    const double s = static_cast<double>(size);
    const double cx = s * (0.35 + 0.3 * uniform01(rng));
    const double cy = s * (0.35 + 0.3 * uniform01(rng));
    const double radius = s * (0.18 + 0.12 * uniform01(rng));
    const double background = 0.15 + 0.2 * uniform01(rng);
    const double foreground = 0.6 + 0.3 * uniform01(rng);
    constexpr double grid_amplitude = 0.12;
    constexpr std::size_t grid_half_period = 2;

    RgbImage img;
    img.width = img.height = size;
    img.pixels.resize(size * size * 3);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
            double base = background + (foreground - background) * blob;
            if (label == kSpoofLabel) {
                const double gx = (x / grid_half_period) % 2 == 0 ? 1.0 : -1.0;
                const double gy = (y / grid_half_period) % 2 == 0 ? 1.0 : -1.0;
                base += grid_amplitude * 0.5 * (gx + gy);
            }
            for (std::size_t c = 0; c < 3; ++c) {
                double v = base * style.tint[c] * style.brightness + style.noise * standard_normal(rng);
                v = std::clamp(v, 0.0, 1.0);
                img.pixels[(y * size + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

Dataset synth_in_memory(const SynthOptions& options) {
    if (options.domains < 2) throw std::invalid_argument("synthetic data needs at least 2 domains");
    if (options.per_class < 8) throw std::invalid_argument("synthetic data needs at least 8 samples per class");
    if (options.image_size < 8) throw std::invalid_argument("synthetic images must be at least 8 pixels");
    Dataset d;
    for (std::size_t dom = 0; dom < options.domains; ++dom) {
        for (int label : {kLiveLabel, kSpoofLabel}) {
            for (std::size_t i = 0; i < options.per_class; ++i) {
                d.images.push_back(synth_image(dom, label, i, options));
                d.labels.push_back(label);
                d.domains.push_back(synth_domain_name(dom));
            }
        }
    }
    return d;
}

Manifest synth_dataset(const std::filesystem::path& dir, const SynthOptions& options) {
    Dataset d = synth_in_memory(options);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    Manifest all;
    all.base_dir = dir;
    std::vector<Manifest> per_domain(options.domains);
    std::size_t k = 0;
    for (std::size_t dom = 0; dom < options.domains; ++dom) {
        const std::string name = synth_domain_name(dom);
        std::filesystem::create_directories(dir / name, ec);
        if (ec) throw std::runtime_error("cannot create directory " + (dir / name).string() + ": " + ec.message());
        for (int label : {kLiveLabel, kSpoofLabel}) {
            for (std::size_t i = 0; i < options.per_class; ++i, ++k) {
                const std::string rel = name + "/" + (label == kLiveLabel ? "live_" : "spoof_") + std::to_string(i) + ".ppm";
                write_ppm(dir / rel, d.images[k]);
                all.rows.push_back({rel, label, name});
                per_domain[dom].rows.push_back({rel, label, name});
            }
        }
        write_manifest(dir / (name + ".csv"), per_domain[dom]);
    }
    write_manifest(dir / "manifest.csv", all);
    return all;
}

std::pair<double, double> grid_energy(const RgbImage& image) {
    auto grey = [&](std::size_t x, std::size_t y) {
        return (image.at(x, y, 0) + image.at(x, y, 1) + image.at(x, y, 2)) / (3.0 * 255.0);
    };
    double h = 0.0;
    double v = 0.0;
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x + 1 < image.width; ++x) h += std::pow(grey(x + 1, y) - grey(x, y), 2);
    }
    for (std::size_t y = 0; y + 1 < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) v += std::pow(grey(x, y + 1) - grey(x, y), 2);
    }
    h /= static_cast<double>(image.height * (image.width - 1));
    v /= static_cast<double>((image.height - 1) * image.width);
    return {h, v};
}

}  // namespace cfpl
