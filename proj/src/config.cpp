#include "cfpl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cfpl {

namespace {

std::string trim(const std::string& s) {
    auto begin = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto end = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    return begin < end ? std::string(begin, end) : std::string();
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument(key + ": expected a count, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
    return out;
}

bool parse_switch(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument(key + ": expected on/off, got '" + v + "'");
}

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Prefer the shortest representation that still round-trips.
    for (int digits = 1; digits < 17; ++digits) {
        char shorter[64];
        std::snprintf(shorter, sizeof shorter, "%.*g", digits, v);
        if (std::stod(shorter) == v) return shorter;
    }
    return buf;
}

std::string fmt_switch(bool b) { return b ? "on" : "off"; }

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define CFPL_COUNT(KEY, MEMBER)                                                           \
    Field {                                                                               \
        KEY, [](const RunConfig& c) { return std::to_string(c.MEMBER); },                 \
            [](RunConfig& c, const std::string& v) { c.MEMBER = parse_count(KEY, v); }    \
    }
#define CFPL_REAL(KEY, MEMBER)                                                            \
    Field {                                                                               \
        KEY, [](const RunConfig& c) { return fmt_real(c.MEMBER); },                       \
            [](RunConfig& c, const std::string& v) { c.MEMBER = parse_real(KEY, v); }     \
    }
#define CFPL_SWITCH(KEY, MEMBER)                                                          \
    Field {                                                                               \
        KEY, [](const RunConfig& c) { return fmt_switch(c.MEMBER); },                     \
            [](RunConfig& c, const std::string& v) { c.MEMBER = parse_switch(KEY, v); }   \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        CFPL_COUNT("image_size", image.image_size),
        CFPL_COUNT("patch_size", image.patch_size),
        Field{"width", [](const RunConfig& c) { return std::to_string(c.image.width); },
              [](RunConfig& c, const std::string& v) { c.image.width = c.text.width = parse_count("width", v); }},
        CFPL_COUNT("image_layers", image.layers),
        CFPL_COUNT("image_heads", image.heads),
        CFPL_COUNT("text_layers", text.layers),
        CFPL_COUNT("text_heads", text.heads),
        Field{"context_length", [](const RunConfig& c) { return std::to_string(c.text.context_length); },
              [](RunConfig& c, const std::string& v) {
                  c.text.context_length = c.image.context_length = parse_count("context_length", v);
              }},
        Field{"mlp_ratio", [](const RunConfig& c) { return std::to_string(c.image.mlp_ratio); },
              [](RunConfig& c, const std::string& v) { c.image.mlp_ratio = c.text.mlp_ratio = parse_count("mlp_ratio", v); }},
        CFPL_COUNT("queries", query_count),
        CFPL_COUNT("qformer_depth", qformer_depth),
        CFPL_COUNT("qformer_heads", qformer_heads),
        CFPL_COUNT("gate_reduction", gate_reduction),
        CFPL_REAL("dsp_alpha", train.dsp.alpha),
        CFPL_REAL("dsp_prob", train.dsp.probability),
        CFPL_COUNT("batch", train.batch),
        CFPL_COUNT("epochs", train.epochs),
        CFPL_COUNT("max_steps", train.max_steps),
        CFPL_REAL("base_lr", train.base_lr),
        CFPL_REAL("min_lr", train.min_lr),
        CFPL_REAL("weight_decay", train.weight_decay),
        CFPL_REAL("beta1", train.beta1),
        CFPL_REAL("beta2", train.beta2),
        CFPL_REAL("adam_eps", train.adam_eps),
        CFPL_REAL("crop_scale_min", train.crop_scale_min),
        CFPL_SWITCH("flip", train.flip),
        Field{"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
              [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); }},
        CFPL_REAL("mining_temperature", train.mining_temperature),
        CFPL_SWITCH("ptm", ablation.ptm),
        CFPL_SWITCH("dsp", ablation.dsp),
        CFPL_SWITCH("pm", ablation.pm),
        Field{"modulation",
              [](const RunConfig& c) { return std::string(c.ablation.modulation == ModulationMode::gate ? "gate" : "mean"); },
              [](RunConfig& c, const std::string& v) {
                  if (v == "gate") {
                      c.ablation.modulation = ModulationMode::gate;
                  } else if (v == "mean") {
                      c.ablation.modulation = ModulationMode::mean;
                  } else {
                      throw std::invalid_argument("modulation: expected gate or mean, got '" + v + "'");
                  }
              }},
        Field{"precision", [](const RunConfig& c) { return std::string(c.precision == Precision::f32 ? "f32" : "f64"); },
              [](RunConfig& c, const std::string& v) {
                  if (v == "f32") {
                      c.precision = Precision::f32;
                  } else if (v == "f64") {
                      c.precision = Precision::f64;
                  } else {
                      throw std::invalid_argument("precision: expected f32 or f64, got '" + v + "'");
                  }
              }},
    };
    return table;
}

#undef CFPL_COUNT
#undef CFPL_REAL
#undef CFPL_SWITCH

}  // namespace

QFormerConfig RunConfig::content_qformer() const {
    QFormerConfig q;
    q.query_count = query_count;
    q.width = width();
    q.depth = qformer_depth;
    q.heads = qformer_heads;
    q.source_dim = width();
    q.mlp_ratio = image.mlp_ratio;
    return q;
}

QFormerConfig RunConfig::style_qformer() const {
    QFormerConfig q = content_qformer();
    q.source_dim = 2 * width();
    return q;
}

void RunConfig::validate() const {
    image.validate();
    text.validate(query_count);
    if (text.width != image.width) throw std::invalid_argument("image and text widths must match");
    content_qformer().validate();
    style_qformer().validate();
    if (gate_reduction == 0 || width() % gate_reduction != 0) {
        throw std::invalid_argument("width " + std::to_string(width()) + " not divisible by gate_reduction " +
                                    std::to_string(gate_reduction));
    }
    train.dsp.validate();
    if (train.batch < 2) throw std::invalid_argument("batch must hold at least two samples");
    if (!(train.base_lr > 0.0) || !(train.min_lr >= 0.0) || train.min_lr > train.base_lr) {
        throw std::invalid_argument("learning rates must satisfy 0 <= min_lr <= base_lr, base_lr > 0");
    }
    if (train.epochs == 0 && train.max_steps == 0) throw std::invalid_argument("epochs or max_steps must be positive");
    if (!(train.crop_scale_min > 0.0 && train.crop_scale_min <= 1.0)) {
        throw std::invalid_argument("crop_scale_min must lie in (0, 1]");
    }
    if (!(train.mining_temperature > 0.0)) throw std::invalid_argument("mining_temperature must be positive");
    if (!(train.weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be nonnegative");
}

std::string RunConfig::canonical_text() const {
    std::ostringstream os;
    for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
    return os.str();
}

RunConfig RunConfig::paper_defaults() {
    RunConfig c;
    c.image = EncoderConfig{224, 16, 512, 4, 8, 77, 4};
    c.text = EncoderConfig{224, 16, 512, 4, 8, 77, 4};
    return c;
}

RunConfig RunConfig::tiny() {
    RunConfig c = paper_defaults();
    c.image.image_size = 32;
    c.image.patch_size = 8;
    c.image.width = c.text.width = 64;
    c.image.layers = 2;
    c.image.heads = 4;
    c.text.layers = 1;
    c.text.heads = 4;
    c.qformer_heads = 4;
    c.gate_reduction = 4;
    c.train.base_lr = 1e-3;
    c.train.max_steps = 300;
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(*this, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key: " + key);
}

RunConfig RunConfig::parse(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string preset = "paper";
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "preset") {
            if (value != "tiny" && value != "paper") throw std::invalid_argument("preset: expected tiny or paper");
            preset = value;
        } else {
            entries.emplace_back(std::move(key), std::move(value));
        }
    }
    RunConfig c = preset == "tiny" ? tiny() : paper_defaults();
    for (const auto& [key, value] : entries) c.set(key, value);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path.string());
    out << canonical_text();
}

}  // namespace cfpl
