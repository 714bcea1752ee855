#include "cfpl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfpl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'F', 'P', 'L'};
constexpr char kDtype[] = "f64";

class Writer {
public:
    template <typename T>
    void pod(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void str32(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void str64(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        out_ += s;
    }
    void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}
    template <typename T>
    T pod() {
        T v;
        std::memcpy(&v, need(sizeof(T)), sizeof(T));
        return v;
    }
    std::string bytes(std::size_t n) { return std::string(need(n), n); }
    std::string str32() { return bytes(pod<std::uint32_t>()); }
    std::string str64() { return bytes(pod<std::uint64_t>()); }
    void raw(void* p, std::size_t n) { std::memcpy(p, need(n), n); }
    bool done() const { return pos_ == in_.size(); }

private:
    const char* need(std::size_t n) {
        if (n > in_.size() - pos_) throw std::runtime_error("checkpoint is truncated");
        const char* p = in_.data() + pos_;
        pos_ += n;
        return p;
    }
    const std::string& in_;
    std::size_t pos_ = 0;
};

void write_block(Writer& w, const TensorBlock& b) {
    if (numel_of(b.shape) != b.values.size()) throw std::invalid_argument("block " + b.name + " has inconsistent size");
    w.str32(b.name);
    w.str32(kDtype);
    w.pod(static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) w.pod(static_cast<std::uint64_t>(e));
    w.raw(b.values.data(), b.values.size() * sizeof(double));
}

TensorBlock read_block(Reader& r) {
    TensorBlock b;
    b.name = r.str32();
    if (r.str32() != kDtype) throw std::runtime_error("unsupported dtype in block " + b.name);
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw std::runtime_error("implausible rank in block " + b.name);
    for (std::uint32_t i = 0; i < rank; ++i) b.shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
    const std::size_t n = numel_of(b.shape);
    if (n > (std::size_t{1} << 31)) throw std::runtime_error("implausible size in block " + b.name);
    b.values.resize(n);
    r.raw(b.values.data(), n * sizeof(double));
    return b;
}

bool is_optimizer_block(const std::string& name) { return name.rfind("adam.", 0) == 0; }

}  // namespace

const TensorBlock* Checkpoint::find_parameter(const std::string& name) const {
    for (const auto& b : parameters) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, 4);
    w.pod(Checkpoint::kFormatVersion);
    w.str64(ckpt.config.canonical_text());
    w.pod(ckpt.step);
    w.pod(static_cast<std::uint32_t>(ckpt.parameters.size() + ckpt.optimizer.size()));
    for (const auto& b : ckpt.parameters) {
        if (is_optimizer_block(b.name)) throw std::invalid_argument("parameter name collides with optimizer prefix");
        write_block(w, b);
    }
    for (const auto& b : ckpt.optimizer) {
        if (!is_optimizer_block(b.name)) throw std::invalid_argument("optimizer block lacks the adam. prefix");
        write_block(w, b);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.bytes(4) != std::string(kMagic, 4)) throw std::runtime_error("not a checkpoint (bad magic)");
    const auto version = r.pod<std::uint32_t>();
    if (version != Checkpoint::kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.config = RunConfig::parse(r.str64());
    c.step = r.pod<std::uint64_t>();
    const auto count = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorBlock b = read_block(r);
        (is_optimizer_block(b.name) ? c.optimizer : c.parameters).push_back(std::move(b));
    }
    if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint blocks");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

std::vector<TensorBlock> snapshot_parameters(const CfplModel& model) {
    std::vector<TensorBlock> out;
    for (const auto& p : model.parameters().all()) out.push_back({p.name, p.tensor.shape(), p.tensor.to_vector()});
    return out;
}

void load_parameters(CfplModel& model, const std::vector<TensorBlock>& blocks) {
    auto& params = model.parameters().all();
    if (blocks.size() != params.size()) {
        throw std::runtime_error("checkpoint holds " + std::to_string(blocks.size()) + " parameters, model has " +
                                 std::to_string(params.size()));
    }
    for (auto& p : params) {
        const TensorBlock* found = nullptr;
        for (const auto& b : blocks) {
            if (b.name == p.name) {
                found = &b;
                break;
            }
        }
        if (found == nullptr) throw std::runtime_error("checkpoint lacks parameter " + p.name);
        if (found->shape != p.tensor.shape()) {
            throw std::runtime_error("shape mismatch for " + p.name + ": " + shape_str(found->shape) + " vs " +
                                     shape_str(p.tensor.shape()));
        }
        auto dst = p.tensor.values_mut();
        std::copy(found->values.begin(), found->values.end(), dst.begin());
    }
}

std::unique_ptr<CfplModel> restore_model(const Checkpoint& ckpt) {
    auto model = std::make_unique<CfplModel>(ckpt.config, ModelInit{ckpt.config.train.seed});
    load_parameters(*model, ckpt.parameters);
    return model;
}

}  // namespace cfpl
