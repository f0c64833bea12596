#include <bit>
#include <boost/crc.hpp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"

namespace mriprep::nnet {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'I', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void string(const std::string& s) {
        le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        le<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) le<std::uint64_t>(d);
        for (double v : t.data) le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end_ - p_) < n) throw CorruptCheckpointError("checkpoint: truncated payload");
    }
    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p_[i]) << (8 * i);
        p_ += sizeof(T);
        return v;
    }
    std::string string() {
        const auto n = le<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    Tensor tensor() {
        const auto rank = le<std::uint32_t>();
        if (rank > 8) throw CorruptCheckpointError("checkpoint: implausible tensor rank");
        Shape shape(rank);
        for (auto& d : shape) d = le<std::uint64_t>();
        const std::size_t n = shape_size(shape);
        need(n * 8);
        Tensor t(shape);
        for (double& v : t.data) v = std::bit_cast<double>(le<std::uint64_t>());
        return t;
    }
    bool done() const { return p_ == end_; }

private:
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
    boost::crc_32_type crc;
    crc.process_bytes(data, n);
    return crc.checksum();
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.le<std::uint32_t>(kVersion);
    w.string(model.arch_tag());
    const auto params = model.parameters();
    const auto bufs = model.buffers();
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size() + bufs.size()));
    for (Parameter* p : params) {
        w.string(p->name);
        w.le<std::uint8_t>(0);
        w.le<std::uint8_t>(p->frozen ? 1 : 0);
        w.tensor(p->value);
    }
    for (const auto& [name, t] : bufs) {
        w.string(name);
        w.le<std::uint8_t>(1);
        w.le<std::uint8_t>(0);
        w.tensor(*t);
    }
    auto& buf = w.buffer();
    const std::uint32_t crc = crc32(buf.data(), buf.size());
    w.le<std::uint32_t>(crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path.string());
    const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof kMagic + 8) throw CorruptCheckpointError("checkpoint: file too short");
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw CorruptCheckpointError("checkpoint: bad magic");

    const std::size_t body = buf.size() - 4;
    Reader trailer(buf.data() + body, 4);
    if (trailer.le<std::uint32_t>() != crc32(buf.data(), body))
        throw CorruptCheckpointError("checkpoint: checksum mismatch (truncated or modified file)");

    Reader r(buf.data() + sizeof kMagic, body - sizeof kMagic);
    const auto version = r.le<std::uint32_t>();
    if (version != kVersion)
        throw CorruptCheckpointError("checkpoint: unsupported version " + std::to_string(version));
    const std::string tag = r.string();
    Model model;
    try {
        model = build_model(MiniBackboneSpec::parse(tag), 0);
    } catch (const ArgumentError& e) {
        throw CorruptCheckpointError(std::string("checkpoint: ") + e.what());
    }

    const auto params = model.parameters();
    const auto bufs = model.buffers();
    const auto count = r.le<std::uint32_t>();
    if (count != params.size() + bufs.size()) throw CorruptCheckpointError("checkpoint: tensor count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.string();
        const auto kind = r.le<std::uint8_t>();
        const auto frozen = r.le<std::uint8_t>();
        Tensor t = r.tensor();
        Tensor* target = nullptr;
        if (kind == 0 && i < params.size() && params[i]->name == name) {
            target = &params[i]->value;
            params[i]->frozen = frozen != 0;
        } else if (kind == 1 && i >= params.size() && bufs[i - params.size()].first == name) {
            target = bufs[i - params.size()].second;
        }
        if (!target || target->shape != t.shape)
            throw CorruptCheckpointError("checkpoint: tensor '" + name + "' does not match the architecture");
        *target = std::move(t);
    }
    if (!r.done()) throw CorruptCheckpointError("checkpoint: trailing bytes before checksum");
    return model;
}

}  // namespace mriprep::nnet
