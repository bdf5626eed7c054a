#include "ifes/checkpoint.hpp"

#include "ifes/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace ifes {

namespace {

constexpr unsigned char kMagic[4] = {'I', 'F', 'E', 'S'};

class Writer {
public:
    void bytes(const unsigned char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::vector<unsigned char>& buffer() { return out_; }

private:
    std::vector<unsigned char> out_;
};

class Reader {
public:
    Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[at_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[at_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t remaining() const noexcept { return n_ - at_; }

private:
    void need(std::size_t k) const {
        if (n_ - at_ < k) throw IntegrityError("checkpoint truncated at byte " + std::to_string(at_ + 4));
    }
    const unsigned char* p_;
    std::size_t n_;
    std::size_t at_ = 0;
};

std::uint32_t crc_of(const unsigned char* p, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(crc32(crc, p, static_cast<uInt>(n)));
}

}  // namespace

std::vector<unsigned char> serialize_network(const Network& net) {
    const NetConfig& c = net.config;
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.stages));
    w.u32(static_cast<std::uint32_t>(c.variant));
    w.u32(static_cast<std::uint32_t>(c.scale));
    w.u64(c.seed);
    w.u32(static_cast<std::uint32_t>(c.ivif_channels.size()));
    for (std::size_t ch : c.ivif_channels) w.u32(static_cast<std::uint32_t>(ch));
    w.u32(static_cast<std::uint32_t>(c.shfe_channels.size()));
    for (std::size_t ch : c.shfe_channels) w.u32(static_cast<std::uint32_t>(ch));
    net.visit([&](const std::string&, const ConvLayer& l) {
        for (double v : l.weights.data()) w.f64(v);
        for (double v : l.bias) w.f64(v);
    });
    std::vector<unsigned char>& out = w.buffer();
    const std::uint32_t crc = crc_of(out.data(), out.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(crc >> (8 * i)));
    return out;
}

Network deserialize_network(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IntegrityError("not an IFES checkpoint (bad magic)");
    }
    const std::size_t payload = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[payload + static_cast<std::size_t>(i)]) << (8 * i);
    if (stored != crc_of(bytes.data(), payload)) throw IntegrityError("checkpoint CRC mismatch");

    Reader r(bytes.data() + 4, payload - 4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
    }
    NetConfig c;
    c.stages = static_cast<int>(r.u32());
    const std::uint32_t variant = r.u32();
    if (variant > static_cast<std::uint32_t>(Variant::HierConnect)) {
        throw IntegrityError("unknown variant tag " + std::to_string(variant));
    }
    c.variant = static_cast<Variant>(variant);
    c.scale = r.u32();
    c.seed = r.u64();
    for (auto* list : {&c.ivif_channels, &c.shfe_channels}) {
        const std::uint32_t n = r.u32();
        if (n > 4096) throw IntegrityError("implausible channel list length " + std::to_string(n));
        for (std::uint32_t i = 0; i < n; ++i) list->push_back(r.u32());
    }
    Network net;
    try {
        net = build_network(c);
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("checkpoint holds an invalid configuration: ") + e.what());
    }
    if (r.remaining() != net.parameter_count() * sizeof(double)) {
        throw IntegrityError("checkpoint parameter payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                             std::to_string(net.parameter_count() * sizeof(double)));
    }
    net.visit([&](const std::string&, ConvLayer& l) {
        for (double& v : l.weights.data()) v = r.f64();
        for (double& v : l.bias) v = r.f64();
    });
    return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = serialize_network(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_network(bytes);
}

}  // namespace ifes
