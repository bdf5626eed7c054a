#include "ifes/dataset.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <map>
#include <random>

namespace ifes {

namespace fs = std::filesystem;

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<unsigned char>& b) : bytes_(b) {}

    std::size_t pos() const noexcept { return pos_; }

    // Whitespace and '#' comments may separate header fields.
    void skip_separators() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* field) {
        skip_separators();
        const std::size_t start = pos_;
        std::size_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (value > (std::size_t{1} << 31)) throw ParseError(std::string("PGM ") + field + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("PGM header: expected ") + field, start);
        return value;
    }

    // Exactly one whitespace byte ends the header.
    void end_of_header() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw ParseError("PGM header: expected whitespace after maxval", pos_);
        }
        ++pos_;
    }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 2;
};

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

GrayImage decode_pgm(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("not a PNM file (bad magic)", 0);
    if (bytes[1] != '5') {
        throw ParseError(std::string("unsupported PNM variant P") + static_cast<char>(bytes[1]) +
                             " (only binary P5 is accepted)",
                         1);
    }
    HeaderReader h(bytes);
    const std::size_t width = h.number("width");
    const std::size_t height = h.number("height");
    h.skip_separators();
    const std::size_t maxval_at = h.pos();
    const std::size_t maxval = h.number("maxval");
    if (maxval != 255) throw ParseError("PGM maxval must be 255, got " + std::to_string(maxval), maxval_at);
    h.end_of_header();
    if (width == 0 || height == 0) throw ParseError("PGM has zero size", h.pos());
    const std::size_t need = width * height;
    if (bytes.size() - h.pos() < need) {
        throw ParseError("truncated PGM payload: need " + std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - h.pos()),
                         bytes.size());
    }
    GrayImage img(width, height, PixelRange::Byte);
    for (std::size_t i = 0; i < need; ++i) img.pixels[i] = bytes[h.pos() + i];
    return img;
}

GrayImage load_gray_image(const fs::path& path) {
    const std::vector<unsigned char> bytes = read_file(path);
    try {
        return decode_pgm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
}

std::vector<unsigned char> encode_pgm(const GrayImage& img) {
    if (img.width == 0 || img.height == 0) throw ParameterError("cannot encode a zero-size image");
    if (img.pixels.size() != img.width * img.height) throw DimensionError("data", "pixel buffer does not match size");
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    const GrayImage bytes = img.to_range(PixelRange::Byte);
    for (double p : bytes.pixels) out.push_back(to_byte(p));
    return out;
}

void save_gray_image(const GrayImage& img, const fs::path& path) {
    const std::vector<unsigned char> bytes = encode_pgm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

PairListing load_pairs(const fs::path& dir, const std::string& ir_suffix, const std::string& vis_suffix) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    std::map<std::string, fs::path> ir;
    std::map<std::string, fs::path> vis;
    std::vector<std::string> other;
    auto strip = [](const std::string& stem, const std::string& suffix, std::string& id) {
        if (stem.size() <= suffix.size() || stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) != 0) {
            return false;
        }
        id = stem.substr(0, stem.size() - suffix.size());
        return true;
    };
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
        const std::string stem = entry.path().stem().string();
        std::string ir_id;
        std::string vis_id;
        bool is_ir = strip(stem, ir_suffix, ir_id);
        bool is_vis = strip(stem, vis_suffix, vis_id);
        // When both suffixes match (one ends the other), the longer one wins.
        if (is_ir && is_vis) (ir_suffix.size() >= vis_suffix.size() ? is_vis : is_ir) = false;
        if (is_ir) ir[ir_id] = entry.path();
        else if (is_vis) vis[vis_id] = entry.path();
        else other.push_back(entry.path().filename().string());
    }

    PairListing listing;
    for (const auto& [id, path] : ir) {
        auto it = vis.find(id);
        if (it == vis.end()) {
            listing.orphans.push_back(path.filename().string());
            continue;
        }
        ImagePair p{load_gray_image(path), load_gray_image(it->second), id};
        if (p.infrared.width != p.visible.width || p.infrared.height != p.visible.height) {
            throw RegistrationError("pair '" + id + "' is not registered: infrared " + std::to_string(p.infrared.width) +
                                    "x" + std::to_string(p.infrared.height) + " vs visible " +
                                    std::to_string(p.visible.width) + "x" + std::to_string(p.visible.height));
        }
        listing.pairs.push_back(std::move(p));
    }
    for (const auto& [id, path] : vis) {
        if (!ir.contains(id)) listing.orphans.push_back(path.filename().string());
    }
    std::sort(other.begin(), other.end());
    listing.orphans.insert(listing.orphans.end(), other.begin(), other.end());
    std::sort(listing.orphans.begin(), listing.orphans.end());
    return listing;
}

PatchSet sample_patches(const std::vector<ImagePair>& pairs, std::size_t side, std::size_t count,
                        std::uint64_t seed) {
    PatchSet set{side, seed, {}};
    if (count == 0) return set;
    if (pairs.empty()) throw ParameterError("cannot sample patches from an empty pair list");
    if (side == 0) throw ParameterError("patch side must be positive");
    const ImagePair* smallest = &pairs.front();
    for (const ImagePair& p : pairs) {
        if (std::min(p.infrared.width, p.infrared.height) < std::min(smallest->infrared.width, smallest->infrared.height)) {
            smallest = &p;
        }
    }
    const std::size_t min_dim = std::min(smallest->infrared.width, smallest->infrared.height);
    if (side > min_dim) {
        throw ParameterError("patch side " + std::to_string(side) + " exceeds the smallest image '" + smallest->id +
                             "' (" + std::to_string(smallest->infrared.width) + "x" +
                             std::to_string(smallest->infrared.height) + ")");
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    set.patches.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = pick(rng);
        const ImagePair& p = pairs[k];
        std::uniform_int_distribution<std::size_t> px(0, p.infrared.width - side);
        std::uniform_int_distribution<std::size_t> py(0, p.infrared.height - side);
        const std::size_t x = px(rng);
        const std::size_t y = py(rng);
        set.patches.push_back({k, p.id, x, y, p.infrared.crop(x, y, side, side), p.visible.crop(x, y, side, side)});
    }
    return set;
}

}  // namespace ifes
