#pragma once

#include "ifes/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ifes {

/// Decodes a binary (P5) PGM with maxval 255 into a Byte-range image.
/// Throws ParseError with the byte offset of the first problem.
GrayImage load_gray_image(const std::filesystem::path& path);
GrayImage decode_pgm(const std::vector<unsigned char>& bytes);

/// Writes `P5\n<w> <h>\n255\n` and one byte per pixel, converting to the
/// Byte range first (round half up, clamp).
void save_gray_image(const GrayImage& img, const std::filesystem::path& path);
std::vector<unsigned char> encode_pgm(const GrayImage& img);

struct ImagePair {
    GrayImage infrared;
    GrayImage visible;
    std::string id;
};

struct PairListing {
    std::vector<ImagePair> pairs;    // sorted by id
    std::vector<std::string> orphans;  // files with no partner
};

/// Pairs `<id><ir_suffix>.pgm` with `<id><vis_suffix>.pgm`. Throws
/// RegistrationError naming the pair when sizes differ.
PairListing load_pairs(const std::filesystem::path& dir, const std::string& ir_suffix,
                       const std::string& vis_suffix);

struct Patch {
    std::size_t pair_index = 0;
    std::string id;
    std::size_t x = 0;
    std::size_t y = 0;
    GrayImage infrared;
    GrayImage visible;
};

struct PatchSet {
    std::size_t side = 0;
    std::uint64_t seed = 0;
    std::vector<Patch> patches;
};

/// Uniformly chosen pair and top-left corner per patch; both images of a pair
/// are cropped at the same coordinates.
PatchSet sample_patches(const std::vector<ImagePair>& pairs, std::size_t side, std::size_t count,
                        std::uint64_t seed);

}  // namespace ifes
