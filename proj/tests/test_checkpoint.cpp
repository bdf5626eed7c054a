#include "ifes/checkpoint.hpp"
#include "ifes/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace ifes {
namespace {

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t reference_crc32(const unsigned char* p, std::size_t n) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) {
        crc ^= p[i];
        for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

void reseal(std::vector<unsigned char>& bytes) {
    const std::size_t payload = bytes.size() - 4;
    const std::uint32_t crc = reference_crc32(bytes.data(), payload);
    for (int i = 0; i < 4; ++i) bytes[payload + static_cast<std::size_t>(i)] = static_cast<unsigned char>(crc >> (8 * i));
}

Network sample_network() {
    Network net = build_network(make_config(2, 16, Variant::HierConnect, 77));
    std::vector<double> p = flatten_parameters(net);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += 1e-3 * static_cast<double>(i % 17);
    assign_parameters(net, p);
    return net;
}

TEST(CheckpointTest, RoundTripIsBitExact) {
    const Network net = sample_network();
    const std::vector<unsigned char> bytes = serialize_network(net);
    const Network back = deserialize_network(bytes);
    EXPECT_EQ(back.config.stages, 2);
    EXPECT_EQ(back.config.variant, Variant::HierConnect);
    EXPECT_EQ(back.config.scale, 16u);
    EXPECT_EQ(back.config.seed, 77u);
    EXPECT_EQ(back.config.ivif_channels, net.config.ivif_channels);
    EXPECT_EQ(flatten_parameters(back), flatten_parameters(net));
    EXPECT_EQ(serialize_network(back), bytes);
}

TEST(CheckpointTest, HeaderAndTrailerLayout) {
    const Network net = sample_network();
    const std::vector<unsigned char> bytes = serialize_network(net);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "IFES");
    EXPECT_EQ(bytes[4], kCheckpointVersion);
    const std::size_t header = 4 + 4 + 12 + 8 + 4 + 4 * net.config.ivif_channels.size() + 4 +
                               4 * net.config.shfe_channels.size();
    EXPECT_EQ(bytes.size(), header + 8 * net.parameter_count() + 4);
    std::vector<unsigned char> copy = bytes;
    reseal(copy);
    EXPECT_EQ(copy, bytes);
}

TEST(CheckpointTest, CorruptionIsDetected) {
    std::vector<unsigned char> bytes = serialize_network(sample_network());
    bytes[bytes.size() / 2] ^= 0x01;
    EXPECT_THROW(deserialize_network(bytes), IntegrityError);
}

TEST(CheckpointTest, TruncationIsDetected) {
    std::vector<unsigned char> bytes = serialize_network(sample_network());
    bytes.resize(bytes.size() - 9);
    EXPECT_THROW(deserialize_network(bytes), IntegrityError);
    reseal(bytes);
    EXPECT_THROW(deserialize_network(bytes), IntegrityError);
    EXPECT_THROW(deserialize_network({'I', 'F'}), IntegrityError);
}

TEST(CheckpointTest, BadMagicVersionAndVariantAreRejected) {
    const std::vector<unsigned char> good = serialize_network(sample_network());
    std::vector<unsigned char> bad = good;
    bad[0] = 'X';
    reseal(bad);
    EXPECT_THROW(deserialize_network(bad), IntegrityError);
    bad = good;
    bad[4] = 2;
    reseal(bad);
    EXPECT_THROW(deserialize_network(bad), IntegrityError);
    bad = good;
    bad[12] = 9;  // variant tag
    reseal(bad);
    EXPECT_THROW(deserialize_network(bad), IntegrityError);
    bad = good;
    bad[28] = 3;  // ivif list length
    reseal(bad);
    EXPECT_THROW(deserialize_network(bad), IntegrityError);
}

TEST(CheckpointTest, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "ifes_checkpoint_test.ifes";
    const Network net = sample_network();
    save_checkpoint(net, path);
    EXPECT_EQ(flatten_parameters(load_checkpoint(path)), flatten_parameters(net));
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), IoError);
}

}  // namespace
}  // namespace ifes
