#include "wake/snapshot_io.hpp"

#include "wake/rng.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

wake::SnapshotArchive sample_archive(int n_frames) {
  wake::SnapshotArchive a;
  a.grid = wake::Grid{6, 4, -1.0, -2.0, 0.5, 1.0};
  a.spacing = 5.0;
  a.dt = 1.0 / 16.0;
  wake::SplitMix64 rng(31337);
  for (int j = 0; j < n_frames; ++j) {
    wake::Frame f = wake::Frame::zeros(a.grid);
    for (auto& u : f.u) u = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (auto& v : f.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& p : f.p) p = static_cast<float>(rng.normal());
    a.snapshots.push_back(std::move(f));
  }
  return a;
}

std::string temp_path(const char* name) {
  return (std::filesystem::path(::testing::TempDir()) / name).string();
}

TEST(SnapshotIo, EncodeDecodeRoundTrip) {
  const wake::SnapshotArchive a = sample_archive(3);
  const wake::SnapshotArchive b = wake::decode_archive(wake::encode_archive(a));
  EXPECT_TRUE(b.grid.same_layout(a.grid));
  EXPECT_DOUBLE_EQ(b.spacing, 5.0);
  EXPECT_DOUBLE_EQ(b.dt, 1.0 / 16.0);
  ASSERT_EQ(b.snapshots.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(b.snapshots[j].u, a.snapshots[j].u);
    EXPECT_EQ(b.snapshots[j].v, a.snapshots[j].v);
    EXPECT_EQ(b.snapshots[j].p, a.snapshots[j].p);
  }
}

TEST(SnapshotIo, FileRoundTripIsByteIdentical) {
  const wake::SnapshotArchive a = sample_archive(3);
  const std::string p1 = temp_path("arch1.flowsnap");
  const std::string p2 = temp_path("arch2.flowsnap");
  wake::save_replay(a, p1);
  const wake::SnapshotArchive b = wake::load_replay(p1);
  wake::save_replay(b, p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  EXPECT_FALSE(s1.empty());
  EXPECT_EQ(s1, s2);
}

TEST(SnapshotIo, EmptyArchiveAllowed) {
  wake::SnapshotArchive a = sample_archive(0);
  const wake::SnapshotArchive b = wake::decode_archive(wake::encode_archive(a));
  EXPECT_TRUE(b.snapshots.empty());
}

TEST(SnapshotIo, BadMagicRejected) {
  std::string bytes = wake::encode_archive(sample_archive(1));
  std::memcpy(bytes.data(), "XXXXXXXX", 8);
  try {
    wake::decode_archive(bytes);
    FAIL() << "expected FormatError";
  } catch (const wake::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(SnapshotIo, VersionMismatchRejected) {
  std::string bytes = wake::encode_archive(sample_archive(1));
  bytes[8] = 2;
  try {
    wake::decode_archive(bytes);
    FAIL() << "expected FormatError";
  } catch (const wake::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(SnapshotIo, TruncatedPayloadRejected) {
  // Header claims 10 snapshots but the payload holds 9.
  wake::SnapshotArchive a = sample_archive(10);
  std::string bytes = wake::encode_archive(a);
  const std::size_t frame_bytes =
      3u * static_cast<std::size_t>(a.grid.size()) * 4u;
  bytes.resize(bytes.size() - frame_bytes);
  try {
    wake::decode_archive(bytes);
    FAIL() << "expected FormatError";
  } catch (const wake::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("payload"), std::string::npos);
  }
}

TEST(SnapshotIo, TrailingBytesRejected) {
  std::string bytes = wake::encode_archive(sample_archive(2));
  bytes.push_back('\0');
  EXPECT_THROW(wake::decode_archive(bytes), wake::FormatError);
}

TEST(SnapshotIo, TruncatedHeaderRejected) {
  std::string bytes = wake::encode_archive(sample_archive(1));
  bytes.resize(30);
  EXPECT_THROW(wake::decode_archive(bytes), wake::FormatError);
}

TEST(SnapshotIo, WrongFieldCountRejected) {
  std::string bytes = wake::encode_archive(sample_archive(1));
  // n_fields is the fifth u32 after the magic.
  bytes[8 + 16] = 2;
  try {
    wake::decode_archive(bytes);
    FAIL() << "expected FormatError";
  } catch (const wake::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("n_fields"), std::string::npos);
  }
}

TEST(SnapshotIo, NonFiniteSampleRejected) {
  wake::SnapshotArchive a = sample_archive(1);
  a.snapshots[0].u[3] = std::numeric_limits<double>::quiet_NaN();
  const std::string bytes = wake::encode_archive(a);
  EXPECT_THROW(wake::decode_archive(bytes), wake::FormatError);
}

TEST(SnapshotIo, MissingFileRejected) {
  EXPECT_THROW(wake::load_replay(temp_path("never_written.flowsnap")),
               std::runtime_error);
}

TEST(SnapshotIo, MismatchedFrameGridRejected) {
  wake::SnapshotArchive a = sample_archive(1);
  a.snapshots.push_back(wake::Frame::zeros(wake::Grid{4, 4, 0, 0, 1, 1}));
  EXPECT_THROW(wake::encode_archive(a), std::invalid_argument);
}

}  // namespace
