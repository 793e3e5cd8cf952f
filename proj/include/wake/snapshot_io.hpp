#pragma once

#include "wake/errors.hpp"
#include "wake/field.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace wake {

/// A recorded snapshot sequence with its grid and cadence metadata.
struct SnapshotArchive {
  Grid grid;
  double spacing = 0.0;
  double dt = 0.0;
  std::vector<Frame> snapshots;
};

// Archive layout, all little-endian:
//   bytes 0-7   magic "FLOWSNP1"
//   u32 x 5     version (=1), nx, ny, n_snapshots, n_fields (=3)
//   f64 x 6     spacing, dt, x0, y0, dx, dy
//   payload     per snapshot, field-major u then v then p,
//               each nx*ny f32, row-major with x fastest.

namespace detail {

inline constexpr char kMagic[8] = {'F', 'L', 'O', 'W', 'S', 'N', 'P', '1'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kNumFields = 3;
inline constexpr std::size_t kHeaderSize = 8 + 5 * 4 + 6 * 8;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  std::string_view raw(std::size_t n, const char* field) {
    need(n, field);
    const std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("snapshot archive truncated while reading ") +
                        field);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes an archive to the binary wire layout.
inline std::string encode_archive(const SnapshotArchive& archive) {
  archive.grid.validate();
  if (!std::isfinite(archive.spacing) || !std::isfinite(archive.dt))
    throw std::invalid_argument("encode_archive: non-finite metadata");
  for (const Frame& f : archive.snapshots) {
    f.validate();
    if (!f.grid.same_layout(archive.grid))
      throw std::invalid_argument("encode_archive: frame grid mismatch");
  }

  std::string out;
  const std::size_t cells = static_cast<std::size_t>(archive.grid.size());
  out.reserve(detail::kHeaderSize +
              archive.snapshots.size() * detail::kNumFields * cells * 4);
  out.append(detail::kMagic, 8);
  detail::put_u32(out, detail::kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(archive.grid.nx));
  detail::put_u32(out, static_cast<std::uint32_t>(archive.grid.ny));
  detail::put_u32(out, static_cast<std::uint32_t>(archive.snapshots.size()));
  detail::put_u32(out, detail::kNumFields);
  detail::put_f64(out, archive.spacing);
  detail::put_f64(out, archive.dt);
  detail::put_f64(out, archive.grid.x0);
  detail::put_f64(out, archive.grid.y0);
  detail::put_f64(out, archive.grid.dx);
  detail::put_f64(out, archive.grid.dy);

  for (const Frame& f : archive.snapshots) {
    for (const std::vector<double>* comp : {&f.u, &f.v, &f.p})
      for (const double v : *comp)
        detail::put_f32(out, static_cast<float>(v));
  }
  return out;
}

/// Parses the binary layout back into an archive. Malformed input raises
/// FormatError naming the offending field.
inline SnapshotArchive decode_archive(std::string_view bytes) {
  detail::Reader r(bytes);
  const std::string_view magic = r.raw(8, "magic");
  if (std::string_view(detail::kMagic, 8) != magic)
    throw FormatError("bad magic: expected FLOWSNP1");
  const std::uint32_t version = r.u32("version");
  if (version != detail::kVersion)
    throw FormatError("unsupported version " + std::to_string(version) +
                      " (expected 1)");
  const std::uint32_t nx = r.u32("nx");
  const std::uint32_t ny = r.u32("ny");
  const std::uint32_t n_snapshots = r.u32("n_snapshots");
  const std::uint32_t n_fields = r.u32("n_fields");
  if (n_fields != detail::kNumFields)
    throw FormatError("unexpected n_fields " + std::to_string(n_fields) +
                      " (expected 3)");
  if (nx < 2 || ny < 2 || nx > (1u << 20) || ny > (1u << 20))
    throw FormatError("implausible grid dimensions nx=" + std::to_string(nx) +
                      " ny=" + std::to_string(ny));

  SnapshotArchive archive;
  archive.spacing = r.f64("spacing");
  archive.dt = r.f64("dt");
  archive.grid.nx = static_cast<int>(nx);
  archive.grid.ny = static_cast<int>(ny);
  archive.grid.x0 = r.f64("x0");
  archive.grid.y0 = r.f64("y0");
  archive.grid.dx = r.f64("dx");
  archive.grid.dy = r.f64("dy");
  archive.grid.validate();

  const std::uint64_t cells = static_cast<std::uint64_t>(nx) * ny;
  const std::uint64_t expected_payload =
      static_cast<std::uint64_t>(n_snapshots) * detail::kNumFields * cells * 4;
  if (r.remaining() != expected_payload)
    throw FormatError("payload length mismatch: header implies " +
                      std::to_string(expected_payload) + " bytes, found " +
                      std::to_string(r.remaining()));

  archive.snapshots.reserve(n_snapshots);
  for (std::uint32_t j = 0; j < n_snapshots; ++j) {
    Frame f = Frame::zeros(archive.grid);
    for (std::vector<double>* comp : {&f.u, &f.v, &f.p}) {
      for (std::size_t i = 0; i < cells; ++i) {
        const float v = r.f32("sample");
        if (!std::isfinite(v))
          throw FormatError("non-finite sample in snapshot " +
                            std::to_string(j));
        (*comp)[i] = static_cast<double>(v);
      }
    }
    archive.snapshots.push_back(std::move(f));
  }
  return archive;
}

inline void save_replay(const SnapshotArchive& archive,
                        const std::string& path) {
  const std::string bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("save_replay: cannot open " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw std::runtime_error("save_replay: write failed for " + path);
}

inline SnapshotArchive load_replay(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_replay: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

}  // namespace wake
