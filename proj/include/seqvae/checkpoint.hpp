#pragma once

#include <bit>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/tensor.hpp"

namespace seqvae {

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'Q', 'V', 'A', 'E', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary writer; floats are stored as their IEEE-754 bits.
class BinaryWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) u64(e);
    for (double v : t.values()) f64(v);
  }

  const std::string& bytes() const { return buf_; }

  /// Writes to a temporary sibling first so a failed write never leaves a
  /// truncated checkpoint behind.
  void save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw CheckpointError("cannot write " + tmp);
      os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
      if (!os) throw CheckpointError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint to " + path);
  }

private:
  std::string buf_;
};

class BinaryReader {
public:
  explicit BinaryReader(std::string bytes) : buf_(std::move(bytes)) {}

  static BinaryReader from_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot read " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return BinaryReader(std::move(bytes));
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw CheckpointError("checkpoint: bad tensor rank");
    Shape shape(rank);
    for (auto& e : shape) e = u64();
    const std::size_t n = shape_numel(shape);
    need(n * 8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return Tensor(std::move(shape), std::move(v));
  }

  bool done() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint: unexpected end of data");
  }

  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace seqvae
