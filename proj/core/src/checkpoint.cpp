#include "dgn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dgn/error.hpp"

namespace dgn {
namespace {

constexpr std::array<char, 8> kMagic = {'D', 'G', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* data, std::size_t size) { bytes_.append(data, size); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * b);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t size) {
    need(size);
    std::string out = bytes_.substr(pos_, size);
    pos_ += size;
    return out;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& reason) const {
    throw Error(ErrorKind::ParseError, "checkpoint offset " + std::to_string(pos_) + ": " + reason,
                static_cast<std::int64_t>(pos_));
  }

 private:
  void need(std::size_t size) const {
    if (remaining() < size) fail("truncated");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

void write_section(Writer& out, const char (&tag)[5], const Writer& body) {
  out.raw(tag, 4);
  out.u64(body.bytes().size());
  out.raw(body.bytes().data(), body.bytes().size());
}

Writer model_section(const ModelParams& params) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(params.layer_weights.size()));
  for (const auto& layer : params.layer_weights) {
    w.u64(static_cast<std::uint64_t>(layer.rows()));
    w.u64(static_cast<std::uint64_t>(layer.cols()));
  }
  w.u64(static_cast<std::uint64_t>(params.head_weights.rows()));
  w.u64(static_cast<std::uint64_t>(params.head_weights.cols()));
  const std::size_t count = parameter_count(params);
  for (std::size_t j = 0; j < count; ++j) w.f64(parameter_at(params, j));
  return w;
}

Writer bank_section(const MemoryBank& bank) {
  Writer w;
  w.u64(static_cast<std::uint64_t>(bank.prototypes.rows()));
  w.u64(static_cast<std::uint64_t>(bank.prototypes.cols()));
  w.f64(bank.momentum);
  for (const bool s : bank.seen) w.u8(s ? 1 : 0);
  for (Eigen::Index j = 0; j < bank.prototypes.size(); ++j) w.f64(bank.prototypes.data()[j]);
  return w;
}

constexpr std::uint64_t kMaxDim = 1u << 24;

std::uint64_t read_dim(Reader& r) {
  const std::uint64_t v = r.u64();
  if (v == 0 || v > kMaxDim) r.fail("implausible dimension " + std::to_string(v));
  return v;
}

ModelParams read_model(Reader& r) {
  const std::uint32_t layers = r.u32();
  if (layers == 0 || layers > 1024) r.fail("implausible layer count");
  ModelParams params;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = static_cast<Eigen::Index>(read_dim(r));
    const auto cols = static_cast<Eigen::Index>(read_dim(r));
    params.layer_weights.push_back(Matrix::Zero(rows, cols));
    params.layer_biases.push_back(Vector::Zero(rows));
  }
  const auto head_rows = static_cast<Eigen::Index>(read_dim(r));
  const auto head_cols = static_cast<Eigen::Index>(read_dim(r));
  params.head_weights = Matrix::Zero(head_rows, head_cols);
  try {
    params.validate();
  } catch (const Error& e) {
    r.fail(e.message());
  }
  const std::size_t count = parameter_count(params);
  if (r.remaining() < count * 8) r.fail("truncated parameter block");
  for (std::size_t j = 0; j < count; ++j) parameter_at(params, j) = r.f64();
  return params;
}

MemoryBank read_bank(Reader& r) {
  const auto rows = static_cast<Eigen::Index>(read_dim(r));
  const auto cols = static_cast<Eigen::Index>(read_dim(r));
  MemoryBank bank;
  bank.momentum = r.f64();
  bank.seen.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index c = 0; c < rows; ++c) bank.seen[static_cast<std::size_t>(c)] = r.u8() != 0;
  bank.prototypes.resize(rows, cols);
  if (r.remaining() < static_cast<std::size_t>(rows * cols) * 8) r.fail("truncated bank block");
  for (Eigen::Index j = 0; j < bank.prototypes.size(); ++j) bank.prototypes.data()[j] = r.f64();
  try {
    bank.validate();
  } catch (const Error& e) {
    r.fail(e.message());
  }
  return bank;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  ckpt.params.validate();
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.u32(ckpt.bank ? 2 : 1);
  write_section(w, "MODL", model_section(ckpt.params));
  if (ckpt.bank) write_section(w, "BANK", bank_section(*ckpt.bank));
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  save_checkpoint(out, ckpt);
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

Checkpoint load_checkpoint(std::istream& in) {
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Reader r(buffer.str());
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != std::string(kMagic.data(), kMagic.size())) {
    r.fail("not a dgn checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t sections = r.u32();
  std::optional<ModelParams> params;
  std::optional<MemoryBank> bank;
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string tag = r.raw(4);
    const std::uint64_t length = r.u64();
    if (length > r.remaining()) r.fail("section " + tag + " overruns the file");
    const std::size_t end = r.pos() + length;
    if (tag == "MODL") {
      params = read_model(r);
    } else if (tag == "BANK") {
      bank = read_bank(r);
    } else {
      r.raw(length);
    }
    if (r.pos() != end) r.fail("section " + tag + " length disagrees with its contents");
  }
  if (!params) r.fail("missing MODL section");
  if (r.remaining() != 0) r.fail("trailing bytes");
  if (bank && bank->prototypes.cols() != params->feature_dim()) r.fail("bank dimension differs from model features");
  return Checkpoint{std::move(*params), std::move(bank)};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace dgn
