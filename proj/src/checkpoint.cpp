#include "rankft/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "rankft/datamodel.hpp"
#include "rankft/errors.hpp"
#include "rankft/hashing.hpp"

namespace rankft {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'K', 'F', 'T', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string string() { return bytes(get<std::uint32_t>()); }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError(0, "checkpoint truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointBlob& blob) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, CheckpointBlob::kVersion);
  put_string(out, blob.config_json);
  out += sha256_hex(blob.config_json);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.vocabulary.size()));
  for (const auto& tok : blob.vocabulary) put_string(out, tok);
  put<std::uint64_t>(out, blob.parameters.size());
  for (double p : blob.parameters) put<double>(out, p);
  write_file_atomic(path, out);
}

CheckpointBlob read_checkpoint(const std::filesystem::path& path) {
  Reader in(read_file(path));
  if (in.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError(0, path.string() + ": not a rankft checkpoint");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != CheckpointBlob::kVersion) {
    throw ParseError(0, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointBlob blob;
  blob.config_json = in.string();
  if (in.bytes(64) != sha256_hex(blob.config_json)) {
    throw ParseError(0, path.string() + ": config hash mismatch");
  }
  const auto vocab = in.get<std::uint32_t>();
  blob.vocabulary.reserve(vocab);
  for (std::uint32_t i = 0; i < vocab; ++i) blob.vocabulary.push_back(in.string());
  const auto count = in.get<std::uint64_t>();
  blob.parameters.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) blob.parameters.push_back(in.get<double>());
  if (!in.done()) throw ParseError(0, path.string() + ": trailing bytes in checkpoint");
  return blob;
}

}  // namespace rankft
