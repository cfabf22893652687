#include "orthonet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "orthonet/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

namespace orthonet {

namespace {

constexpr char kMagic[8] = {'O', 'R', 'T', 'H', 'O', 'C', 'K', '1'};

template <typename T>
void put(std::vector<char>& buf, T v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string file) : b_(std::move(bytes)), file_(std::move(file)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), b_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (b_.size() - pos_ < n)
      throw FormatError(file_ + ": truncated at offset " + std::to_string(pos_));
  }
  std::vector<char> b_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& file, std::span<const NamedTensor> tensors) {
  std::vector<char> buf(kMagic, kMagic + 8);
  put<std::uint64_t>(buf, tensors.size());
  for (const auto& t : tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf.insert(buf.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put<std::uint64_t>(buf, d);
    const char* p = reinterpret_cast<const char*>(t.value.data().data());
    buf.insert(buf.end(), p, p + t.value.size() * sizeof(double));
  }
  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError("cannot open " + file.string() + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw FormatError("failed writing " + file.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + file.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()),
           file.string());
  if (r.str(8) != std::string(kMagic, 8)) throw FormatError(file.string() + ": not a checkpoint");
  const auto count = r.get<std::uint64_t>();
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError(file.string() + ": implausible rank for '" + t.name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    t.value = Tensor(shape);
    r.doubles(t.value.data());
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(file.string() + ": trailing bytes at offset " + std::to_string(r.pos()));
  return out;
}

void write_manifest(const std::filesystem::path& file, std::span<const NamedTensor> tensors) {
  std::ofstream os(file);
  if (!os) throw FormatError("cannot open " + file.string() + " for writing");
  std::size_t offset = 16;
  for (const auto& t : tensors) {
    offset += 4 + t.name.size() + 4 + 8 * t.value.rank();
    os << t.name << ' ' << shape_str(t.value.shape()) << ' ' << offset << '\n';
    offset += t.value.size() * sizeof(double);
  }
}

std::vector<Tensor> weight_matrices(std::span<const NamedTensor> tensors) {
  std::vector<Tensor> out;
  for (const auto& t : tensors) {
    if (!t.name.ends_with(".weight")) continue;
    if (t.value.rank() == 4) {
      out.push_back(KernelMatrix::from_tensor(t.value).matrix());
    } else if (t.value.rank() == 2) {
      out.push_back(t.value);
    } else {
      throw FormatError("weight '" + t.name + "' has unexpected shape " + shape_str(t.value.shape()));
    }
  }
  return out;
}

KernelMatrix first_conv_kernel(std::span<const NamedTensor> tensors) {
  for (const auto& t : tensors)
    if (t.name.ends_with(".weight") && t.value.rank() == 4) return KernelMatrix::from_tensor(t.value);
  throw FormatError("checkpoint holds no convolution kernel");
}

}  // namespace orthonet
