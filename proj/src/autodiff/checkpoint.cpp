#include "pcnssm/autodiff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pcnssm/error.hpp"

namespace pcnssm::ad {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'C', 'N', 'S', 'S', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    pod<std::uint64_t>(v.size());
    bytes(v.data(), v.size() * sizeof(double));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path)
      : in_(in), path_(path) {}
  template <typename T>
  T pod() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }
  void read(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated checkpoint: " + path_.string());
  }
  std::string string() {
    const auto n = checked_size(pod<std::uint64_t>());
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::vector<double> doubles() {
    const auto n = checked_size(pod<std::uint64_t>());
    std::vector<double> v(n);
    read(v.data(), n * sizeof(double));
    return v;
  }

 private:
  std::size_t checked_size(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 34)) {
      throw IoError("corrupt checkpoint length in " + path_.string());
    }
    return static_cast<std::size_t>(n);
  }
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    Writer w(out);
    w.bytes(kMagic, sizeof(kMagic));
    w.pod(kVersion);
    w.string(ckpt.metadata);
    w.pod<std::uint64_t>(ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
      w.string(name);
      w.pod<std::uint64_t>(tensor.rank());
      for (std::size_t d : tensor.shape()) w.pod<std::uint64_t>(d);
      w.doubles(tensor.values());
    }
    w.pod<std::uint8_t>(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
      const AdamState& s = *ckpt.optimizer;
      w.pod<std::uint64_t>(s.step);
      w.pod(s.hyper.learning_rate);
      w.pod(s.hyper.beta1);
      w.pod(s.hyper.beta2);
      w.pod(s.hyper.epsilon);
      w.pod<std::uint64_t>(s.m.size());
      for (std::size_t i = 0; i < s.m.size(); ++i) {
        w.doubles(s.m[i]);
        w.doubles(s.v[i]);
      }
    }
    if (!out) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  Reader r(in, path);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (const auto version = r.pod<std::uint32_t>(); version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata = r.string();
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const auto rank = r.pod<std::uint64_t>();
    if (rank > 8) throw IoError("corrupt tensor rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>());
    ckpt.tensors.emplace(std::move(name), Tensor::from(std::move(shape), r.doubles()));
  }
  if (r.pod<std::uint8_t>() != 0) {
    AdamState s;
    s.step = r.pod<std::uint64_t>();
    s.hyper.learning_rate = r.pod<double>();
    s.hyper.beta1 = r.pod<double>();
    s.hyper.beta2 = r.pod<double>();
    s.hyper.epsilon = r.pod<double>();
    const auto n = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      s.m.push_back(r.doubles());
      s.v.push_back(r.doubles());
    }
    ckpt.optimizer = std::move(s);
  }
  return ckpt;
}

}  // namespace pcnssm::ad
