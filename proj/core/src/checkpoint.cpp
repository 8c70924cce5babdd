#include "qrec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace qrec {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[] = "QREC-CKPT v1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ad::ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, kMagicLen);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.all().size()));
  for (const auto& p : params.all()) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name().size()));
    out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape().size()));
    for (std::size_t d : p->shape()) write_pod<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p->values().data()),
              static_cast<std::streamsize>(p->values().size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ad::ParameterSet& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  }
  const auto count = read_pod<std::uint32_t>(in, path);
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    const auto rank = read_pod<std::uint32_t>(in, path);
    ad::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
    std::vector<double> values(ad::numel(shape));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);

    ad::Parameter* p = params.find(name);
    if (!p) throw std::runtime_error("checkpoint has unknown parameter `" + name + "`: " + path);
    if (p->shape() != shape) {
      throw std::runtime_error("checkpoint shape mismatch for `" + name + "`: file has " +
                               ad::shape_str(shape) + ", model expects " +
                               ad::shape_str(p->shape()));
    }
    p->values() = std::move(values);
    seen.insert(name);
  }
  for (const auto& p : params.all()) {
    if (!seen.count(p->name())) {
      throw std::runtime_error("checkpoint is missing parameter `" + p->name() + "`: " + path);
    }
  }
}

}  // namespace qrec
