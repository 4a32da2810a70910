#include "osmid/core/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace osmid {

namespace {
constexpr char kMagic[8] = {'O', 'S', 'T', 'E', 'N', 'S', 'V', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor file: truncated");
}
}  // namespace

const Tensor& TensorFile::at(const std::string& k) const {
  auto it = entries.find(k);
  if (it == entries.end()) throw std::out_of_range("tensor file: missing entry " + k);
  return it->second;
}

void TensorFile::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("tensor file: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  uint64_t n = entries.size();
  write_pod(os, n);
  for (const auto& [name, t] : entries) {
    uint32_t len = static_cast<uint32_t>(name.size());
    write_pod(os, len);
    os.write(name.data(), len);
    uint32_t nd = static_cast<uint32_t>(t.shape.size());
    write_pod(os, nd);
    for (int d : t.shape) {
      int64_t dd = d;
      write_pod(os, dd);
    }
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("tensor file: write failed: " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("tensor file: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("tensor file: bad magic: " + path);
  uint32_t version = 0;
  read_pod(is, version);
  if (version != kVersion)
    throw std::runtime_error("tensor file: unsupported version");
  uint64_t n = 0;
  read_pod(is, n);
  TensorFile tf;
  for (uint64_t i = 0; i < n; ++i) {
    uint32_t len = 0;
    read_pod(is, len);
    std::string name(len, '\0');
    is.read(name.data(), len);
    uint32_t nd = 0;
    read_pod(is, nd);
    std::vector<int> shape(nd);
    for (uint32_t d = 0; d < nd; ++d) {
      int64_t dd = 0;
      read_pod(is, dd);
      shape[d] = static_cast<int>(dd);
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("tensor file: truncated: " + path);
    tf.entries.emplace(std::move(name), std::move(t));
  }
  return tf;
}

}  // namespace osmid
