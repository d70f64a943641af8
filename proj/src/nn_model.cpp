#include "aoi/nn/model.hpp"

#include <cblas.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <mutex>

namespace aoi::nn {

namespace detail {

namespace {
void pin_blas_threads() {
  // single-threaded BLAS keeps training and inference bit-deterministic
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'A', 'O', 'I', 'W'};
constexpr std::uint8_t kVersion = 1;

struct Entry {
  std::string name;
  std::vector<int> shape;
  const float* data;
  float* mutable_data;
  std::size_t count;
};

std::vector<Entry> weight_entries(DensePcbNet& model) {
  std::vector<Entry> entries;
  for (ParameterT<float>* p : model.parameters()) {
    entries.push_back({p->name, p->value.shape, p->value.data.data(), p->value.data.data(),
                       p->value.numel()});
  }
  for (auto& [name, buf] : model.buffers()) {
    entries.push_back({name, buf->shape, buf->data.data(), buf->data.data(), buf->numel()});
  }
  return entries;
}

void append_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}

}  // namespace

void save_weights(DensePcbNet& model, const std::string& path) {
  std::string payload;
  append_bytes(payload, kMagic, 4);
  append_bytes(payload, &kVersion, 1);
  for (const Entry& e : weight_entries(model)) {
    const std::uint16_t len = static_cast<std::uint16_t>(e.name.size());
    append_bytes(payload, &len, 2);
    payload.append(e.name);
    const std::uint8_t rank = static_cast<std::uint8_t>(e.shape.size());
    append_bytes(payload, &rank, 1);
    for (int d : e.shape) {
      const std::uint32_t dim = static_cast<std::uint32_t>(d);
      append_bytes(payload, &dim, 4);
    }
    append_bytes(payload, e.data, e.count * sizeof(float));
  }
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
  append_bytes(payload, &crc, 4);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_weights: cannot open " + path);
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw std::runtime_error("save_weights: write failed for " + path);
}

void load_weights(DensePcbNet& model, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_weights: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (bytes.size() < 9) throw std::runtime_error("load_weights: file truncated: " + path);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("load_weights: bad magic bytes in " + path);
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kVersion) {
    throw std::runtime_error("load_weights: unsupported version in " + path);
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + body, 4);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  if (crc != stored_crc) throw std::runtime_error("load_weights: CRC mismatch in " + path);

  std::size_t pos = 5;
  auto need = [&](std::size_t n) {
    if (pos + n > body) throw std::runtime_error("load_weights: file truncated: " + path);
  };

  for (Entry& e : weight_entries(model)) {
    need(2);
    std::uint16_t len = 0;
    std::memcpy(&len, bytes.data() + pos, 2);
    pos += 2;
    need(len);
    const std::string name(bytes.data() + pos, len);
    pos += len;
    if (name != e.name) {
      throw std::runtime_error("load_weights: expected parameter '" + e.name + "', found '" +
                               name + "'");
    }
    need(1);
    const std::uint8_t rank = static_cast<std::uint8_t>(bytes[pos]);
    pos += 1;
    if (rank != e.shape.size()) {
      throw std::runtime_error("load_weights: rank mismatch for parameter '" + e.name + "'");
    }
    std::size_t count = 1;
    for (int r = 0; r < rank; ++r) {
      need(4);
      std::uint32_t dim = 0;
      std::memcpy(&dim, bytes.data() + pos, 4);
      pos += 4;
      if (static_cast<int>(dim) != e.shape[static_cast<size_t>(r)]) {
        throw std::runtime_error("load_weights: shape mismatch for parameter '" + e.name + "'");
      }
      count *= dim;
    }
    need(count * sizeof(float));
    std::memcpy(e.mutable_data, bytes.data() + pos, count * sizeof(float));
    pos += count * sizeof(float);
  }
  if (pos != body) throw std::runtime_error("load_weights: trailing data in " + path);
}

}  // namespace aoi::nn
