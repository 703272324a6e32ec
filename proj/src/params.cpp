#include "ivg/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "ivg/errors.hpp"
#include "ivg/rng.hpp"

namespace ivg {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kArchiveVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t{bytes_[pos_ + static_cast<std::size_t>(b)]} << (8 * b);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError({}, "truncated parameter archive");
  }
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

int ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols, Init init, Eigen::Index fan_in) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  const int id = static_cast<int>(params_.size());
  index_.emplace(name, id);
  params_.push_back(Param{std::move(name), Matrix::Zero(rows, cols), init, fan_in > 0 ? fan_in : rows});
  return id;
}

int ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::initialize(std::uint64_t seed) {
  for (auto& p : params_) {
    Rng rng(mix_seed(seed, fnv1a(p.name)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
    switch (p.init) {
      case Init::kZeros:
        p.value.setZero();
        break;
      case Init::kOnes:
        p.value.setOnes();
        break;
      case Init::kUniformFanIn:
        for (Eigen::Index r = 0; r < p.value.rows(); ++r)
          for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = rng.uniform(-bound, bound);
        break;
      case Init::kIdentityPlusNoise:
        for (Eigen::Index r = 0; r < p.value.rows(); ++r)
          for (Eigen::Index c = 0; c < p.value.cols(); ++c)
            p.value(r, c) = (r == c ? 1.0 : 0.0) + 0.1 * rng.uniform(-bound, bound);
        break;
    }
  }
}

std::vector<Matrix> ParamStore::zero_grads() const {
  std::vector<Matrix> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

void ParamStore::save(const fs::path& path) const {
  std::string out;
  out.reserve(16 + scalar_count() * 4);
  out += "IVGC";
  put_u32(out, kArchiveVersion);
  put_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c)
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p.value(r, c))));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::map<std::string, Matrix> read_archive(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError({}, "cannot open parameter archive " + path.string());
  Reader rd(std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()));
  if (rd.str(4) != "IVGC") throw DataError({}, "bad parameter archive magic");
  if (rd.u32() != kArchiveVersion) throw DataError({}, "unsupported parameter archive version");
  const std::uint32_t count = rd.u32();
  std::map<std::string, Matrix> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = rd.str(rd.u32());
    const std::uint32_t rows = rd.u32();
    const std::uint32_t cols = rd.u32();
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(std::bit_cast<float>(rd.u32()));
    out.emplace(std::move(name), std::move(m));
  }
  if (!rd.done()) throw DataError({}, "trailing bytes in parameter archive");
  return out;
}

void ParamStore::load(const fs::path& path) {
  auto tensors = read_archive(path);
  if (tensors.size() != params_.size()) throw DataError({}, "parameter archive has a different tensor count");
  for (auto& p : params_) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw DataError({}, "parameter archive lacks '" + p.name + "'");
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw DataError({}, "shape mismatch for parameter '" + p.name + "'");
    p.value = std::move(it->second);
  }
}

}  // namespace ivg
