#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ivg {

using Matrix = Eigen::MatrixXd;

/// How a parameter tensor is initialised.
enum class Init {
  kUniformFanIn,       ///< U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kZeros,
  kOnes,
  kIdentityPlusNoise,  ///< I + U(-1/sqrt(fan_in), 1/sqrt(fan_in)) * 0.1
};

/// Named, ordered parameter tensors shared by every model component.
class ParamStore {
 public:
  struct Param {
    std::string name;
    Matrix value;
    Init init = Init::kUniformFanIn;
    Eigen::Index fan_in = 1;
  };

  /// Registers a tensor; fan_in defaults to `rows`.
  int add(std::string name, Eigen::Index rows, Eigen::Index cols, Init init, Eigen::Index fan_in = 0);
  bool contains(const std::string& name) const { return index_.contains(name); }
  int index(const std::string& name) const;

  std::size_t size() const noexcept { return params_.size(); }
  const Param& at(int i) const { return params_[static_cast<std::size_t>(i)]; }
  const Matrix& value(int i) const { return params_[static_cast<std::size_t>(i)].value; }
  Matrix& value(int i) { return params_[static_cast<std::size_t>(i)].value; }
  std::size_t scalar_count() const;

  /// Each tensor draws from its own stream seeded by (seed, name), so the
  /// values of one tensor do not depend on which other tensors exist.
  void initialize(std::uint64_t seed);
  std::vector<Matrix> zero_grads() const;

  /// Writes the archive: "IVGC", u32 version, u32 count, then per tensor
  /// u32 name length, name bytes, u32 rows, u32 cols, rows*cols float32 LE
  /// (row-major). All integers little-endian.
  void save(const std::filesystem::path& path) const;
  /// Loads every tensor by name; names and shapes must match exactly.
  void load(const std::filesystem::path& path);

 private:
  std::vector<Param> params_;
  std::map<std::string, int> index_;
};

std::map<std::string, Matrix> read_archive(const std::filesystem::path& path);

}  // namespace ivg
