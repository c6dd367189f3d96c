#ifndef CAPGEN_TESTS_TEST_SUPPORT_HPP_
#define CAPGEN_TESTS_TEST_SUPPORT_HPP_

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "capgen/captioner.hpp"
#include "capgen/features.hpp"
#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "capgen_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void spit(const std::filesystem::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(v), requires_grad);
}

inline FeatureSet random_features(size_t regions, size_t dims, Rng& rng, std::string id = "img") {
  return FeatureSet{std::move(id), random_tensor({regions, dims}, rng)};
}

inline ModelConfig tiny_config(Variant v, size_t vocab = 12, uint64_t seed = 1) {
  ModelConfig c;
  c.variant = v;
  c.vocab_size = vocab;
  c.embed_dim = 8;
  c.hidden = 16;
  c.feature_dim = 5;
  c.att_dim = 8;
  c.num_layers = 3;
  c.seed = seed;
  return c;
}

inline void fill_parameters(CaptionModel& m, double value) {
  for (Parameter& p : m.parameters())
    for (double& x : p.tensor.mutable_data()) x = value;
}

/// Multiplies every parameter by `gain`, which sharpens the output
/// distribution of a freshly initialised model.
inline void scale_parameters(CaptionModel& m, double gain) {
  for (Parameter& p : m.parameters())
    for (double& x : p.tensor.mutable_data()) x *= gain;
}

/// Central-difference derivative of f with respect to x[i].
inline double numeric_grad(Tensor& x, size_t i, const std::function<double()>& f,
                           double h = 1e-5) {
  auto v = x.mutable_data();
  const double saved = v[i];
  v[i] = saved + h;
  const double up = f();
  v[i] = saved - h;
  const double down = f();
  v[i] = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace capgen::testing

#endif  // CAPGEN_TESTS_TEST_SUPPORT_HPP_
