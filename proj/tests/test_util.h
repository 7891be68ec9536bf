// Helpers shared by the unit tests.
#ifndef VF_TESTS_TEST_UTIL_H_
#define VF_TESTS_TEST_UTIL_H_

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "vf/dsp.h"

namespace vf::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("vf_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const { return child.empty() ? path_.string() : (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

inline Waveform sine(double hz, double seconds, double amplitude = 0.5, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::lround(seconds * rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  return w;
}

}  // namespace vf::testing

#endif  // VF_TESTS_TEST_UTIL_H_
