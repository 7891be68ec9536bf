// Named parameter tensors shared by the networks, the optimizer and the
// checkpoint format.
#ifndef VF_PARAMS_H_
#define VF_PARAMS_H_

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vf/util.h"

namespace vf {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Ordered list of named matrices. Gradients use the same layout as the
// parameters they belong to.
template <class S>
class ParameterSet {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    names_.push_back(std::move(name));
    values_.push_back(Mat<S>::Zero(rows, cols));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Mat<S>& operator[](std::size_t i) { return values_[i]; }
  const Mat<S>& operator[](std::size_t i) const { return values_[i]; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw DataError("no parameter named '" + name + "'");
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  ParameterSet zeros_like() const {
    ParameterSet out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].rows(), values_[i].cols());
    return out;
  }

  template <class T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (std::size_t i = 0; i < size(); ++i) {
      out.add(names_[i], values_[i].rows(), values_[i].cols());
      out[i] = values_[i].template cast<T>();
    }
    return out;
  }

  bool same_layout(const ParameterSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (other.names_[i] != names_[i] || other.values_[i].rows() != values_[i].rows() ||
          other.values_[i].cols() != values_[i].cols())
        return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& v : values_)
      if (!v.allFinite()) return false;
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<S>> values_;
};

// Uniform(-limit, limit) fill with limit = gain * sqrt(3 / fan_in).
template <class S>
void init_uniform(Mat<S>& m, double fan_in, double gain, std::mt19937_64& rng) {
  const double limit = gain * std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<S>(u(rng));
}

// SHA-256 over names, shapes and float32 values: equal for bit-identical
// float models.
template <class S>
Digest parameter_digest(const ParameterSet<S>& p) {
  Sha256 h;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ByteWriter w;
    w.str(p.name(i));
    w.u32(static_cast<std::uint32_t>(p[i].rows()));
    w.u32(static_cast<std::uint32_t>(p[i].cols()));
    for (Eigen::Index c = 0; c < p[i].cols(); ++c)
      for (Eigen::Index r = 0; r < p[i].rows(); ++r) w.f32(static_cast<float>(p[i](r, c)));
    h.update(w.buffer());
  }
  return h.finish();
}

}  // namespace vf

#endif  // VF_PARAMS_H_
