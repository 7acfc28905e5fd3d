#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "secdfl/error.hpp"

namespace secdfl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Flat 64-bit parameter tensor with shape metadata. All aggregation math runs
// on the flat view; the shape rides along so models can reshape on their side.
// Flatten order is row-major and fixed, so every peer sees identical bytes.
struct ParamVector {
  Vec data;
  std::vector<std::int64_t> shape;

  static ParamVector flat(Vec v) {
    ParamVector p;
    p.shape = {v.size()};
    p.data = std::move(v);
    return p;
  }

  static ParamVector with_shape(Vec v, std::vector<std::int64_t> shp);

  std::int64_t size() const { return data.size(); }
  bool same_shape(const ParamVector& o) const { return shape == o.shape; }
  void check_finite(const char* what) const;
};

// elementwise sum of coeffs[i] * vectors[i]
ParamVector axpy_combine(const std::vector<double>& coeffs,
                         const std::vector<ParamVector>& vectors);

template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::ShapeMismatch,
          "mse: operands differ in shape");
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double mse(const ParamVector& a, const ParamVector& b);

nlohmann::json param_to_json(const ParamVector& p);
ParamVector param_from_json(const nlohmann::json& j);

}  // namespace secdfl
