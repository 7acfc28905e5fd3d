#include "secdfl/params.hpp"

#include <cmath>

namespace secdfl {

ParamVector ParamVector::with_shape(Vec v, std::vector<std::int64_t> shp) {
  std::int64_t prod = 1;
  for (std::int64_t d : shp) {
    require(d > 0, Errc::InvalidArgument, "shape entries must be positive");
    prod *= d;
  }
  require(prod == v.size(), Errc::ShapeMismatch,
          "shape product does not match data length");
  ParamVector p;
  p.data = std::move(v);
  p.shape = std::move(shp);
  return p;
}

void ParamVector::check_finite(const char* what) const {
  if (!data.allFinite())
    fail(Errc::NonFinite, std::string(what) + ": non-finite entries");
}

ParamVector axpy_combine(const std::vector<double>& coeffs,
                         const std::vector<ParamVector>& vectors) {
  require(coeffs.size() == vectors.size(), Errc::InvalidArgument,
          "axpy_combine: one coefficient per vector");
  require(!vectors.empty(), Errc::InvalidArgument,
          "axpy_combine: empty input");
  for (const auto& v : vectors)
    require(v.same_shape(vectors.front()), Errc::ShapeMismatch,
            "axpy_combine: vectors differ in shape");
  Vec acc = Vec::Zero(vectors.front().size());
  for (std::size_t i = 0; i < vectors.size(); ++i)
    acc += coeffs[i] * vectors[i].data;
  ParamVector out;
  out.data = std::move(acc);
  out.shape = vectors.front().shape;
  out.check_finite("axpy_combine");
  return out;
}

double mse(const ParamVector& a, const ParamVector& b) {
  require(a.same_shape(b), Errc::ShapeMismatch, "mse: operands differ in shape");
  return mse(a.data, b.data);
}

nlohmann::json param_to_json(const ParamVector& p) {
  nlohmann::json j;
  j["shape"] = p.shape;
  j["data"] = std::vector<double>(p.data.data(), p.data.data() + p.data.size());
  return j;
}

ParamVector param_from_json(const nlohmann::json& j) {
  require(j.contains("data"), Errc::Io, "param json: missing 'data'");
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  Vec v = Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
  if (j.contains("shape"))
    return ParamVector::with_shape(std::move(v),
                                   j.at("shape").get<std::vector<std::int64_t>>());
  return ParamVector::flat(std::move(v));
}

}  // namespace secdfl
