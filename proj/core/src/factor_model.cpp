#include "cptar/factor_model.hpp"

#include <cmath>
#include <string>

#include "cptar/error.hpp"
#include "cptar/sparse_coef.hpp"

namespace cptar {

CPLoadingSet::CPLoadingSet(std::vector<Matrix> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw Error(ErrorCode::invalid_argument, "loading set needs at least one factor");
  const auto r = factors_.front().cols();
  if (r < 1) throw Error(ErrorCode::invalid_argument, "loading rank must be >= 1");
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.cols() != r) {
      throw Error(ErrorCode::shape_mismatch, "factor " + std::to_string(i) + " has a different column count");
    }
    if (f.rows() < 1) throw Error(ErrorCode::invalid_argument, "factor dimensions must be >= 1");
    for (Eigen::Index c = 0; c < r; ++c) {
      const double n = f.col(c).norm();
      if (!(std::abs(n - 1.0) <= kUnitNormTol)) {
        throw Error(ErrorCode::invalid_argument,
                    "factor " + std::to_string(i) + " column " + std::to_string(c) + " is not unit norm");
      }
    }
  }
}

CPLoadingSet CPLoadingSet::normalized(std::vector<Matrix> factors) {
  for (auto& f : factors) f = col_norm(f);
  return CPLoadingSet(std::move(factors));
}

Shape CPLoadingSet::dims() const {
  Shape d;
  d.reserve(factors_.size());
  for (const auto& f : factors_) d.push_back(static_cast<std::size_t>(f.rows()));
  return d;
}

std::size_t CPLoadingSet::total_dim() const { return shape_product(dims()); }

std::string_view variant_name(ModelVariant v) noexcept {
  switch (v) {
    case ModelVariant::ar_shared_lags: return "ar_shared_lags";
    case ModelVariant::stacked_lag_mode: return "stacked_lag_mode";
    case ModelVariant::regression: return "regression";
  }
  return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
  if (name == "ar_shared_lags" || name == "lowrank" || name == "lrs") return ModelVariant::ar_shared_lags;
  if (name == "stacked_lag_mode" || name == "stacked") return ModelVariant::stacked_lag_mode;
  if (name == "regression") return ModelVariant::regression;
  throw Error(ErrorCode::invalid_argument, "unknown model variant '" + std::string(name) + "'");
}

LowRankCoef::LowRankCoef(CPLoadingSet response, CPLoadingSet covariate, Matrix core, std::size_t lag_order,
                         ModelVariant variant)
    : response_(std::move(response)),
      covariate_(std::move(covariate)),
      core_(std::move(core)),
      lag_order_(lag_order),
      variant_(variant) {
  if (lag_order_ < 1) throw Error(ErrorCode::invalid_argument, "lag order must be >= 1");
  const auto ry = static_cast<Eigen::Index>(response_.rank());
  const auto rx = static_cast<Eigen::Index>(covariate_.rank());
  const auto blocks = static_cast<Eigen::Index>(num_blocks());
  if (core_.rows() != ry || core_.cols() != blocks * rx) {
    throw Error(ErrorCode::shape_mismatch, "core must be R_y x " + std::string(variant == ModelVariant::ar_shared_lags
                                                                                 ? "P*R_x"
                                                                                 : "R_x"));
  }
  if (variant_ == ModelVariant::regression && lag_order_ != 1) {
    throw Error(ErrorCode::invalid_argument, "regression variant has no lag order");
  }
  if (variant_ == ModelVariant::ar_shared_lags && covariate_.dims() != response_.dims()) {
    throw Error(ErrorCode::shape_mismatch, "AR covariate loadings must share the response dims");
  }
  if (variant_ == ModelVariant::stacked_lag_mode) {
    auto cd = covariate_.dims();
    Shape expect{lag_order_};
    auto rd = response_.dims();
    expect.insert(expect.end(), rd.begin(), rd.end());
    if (cd != expect) {
      throw Error(ErrorCode::shape_mismatch, "stacked covariate loadings must have dims (P, q_1..q_n)");
    }
  }
  if (!core_.allFinite()) throw Error(ErrorCode::invalid_argument, "core has non-finite entries");
}

Shape LowRankCoef::lag_dims() const {
  auto d = covariate_.dims();
  if (variant_ == ModelVariant::stacked_lag_mode) d.erase(d.begin());
  return d;
}

Matrix LowRankCoef::original_core() const {
  const Matrix lambda = assemble_lambda(response_);
  const Matrix gram = lambda.transpose() * lambda;
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::singular_matrix, "Lambda_y^T Lambda_y is singular", "original_core");
  }
  return gram * core_;
}

TensorSeries::TensorSeries(std::vector<DenseTensor> observations) : obs_(std::move(observations)) {
  if (obs_.empty()) throw Error(ErrorCode::invalid_argument, "series must contain at least one observation");
  dims_ = obs_.front().shape();
  for (std::size_t t = 1; t < obs_.size(); ++t) {
    if (obs_[t].shape() != dims_) {
      throw Error(ErrorCode::shape_mismatch, "observation " + std::to_string(t) + " has a different shape");
    }
  }
}

TensorSeries TensorSeries::from_columns(const Shape& dims, const Matrix& columns) {
  std::vector<DenseTensor> obs;
  obs.reserve(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index t = 0; t < columns.cols(); ++t) obs.emplace_back(dims, Vector(columns.col(t)));
  return TensorSeries(std::move(obs));
}

TensorSeries TensorSeries::prefix(std::size_t count) const { return slice(0, count); }

TensorSeries TensorSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > obs_.size()) {
    throw Error(ErrorCode::index_out_of_range, "invalid series slice [" + std::to_string(begin) + ", " +
                                                   std::to_string(end) + ")");
  }
  return TensorSeries(std::vector<DenseTensor>(obs_.begin() + static_cast<std::ptrdiff_t>(begin),
                                               obs_.begin() + static_cast<std::ptrdiff_t>(end)));
}

Matrix TensorSeries::as_columns() const {
  Matrix out(static_cast<Eigen::Index>(total_dim()), static_cast<Eigen::Index>(obs_.size()));
  for (std::size_t t = 0; t < obs_.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = obs_[t].data();
  return out;
}

Matrix assemble_lambda(const CPLoadingSet& loadings) { return khatri_rao_chain(loadings.factors()); }

Matrix assemble_coef(const LowRankCoef& coef) {
  const Matrix ly = assemble_lambda(coef.response_loadings());
  const Matrix lx = assemble_lambda(coef.covariate_loadings());
  const auto rx = static_cast<Eigen::Index>(coef.rank_x());
  switch (coef.variant()) {
    case ModelVariant::regression:
      return ly * coef.core() * lx.transpose();
    case ModelVariant::ar_shared_lags: {
      const auto p = static_cast<Eigen::Index>(coef.lag_order());
      const Matrix lyg = ly * coef.core();
      Matrix out(ly.rows(), p * lx.rows());
      for (Eigen::Index k = 0; k < p; ++k) {
        out.middleCols(k * lx.rows(), lx.rows()).noalias() = lyg.middleCols(k * rx, rx) * lx.transpose();
      }
      return out;
    }
    case ModelVariant::stacked_lag_mode: {
      // Stacked covariate order has the lag fastest; permute to lag-major.
      const Matrix stacked = ly * coef.core() * lx.transpose();
      const auto p = static_cast<Eigen::Index>(coef.lag_order());
      const Eigen::Index q = stacked.cols() / p;
      Matrix out(stacked.rows(), stacked.cols());
      for (Eigen::Index i = 0; i < q; ++i) {
        for (Eigen::Index k = 0; k < p; ++k) out.col(k * q + i) = stacked.col(k + p * i);
      }
      return out;
    }
  }
  return {};
}

double min_singular_value(const CPLoadingSet& loadings) {
  const Matrix lambda = assemble_lambda(loadings);
  Eigen::JacobiSVD<Matrix> svd(lambda);
  return svd.singularValues().minCoeff();
}

Vector extract_response_features(const CPLoadingSet& loadings, const DenseTensor& y) {
  if (y.shape() != loadings.dims()) {
    throw Error(ErrorCode::shape_mismatch, "observation shape does not match loading dims",
                "extract_response_features");
  }
  return assemble_lambda(loadings).transpose() * y.data();
}

Vector extract_response_features(const LowRankCoef& coef, const DenseTensor& y) {
  return extract_response_features(coef.response_loadings(), y);
}

Vector stack_lags(std::span<const DenseTensor> lagged) {
  if (lagged.empty()) return {};
  const auto q = static_cast<Eigen::Index>(lagged.front().size());
  Vector out(q * static_cast<Eigen::Index>(lagged.size()));
  for (std::size_t k = 0; k < lagged.size(); ++k) {
    if (lagged[k].shape() != lagged.front().shape()) {
      throw Error(ErrorCode::shape_mismatch, "lagged observations differ in shape", "stack_lags");
    }
    out.segment(static_cast<Eigen::Index>(k) * q, q) = lagged[k].data();
  }
  return out;
}

namespace {

void check_lags(const LowRankCoef& coef, std::span<const DenseTensor> lagged, const char* where) {
  const std::size_t expect = coef.variant() == ModelVariant::regression ? 1 : coef.lag_order();
  if (lagged.size() != expect) {
    throw Error(ErrorCode::shape_mismatch,
                "expected " + std::to_string(expect) + " lagged tensors, got " + std::to_string(lagged.size()), where);
  }
  const auto dims = coef.lag_dims();
  for (const auto& l : lagged) {
    if (l.shape() != dims) throw Error(ErrorCode::shape_mismatch, "lagged tensor has the wrong shape", where);
  }
}

// vec of the P x q_1 x ... x q_n tensor stacking the lags along a new mode 0.
Vector stack_lags_leading(std::span<const DenseTensor> lagged) {
  const auto p = static_cast<Eigen::Index>(lagged.size());
  const auto q = static_cast<Eigen::Index>(lagged.front().size());
  Vector out(p * q);
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index i = 0; i < q; ++i) out[k + p * i] = lagged[static_cast<std::size_t>(k)].data()[i];
  }
  return out;
}

}  // namespace

Vector extract_covariate_features(const LowRankCoef& coef, std::span<const DenseTensor> lagged) {
  check_lags(coef, lagged, "extract_covariate_features");
  const Matrix lx = assemble_lambda(coef.covariate_loadings());
  if (coef.variant() == ModelVariant::stacked_lag_mode) return lx.transpose() * stack_lags_leading(lagged);
  const auto rx = lx.cols();
  Vector out(rx * static_cast<Eigen::Index>(lagged.size()));
  for (std::size_t k = 0; k < lagged.size(); ++k) {
    out.segment(static_cast<Eigen::Index>(k) * rx, rx) = lx.transpose() * lagged[k].data();
  }
  return out;
}

DenseTensor predict_one_step(const LowRankCoef& coef, std::span<const DenseTensor> lagged, const SparseCoef* sparse) {
  const Vector features = extract_covariate_features(coef, lagged);
  Vector y = assemble_lambda(coef.response_loadings()) * (coef.core() * features);
  if (sparse != nullptr) {
    if (sparse->total_dim() != static_cast<std::size_t>(y.size()) || sparse->lag_order() != lagged.size()) {
      throw Error(ErrorCode::shape_mismatch, "sparse part does not match the model", "predict_one_step");
    }
    y += sparse->apply(stack_lags(lagged));
  }
  return DenseTensor(coef.response_dims(), std::move(y));
}

DenseTensor predict_dense(const Matrix& coef, const Shape& response_dims, std::span<const DenseTensor> lagged) {
  const Vector x = stack_lags(lagged);
  if (coef.cols() != x.size() || static_cast<std::size_t>(coef.rows()) != shape_product(response_dims)) {
    throw Error(ErrorCode::shape_mismatch, "coefficient does not match lags", "predict_dense");
  }
  return DenseTensor(response_dims, coef * x);
}

double complexity_ar(std::size_t lag_order, std::size_t rank_y, std::size_t rank_x, std::span<const std::size_t> dims) {
  double sum_q = 0.0;
  for (auto q : dims) sum_q += static_cast<double>(q);
  return static_cast<double>(lag_order * rank_y * rank_x) + static_cast<double>(rank_y + rank_x) * sum_q;
}

double complexity_log_factor(std::size_t order, std::size_t lag_order, std::size_t rank_y, std::size_t rank_x) {
  return std::log(static_cast<double>(order) * std::sqrt(static_cast<double>(lag_order)) *
                  static_cast<double>(rank_y) * std::sqrt(static_cast<double>(rank_x)));
}

}  // namespace cptar
