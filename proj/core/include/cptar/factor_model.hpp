#pragma once

// CP-structured loadings and the low-rank autoregressive coefficient
// [A]_n = Lambda_y G (I_L (x) Lambda_x^T), together with feature extraction
// and one-step prediction.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cptar/tensor.hpp"

namespace cptar {

class SparseCoef;

/// Unit-column factor matrices F_1..F_n with a shared rank R.
class CPLoadingSet {
 public:
  static constexpr double kUnitNormTol = 1e-8;

  CPLoadingSet() = default;
  /// Validates shared column count and unit column norms.
  explicit CPLoadingSet(std::vector<Matrix> factors);
  /// Normalizes columns first; throws degenerate_factor on a zero column.
  static CPLoadingSet normalized(std::vector<Matrix> factors);

  const std::vector<Matrix>& factors() const noexcept { return factors_; }
  std::size_t order() const noexcept { return factors_.size(); }
  std::size_t rank() const noexcept { return factors_.empty() ? 0 : static_cast<std::size_t>(factors_.front().cols()); }
  Shape dims() const;
  std::size_t total_dim() const;

 private:
  std::vector<Matrix> factors_;
};

/// Which parameter space the coefficient lives in.
enum class ModelVariant {
  ar_shared_lags,    ///< Lambda_y G (I_P (x) Lambda_x^T), G is R_y x P R_x
  stacked_lag_mode,  ///< lag folded into a leading covariate mode of size P, G is R_y x R_x
  regression,        ///< tensor-on-tensor regression Lambda_y G Lambda_x^T
};

std::string_view variant_name(ModelVariant v) noexcept;
ModelVariant parse_variant(std::string_view name);

class LowRankCoef {
 public:
  LowRankCoef() = default;
  LowRankCoef(CPLoadingSet response, CPLoadingSet covariate, Matrix core, std::size_t lag_order,
              ModelVariant variant = ModelVariant::ar_shared_lags);

  const CPLoadingSet& response_loadings() const noexcept { return response_; }
  const CPLoadingSet& covariate_loadings() const noexcept { return covariate_; }
  const Matrix& core() const noexcept { return core_; }
  Matrix& mutable_core() noexcept { return core_; }
  std::size_t lag_order() const noexcept { return lag_order_; }
  ModelVariant variant() const noexcept { return variant_; }

  std::size_t rank_y() const noexcept { return response_.rank(); }
  std::size_t rank_x() const noexcept { return covariate_.rank(); }
  /// Number of covariate blocks sharing Lambda_x: P for ar_shared_lags, else 1.
  std::size_t num_blocks() const noexcept {
    return variant_ == ModelVariant::ar_shared_lags ? lag_order_ : 1;
  }
  Shape response_dims() const { return response_.dims(); }
  /// Dims of one lagged observation (AR variants) or of the covariate tensor.
  Shape lag_dims() const;

  /// The core before absorbing (Lambda_y^T Lambda_y)^{-1}: (Lambda_y^T Lambda_y) G.
  /// Throws singular_matrix when Lambda_y^T Lambda_y is not invertible.
  Matrix original_core() const;

 private:
  CPLoadingSet response_;
  CPLoadingSet covariate_;
  Matrix core_;
  std::size_t lag_order_ = 1;
  ModelVariant variant_ = ModelVariant::ar_shared_lags;
};

/// Time-ordered observations of identical shape.
class TensorSeries {
 public:
  TensorSeries() = default;
  explicit TensorSeries(std::vector<DenseTensor> observations);
  /// Columns of `columns` are vectorized observations of shape `dims`.
  static TensorSeries from_columns(const Shape& dims, const Matrix& columns);

  std::size_t length() const noexcept { return obs_.size(); }
  const Shape& dims() const noexcept { return dims_; }
  std::size_t total_dim() const { return shape_product(dims_); }
  const DenseTensor& operator[](std::size_t t) const { return obs_.at(t); }
  const std::vector<DenseTensor>& observations() const noexcept { return obs_; }

  /// Observations [0, count).
  TensorSeries prefix(std::size_t count) const;
  /// Observations [begin, end).
  TensorSeries slice(std::size_t begin, std::size_t end) const;
  /// Q x T matrix of vectorized observations.
  Matrix as_columns() const;

 private:
  Shape dims_;
  std::vector<DenseTensor> obs_;
};

/// Lambda = F_n (.) ... (.) F_1.
Matrix assemble_lambda(const CPLoadingSet& loadings);

/// Coefficient in the canonical lag-major layout used by every AR routine:
/// a Q x PQ matrix whose column block k multiplies vec(Y_{t-k-1}). For the
/// regression variant this is simply Lambda_y G Lambda_x^T.
Matrix assemble_coef(const LowRankCoef& coef);

/// Smallest singular value of the assembled loading matrix.
double min_singular_value(const CPLoadingSet& loadings);
/// Threshold below which loadings are reported as degenerate.
inline constexpr double kDegeneracyThreshold = 1e-10;

Vector extract_response_features(const CPLoadingSet& loadings, const DenseTensor& y);
Vector extract_response_features(const LowRankCoef& coef, const DenseTensor& y);

/// Concatenation over lags of Lambda_x^T vec(lag_k), most recent lag first.
/// For the stacked variant the lags are stacked into one P x q_1 x ... x q_n
/// tensor and a single R_x feature vector is returned.
Vector extract_covariate_features(const LowRankCoef& coef, std::span<const DenseTensor> lagged);

/// Stack lagged observations into vec(X_t) following the lag-major layout.
Vector stack_lags(std::span<const DenseTensor> lagged);

/// One-step prediction from the P most recent observations (lagged[0] is
/// Y_{t-1}), adding the sparse part when given.
DenseTensor predict_one_step(const LowRankCoef& coef, std::span<const DenseTensor> lagged,
                             const SparseCoef* sparse = nullptr);

/// Prediction through a dense lag-major coefficient matrix.
DenseTensor predict_dense(const Matrix& coef, const Shape& response_dims, std::span<const DenseTensor> lagged);

/// Complexity d_AR = P R_y R_x + (R_y + R_x) sum_i q_i.
double complexity_ar(std::size_t lag_order, std::size_t rank_y, std::size_t rank_x, std::span<const std::size_t> dims);
/// Log factor d_c = log(n P^{1/2} R_y R_x^{1/2}).
double complexity_log_factor(std::size_t order, std::size_t lag_order, std::size_t rank_y, std::size_t rank_x);

}  // namespace cptar
