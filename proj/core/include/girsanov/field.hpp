#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "girsanov/errors.hpp"

namespace girsanov {

/// Scalar-valued coefficient (t, x) -> real, used for running and terminal costs.
///
/// The common shapes are enumerated so the time-stepping loop pays a switch instead
/// of a virtual call; arbitrary callables remain available through `custom`.
class ScalarField {
 public:
  using Fn = std::function<double(double t, const double* x, int d)>;

  ScalarField() : kind_(Kind::kZero) {}

  static ScalarField zero() { return ScalarField(); }

  static ScalarField constant(double value) {
    ScalarField f;
    f.kind_ = Kind::kConstant;
    f.value_ = value;
    return f;
  }

  /// One-dimensional polynomial sum_i coeffs[i] * x^i evaluated at x[0].
  static ScalarField polynomial(std::vector<double> coeffs) {
    ScalarField f;
    f.kind_ = Kind::kPolynomial;
    f.coeffs_ = std::move(coeffs);
    return f;
  }

  static ScalarField custom(Fn fn) {
    ScalarField f;
    f.kind_ = Kind::kCustom;
    f.fn_ = std::move(fn);
    return f;
  }

  double operator()(double t, const double* x, int d) const {
    switch (kind_) {
      case Kind::kZero:
        return 0.0;
      case Kind::kConstant:
        return value_;
      case Kind::kPolynomial: {
        double r = 0.0;
        const double xv = x[0];
        for (std::size_t i = coeffs_.size(); i-- > 0;) r = r * xv + coeffs_[i];
        return r;
      }
      case Kind::kCustom:
        return fn_(t, x, d);
    }
    return 0.0;
  }

  bool is_zero() const { return kind_ == Kind::kZero; }

 private:
  enum class Kind { kZero, kConstant, kPolynomial, kCustom };

  Kind kind_;
  double value_ = 0.0;
  std::vector<double> coeffs_;
  Fn fn_;
};

/// Vector-valued coefficient (t, x) -> R^d, used for the drift and the control basis.
class VectorField {
 public:
  /// Custom callables write d values into `out`.
  using Fn = std::function<void(double t, const double* x, int d, double* out)>;

  VectorField() : kind_(Kind::kZero), dim_(1) {}

  static VectorField zero(int d) {
    VectorField f;
    f.kind_ = Kind::kZero;
    f.dim_ = d;
    return f;
  }

  static VectorField constant(Eigen::VectorXd value) {
    VectorField f;
    f.kind_ = Kind::kConstant;
    f.dim_ = static_cast<int>(value.size());
    f.values_.assign(value.data(), value.data() + value.size());
    return f;
  }

  /// One-dimensional polynomial field: out[0] = sum_i coeffs[i] * x^i.
  static VectorField polynomial(std::vector<double> coeffs) {
    VectorField f;
    f.kind_ = Kind::kPolynomial;
    f.dim_ = 1;
    f.values_ = std::move(coeffs);
    return f;
  }

  /// One-dimensional Gaussian bump: out[0] = amplitude * exp(-(x-center)^2 / (2 width^2)).
  static VectorField gaussian_bump(double amplitude, double center, double width) {
    if (!(width > 0.0)) throw InvalidInputError("gaussian_bump: width must be positive");
    VectorField f;
    f.kind_ = Kind::kGaussianBump;
    f.dim_ = 1;
    f.values_ = {amplitude, center, width};
    return f;
  }

  static VectorField custom(int d, Fn fn) {
    VectorField f;
    f.kind_ = Kind::kCustom;
    f.dim_ = d;
    f.fn_ = std::move(fn);
    return f;
  }

  void eval(double t, const double* x, double* out) const {
    switch (kind_) {
      case Kind::kZero:
        for (int j = 0; j < dim_; ++j) out[j] = 0.0;
        return;
      case Kind::kConstant:
        for (int j = 0; j < dim_; ++j) out[j] = values_[static_cast<std::size_t>(j)];
        return;
      case Kind::kPolynomial: {
        double r = 0.0;
        const double xv = x[0];
        for (std::size_t i = values_.size(); i-- > 0;) r = r * xv + values_[i];
        out[0] = r;
        return;
      }
      case Kind::kGaussianBump: {
        const double z = (x[0] - values_[1]) / values_[2];
        out[0] = values_[0] * std::exp(-0.5 * z * z);
        return;
      }
      case Kind::kCustom:
        fn_(t, x, dim_, out);
        return;
    }
  }

  Eigen::VectorXd operator()(double t, const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(dim_);
    eval(t, x.data(), out.data());
    return out;
  }

  int dimension() const { return dim_; }

 private:
  enum class Kind { kZero, kConstant, kPolynomial, kGaussianBump, kCustom };

  Kind kind_;
  int dim_;
  std::vector<double> values_;
  Fn fn_;
};

/// Matrix-valued diffusion coefficient (t, x) -> d x d.
///
/// Constant diffusions (by far the common case) precompute the pseudoinverse data the
/// stepping loop needs; state-dependent diffusions fall back to a per-step SVD.
class MatrixField {
 public:
  using Fn = std::function<Eigen::MatrixXd(double t, const Eigen::VectorXd& x)>;

  MatrixField() : kind_(Kind::kScaledIdentity), dim_(1), scale_(1.0) {}

  /// scale * identity.
  static MatrixField scaled_identity(int d, double scale) {
    MatrixField f;
    f.kind_ = Kind::kScaledIdentity;
    f.dim_ = d;
    f.scale_ = scale;
    return f;
  }

  static MatrixField constant(Eigen::MatrixXd value) {
    if (value.rows() != value.cols())
      throw InvalidInputError("diffusion matrix must be square");
    MatrixField f;
    f.kind_ = Kind::kConstant;
    f.dim_ = static_cast<int>(value.rows());
    f.matrix_ = std::move(value);
    return f;
  }

  static MatrixField custom(int d, Fn fn) {
    MatrixField f;
    f.kind_ = Kind::kCustom;
    f.dim_ = d;
    f.fn_ = std::move(fn);
    return f;
  }

  bool is_constant() const { return kind_ != Kind::kCustom; }
  int dimension() const { return dim_; }

  Eigen::MatrixXd operator()(double t, const Eigen::VectorXd& x) const {
    switch (kind_) {
      case Kind::kScaledIdentity:
        return scale_ * Eigen::MatrixXd::Identity(dim_, dim_);
      case Kind::kConstant:
        return matrix_;
      case Kind::kCustom:
        return fn_(t, x);
    }
    return Eigen::MatrixXd::Identity(dim_, dim_);
  }

 private:
  enum class Kind { kScaledIdentity, kConstant, kCustom };

  Kind kind_;
  int dim_;
  double scale_ = 1.0;
  Eigen::MatrixXd matrix_;
  Fn fn_;
};

}  // namespace girsanov
