// SPDX-License-Identifier: MIT
//
// Linear-algebra and distribution primitives shared by all algorithmic
// modules: pseudoinverse-based least squares, ridge solves, rank and
// eigenvalue helpers, log-determinants, and the noncentral chi-squared
// CDF/quantile used by the collaboration (homogeneity) tests.

#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>

namespace fedband {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Noncentral chi-squared distribution chi^2(df, psi).
// df >= 1 integer degrees of freedom, psi >= 0 noncentrality.
struct NoncentralChiSq {
    int df = 1;
    double psi = 0.0;
};

// Relative singular/eigenvalue cutoff used by pseudoinverse and rank
// computations: values <= cutoff * largest are treated as zero.
inline constexpr double kPinvCutoff = 1e-10;

// Minimum-norm least-squares solution of X*theta ~= y, computed by applying
// the Moore-Penrose pseudoinverse of X^T X (eigenvalue cutoff kPinvCutoff
// relative to the largest eigenvalue).  Handles rank-deficient X.
// Throws std::invalid_argument on dimension mismatch.
Vector mle_estimate(const Matrix& X, const Vector& y);

// Same estimate from precomputed Gram-form sufficient statistics
// G = X^T X (symmetric PSD) and h = X^T y.
Vector mle_from_gram(const Matrix& G, const Vector& h);

// Solves Vbar * theta = b for symmetric positive-definite Vbar via Cholesky.
// Throws std::runtime_error if the factorization fails (non-PD input).
Vector ridge_estimate(const Matrix& Vbar, const Vector& b);

// Number of singular values exceeding tol * (largest singular value).
int matrix_rank(const Matrix& A, double tol = kPinvCutoff);

// (lambda_min, lambda_max) of a symmetric matrix.  The input is symmetrized
// as (A + A^T)/2 before decomposition to absorb floating-point asymmetry
// accumulated by rank-1 updates.  Throws std::runtime_error on non-finite
// entries.
std::pair<double, double> lambda_extremes(const Matrix& A);

// Log-determinant of a symmetric positive-definite matrix via Cholesky.
// Throws std::runtime_error if the factorization fails.
double logdet(const Matrix& A);

// CDF of the noncentral chi-squared distribution, evaluated as a
// Poisson(psi/2)-weighted series of central chi-squared CDFs (regularized
// incomplete gamma terms).  The series starts at the Poisson mode and runs
// both directions until the unaccounted Poisson mass drops below 1e-12.
// x < 0 returns 0.  Throws std::invalid_argument on an invalid dist.
double nc_chisq_cdf(double x, const NoncentralChiSq& dist);

// Quantile (inverse CDF): the x with |nc_chisq_cdf(x) - p| <= 1e-9, located
// by bracketing and bisection.  The initial bracket upper end is
// df + psi + 40*sqrt(2*(df + 2*psi)) + 40, doubled until it covers p.
// Throws std::invalid_argument unless 0 < p < 1.
double nc_chisq_quantile(double p, const NoncentralChiSq& dist);

namespace detail {
// Regularized lower incomplete gamma P(a, x); the central chi-squared CDF is
// P(df/2, x/2).  Series expansion for x < a + 1, continued fraction
// otherwise.
double gamma_p(double a, double x);
}  // namespace detail

}  // namespace fedband
