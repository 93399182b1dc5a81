#pragma once

#include <optional>

#include <Eigen/Core>

namespace rtksim {

/// Float ambiguity estimate with its covariance (cycles^2).
struct IlsProblem {
  Eigen::VectorXd float_estimate;
  Eigen::MatrixXd covariance;  // symmetric positive-definite
};

enum class IlsError { None, NotPositiveDefinite, SearchOverflow };

struct IlsSolution {
  /// Best integer candidate when the ratio test passed, otherwise empty.
  std::optional<Eigen::VectorXi> fixed;
  /// Best candidate regardless of the ratio decision.
  Eigen::VectorXi best;
  /// q(second)/q(best) of the integer search.
  double ratio = 0.0;
  IlsError error = IlsError::None;
};

/// Decorrelation plus integer search over the ambiguity lattice. Candidate
/// enumeration is capped at 100000 visits; hitting the cap reports
/// SearchOverflow and no fix.
IlsSolution solve_integer_ambiguities(const IlsProblem& p,
                                      double ratio_threshold);

// Decomposition building blocks, exposed for verification.

/// Q = L^T diag(D) L with unit lower-triangular L. False if Q is not
/// positive-definite.
bool ld_factorize(const Eigen::MatrixXd& Q, Eigen::MatrixXd& L,
                  Eigen::VectorXd& D);

/// Integer Gauss transformations and symmetric permutations until no
/// off-diagonal reduction is possible. Z accumulates the (unimodular)
/// change of basis: after the call, L^T diag(D) L = Z^T Q Z.
void decorrelate(Eigen::MatrixXd& L, Eigen::VectorXd& D, Eigen::MatrixXd& Z);

/// Depth-first search for the `count` best integer vectors under the
/// quadratic form defined by (L, D). Returns candidates as columns of
/// `candidates` with squared norms in `q`, sorted ascending. False when
/// the visit cap is exceeded.
bool ils_search(const Eigen::MatrixXd& L, const Eigen::VectorXd& D,
                const Eigen::VectorXd& float_est, int count,
                Eigen::MatrixXd& candidates, Eigen::VectorXd& q,
                long max_visits = 100000);

}  // namespace rtksim
