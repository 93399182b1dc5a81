#include "rtksim/ambiguity.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace rtksim {

namespace {

double sgn(double x) { return x <= 0.0 ? -1.0 : 1.0; }
double round_half_up(double x) { return std::floor(x + 0.5); }

/// Column operation C_j <- C_j - mu*C_i with integer mu, applied to L and
/// mirrored into Z.
void gauss_transform(Eigen::MatrixXd& L, Eigen::MatrixXd& Z, int i, int j) {
  const int n = static_cast<int>(L.rows());
  const double mu = round_half_up(L(i, j));
  if (mu == 0.0) return;
  for (int k = i; k < n; ++k) L(k, j) -= mu * L(k, i);
  for (int k = 0; k < n; ++k) Z(k, j) -= mu * Z(k, i);
}

/// Symmetric permutation of adjacent entries j, j+1 with the standard
/// rank-two update of L and D.
void permute(Eigen::MatrixXd& L, Eigen::VectorXd& D, int j, double del,
             Eigen::MatrixXd& Z) {
  const int n = static_cast<int>(L.rows());
  const double eta = D(j) / del;
  const double lam = D(j + 1) * L(j + 1, j) / del;
  D(j) = eta * D(j + 1);
  D(j + 1) = del;
  for (int k = 0; k < j; ++k) {
    const double a0 = L(j, k);
    const double a1 = L(j + 1, k);
    L(j, k) = -L(j + 1, j) * a0 + a1;
    L(j + 1, k) = eta * a0 + lam * a1;
  }
  L(j + 1, j) = lam;
  for (int k = j + 2; k < n; ++k) std::swap(L(k, j), L(k, j + 1));
  for (int k = 0; k < n; ++k) std::swap(Z(k, j), Z(k, j + 1));
}

}  // namespace

bool ld_factorize(const Eigen::MatrixXd& Q, Eigen::MatrixXd& L,
                  Eigen::VectorXd& D) {
  const int n = static_cast<int>(Q.rows());
  Eigen::MatrixXd A = Q;
  L = Eigen::MatrixXd::Zero(n, n);
  D = Eigen::VectorXd::Zero(n);
  for (int i = n - 1; i >= 0; --i) {
    D(i) = A(i, i);
    if (D(i) <= 0.0) return false;
    const double a = std::sqrt(D(i));
    for (int j = 0; j <= i; ++j) L(i, j) = A(i, j) / a;
    for (int j = 0; j < i; ++j) {
      for (int k = 0; k <= j; ++k) A(j, k) -= L(i, k) * L(i, j);
    }
    L.row(i).head(i + 1) /= L(i, i);
  }
  return true;
}

void decorrelate(Eigen::MatrixXd& L, Eigen::VectorXd& D, Eigen::MatrixXd& Z) {
  const int n = static_cast<int>(L.rows());
  int j = n - 2;
  int k = n - 2;
  while (j >= 0) {
    if (j <= k) {
      for (int i = j + 1; i < n; ++i) gauss_transform(L, Z, i, j);
    }
    const double del = D(j) + L(j + 1, j) * L(j + 1, j) * D(j + 1);
    if (del + 1e-6 < D(j + 1)) {
      permute(L, D, j, del, Z);
      k = j;
      j = n - 2;
    } else {
      --j;
    }
  }
}

bool ils_search(const Eigen::MatrixXd& L, const Eigen::VectorXd& D,
                const Eigen::VectorXd& float_est, int count,
                Eigen::MatrixXd& candidates, Eigen::VectorXd& q,
                long max_visits) {
  const int n = static_cast<int>(L.rows());
  const int m = count;
  candidates = Eigen::MatrixXd::Zero(n, m);
  q = Eigen::VectorXd::Zero(m);

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd zb(n), z(n), step(n);

  int found = 0;
  int imax = 0;
  double maxdist = 1e99;
  int k = n - 1;
  dist(k) = 0.0;
  zb(k) = float_est(k);
  z(k) = round_half_up(zb(k));
  double y = zb(k) - z(k);
  step(k) = sgn(y);

  long c = 0;
  for (; c < max_visits; ++c) {
    const double newdist = dist(k) + y * y / D(k);
    if (newdist < maxdist) {
      if (k != 0) {
        --k;
        dist(k) = newdist;
        for (int i = 0; i <= k; ++i) {
          S(k, i) = S(k + 1, i) + (z(k + 1) - zb(k + 1)) * L(k + 1, i);
        }
        zb(k) = float_est(k) + S(k, k);
        z(k) = round_half_up(zb(k));
        y = zb(k) - z(k);
        step(k) = sgn(y);
      } else {
        if (found < m) {
          if (found == 0 || newdist > q(imax)) imax = found;
          candidates.col(found) = z;
          q(found++) = newdist;
        } else {
          if (newdist < q(imax)) {
            candidates.col(imax) = z;
            q(imax) = newdist;
            imax = 0;
            for (int i = 0; i < m; ++i) {
              if (q(imax) < q(i)) imax = i;
            }
          }
          maxdist = q(imax);
        }
        z(0) += step(0);
        y = zb(0) - z(0);
        step(0) = -step(0) - sgn(step(0));
      }
    } else {
      if (k == n - 1) break;
      ++k;
      z(k) += step(k);
      y = zb(k) - z(k);
      step(k) = -step(k) - sgn(step(k));
    }
  }

  // sort the candidate set by quadratic form
  for (int i = 0; i < m - 1; ++i) {
    for (int j2 = i + 1; j2 < m; ++j2) {
      if (q(i) <= q(j2)) continue;
      std::swap(q(i), q(j2));
      candidates.col(i).swap(candidates.col(j2));
    }
  }
  return c < max_visits;
}

IlsSolution solve_integer_ambiguities(const IlsProblem& p,
                                      double ratio_threshold) {
  IlsSolution out;
  const int n = static_cast<int>(p.float_estimate.size());
  if (n < 1) {
    out.error = IlsError::NotPositiveDefinite;
    return out;
  }

  Eigen::MatrixXd Q = 0.5 * (p.covariance + p.covariance.transpose());
  Eigen::MatrixXd L;
  Eigen::VectorXd D;
  if (!ld_factorize(Q, L, D)) {
    out.error = IlsError::NotPositiveDefinite;
    return out;
  }

  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(n, n);
  decorrelate(L, D, Z);
  const Eigen::VectorXd z_float = Z.transpose() * p.float_estimate;

  Eigen::MatrixXd cand;
  Eigen::VectorXd q;
  if (!ils_search(L, D, z_float, 2, cand, q)) {
    out.error = IlsError::SearchOverflow;
    return out;
  }

  // Back-transform the winner to the original ambiguity basis. Z is
  // integer unimodular, so the solution is integer up to roundoff.
  const Eigen::VectorXd a_best =
      Z.transpose().partialPivLu().solve(cand.col(0));
  out.best.resize(n);
  for (int i = 0; i < n; ++i) {
    out.best(i) = static_cast<int>(std::llround(a_best(i)));
  }

  out.ratio = q(0) > 1e-12 ? q(1) / q(0) : (q(1) > 0 ? 1e9 : 0.0);
  if (out.ratio >= ratio_threshold) out.fixed = out.best;
  return out;
}

}  // namespace rtksim
