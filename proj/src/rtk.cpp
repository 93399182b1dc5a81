#include "rtksim/rtk.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace rtksim {

std::string to_string(SolutionStatus s) {
  switch (s) {
    case SolutionStatus::Fix: return "FIX";
    case SolutionStatus::Float: return "FLOAT";
    case SolutionStatus::Dgnss: return "DGNSS";
    case SolutionStatus::Single: return "SINGLE";
    case SolutionStatus::None: return "NONE";
  }
  return "NONE";
}

Eigen::RowVector3d DdEquationSet::geometry_row(
    const DdPair& pair, const EcefCoord& rover_pos) const {
  const auto& ref = states.at(pair.ref);
  const auto& oth = states.at(pair.other);
  const RangeResult rr_ref = signal_range(ref.elements, rover_pos, t);
  const RangeResult rr_oth = signal_range(oth.elements, rover_pos, t);
  const Eigen::Vector3d e_ref = (rr_ref.sat_position - rover_pos).normalized();
  const Eigen::Vector3d e_oth = (rr_oth.sat_position - rover_pos).normalized();
  return (e_ref - e_oth).transpose();
}

DdResult form_double_differences(const EpochObservations& station,
                                 const EpochObservations& rover,
                                 const std::vector<SatelliteState>& rover_states,
                                 double epoch_tolerance) {
  DdResult result;
  if (std::abs(station.t - rover.t) > epoch_tolerance) {
    result.error = DdError::EpochMismatch;
    return result;
  }

  std::map<SatelliteId, const SatelliteState*> state_of;
  for (const auto& s : rover_states) state_of[s.id] = &s;

  // Common satellites tracked on both sides, grouped by constellation.
  std::map<ConstellationKind, std::vector<const SatelliteState*>> common;
  for (const auto& obs : rover.observations) {
    if (obs.loss_of_lock) continue;
    const Observation* sta = station.find(obs.sat);
    if (!sta || sta->loss_of_lock) continue;
    auto it = state_of.find(obs.sat);
    if (it == state_of.end()) continue;
    common[obs.sat.constellation].push_back(it->second);
  }

  DdEquationSet dd;
  dd.t = rover.t;
  int pairable = 0;
  for (auto& [kind, sats] : common) {
    if (sats.size() < 2) continue;
    pairable += static_cast<int>(sats.size());
    const SatelliteState* ref = *std::max_element(
        sats.begin(), sats.end(),
        [](const SatelliteState* a, const SatelliteState* b) {
          return a->elevation < b->elevation;
        });
    dd.states[ref->id] = *ref;
    const Observation* ref_rov = rover.find(ref->id);
    const Observation* ref_sta = station.find(ref->id);
    for (const SatelliteState* s : sats) {
      if (s->id == ref->id) continue;
      const Observation* rov = rover.find(s->id);
      const Observation* sta = station.find(s->id);
      DdPair pair;
      pair.ref = ref->id;
      pair.other = s->id;
      // Receiver-level single differences first, then across satellites:
      // receiver clock terms cancel in the first step, satellite terms in
      // the second.
      const double sd_code = rov->pseudorange - sta->pseudorange;
      const double sd_code_ref = ref_rov->pseudorange - ref_sta->pseudorange;
      const double sd_phase = rov->carrier_phase - sta->carrier_phase;
      const double sd_phase_ref =
          ref_rov->carrier_phase - ref_sta->carrier_phase;
      pair.dd_code = sd_code - sd_code_ref;
      pair.dd_phase = sd_phase - sd_phase_ref;
      dd.states[s->id] = *s;
      dd.pairs.push_back(pair);
    }
  }
  result.n_common = pairable;
  dd.n_sats = pairable;

  if (pairable < 4 || dd.pairs.size() < 3) {
    result.error = DdError::InsufficientSatellites;
    result.n_common = pairable;
    return result;
  }
  result.set = std::move(dd);
  return result;
}

double dd_predicted_range(const DdEquationSet& dd, const DdPair& pair,
                          const EcefCoord& rover_pos,
                          const EcefCoord& station_pos) {
  const auto& ref = dd.states.at(pair.ref);
  const auto& oth = dd.states.at(pair.other);
  const double rov_oth = signal_range(oth.elements, rover_pos, dd.t).range;
  const double rov_ref = signal_range(ref.elements, rover_pos, dd.t).range;
  const double sta_oth = signal_range(oth.elements, station_pos, dd.t).range;
  const double sta_ref = signal_range(ref.elements, station_pos, dd.t).range;
  return (rov_oth - sta_oth) - (rov_ref - sta_ref);
}

namespace {

bool condition_ok(const Eigen::MatrixXd& normal, double limit) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
  if (es.info() != Eigen::Success) return false;
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 && hi / lo < limit;
}

}  // namespace

FloatSolution float_solution(const DdEquationSet& dd,
                             const EcefCoord& station_pos,
                             const EcefCoord& rover_approx,
                             const RtkConfig& cfg) {
  FloatSolution out;
  const int m = static_cast<int>(dd.pairs.size());
  if (m < 3) {
    out.error = SolveError::TooFewPairs;
    return out;
  }
  const int nu = 3 + m;
  const double w_code = 1.0 / (dd_sigma_code(cfg) * dd_sigma_code(cfg));
  const double w_phase =
      1.0 / (dd_sigma_phase_m(cfg) * dd_sigma_phase_m(cfg));

  EcefCoord x = rover_approx;
  Eigen::VectorXd amb(m);
  for (int i = 0; i < m; ++i) {
    amb(i) = dd.pairs[i].dd_phase -
             dd_predicted_range(dd, dd.pairs[i], x, station_pos) /
                 kCarrierWavelength;
  }

  Eigen::MatrixXd normal;
  bool converged = false;
  for (int iter = 0; iter < 10; ++iter) {
    out.iterations = iter + 1;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * m, nu);
    Eigen::VectorXd r(2 * m);
    Eigen::VectorXd w(2 * m);
    for (int i = 0; i < m; ++i) {
      const DdPair& pair = dd.pairs[i];
      const double g = dd_predicted_range(dd, pair, x, station_pos);
      const Eigen::RowVector3d row = dd.geometry_row(pair, x);
      a.block<1, 3>(2 * i, 0) = row;
      r(2 * i) = pair.dd_code - g;
      w(2 * i) = w_code;
      a.block<1, 3>(2 * i + 1, 0) = row;
      a(2 * i + 1, 3 + i) = kCarrierWavelength;
      r(2 * i + 1) =
          kCarrierWavelength * pair.dd_phase - g - kCarrierWavelength * amb(i);
      w(2 * i + 1) = w_phase;
    }
    normal = a.transpose() * w.asDiagonal() * a;
    if (!condition_ok(normal, cfg.condition_limit)) {
      out.error = SolveError::SingularGeometry;
      return out;
    }
    const Eigen::VectorXd du =
        normal.ldlt().solve(a.transpose() * (w.asDiagonal() * r));
    x += du.head<3>();
    amb += du.tail(m);
    if (du.head<3>().norm() < 1e-4) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    out.error = SolveError::NoConvergence;
    return out;
  }

  out.rover_position = x;
  out.code_residuals.resize(m);
  for (int i = 0; i < m; ++i) {
    out.code_residuals(i) =
        dd.pairs[i].dd_code - dd_predicted_range(dd, dd.pairs[i], x, station_pos);
  }
  out.ambiguities.float_estimate = amb;
  const Eigen::MatrixXd cov = normal.inverse();
  Eigen::MatrixXd qnn = cov.bottomRightCorner(m, m);
  out.ambiguities.covariance = 0.5 * (qnn + qnn.transpose());
  return out;
}

namespace {

/// Shared position-only Gauss-Newton over DD rows with a fixed right hand
/// side per pair.
SolveError position_fit(const DdEquationSet& dd, const EcefCoord& station_pos,
                        const std::vector<double>& target,
                        const std::vector<double>& weight,
                        const RtkConfig& cfg, EcefCoord& x,
                        Eigen::VectorXd* residuals) {
  const int m = static_cast<int>(dd.pairs.size());
  for (int iter = 0; iter < 10; ++iter) {
    Eigen::MatrixXd a(m, 3);
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) {
      a.row(i) = dd.geometry_row(dd.pairs[i], x);
      r(i) = target[i] - dd_predicted_range(dd, dd.pairs[i], x, station_pos);
    }
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weight.data(), m);
    const Eigen::MatrixXd normal = a.transpose() * w.asDiagonal() * a;
    if (!condition_ok(normal, cfg.condition_limit)) {
      return SolveError::SingularGeometry;
    }
    const Eigen::Vector3d dx =
        normal.ldlt().solve(a.transpose() * (w.asDiagonal() * r));
    x += dx;
    if (dx.norm() < 1e-4) {
      if (residuals) {
        residuals->resize(m);
        for (int i = 0; i < m; ++i) {
          (*residuals)(i) =
              target[i] - dd_predicted_range(dd, dd.pairs[i], x, station_pos);
        }
      }
      return SolveError::None;
    }
  }
  return SolveError::NoConvergence;
}

}  // namespace

CodeSolution code_solution(const DdEquationSet& dd, const EcefCoord& station_pos,
                           const EcefCoord& rover_approx,
                           const RtkConfig& cfg) {
  CodeSolution out;
  const int m = static_cast<int>(dd.pairs.size());
  if (m < 3) {
    out.error = SolveError::TooFewPairs;
    return out;
  }
  std::vector<double> target(m), weight(m);
  const double w_code = 1.0 / (dd_sigma_code(cfg) * dd_sigma_code(cfg));
  for (int i = 0; i < m; ++i) {
    target[i] = dd.pairs[i].dd_code;
    weight[i] = w_code;
  }
  EcefCoord x = rover_approx;
  out.error = position_fit(dd, station_pos, target, weight, cfg, x,
                           &out.residuals);
  if (out.error == SolveError::None) out.rover_position = x;
  return out;
}

ConstrainedSolution constrained_solution(const DdEquationSet& dd,
                                         const EcefCoord& station_pos,
                                         const EcefCoord& rover_approx,
                                         const Eigen::VectorXi& fixed,
                                         const RtkConfig& cfg) {
  ConstrainedSolution out;
  const int m = static_cast<int>(dd.pairs.size());
  std::vector<double> target(m), weight(m);
  const double w_phase =
      1.0 / (dd_sigma_phase_m(cfg) * dd_sigma_phase_m(cfg));
  for (int i = 0; i < m; ++i) {
    target[i] =
        kCarrierWavelength * (dd.pairs[i].dd_phase - fixed(i));
    weight[i] = w_phase;
  }
  EcefCoord x = rover_approx;
  out.error = position_fit(dd, station_pos, target, weight, cfg, x,
                           &out.phase_residuals);
  if (out.error == SolveError::None) out.rover_position = x;
  return out;
}

SppSolution solve_single_point(const EpochObservations& epoch,
                               const std::vector<SatelliteState>& states,
                               const AtmosphereModel& atmos,
                               const EcefCoord& initial) {
  SppSolution out;
  std::map<SatelliteId, const SatelliteState*> state_of;
  for (const auto& s : states) state_of[s.id] = &s;

  struct Row {
    const SatelliteState* sat;
    double corrected;  // pseudorange with known satellite/atmo terms removed
  };
  std::vector<Row> rows;
  for (const auto& obs : epoch.observations) {
    if (obs.loss_of_lock) continue;
    auto it = state_of.find(obs.sat);
    if (it == state_of.end()) continue;
    const SatelliteState* s = it->second;
    const double atmo = (atmos.tropo_at(initial) + atmos.iono_at(initial)) *
                        elevation_mapping(std::max(s->elevation, 0.08));
    rows.push_back(
        {s, obs.pseudorange + kSpeedOfLight * s->clock_bias - atmo});
  }
  out.n_sats = static_cast<int>(rows.size());
  if (rows.size() < 4) return out;

  Eigen::Vector4d u;  // x, y, z, c*dt
  u << initial, 0.0;
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::MatrixXd a(rows.size(), 4);
    Eigen::VectorXd r(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const RangeResult rr =
          signal_range(rows[i].sat->elements, u.head<3>(), epoch.t);
      const Eigen::Vector3d e = (rr.sat_position - u.head<3>()).normalized();
      a.row(i) << -e.transpose(), 1.0;
      r(i) = rows[i].corrected - rr.range - u(3);
    }
    const Eigen::Matrix4d normal = a.transpose() * a;
    if (!condition_ok(normal, 1e13)) return out;
    const Eigen::Vector4d du = normal.ldlt().solve(a.transpose() * r);
    u += du;
    if (du.head<3>().norm() < 1e-4) {
      out.ok = true;
      out.position = u.head<3>();
      out.clock_bias_m = u(3);
      return out;
    }
  }
  return out;
}

RtkSolution solve_epoch(const std::optional<EpochObservations>& station_epoch,
                        const EcefCoord& station_ref,
                        const EpochObservations& rover_epoch,
                        const std::vector<SatelliteState>& rover_states,
                        const AtmosphereModel& atmos, double correction_age,
                        const RtkConfig& cfg) {
  RtkSolution sol;
  sol.t = rover_epoch.t;
  const GeodeticCoord origin = ecef_to_geodetic(station_ref);

  auto finish = [&](SolutionStatus status, const EcefCoord& pos, int n_sats) {
    sol.status = status;
    sol.n_sats = n_sats;
    sol.baseline = ecef_to_enu(pos, origin);
    sol.has_position = true;
    return sol;
  };

  // Stale or absent corrections: standalone pseudorange fallback.
  if (correction_age > cfg.max_correction_age) {
    const SppSolution spp =
        solve_single_point(rover_epoch, rover_states, atmos, station_ref);
    if (spp.ok) return finish(SolutionStatus::Single, spp.position, spp.n_sats);
    sol.status = SolutionStatus::None;
    sol.n_sats = spp.n_sats;
    return sol;
  }
  if (!station_epoch) {
    // Corrections are nominally fresh but no epoch matched (e.g. the
    // station currently tracks nothing): keep waiting until max_age.
    sol.status = SolutionStatus::None;
    sol.n_sats = 0;
    return sol;
  }

  DdResult dd = form_double_differences(*station_epoch, rover_epoch,
                                        rover_states, cfg.epoch_tolerance);
  if (!dd.set) {
    sol.status = SolutionStatus::None;
    sol.n_sats = dd.n_common;
    return sol;
  }

  // Approximate baseline from the code-only fit (also the DGNSS fallback).
  const CodeSolution code =
      code_solution(*dd.set, station_ref, station_ref, cfg);
  if (code.error != SolveError::None) {
    sol.status = SolutionStatus::None;
    sol.n_sats = dd.set->n_sats;
    return sol;
  }

  const FloatSolution flt =
      float_solution(*dd.set, station_ref, code.rover_position, cfg);
  if (flt.error != SolveError::None) {
    return finish(SolutionStatus::Dgnss, code.rover_position, dd.set->n_sats);
  }

  const IlsSolution ils =
      solve_integer_ambiguities(flt.ambiguities, cfg.ratio_threshold);
  sol.ratio = ils.ratio;
  if (ils.error != IlsError::None) {
    return finish(SolutionStatus::Float, flt.rover_position, dd.set->n_sats);
  }

  const ConstrainedSolution fixed = constrained_solution(
      *dd.set, station_ref, flt.rover_position, ils.best, cfg);
  if (fixed.error != SolveError::None) {
    return finish(SolutionStatus::Float, flt.rover_position, dd.set->n_sats);
  }

  // Phase health: with the best integer candidate constrained, honest
  // phase leaves millimeter residuals. Residuals far beyond the noise
  // model mean the carrier is not usable (e.g. spoofed), so report the
  // differential code solution like a receiver falling back to DGNSS.
  const double gate = cfg.phase_residual_gate * dd_sigma_phase_m(cfg);
  if (fixed.phase_residuals.cwiseAbs().maxCoeff() > gate) {
    return finish(SolutionStatus::Dgnss, code.rover_position, dd.set->n_sats);
  }

  if (ils.fixed) {
    for (std::size_t i = 0; i < dd.set->pairs.size(); ++i) {
      sol.fixed_ambiguities[dd.set->pairs[i].other] = ils.best(static_cast<int>(i));
    }
    return finish(SolutionStatus::Fix, fixed.rover_position, dd.set->n_sats);
  }
  return finish(SolutionStatus::Float, flt.rover_position, dd.set->n_sats);
}

}  // namespace rtksim
