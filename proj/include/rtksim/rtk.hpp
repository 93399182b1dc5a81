#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtksim/ambiguity.hpp"
#include "rtksim/constellation.hpp"
#include "rtksim/geodesy.hpp"
#include "rtksim/observation.hpp"

namespace rtksim {

enum class SolutionStatus { Fix, Float, Dgnss, Single, None };

std::string to_string(SolutionStatus s);

struct RtkConfig {
  double ratio_threshold = 3.0;
  double max_correction_age = 10.0;   // s before falling back to SINGLE
  double epoch_tolerance = 0.1;       // s, station/rover epoch match window
  double sigma_code = 0.3;            // m, single-measurement level
  double sigma_phase = 0.003;         // cycles
  double phase_residual_gate = 10.0;  // in units of DD phase sigma
  double condition_limit = 1e12;
};

// DD noise is exactly twice the single-measurement sigma (four
// equal-variance terms).
inline double dd_sigma_code(const RtkConfig& c) { return 2.0 * c.sigma_code; }
inline double dd_sigma_phase_m(const RtkConfig& c) {
  return 2.0 * c.sigma_phase * kCarrierWavelength;
}

/// One double-difference pair: (other - ref) across (rover - station).
struct DdPair {
  SatelliteId ref;
  SatelliteId other;
  double dd_code = 0.0;   // m
  double dd_phase = 0.0;  // cycles
};

/// Double-differenced epoch: receiver and satellite clocks cancel exactly
/// by construction. Reference satellite per constellation is the highest
/// one in view common to both receivers.
struct DdEquationSet {
  double t = 0.0;
  std::vector<DdPair> pairs;
  std::map<SatelliteId, SatelliteState> states;  // geometry for all sats used
  int n_sats = 0;  // satellites participating (pairs plus references)

  /// Unit line-of-sight difference row (e_ref - e_other) for a pair,
  /// evaluated at a rover position; this is the Jacobian of the DD range
  /// with respect to the rover position.
  Eigen::RowVector3d geometry_row(const DdPair& pair,
                                  const EcefCoord& rover_pos) const;
};

enum class DdError { None, InsufficientSatellites, EpochMismatch };

struct DdResult {
  std::optional<DdEquationSet> set;
  DdError error = DdError::None;
  int n_common = 0;
};

/// Forms per-constellation double differences from two matching epochs.
/// `rover_states` supplies geometry and the elevations used for reference
/// selection.
DdResult form_double_differences(const EpochObservations& station,
                                 const EpochObservations& rover,
                                 const std::vector<SatelliteState>& rover_states,
                                 double epoch_tolerance = 0.1);

/// Predicted double-differenced range for a pair given rover and station
/// positions (station held at its reference coordinates).
double dd_predicted_range(const DdEquationSet& dd, const DdPair& pair,
                          const EcefCoord& rover_pos,
                          const EcefCoord& station_pos);

enum class SolveError { None, TooFewPairs, SingularGeometry, NoConvergence };

struct FloatSolution {
  SolveError error = SolveError::None;
  EcefCoord rover_position = EcefCoord::Zero();
  IlsProblem ambiguities;                // float estimates + covariance
  Eigen::VectorXd code_residuals;        // m, at the float optimum
  int iterations = 0;
};

/// Gauss-Newton on the stacked DD code+phase system; unknowns are the
/// rover position and one float ambiguity per pair.
FloatSolution float_solution(const DdEquationSet& dd,
                             const EcefCoord& station_pos,
                             const EcefCoord& rover_approx,
                             const RtkConfig& cfg);

struct CodeSolution {
  SolveError error = SolveError::None;
  EcefCoord rover_position = EcefCoord::Zero();
  Eigen::VectorXd residuals;  // m
};

/// DD code-only (differential GNSS) baseline.
CodeSolution code_solution(const DdEquationSet& dd, const EcefCoord& station_pos,
                           const EcefCoord& rover_approx, const RtkConfig& cfg);

struct ConstrainedSolution {
  SolveError error = SolveError::None;
  EcefCoord rover_position = EcefCoord::Zero();
  Eigen::VectorXd phase_residuals;  // m, with ambiguities held fixed
};

/// Baseline with integer ambiguities constrained; phase residuals of this
/// solution are the phase-health measure for the status ladder.
ConstrainedSolution constrained_solution(const DdEquationSet& dd,
                                         const EcefCoord& station_pos,
                                         const EcefCoord& rover_approx,
                                         const Eigen::VectorXi& fixed,
                                         const RtkConfig& cfg);

struct SppSolution {
  bool ok = false;
  EcefCoord position = EcefCoord::Zero();
  double clock_bias_m = 0.0;
  int n_sats = 0;
};

/// Pseudorange point solution (satellite clocks and the atmospheric model
/// applied as known corrections).
SppSolution solve_single_point(const EpochObservations& epoch,
                               const std::vector<SatelliteState>& states,
                               const AtmosphereModel& atmos,
                               const EcefCoord& initial);

struct RtkSolution {
  double t = 0.0;
  SolutionStatus status = SolutionStatus::None;
  EnuVector baseline = EnuVector::Zero();  // rover minus station reference
  double ratio = 0.0;
  int n_sats = 0;
  std::map<SatelliteId, int> fixed_ambiguities;  // keyed by the non-ref sat
  bool has_position = false;
};

/// Full per-epoch ladder: FIX -> FLOAT -> DGNSS -> SINGLE -> NONE.
/// `station_epoch` must already be matched to the rover epoch (or absent);
/// `correction_age` is the age of the newest usable correction data.
RtkSolution solve_epoch(const std::optional<EpochObservations>& station_epoch,
                        const EcefCoord& station_ref,
                        const EpochObservations& rover_epoch,
                        const std::vector<SatelliteState>& rover_states,
                        const AtmosphereModel& atmos, double correction_age,
                        const RtkConfig& cfg);

}  // namespace rtksim
