#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ioct/oct_sim.hpp"

namespace ioct {

enum class DistanceModel { Thresholding, PeakDetection, EdgeDetection };

const char* to_string(DistanceModel model);

/// Element-wise mean. Throws ArgumentError on an empty list and ShapeError on
/// mismatched length or pitch.
AScanSignal average_ascans(std::span<const AScanSignal> signals);

/// Second-order section in transposed direct form II, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Butterworth low-pass as a cascade of biquads (order must be even).
std::vector<Biquad> butterworth_lowpass(int order, double cutoff);

/// Causal filtering with steady-state initial conditions for the first sample.
Eigen::VectorXd filter_causal(const std::vector<Biquad>& sections, const Eigen::VectorXd& x);

/// Forward-backward (zero-phase) filtering with odd-reflection padding.
Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x);

/// Zero-phase 4th-order Butterworth low-pass; cutoff in cycles/sample, (0, 0.5).
AScanSignal lowpass_zero_phase(const AScanSignal& signal, double cutoff = 0.08);

/// First-order difference d[i] = f[i] - f[i-1], with d[0] = 0. An ideal step
/// whose first high sample is k peaks at index k.
Eigen::VectorXd first_difference(const Eigen::VectorXd& f);

/// Optical distance (mm) of the target surface under the given model.
/// Throws NoSurfaceError when no sample exceeds `threshold`.
double detect_distance(const AScanSignal& signal, DistanceModel model, double threshold);

/// Mean of the final 20% of samples (beyond the probe's working distance).
double noise_floor(const AScanSignal& signal);

struct TrackerState {
  double last_distance = 1.0;  ///< optical mm
  double window_halfwidth = 0.25;
  double window_halfwidth_initial = 0.25;
  double threshold_gain = 4.0;
  /// Half-width of the sub-window searched for the edge around the coarse estimate.
  double edge_halfwidth = 0.1;
  int miss_count = 0;

  static TrackerState starting_at(double distance_mm, double halfwidth = 0.25, double gain = 4.0) {
    TrackerState s;
    s.last_distance = distance_mm;
    s.window_halfwidth = s.window_halfwidth_initial = halfwidth;
    s.threshold_gain = gain;
    return s;
  }
};

struct TrackResult {
  TrackerState state;
  double distance = 0.0;  ///< optical mm
  bool found = false;
};

/// Windowed threshold-then-edge tracking of one surface. On failure the last
/// distance is returned and the window widens by 1.5x (capped at the signal range).
TrackResult track_distance(const TrackerState& state, const AScanSignal& signal);

}  // namespace ioct
