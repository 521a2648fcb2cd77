#include "ioct/ascan.hpp"

#include <algorithm>
#include <cmath>

#include "ioct/error.hpp"

namespace ioct {

const char* to_string(DistanceModel model) {
  switch (model) {
    case DistanceModel::Thresholding: return "thresholding";
    case DistanceModel::PeakDetection: return "peak";
    case DistanceModel::EdgeDetection: return "edge";
  }
  return "unknown";
}

AScanSignal average_ascans(std::span<const AScanSignal> signals) {
  if (signals.empty()) throw ArgumentError("average_ascans: empty signal list");
  AScanSignal out = signals.front();
  for (std::size_t i = 1; i < signals.size(); ++i) {
    const AScanSignal& s = signals[i];
    if (s.n_samples() != out.n_samples() || s.sample_pitch_um != out.sample_pitch_um) {
      throw ShapeError("average_ascans: signals differ in length or pitch");
    }
    out.intensities += s.intensities;
  }
  out.intensities /= static_cast<double>(signals.size());
  return out;
}

std::vector<Biquad> butterworth_lowpass(int order, double cutoff) {
  if (order < 2 || order % 2 != 0) throw ArgumentError("butterworth order must be even and >= 2");
  if (!(cutoff > 0.0 && cutoff < 0.5)) throw ArgumentError("cutoff must lie in (0, 0.5)");
  std::vector<Biquad> sections;
  const double w0 = 2.0 * kPi * cutoff;
  const double cw = std::cos(w0);
  for (int k = 0; k < order / 2; ++k) {
    const double q = 1.0 / (2.0 * std::cos(kPi * (2 * k + 1) / (2.0 * order)));
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad s;
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
    s.b2 = s.b0;
    s.a1 = -2.0 * cw / a0;
    s.a2 = (1.0 - alpha) / a0;
    sections.push_back(s);
  }
  return sections;
}

Eigen::VectorXd filter_causal(const std::vector<Biquad>& sections, const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x;
  for (const Biquad& s : sections) {
    if (y.size() == 0) break;
    // Steady state for a constant input equal to the first sample (unit DC gain).
    const double x0 = y[0];
    double z2 = (s.b2 - s.a2) * x0;
    double z1 = (s.b1 - s.a1) * x0 + z2;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double in = y[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      y[i] = out;
    }
  }
  return y;
}

Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 2) return x;
  const Eigen::Index pad = std::min<Eigen::Index>(n - 1, 20 * static_cast<Eigen::Index>(sections.size()) + 20);
  Eigen::VectorXd ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[i] = 2.0 * x[0] - x[pad - i];
    ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(pad, n) = x;
  Eigen::VectorXd fwd = filter_causal(sections, ext);
  Eigen::VectorXd rev = fwd.reverse();
  Eigen::VectorXd back = filter_causal(sections, rev).reverse();
  return back.segment(pad, n);
}

AScanSignal lowpass_zero_phase(const AScanSignal& signal, double cutoff) {
  AScanSignal out = signal;
  out.intensities = filtfilt(butterworth_lowpass(4, cutoff), signal.intensities);
  return out;
}

Eigen::VectorXd first_difference(const Eigen::VectorXd& f) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(f.size());
  if (f.size() > 1) d.tail(f.size() - 1) = f.tail(f.size() - 1) - f.head(f.size() - 1);
  return d;
}

double detect_distance(const AScanSignal& signal, DistanceModel model, double threshold) {
  const Eigen::VectorXd& f = signal.intensities;
  if (f.size() == 0 || !(f.maxCoeff() > threshold)) throw NoSurfaceError("no sample above threshold");
  Eigen::Index index = 0;
  switch (model) {
    case DistanceModel::Thresholding:
      while (!(f[index] > threshold)) ++index;
      break;
    case DistanceModel::PeakDetection:
      f.maxCoeff(&index);
      break;
    case DistanceModel::EdgeDetection: {
      const Eigen::VectorXd d = first_difference(f);
      if (!(d.maxCoeff(&index) > 0.0)) throw NoSurfaceError("no rising edge in signal");
      break;
    }
  }
  return signal.distance_mm(index);
}

double noise_floor(const AScanSignal& signal) {
  const Eigen::Index n = signal.n_samples();
  const Eigen::Index tail = std::max<Eigen::Index>(1, n / 5);
  return signal.intensities.tail(tail).mean();
}

TrackResult track_distance(const TrackerState& state, const AScanSignal& signal) {
  TrackResult result{state, state.last_distance, false};
  const Eigen::Index n = signal.n_samples();
  if (n < 2) return result;
  const double pitch_mm = signal.sample_pitch_um * 1e-3;
  const double full_range = static_cast<double>(n - 1) * pitch_mm;
  const double threshold = state.threshold_gain * noise_floor(signal);

  auto to_index = [&](double mm, bool up) {
    const double v = mm / pitch_mm;
    const double r = up ? std::floor(v + 1e-9) : std::ceil(v - 1e-9);
    return static_cast<Eigen::Index>(std::clamp(r, 0.0, static_cast<double>(n - 1)));
  };
  const Eigen::Index lo = to_index(state.last_distance - state.window_halfwidth, false);
  const Eigen::Index hi = to_index(state.last_distance + state.window_halfwidth, true);

  auto fail = [&] {
    result.state.window_halfwidth = std::min(state.window_halfwidth * 1.5, full_range);
    result.state.miss_count = state.miss_count + 1;
    result.distance = state.last_distance;
    return result;
  };

  const Eigen::VectorXd& f = signal.intensities;
  Eigen::Index coarse = -1;
  for (Eigen::Index i = lo; i <= hi; ++i) {
    if (f[i] > threshold) {
      coarse = i;
      break;
    }
  }
  if (coarse < 0) return fail();

  const auto edge_half = static_cast<Eigen::Index>(std::lround(state.edge_halfwidth / pitch_mm));
  const Eigen::Index sub_lo = std::max(lo, coarse - edge_half);
  const Eigen::Index sub_hi = std::min(hi, coarse + edge_half);
  Eigen::Index best = -1;
  double best_slope = 0.0;
  for (Eigen::Index i = std::max<Eigen::Index>(sub_lo, 1); i <= sub_hi; ++i) {
    const double slope = f[i] - f[i - 1];
    if (slope > best_slope) {
      best_slope = slope;
      best = i;
    }
  }
  if (best < 0) return fail();

  result.found = true;
  result.distance = signal.distance_mm(best);
  result.state.last_distance = result.distance;
  result.state.window_halfwidth = state.window_halfwidth_initial;
  result.state.miss_count = 0;
  return result;
}

}  // namespace ioct
