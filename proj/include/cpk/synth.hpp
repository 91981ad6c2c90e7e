#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cpk/dataset.hpp"
#include "cpk/rng.hpp"

namespace cpk {

struct TimeWindow {
  std::string name;
  double start = 0.0;
  double end = 0.0;
  bool contains(double t) const { return t >= start && t <= end; }
};

// Noise-free parts of a generated target. Columns of `components` sum to
// `noiseless`; `noise` is the realised observation noise.
struct GroundTruth {
  std::vector<std::string> names;
  Eigen::MatrixXd components;
  Eigen::VectorXd noiseless;
  Eigen::VectorXd noise_std;
  Eigen::VectorXd noise;
  std::vector<TimeWindow> windows;
  std::map<std::string, double> values;  // true generator constants, e.g. "switch.R.x0"
};

struct Synthetic {
  Dataset data;
  GroundTruth truth;
};

// Smooth function drawn from an (approximate) zero-mean SE prior by random
// Fourier features.
class SmoothDraw {
 public:
  SmoothDraw(Rng& rng, double variance, const std::vector<double>& lengthscales, int features = 1000);
  double operator()(const double* x) const;
  double operator()(double x) const { return (*this)(&x); }

 private:
  int dim_;
  double amp_;
  Eigen::MatrixXd omega_;  // features x dim
  Eigen::VectorXd phase_;
};

enum class NoiseKind { constant, linear };

// y = sw(cos2 theta) sw(U) alpha U^2 + swneg(cos2 theta) swneg(U) g(U) + eps
struct RegimeSpec {
  std::size_t n = 2500;
  std::uint64_t seed = 0;
  double speed_max = 30.0;        // U uniform on [0, speed_max]
  double dir_a = 10.0;            // switch on cos(2 theta)
  double dir_x0 = 0.5;
  double speed_a = 0.5;           // switch on U
  double speed_x0 = 15.0;
  double alpha = 0.005;
  double smooth_variance = 1.0;
  double smooth_lengthscale = 6.0;
  NoiseKind noise = NoiseKind::constant;
  double noise_std = 0.2;          // constant: std; linear: std at U = 0
  double noise_slope = 0.02;       // linear: added std per unit U
  void validate() const;
};

Synthetic gen_regime(const RegimeSpec& spec);

struct ModeSpec {
  double mass = 1.0;
  double damping = 0.05;
  double frequency_hz = 11.0;
  double amplitude = 1.0;  // stationary response std under full forcing
};

// Quasi-static strain from three slow flight channels, plus a rudder-gated
// sum of SDOF responses to white-noise forcing.
struct OscillatorSpec {
  std::uint64_t seed = 0;
  double duration = 96.0;        // s
  double sample_rate = 128.0;    // Hz, output
  double internal_rate = 1024.0; // Hz, simulation
  std::vector<ModeSpec> modes{{1.0, 0.05, 11.0, 0.6}, {1.0, 0.05, 32.5, 0.25}};
  double gate_a = 3.099;         // per degree
  double gate_x0 = 22.59;        // degrees
  std::vector<double> turn_centres{18.0, 48.0, 78.0};  // s
  double turn_peak = 32.0;       // degrees
  double turn_rate = 5.0;        // degrees per second
  double turn_hold = 4.0;        // s at peak
  double rudder_wander = 3.0;    // degrees, slow background motion
  double channel_lengthscale = 8.0;  // s
  double quasi_static_variance = 1.0;
  double quasi_static_lengthscale = 1.5;  // in standardised channel units
  double noise_std = 0.02;
  int decimate = 2;              // training keeps every k-th sample
  void validate() const;
};

// Columns: t, ch1, ch2, ch3, rudd. `data.held_out` lists the samples not on
// the decimated training grid.
Synthetic gen_oscillator(const OscillatorSpec& spec);

// y = sw(x) g_right(x) + swneg(x) g_left(x) + eps on x uniform in [lo, hi].
struct ChangepointSpec {
  std::size_t n = 300;
  std::uint64_t seed = 0;
  double lo = 0.0;
  double hi = 10.0;
  double a = 2.0;
  double x0 = 4.0;
  double right_lengthscale = 3.0;
  double left_lengthscale = 0.3;
  double variance = 1.0;
  double noise_std = 0.1;
  void validate() const;
};

Synthetic gen_changepoint(const ChangepointSpec& spec);

}  // namespace cpk
