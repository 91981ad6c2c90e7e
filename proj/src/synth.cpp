#include "cpk/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cpk/error.hpp"
#include "cpk/kernels.hpp"

namespace cpk {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& cols) {
  Eigen::MatrixXd m(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = cols[j];
  return m;
}

// Exact zero-order-hold discretisation of  m x'' + 2 zeta wn m x' + wn^2 m x = u.
struct Oscillator {
  Eigen::Matrix2d phi;
  Eigen::Vector2d gamma;

  Oscillator(double mass, double zeta, double wn, double dt) {
    const double wd = wn * std::sqrt(1.0 - zeta * zeta);
    const double e = std::exp(-zeta * wn * dt);
    const double c = std::cos(wd * dt), s = std::sin(wd * dt);
    phi << e * (c + zeta * wn / wd * s), e * s / wd, -e * wn * wn * s / wd, e * (c - zeta * wn / wd * s);
    Eigen::Matrix2d a;
    a << 0.0, 1.0, -wn * wn, -2.0 * zeta * wn;
    gamma = a.inverse() * (phi - Eigen::Matrix2d::Identity()) * Eigen::Vector2d(0.0, 1.0 / mass);
  }
};

}  // namespace

SmoothDraw::SmoothDraw(Rng& rng, double variance, const std::vector<double>& lengthscales, int features)
    : dim_(static_cast<int>(lengthscales.size())) {
  require(dim_ >= 1 && features >= 1 && variance >= 0.0, "invalid smooth draw settings");
  amp_ = std::sqrt(2.0 * variance / features);
  omega_.resize(features, dim_);
  phase_.resize(features);
  for (int m = 0; m < features; ++m) {
    for (int d = 0; d < dim_; ++d) omega_(m, d) = rng.normal() / lengthscales[static_cast<std::size_t>(d)];
    phase_[m] = kTwoPi * rng.uniform();
  }
}

double SmoothDraw::operator()(const double* x) const {
  const Eigen::Map<const Eigen::VectorXd> v(x, dim_);
  return amp_ * ((omega_ * v + phase_).array().cos().sum());
}

void RegimeSpec::validate() const {
  require(n >= 10, "regime spec needs n >= 10");
  require(speed_max > 0.0 && std::isfinite(speed_max), "regime speed range must be positive and finite");
  require(dir_a > 0.0 && speed_a > 0.0, "switch gradients must be positive");
  require(smooth_variance >= 0.0 && smooth_lengthscale > 0.0, "invalid smooth component settings");
  require(noise_std > 0.0, "noise std must be positive");
  require(noise == NoiseKind::constant || noise_std + noise_slope * speed_max > 0.0,
          "linear noise std must stay positive over the speed range");
  require(noise_slope >= 0.0 || noise == NoiseKind::constant, "linear noise slope must be non-negative");
}

Synthetic gen_regime(const RegimeSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  Rng inputs = Rng::stream(spec.seed, 0);
  Rng fn = Rng::stream(spec.seed, 1);
  Rng noise = Rng::stream(spec.seed, 2);
  const SmoothDraw g(fn, spec.smooth_variance, {spec.smooth_lengthscale});

  Eigen::VectorXd theta(n), u(n), lift(n), base(n), sd(n), eps(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    theta[i] = kTwoPi * inputs.uniform();
    u[i] = spec.speed_max * inputs.uniform();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c2 = std::cos(2.0 * theta[i]);
    const double on = sigmoid(c2, spec.dir_a, spec.dir_x0) * sigmoid(u[i], spec.speed_a, spec.speed_x0);
    const double off = sigmoid_neg(c2, spec.dir_a, spec.dir_x0) * sigmoid_neg(u[i], spec.speed_a, spec.speed_x0);
    lift[i] = on * spec.alpha * u[i] * u[i];
    base[i] = off * g(u[i]);
    sd[i] = spec.noise == NoiseKind::constant ? spec.noise_std : spec.noise_std + spec.noise_slope * u[i];
    eps[i] = sd[i] * noise.normal();
  }

  Synthetic s;
  s.data.x.columns = {"theta", "U"};
  s.data.x.values = stack({theta, u});
  s.truth.names = {"lift", "base"};
  s.truth.components = stack({lift, base});
  s.truth.noiseless = lift + base;
  s.data.y = s.truth.noiseless + eps;
  s.truth.noise_std = sd;
  s.truth.noise = eps;
  s.truth.values = {{"switch.S.a", spec.dir_a},     {"switch.S.x0", spec.dir_x0}, {"switch.W.a", spec.speed_a},
                    {"switch.W.x0", spec.speed_x0}, {"alpha", spec.alpha}};
  return s;
}

void OscillatorSpec::validate() const {
  require(duration > 0.0 && std::isfinite(duration), "oscillator duration must be positive");
  require(sample_rate > 0.0 && internal_rate >= sample_rate, "internal rate must be at least the sample rate");
  const double ratio = internal_rate / sample_rate;
  require(std::abs(ratio - std::round(ratio)) < 1e-9, "internal rate must be an integer multiple of the sample rate");
  require(!modes.empty(), "oscillator needs at least one mode");
  for (const auto& m : modes) {
    require(m.damping > 0.0 && m.damping < 1.0, "mode damping must lie in (0, 1)");
    require(m.mass > 0.0 && m.frequency_hz > 0.0 && m.amplitude >= 0.0, "invalid mode settings");
    if (!(sample_rate > 2.0 * m.frequency_hz)) {
      std::ostringstream msg;
      msg << "sample rate " << sample_rate << " Hz violates Nyquist for a " << m.frequency_hz << " Hz mode";
      throw ConfigError(msg.str());
    }
    require(internal_rate >= 8.0 * m.frequency_hz, "internal rate must be at least 8x each mode frequency");
  }
  require(gate_a > 0.0, "gate gradient must be positive");
  require(turn_rate > 0.0 && turn_peak > 0.0 && turn_hold >= 0.0, "invalid turn settings");
  const double half = 0.5 * turn_hold + turn_peak / turn_rate;
  for (double c : turn_centres) require(c - half >= 0.0 && c + half <= duration, "turn does not fit in the record");
  require(noise_std > 0.0, "noise std must be positive");
  require(decimate >= 1, "decimation factor must be at least 1");
  require(channel_lengthscale > 0.0 && quasi_static_lengthscale > 0.0 && quasi_static_variance >= 0.0,
          "invalid quasi-static settings");
}

Synthetic gen_oscillator(const OscillatorSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(std::llround(spec.duration * spec.sample_rate));
  const int sub = static_cast<int>(std::llround(spec.internal_rate / spec.sample_rate));
  const double dt = 1.0 / spec.internal_rate;

  Rng fn = Rng::stream(spec.seed, 0);
  std::vector<SmoothDraw> channels;
  for (int k = 0; k < 3; ++k) channels.emplace_back(fn, 1.0, std::vector<double>{spec.channel_lengthscale});
  const SmoothDraw wander(fn, spec.rudder_wander * spec.rudder_wander, {5.0});
  const SmoothDraw quasi(fn, spec.quasi_static_variance, std::vector<double>(3, spec.quasi_static_lengthscale));

  const double rise = spec.turn_peak / spec.turn_rate;
  auto rudder = [&](double t) {
    double r = wander(t);
    for (double c : spec.turn_centres) {
      const double d = std::abs(t - c) - 0.5 * spec.turn_hold;
      r += spec.turn_peak * std::clamp(1.0 - d / rise, 0.0, 1.0);
    }
    return r;
  };

  Eigen::VectorXd t(n), ch1(n), ch2(n), ch3(n), rudd(n), qs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = static_cast<double>(i) / spec.sample_rate;
    ch1[i] = channels[0](t[i]);
    ch2[i] = channels[1](t[i]);
    ch3[i] = channels[2](t[i]);
    rudd[i] = rudder(t[i]);
    const double c[3] = {ch1[i], ch2[i], ch3[i]};
    qs[i] = quasi(c);
  }

  Eigen::VectorXd gate(n * sub);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < sub; ++j) gate[i * sub + j] = sigmoid(rudder(t[i] + j * dt), spec.gate_a, spec.gate_x0);

  std::vector<Eigen::VectorXd> modes;
  for (std::size_t k = 0; k < spec.modes.size(); ++k) {
    const ModeSpec& m = spec.modes[k];
    const double wn = kTwoPi * m.frequency_hz;
    const Oscillator osc(m.mass, m.damping, wn, dt);
    // Two-sided white-noise intensity giving the requested stationary std.
    const double q = m.amplitude * m.amplitude * 4.0 * m.mass * m.mass * m.damping * wn * wn * wn;
    const double force_sd = std::sqrt(q / dt);
    Rng forcing = Rng::stream(spec.seed, 10 + k);
    Eigen::Vector2d state = Eigen::Vector2d::Zero();
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i] = state[0];
      for (int j = 0; j < sub; ++j)
        state = osc.phi * state + osc.gamma * (force_sd * gate[i * sub + j] * forcing.normal());
    }
    modes.push_back(std::move(out));
  }

  Rng noise = Rng::stream(spec.seed, 1);
  Synthetic s;
  s.data.x.columns = {"t", "ch1", "ch2", "ch3", "rudd"};
  s.data.x.values = stack({t, ch1, ch2, ch3, rudd});
  std::vector<Eigen::VectorXd> comps{qs};
  s.truth.names = {"quasi_static"};
  for (std::size_t k = 0; k < modes.size(); ++k) {
    s.truth.names.push_back("mode" + std::to_string(k + 1));
    comps.push_back(modes[k]);
  }
  s.truth.components = stack(comps);
  s.truth.noiseless = s.truth.components.rowwise().sum();
  s.truth.noise_std = Eigen::VectorXd::Constant(n, spec.noise_std);
  s.truth.noise.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.truth.noise[i] = spec.noise_std * noise.normal();
  s.data.y = s.truth.noiseless + s.truth.noise;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i % spec.decimate != 0) s.data.held_out.push_back(static_cast<std::size_t>(i));

  // Burst windows: nominal gate crossings of each turn, padded for ring-down.
  const double cross = spec.gate_x0 / spec.turn_rate;
  for (std::size_t k = 0; k < spec.turn_centres.size(); ++k) {
    const double c = spec.turn_centres[k];
    const double on = c - 0.5 * spec.turn_hold - rise + cross;
    const double off = c + 0.5 * spec.turn_hold + rise - cross;
    s.truth.windows.push_back({"turn" + std::to_string(k + 1), std::max(0.0, on - 1.0), std::min(spec.duration, off + 1.0)});
  }
  s.truth.values = {{"switch.R.a", spec.gate_a}, {"switch.R.x0", spec.gate_x0}};
  for (std::size_t k = 0; k < spec.modes.size(); ++k) {
    const std::string p = "mode" + std::to_string(k + 1);
    s.truth.values[p + ".omega_n"] = kTwoPi * spec.modes[k].frequency_hz;
    s.truth.values[p + ".damping"] = spec.modes[k].damping;
    s.truth.values[p + ".amplitude"] = spec.modes[k].amplitude;
  }
  return s;
}

void ChangepointSpec::validate() const {
  require(n >= 10, "change-point spec needs n >= 10");
  require(hi > lo && std::isfinite(lo) && std::isfinite(hi), "invalid change-point range");
  require(a > 0.0 && right_lengthscale > 0.0 && left_lengthscale > 0.0 && variance >= 0.0,
          "invalid change-point settings");
  require(noise_std > 0.0, "noise std must be positive");
}

Synthetic gen_changepoint(const ChangepointSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  Rng inputs = Rng::stream(spec.seed, 0);
  Rng fn = Rng::stream(spec.seed, 1);
  Rng noise = Rng::stream(spec.seed, 2);
  const SmoothDraw right(fn, spec.variance, {spec.right_lengthscale});
  const SmoothDraw left(fn, spec.variance, {spec.left_lengthscale});

  Eigen::VectorXd x(n), r(n), l(n), eps(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = inputs.uniform(spec.lo, spec.hi);
  for (Eigen::Index i = 0; i < n; ++i) {
    r[i] = sigmoid(x[i], spec.a, spec.x0) * right(x[i]);
    l[i] = sigmoid_neg(x[i], spec.a, spec.x0) * left(x[i]);
    eps[i] = spec.noise_std * noise.normal();
  }
  Synthetic s;
  s.data.x.columns = {"x"};
  s.data.x.values = x;
  s.truth.names = {"right", "left"};
  s.truth.components = stack({r, l});
  s.truth.noiseless = r + l;
  s.truth.noise_std = Eigen::VectorXd::Constant(n, spec.noise_std);
  s.truth.noise = eps;
  s.data.y = s.truth.noiseless + eps;
  s.truth.values = {{"switch.A.a", spec.a}, {"switch.A.x0", spec.x0}};
  return s;
}

}  // namespace cpk
