#pragma once

// Keeps a virtual twin in step with a physical agent: dead-reckoning with
// the last known force between updates, gated PD correction when an update
// arrives, gain scheduling, and a runtime Gronwall envelope on the error.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "twinbridge/envelope.hpp"
#include "twinbridge/netsim.hpp"
#include "twinbridge/sim_time.hpp"

namespace twinbridge::twin {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator*(const Vec3& a, double s) { return s * a; }
  friend Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

// Heading and yaw rate are planar; yaw_rate is carried so the twin can
// dead-reckon heading the same way it does position.
struct TwinState {
  Vec3 p, v, a;
  double heading = 0.0;   // radians
  double yaw_rate = 0.0;  // rad/s
  double t = 0.0;         // seconds
};

enum class SyncErrorCode { InvalidStep, UnknownTerrain, InvalidParams };

class SyncError : public std::runtime_error {
 public:
  SyncError(SyncErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  SyncErrorCode code() const { return code_; }

 private:
  SyncErrorCode code_;
};

struct PhysicalParams {
  double mass = 20.0;      // kg
  double diameter = 0.5;   // m
  std::map<std::string, double> friction{{"concrete", 0.02}, {"gravel", 0.05}, {"grass", 0.08}};
  double c_drag = 10.0;    // N s/m
  double g = 9.81;

  void validate() const {
    if (!(mass > 0.0) || !(diameter > 0.0) || !(c_drag >= 0.0) || !(g >= 0.0))
      throw SyncError(SyncErrorCode::InvalidParams, "PhysicalParams: mass, diameter > 0; drag, g >= 0");
    for (const auto& [k, mu] : friction)
      if (!(mu >= 0.0)) throw SyncError(SyncErrorCode::InvalidParams, "PhysicalParams: negative friction for " + k);
  }

  double mu(const std::string& terrain) const {
    auto it = friction.find(terrain);
    if (it == friction.end()) throw SyncError(SyncErrorCode::UnknownTerrain, "unknown terrain class: " + terrain);
    return it->second;
  }
};

// Semi-implicit Euler with an explicitly given resistive force:
// a = (f_phys - f_res)/m, v' = v + a dt, p' = p + v' dt.
inline TwinState predict_step(const TwinState& s, const Vec3& f_phys, const Vec3& f_res, double mass, double dt) {
  if (!(dt > 0.0)) throw SyncError(SyncErrorCode::InvalidStep, "predict_step: dt must be > 0");
  TwinState n = s;
  n.a = (f_phys - f_res) / mass;
  n.v = s.v + n.a * dt;
  n.p = s.p + n.v * dt;
  n.heading = wrap_angle(s.heading + s.yaw_rate * dt);
  n.t = s.t + dt;
  return n;
}

// Coulomb friction plus linear drag, f_res = mu m g v_hat + c v, evaluated
// at the stepped velocity. Solving v' = v + dt (f - f_res(v'))/m in closed
// form gives a shrink toward zero: the agent stops instead of reversing
// when friction would carry it past rest, and two states never move apart
// under the step (what the error bound needs).
inline TwinState predict_step(const TwinState& s, const Vec3& f_phys, const PhysicalParams& params,
                              const std::string& terrain, double dt) {
  if (!(dt > 0.0)) throw SyncError(SyncErrorCode::InvalidStep, "predict_step: dt must be > 0");
  const double m = params.mass;
  const double mu = params.mu(terrain);
  const Vec3 v_free = s.v + f_phys * (dt / m);
  Vec3 v_next = v_free;
  if (mu > 0.0 || params.c_drag > 0.0) {
    const double speed = v_free.norm();
    const double stop = dt * mu * params.g;
    if (speed <= stop) {
      v_next = {};
    } else {
      v_next = v_free * ((speed - stop) / (speed * (1.0 + dt * params.c_drag / m)));
    }
  }
  TwinState n = s;
  n.v = v_next;
  n.a = (v_next - s.v) / dt;
  n.p = s.p + v_next * dt;
  n.heading = wrap_angle(s.heading + s.yaw_rate * dt);
  n.t = s.t + dt;
  return n;
}

struct SyncErrors {
  Vec3 e_pos;
  Vec3 e_vel;
  double e_rot = 0.0;  // (-pi, pi]
};

inline SyncErrors sync_errors(const TwinState& phys, const TwinState& pred) {
  return {phys.p - pred.p, phys.v - pred.v, wrap_angle(phys.heading - pred.heading)};
}

struct Gains {
  double kp = 0.0;  // N/m
  double kd = 0.0;  // N s/m
  friend bool operator==(const Gains&, const Gains&) = default;
};

struct Thresholds {
  double pos = 0.02;  // m
  double vel = 0.05;  // m/s
};

struct SyncController {
  Gains gains{400.0, 100.0};
  Thresholds base;
  std::vector<Gains> grid;
  double disconnect_duration = 0.0;  // s, gap that ended at the latest update
  double heading_gain = 2.0;         // 1/s, proportional yaw-rate correction

  void validate() const {
    auto ok = [](const Gains& g) { return g.kp >= 0.0 && g.kd >= 0.0; };
    if (!ok(gains) || !std::all_of(grid.begin(), grid.end(), ok))
      throw SyncError(SyncErrorCode::InvalidParams, "SyncController: gains must be >= 0");
    if (!(base.pos > 0.0) || !(base.vel > 0.0))
      throw SyncError(SyncErrorCode::InvalidParams, "SyncController: thresholds must be > 0");
  }
};

inline constexpr double kThresholdRefSeconds = 10.0;
inline constexpr double kThresholdCap = 4.0;

inline Thresholds adaptive_thresholds(const SyncController& ctrl, double loss_rate, double disconnect_s) {
  const double f = (1.0 + std::max(0.0, disconnect_s) / kThresholdRefSeconds) * (1.0 + std::clamp(loss_rate, 0.0, 1.0));
  const double k = std::min(f, kThresholdCap);
  return {ctrl.base.pos * k, ctrl.base.vel * k};
}

inline Vec3 pd_force(const Vec3& e_pos, const Vec3& e_vel, const Gains& g) { return g.kp * e_pos + g.kd * e_vel; }

inline bool gate_open(const Vec3& e_pos, const Vec3& e_vel, const Thresholds& eps) {
  return e_pos.norm() > eps.pos || e_vel.norm() > eps.vel;
}

inline Vec3 pd_correct(const Vec3& e_pos, const Vec3& e_vel, const SyncController& ctrl, const Thresholds& eps) {
  if (!gate_open(e_pos, e_vel, eps)) return {};
  return pd_force(e_pos, e_vel, ctrl.gains);
}

inline Vec3 pd_correct(const Vec3& e_pos, const Vec3& e_vel, const SyncController& ctrl) {
  return pd_correct(e_pos, e_vel, ctrl, ctrl.base);
}

// ---------------------------------------------------------------------------
// Gain scheduling
//
// Each candidate is scored on a short look-ahead of the error under its
// own correction. Per axis, one update cycle is a push of length T from
// the held correction, then a coast until the next expected update
// (T_eff = T / (1 - loss)). Measurement noise enters through the
// correction, force drift the twin cannot see enters as white
// acceleration over the cycle. Mean and covariance of (e_p, e_v) are
// propagated linearly. Both terms are divided by their largest value over
// the candidates before weighting.

struct GainWindow {
  std::vector<Vec3> e_pos;  // measured errors at recent updates, oldest first
  std::vector<Vec3> e_vel;
  double loss_rate = 0.0;
  double period_s = 0.1;     // nominal update period, also the hold time
  double noise_pos = 0.0;    // measurement std-dev per axis
  double noise_vel = 0.0;
  double drift_accel = 0.0;  // std-dev of unseen acceleration per axis, m/s^2
  double horizon_s = 1.0;
  double mass = 20.0;
  int axes = 2;
};

struct GainWeights {
  double accuracy = 0.8;
  double energy = 0.2;
};

struct GainEvaluation {
  Gains gains;
  double accuracy = 0.0;  // RMS predicted position error, m
  double energy = 0.0;    // expected sum of |f|^2 * T, N^2 s
  double cost = 0.0;
};

namespace detail {

using Mat2 = std::array<double, 4>;  // row-major

inline Mat2 mul(const Mat2& a, const Mat2& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
          a[2] * b[1] + a[3] * b[3]};
}
inline Mat2 transpose(const Mat2& a) { return {a[0], a[2], a[1], a[3]}; }

}  // namespace detail

inline std::vector<GainEvaluation> evaluate_gains(const std::vector<Gains>& candidates, const GainWindow& w,
                                                  const GainWeights& weights = {}) {
  using detail::Mat2;
  std::vector<GainEvaluation> out;
  if (w.e_pos.empty()) return out;
  const double T = w.period_s;
  const double T_eff = T / std::max(1e-6, 1.0 - std::clamp(w.loss_rate, 0.0, 0.99));
  const double coast = T_eff - T;
  const int cycles = std::max(1, static_cast<int>(std::ceil(w.horizon_s / T_eff)));
  // Start from the last measurement pulled toward zero by how much of the
  // window's spread is noise (empirical Bayes, per axis).
  auto shrink = [](const std::vector<Vec3>& xs, double noise, double& post_var) {
    if (xs.empty()) {
      post_var = 0.0;
      return std::array<double, 3>{0.0, 0.0, 0.0};
    }
    double ms = 0.0;
    for (const Vec3& x : xs) ms += x.x * x.x + x.y * x.y;
    const double n2 = noise * noise;
    const double prior = std::max(0.0, ms / (2.0 * xs.size()) - n2);
    const double k = prior + n2 > 0.0 ? prior / (prior + n2) : 1.0;
    post_var = k * n2;
    const Vec3& l = xs.back();
    return std::array<double, 3>{k * l.x, k * l.y, k * l.z};
  };
  double pp0 = 0.0, pv0 = 0.0;
  const std::array<double, 3> p0 = shrink(w.e_pos, w.noise_pos, pp0);
  const std::array<double, 3> v0 = shrink(w.e_vel, w.noise_vel, pv0);

  for (const Gains& g : candidates) {
    const double a = g.kp / w.mass, b = g.kd / w.mass;
    // push phase: e_p' = (1 - a T^2/2) e_p + (T - b T^2/2) e_v, e_v' = -a T e_p + (1 - b T) e_v
    const Mat2 push{1.0 - a * T * T / 2.0, T - b * T * T / 2.0, -a * T, 1.0 - b * T};
    const Mat2 drift{1.0, coast, 0.0, 1.0};
    const Mat2 A = detail::mul(drift, push);
    // noise input: the force error (kp n_p + kd n_v) through [T^2/2m, T/m], then the coast
    const double bp = T * T / (2.0 * w.mass) + coast * T / w.mass, bv = T / w.mass;
    const double q = g.kp * g.kp * w.noise_pos * w.noise_pos + g.kd * g.kd * w.noise_vel * w.noise_vel;
    const double da = w.drift_accel * w.drift_accel;
    const double dp = T_eff * T_eff / 2.0, dv = T_eff;

    std::array<double, 3> mp = p0, mv = v0;
    Mat2 P{pp0, 0.0, 0.0, pv0};
    double acc_sum = 0.0, energy = 0.0;
    for (int k = 0; k < cycles; ++k) {
      double mean_f2 = 0.0, mean_p2 = 0.0;
      for (int ax = 0; ax < 3; ++ax) {
        const double f = g.kp * mp[ax] + g.kd * mv[ax];
        mean_f2 += f * f;
        const double np = A[0] * mp[ax] + A[1] * mv[ax];
        const double nv = A[2] * mp[ax] + A[3] * mv[ax];
        mp[ax] = np;
        mv[ax] = nv;
        mean_p2 += np * np;
      }
      const double var_f = g.kp * g.kp * P[0] + 2.0 * g.kp * g.kd * P[1] + g.kd * g.kd * P[3] + q;
      energy += (mean_f2 + w.axes * var_f) * T;
      Mat2 Pn = detail::mul(detail::mul(A, P), detail::transpose(A));
      Pn[0] += bp * bp * q;
      Pn[1] += bp * bv * q;
      Pn[2] += bp * bv * q;
      Pn[3] += bv * bv * q;
      Pn[0] += dp * dp * da;
      Pn[1] += dp * dv * da;
      Pn[2] += dp * dv * da;
      Pn[3] += dv * dv * da;
      P = Pn;
      const double e2 = mean_p2 + w.axes * P[0];
      acc_sum += e2;
    }
    GainEvaluation ev;
    ev.gains = g;
    ev.accuracy = std::sqrt(acc_sum / cycles);
    ev.energy = energy;
    out.push_back(ev);
  }

  auto normalize = [&](auto field) {
    double hi = 0.0;
    for (const auto& e : out) hi = std::max(hi, e.*field);
    return [=](const GainEvaluation& e) { return hi > 0.0 ? e.*field / hi : 0.0; };
  };
  const auto acc_n = normalize(&GainEvaluation::accuracy);
  const auto en_n = normalize(&GainEvaluation::energy);
  for (auto& e : out) e.cost = weights.accuracy * acc_n(e) + weights.energy * en_n(e);
  return out;
}

// Lowest cost wins; ties go to the earliest candidate. An empty window
// keeps the current gains.
inline Gains schedule_gains(const SyncController& ctrl, const GainWindow& w, const GainWeights& weights = {}) {
  if (ctrl.grid.empty()) throw SyncError(SyncErrorCode::InvalidParams, "schedule_gains: empty gain grid");
  const auto evals = evaluate_gains(ctrl.grid, w, weights);
  if (evals.empty()) return ctrl.gains;
  std::size_t best = 0;
  for (std::size_t i = 1; i < evals.size(); ++i)
    if (evals[i].cost < evals[best].cost) best = i;
  return evals[best].gains;
}

// ---------------------------------------------------------------------------
// Error bound

struct SyncBoundModel {
  double K = 2.0;            // 1/s
  double delta_bound = 0.0;  // sup of the (scaled) input mismatch
  double epsilon = 0.05;     // m, target bound
  double e0 = 0.0;           // m

  void validate() const {
    if (!(K > 0.0) || !(delta_bound >= 0.0))
      throw SyncError(SyncErrorCode::InvalidParams, "SyncBoundModel: K > 0 and delta >= 0 required");
  }
};

// e0 e^{Kt} + delta (e^{Kt} - 1), i.e. the Gronwall envelope for constant delta.
inline double gronwall_bound(const SyncBoundModel& m, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("gronwall_bound: t must be >= 0");
  const double g = std::exp(m.K * t);
  return m.e0 * g + m.delta_bound * std::expm1(m.K * t);
}

// Same envelope with a time-varying delta; the convolution integral is
// evaluated with composite Simpson.
inline double gronwall_bound(const SyncBoundModel& m, double t, const std::function<double(double)>& delta,
                             int panels = 2000) {
  if (!(t >= 0.0)) throw std::invalid_argument("gronwall_bound: t must be >= 0");
  if (t == 0.0) return m.e0;
  const int n = panels + (panels % 2);
  const double h = t / n;
  auto f = [&](double tau) { return m.K * delta(tau) * std::exp(m.K * (t - tau)); };
  double s = f(0.0) + f(t);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return m.e0 * std::exp(m.K * t) + s * h / 3.0;
}

// Discrete form of the envelope, tracked alongside the simulation. It
// bounds |e_p| + |e_v| of two agents stepped by predict_step with the same
// parameters when K >= 2/s: one step grows that sum by at most
// (1+h) and adds at most h(1+h)|du|/m, both covered by e^{Kh} and
// (|du|/(mK))(e^{Kh} - 1).
class GronwallMonitor {
 public:
  explicit GronwallMonitor(double K) : K_(K) {
    if (!(K > 0.0)) throw SyncError(SyncErrorCode::InvalidParams, "GronwallMonitor: K must be > 0");
  }

  void reset(double error) { bound_ = error; }

  void step(double h, double input_mismatch_accel) {
    const double g = std::exp(K_ * h);
    bound_ = bound_ * g + (input_mismatch_accel / K_) * std::expm1(K_ * h);
  }

  double bound() const { return bound_; }

  bool holds(double error) const { return error <= bound_ * (1.0 + 1e-9) + 1e-12; }

 private:
  double K_;
  double bound_ = 0.0;
};

// ---------------------------------------------------------------------------
// Scripted inputs

struct StepChange {
  double t;
  Vec3 df;
};

// Samples t at the start of its hold interval; hold 0 means continuous.
inline double held_time(double t, double hold) {
  return hold > 0.0 ? std::floor(t / hold + 1e-9) * hold : t;
}

// f(t) = bias + amplitude * sin(omega t + phase) per axis, plus steps.
struct ForceScript {
  Vec3 bias{12.0, 0.0, 0.0};
  Vec3 amplitude{6.0, 6.0, 0.0};
  Vec3 omega{0.3, 0.2, 0.0};
  Vec3 phase{0.0, 0.5, 0.0};
  std::vector<StepChange> steps;
  double hold_s = 0.0;  // zero-order hold of the command

  Vec3 at(double t) const {
    t = held_time(t, hold_s);
    Vec3 f{bias.x + amplitude.x * std::sin(omega.x * t + phase.x),
           bias.y + amplitude.y * std::sin(omega.y * t + phase.y),
           bias.z + amplitude.z * std::sin(omega.z * t + phase.z)};
    for (const auto& s : steps)
      if (t >= s.t) f += s.df;
    return f;
  }
};

struct YawScript {
  double amplitude = 0.3;  // rad/s
  double omega = 0.25;     // rad/s
  double hold_s = 0.0;
  double at(double t) const { return amplitude * std::sin(omega * held_time(t, hold_s)); }
};

// ---------------------------------------------------------------------------
// Update message carried over the link.

struct StateUpdate {
  std::uint64_t seq = 0;
  double t_sample = 0.0;
  Vec3 p, v, f;
  double heading = 0.0;
  double yaw_rate = 0.0;

  std::vector<std::uint8_t> encode() const {
    std::vector<std::uint8_t> out;
    auto put = [&](double d) { wire::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d)); };
    for (const Vec3* x : {&p, &v, &f}) {
      put(x->x);
      put(x->y);
      put(x->z);
    }
    put(heading);
    put(yaw_rate);
    return out;
  }

  static std::optional<StateUpdate> decode(const Envelope& e) {
    if (e.payload.size() != 11 * 8) return std::nullopt;
    StateUpdate u;
    u.seq = e.seq;
    u.t_sample = to_seconds(SimDuration{static_cast<std::int64_t>(e.sim_time_us)});
    std::size_t at = 0;
    auto get = [&] {
      const double d = std::bit_cast<double>(wire::get_le<std::uint64_t>(e.payload, at));
      at += 8;
      return d;
    };
    for (Vec3* x : {&u.p, &u.v, &u.f}) {
      x->x = get();
      x->y = get();
      x->z = get();
    }
    u.heading = get();
    u.yaw_rate = get();
    return u;
  }
};

// ---------------------------------------------------------------------------
// Sync loop

// Kp x Kd grid spanning soft, default and deadbeat gains for m = 20 kg, T = 0.1 s.
inline std::vector<Gains> default_gain_grid() {
  std::vector<Gains> g;
  for (double kp : {50.0, 400.0, 2000.0})
    for (double kd : {15.0, 100.0, 300.0}) g.push_back({kp, kd});
  return g;
}

struct SyncScenario {
  std::string agent = "/robot1";
  TwinState initial;
  double duration_s = 60.0;
  double step_s = 0.01;
  double update_period_s = 0.1;
  PhysicalParams params;
  std::string terrain = "concrete";
  ForceScript force;
  YawScript yaw;
  netsim::NetworkConditions network;
  double noise_pos = 0.01;  // m
  double noise_vel = 0.03;  // m/s
  double noise_heading = 0.002;  // rad
  SyncController ctrl;
  bool adaptive_gains = true;
  GainWeights gain_weights;
  double lipschitz_K = 2.0;
  double steady_after_s = 10.0;
  std::uint64_t seed = 1;

  void validate() const {
    params.validate();
    ctrl.validate();
    params.mu(terrain);
    network.validate();
    if (!(duration_s > 0.0) || !(step_s > 0.0) || !(update_period_s >= step_s))
      throw SyncError(SyncErrorCode::InvalidParams, "SyncScenario: duration, step and update period must be > 0");
    if (adaptive_gains && ctrl.grid.empty())
      throw SyncError(SyncErrorCode::InvalidParams, "SyncScenario: adaptive gains need a non-empty grid");
    if (!(lipschitz_K > 0.0)) throw SyncError(SyncErrorCode::InvalidParams, "SyncScenario: K must be > 0");
    if (!initial.p.finite() || !initial.v.finite() || !std::isfinite(initial.heading))
      throw SyncError(SyncErrorCode::InvalidParams, "SyncScenario: initial state must be finite");
  }
};

struct SyncSample {
  double t = 0.0;
  double e_pos = 0.0;  // true |p_phys - p_twin|
  double e_vel = 0.0;
  double e_rot = 0.0;  // radians
  double bound = 0.0;
  Gains gains;
  bool corrected = false;
  double eps_pos = 0.0;
  double eps_vel = 0.0;
};

struct SyncReport {
  std::vector<SyncSample> samples;
  std::uint64_t updates_sent = 0;
  std::uint64_t updates_received = 0;
  std::uint64_t corrections = 0;
  std::uint64_t bound_violations = 0;
  double max_steady_e_pos = 0.0;
  double max_steady_e_rot = 0.0;  // radians
  double integrated_e_pos = 0.0;  // m s
  // For each outage of at least kOutageSeconds: time from the first update
  // after it until the true position and velocity errors are both within
  // the thresholds in effect.
  std::vector<double> reconverge_s;

  // Time integral of |e_pos| over samples with t0 < t <= t1.
  double integrated_e_pos_between(double t0, double t1) const {
    double sum = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i)
      if (samples[i].t > t0 && samples[i].t <= t1) sum += samples[i].e_pos * (samples[i].t - samples[i - 1].t);
    return sum;
  }

  std::string csv() const {
    std::string out = "t,e_pos_norm,e_rot,bound,kp,kd,corrected\n";
    for (const auto& s : samples) {
      out += fmt::format("{:.2f},{:.9f},{:.9f},{:.9e},{:.3f},{:.3f},{}\n", s.t, s.e_pos, s.e_rot, s.bound, s.gains.kp,
                         s.gains.kd, s.corrected ? 1 : 0);
    }
    return out;
  }
};

inline constexpr double kOutageSeconds = 1.0;

inline SyncReport run_sync_loop(const SyncScenario& sc) {
  sc.validate();
  netsim::SimClock clock;
  netsim::NetLink link(clock, sc.network, mix_seed(sc.seed, 101));
  std::mt19937_64 noise_rng(mix_seed(sc.seed, 102));
  std::normal_distribution<double> unit(0.0, 1.0);

  const double h = sc.step_s;
  const SimDuration h_us = from_seconds(h);
  const int steps = static_cast<int>(std::llround(sc.duration_s / h));
  const int update_every = std::max(1, static_cast<int>(std::llround(sc.update_period_s / h)));
  const std::string topic = sc.agent + "/state";

  std::vector<StateUpdate> inbox;
  link.set_receiver([&](std::vector<std::uint8_t> bytes) {
    auto d = decode_envelope(bytes);
    if (auto* e = std::get_if<Envelope>(&d))
      if (auto u = StateUpdate::decode(*e)) inbox.push_back(*u);
  });

  TwinState phys = sc.initial;
  phys.t = 0.0;
  phys.a = {};
  phys.heading = wrap_angle(phys.heading);
  phys.yaw_rate = sc.yaw.at(0.0);
  TwinState virt = phys;
  Vec3 f_known = sc.force.at(0.0);
  double yaw_known = phys.yaw_rate;
  SyncController ctrl = sc.ctrl;
  Thresholds eps = ctrl.base;
  Vec3 f_corr;
  double corr_until = -1.0;
  GronwallMonitor monitor(sc.lipschitz_K);
  monitor.reset(0.0);

  GainWindow window;
  window.period_s = sc.update_period_s;
  window.noise_pos = sc.noise_pos;
  window.noise_vel = sc.noise_vel;
  window.mass = sc.params.mass;
  std::uint64_t last_seq = 0;
  double last_arrival = -1.0;
  std::vector<int> recent_missed;  // per received update, how many were skipped before it
  std::vector<double> force_changes;
  bool have_force = false;
  double f_known_t = 0.0;

  std::optional<double> reconnect_at;

  SyncReport rep;
  std::uint64_t seq = 0;
  for (int n = 0; n <= steps; ++n) {
    const double t = n * h;
    clock.run_quietly_until(SimDuration{h_us.count() * n});
    if (n < steps && n % update_every == 0) {
      StateUpdate u;
      u.seq = ++seq;
      u.t_sample = t;
      u.p = phys.p + sc.noise_pos * Vec3{unit(noise_rng), unit(noise_rng), 0.0};
      u.v = phys.v + sc.noise_vel * Vec3{unit(noise_rng), unit(noise_rng), 0.0};
      u.f = sc.force.at(t);
      u.heading = wrap_angle(phys.heading + sc.noise_heading * unit(noise_rng));
      u.yaw_rate = phys.yaw_rate;
      Envelope e;
      e.tier = Tier::Critical;
      e.seq = u.seq;
      e.sim_time_us = static_cast<std::uint64_t>(clock.now().count());
      e.topic = topic;
      e.kind = MessageKind::Twist;
      e.payload = u.encode();
      link.send(encode_envelope(e));
      ++rep.updates_sent;
    }

    // again, so a zero-latency update is handled in the step it was sent
    clock.run_quietly_until(SimDuration{h_us.count() * n});

    for (const StateUpdate& u : inbox) {
      ++rep.updates_received;
      const double gap = last_arrival < 0.0 ? 0.0 : std::max(0.0, t - last_arrival - sc.update_period_s);
      const bool outage = gap >= kOutageSeconds;
      const int missed = last_seq == 0 ? static_cast<int>(u.seq - 1) : static_cast<int>(u.seq - last_seq - 1);
      last_seq = u.seq;
      // updates lost to an outage say nothing about the loss rate
      recent_missed.push_back(outage ? 0 : std::max(0, missed));
      if (recent_missed.size() > 50) recent_missed.erase(recent_missed.begin());
      // loss estimate over the last 50 arrivals
      int miss_sum = 0;
      for (int m : recent_missed) miss_sum += m;
      const double loss = static_cast<double>(miss_sum) / static_cast<double>(miss_sum + recent_missed.size());
      last_arrival = t;
      ctrl.disconnect_duration = gap;
      eps = adaptive_thresholds(ctrl, loss, gap);

      // Bring the measurement forward to now with the force it reported.
      TwinState est;
      est.p = u.p;
      est.v = u.v;
      est.heading = u.heading;
      est.yaw_rate = u.yaw_rate;
      est.t = u.t_sample;
      while (est.t + 0.5 * h < t) est = predict_step(est, u.f, sc.params, sc.terrain, h);
      if (have_force) {
        const double dt_f = std::max(h, u.t_sample - f_known_t);
        force_changes.push_back((u.f - f_known).norm() / (sc.params.mass * std::sqrt(dt_f)));
        if (force_changes.size() > 10) force_changes.erase(force_changes.begin());
      }
      have_force = true;
      f_known = u.f;
      f_known_t = u.t_sample;
      yaw_known = u.yaw_rate;

      const SyncErrors err = sync_errors(est, virt);
      window.e_pos.push_back(err.e_pos);
      window.e_vel.push_back(err.e_vel);
      if (window.e_pos.size() > 10) {
        window.e_pos.erase(window.e_pos.begin());
        window.e_vel.erase(window.e_vel.begin());
      }
      window.loss_rate = loss;
      if (!force_changes.empty()) {
        double ss = 0.0;
        for (double c : force_changes) ss += c * c;
        // per-axis rate of unseen acceleration, scaled to one cycle
        window.drift_accel = std::sqrt(ss / force_changes.size() / 2.0 * sc.update_period_s);
      }
      if (sc.adaptive_gains) ctrl.gains = schedule_gains(ctrl, window, sc.gain_weights);

      const bool open = gate_open(err.e_pos, err.e_vel, eps);
      f_corr = pd_correct(err.e_pos, err.e_vel, ctrl, eps);
      f_corr.z = 0.0;
      if (open) {
        corr_until = t + sc.update_period_s;
        ++rep.corrections;
      } else {
        corr_until = -1.0;
      }
      virt.yaw_rate = yaw_known + ctrl.heading_gain * err.e_rot;

      if (outage) reconnect_at = t;
      const SyncErrors truth = sync_errors(phys, virt);
      monitor.reset(truth.e_pos.norm() + truth.e_vel.norm());
    }
    inbox.clear();

    const SyncErrors truth = sync_errors(phys, virt);
    SyncSample s;
    s.t = t;
    s.e_pos = truth.e_pos.norm();
    s.e_vel = truth.e_vel.norm();
    s.e_rot = truth.e_rot;
    s.bound = monitor.bound();
    s.gains = ctrl.gains;
    s.corrected = t < corr_until;
    s.eps_pos = eps.pos;
    s.eps_vel = eps.vel;
    if (!monitor.holds(s.e_pos + s.e_vel)) ++rep.bound_violations;
    if (reconnect_at && s.e_pos <= eps.pos && s.e_vel <= eps.vel) {
      rep.reconverge_s.push_back(t - *reconnect_at);
      reconnect_at.reset();
    }
    if (t > sc.steady_after_s) {
      rep.max_steady_e_pos = std::max(rep.max_steady_e_pos, s.e_pos);
      rep.max_steady_e_rot = std::max(rep.max_steady_e_rot, std::abs(s.e_rot));
    }
    if (n > 0) rep.integrated_e_pos += s.e_pos * h;
    rep.samples.push_back(s);
    if (n == steps) break;

    const Vec3 f_phys = sc.force.at(t);
    const Vec3 f_virt = f_known + (t < corr_until ? f_corr : Vec3{});
    phys = predict_step(phys, f_phys, sc.params, sc.terrain, h);
    phys.yaw_rate = sc.yaw.at(phys.t);
    virt = predict_step(virt, f_virt, sc.params, sc.terrain, h);
    monitor.step(h, (f_phys - f_virt).norm() / sc.params.mass);
  }
  return rep;
}

}  // namespace twinbridge::twin
