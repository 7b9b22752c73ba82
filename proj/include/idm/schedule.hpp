#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "idm/tensor.hpp"

namespace idm {

// Variance schedule for one diffusion chain. Tables are 0-indexed internally;
// the public accessors take the 1-based step index k used everywhere else,
// with alpha_bar_at(0) == 1 by convention.
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;        // β_k
  std::vector<double> alpha;       // α_k = 1 − β_k
  std::vector<double> alpha_bar;   // ᾱ_k = ∏_{s≤k} α_s
  std::vector<double> beta_tilde;  // β̃_k = (1−ᾱ_{k−1})/(1−ᾱ_k)·β_k, β̃_1 = 0

  void check_step(std::size_t k, const char* op) const {
    if (k < 1 || k > steps) {
      throw ShapeError(std::string(op) + ": step " + std::to_string(k) +
                       " out of range [1," + std::to_string(steps) + "]");
    }
  }

  double beta_at(std::size_t k) const { check_step(k, "beta_at"); return beta[k - 1]; }
  double alpha_at(std::size_t k) const { check_step(k, "alpha_at"); return alpha[k - 1]; }
  double alpha_bar_at(std::size_t k) const {
    if (k == 0) return 1.0;
    check_step(k, "alpha_bar_at");
    return alpha_bar[k - 1];
  }
  double beta_tilde_at(std::size_t k) const {
    check_step(k, "beta_tilde_at");
    return beta_tilde[k - 1];
  }
};

// A value somewhere along a chain: step_index 0 is clean data.
struct DiffusionState {
  Tensor value;
  std::size_t step_index = 0;
};

inline NoiseSchedule make_linear_schedule(std::size_t steps, double beta_start,
                                          double beta_end) {
  if (steps < 1) throw ShapeError("make_linear_schedule: steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ShapeError("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  s.beta_tilde.resize(steps);
  double bar = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0
                                   : static_cast<double>(i) / static_cast<double>(steps - 1);
    const double prev_bar = bar;
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    bar *= s.alpha[i];
    s.alpha_bar[i] = bar;
    s.beta_tilde[i] = i == 0 ? 0.0 : (1.0 - prev_bar) / (1.0 - bar) * s.beta[i];
  }
  return s;
}

// Sample of q(y_k | y_0) given a standard-normal draw:
//   √ᾱ_k·clean + √(1−ᾱ_k)·noise
inline Tensor forward_marginal(const Tensor& clean, std::size_t k,
                               const NoiseSchedule& sched, const Tensor& noise) {
  sched.check_step(k, "forward_marginal");
  check_same_shape(clean, noise, "forward_marginal");
  const double ab = sched.alpha_bar_at(k);
  return axpby(std::sqrt(ab), clean, std::sqrt(1.0 - ab), noise);
}

struct PosteriorParams {
  Tensor mean;
  double var = 0.0;
};

// Gaussian posterior q(y_{k−1} | y_k, y_0):
//   mean = √ᾱ_{k−1}β_k/(1−ᾱ_k)·clean + √α_k(1−ᾱ_{k−1})/(1−ᾱ_k)·noisy
//   var  = β̃_k
inline PosteriorParams posterior_params(const Tensor& clean, const Tensor& noisy,
                                        std::size_t k, const NoiseSchedule& sched) {
  sched.check_step(k, "posterior_params");
  check_same_shape(clean, noisy, "posterior_params");
  const double ab_k = sched.alpha_bar_at(k);
  const double ab_prev = sched.alpha_bar_at(k - 1);
  const double denom = 1.0 - ab_k;
  const double c_clean = std::sqrt(ab_prev) * sched.beta_at(k) / denom;
  const double c_noisy = std::sqrt(sched.alpha_at(k)) * (1.0 - ab_prev) / denom;
  return {axpby(c_clean, clean, c_noisy, noisy), sched.beta_tilde_at(k)};
}

// Deterministic mean-only reverse update:
//   (1/√α_k)·(noisy − β_k/√(1−ᾱ_k)·predicted_noise)
inline Tensor reverse_mean(const Tensor& noisy, const Tensor& predicted_noise,
                           std::size_t k, const NoiseSchedule& sched) {
  sched.check_step(k, "reverse_mean");
  check_same_shape(noisy, predicted_noise, "reverse_mean");
  const double coef = sched.beta_at(k) / std::sqrt(1.0 - sched.alpha_bar_at(k));
  const double root_alpha = std::sqrt(sched.alpha_at(k));
  Tensor out(noisy.shape());
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    out[i] = (noisy[i] - coef * predicted_noise[i]) / root_alpha;
  }
  return out;
}

// Squared error summed over all coordinates of one sample. The batch mean is
// taken by the caller.
inline double noise_prediction_loss(const Tensor& true_noise,
                                    const Tensor& predicted_noise) {
  check_same_shape(true_noise, predicted_noise, "noise_prediction_loss");
  return sum_squared_diff(true_noise, predicted_noise);
}

}  // namespace idm
