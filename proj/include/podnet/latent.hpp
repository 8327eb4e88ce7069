#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "podnet/rng.hpp"

namespace podnet::latent {

struct CategoricalPosterior {
  std::vector<double> logits;
  std::vector<double> probs;  // softmax(logits)
};

// The two faces of one categorical sample: forward consumers read hard,
// gradient consumers follow soft.
struct OptionLabel {
  std::vector<double> soft;
  std::vector<double> hard;
};

inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties stay at the lowest index
  return best;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p = logits;
  double mx = p[0];
  for (double v : p) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

inline std::vector<double> one_hot(std::size_t index, std::size_t k) {
  std::vector<double> h(k, 0.0);
  h[index] = 1.0;
  return h;
}

inline OptionLabel sample_gumbel_softmax(const std::vector<double>& logits, double tau, SplitRng& rng) {
  if (logits.size() < 2) throw std::invalid_argument("sample_gumbel_softmax: need K >= 2 classes");
  if (!(tau > 0.0)) throw std::invalid_argument("sample_gumbel_softmax: tau must be > 0");
  std::vector<double> perturbed(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) perturbed[i] = (logits[i] + rng.gumbel()) / tau;
  OptionLabel label;
  label.soft = softmax(perturbed);
  label.hard = one_hot(argmax(label.soft), logits.size());
  return label;
}

inline OptionLabel greedy_label(const std::vector<double>& logits) {
  if (logits.size() < 2) throw std::invalid_argument("greedy_label: need K >= 2 classes");
  OptionLabel label;
  label.soft = softmax(logits);
  label.hard = one_hot(argmax(label.soft), logits.size());
  return label;
}

// KL(p || uniform over K) = sum p_i ln(p_i K) = ln K - H(p), in [0, ln K].
inline double kl_to_uniform(const std::vector<double>& probs) {
  if (probs.empty()) throw std::invalid_argument("kl_to_uniform: empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("kl_to_uniform: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("kl_to_uniform: probabilities do not sum to 1");
  const double k = static_cast<double>(probs.size());
  double acc = 0.0;
  for (double p : probs) {
    const double q = std::max(p, 1e-12);
    acc += q * std::log(q * k);
  }
  return acc;
}

struct TemperatureSchedule {
  double tau0 = 1.0;
  double tau_min = 0.5;
  std::size_t decay_steps = 1;
};

// Exponential interpolation from tau0 at step 0 down to tau_min at
// decay_steps, constant afterwards.
inline double temperature(std::size_t step, const TemperatureSchedule& schedule) {
  if (!(schedule.tau_min > 0.0) || schedule.tau0 < schedule.tau_min)
    throw std::invalid_argument("temperature: need tau0 >= tau_min > 0");
  if (schedule.decay_steps < 1) throw std::invalid_argument("temperature: decay_steps must be >= 1");
  if (step >= schedule.decay_steps) return schedule.tau_min;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.decay_steps);
  return schedule.tau0 * std::pow(schedule.tau_min / schedule.tau0, frac);
}

}  // namespace podnet::latent
