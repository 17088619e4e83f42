#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogarb/errors.hpp"

namespace cogarb {

inline constexpr double kSimplexTolerance = 1e-9;

/// Probability vector over game modes: the attacker's epistemic state.
///
/// Entries are non-negative and sum to one within kSimplexTolerance. The
/// constructor validates; `normalized` builds one from unnormalized weights.
class Belief {
 public:
  Belief() = default;

  explicit Belief(std::vector<double> probs) : p_(std::move(probs)) {
    if (p_.empty()) throw InvalidModel("belief must have at least one entry");
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidModel("belief entries must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
      throw InvalidModel("belief entries must sum to 1 (got " + std::to_string(sum) + ")");
  }

  static Belief uniform(std::size_t n) {
    if (n == 0) throw InvalidModel("belief must have at least one entry");
    return Belief(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static Belief point_mass(std::size_t n, std::size_t index) {
    if (index >= n) throw InvalidModel("point mass index out of range");
    std::vector<double> p(n, 0.0);
    p[index] = 1.0;
    return Belief(std::move(p));
  }

  /// Normalizes non-negative weights; nullopt when they sum to zero.
  static std::optional<Belief> normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (!(sum > 0.0)) return std::nullopt;
    for (double& w : weights) w /= sum;
    return Belief(std::move(weights));
  }

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> probs() const noexcept { return p_; }

  friend bool operator==(const Belief&, const Belief&) = default;

 private:
  std::vector<double> p_;
};

/// Shannon entropy in nats; 0 log 0 is taken as 0.
inline double entropy(const Belief& b) {
  double h = 0.0;
  for (double v : b.probs())
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

/// Confirmation-bias update: lambda * previous + (1 - lambda) * Bayesian posterior.
inline Belief cb_update(const Belief& previous, const Belief& bayes_posterior, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidModel("confirmation-bias lambda must lie in [0, 1]");
  if (previous.size() != bayes_posterior.size()) throw InvalidModel("belief dimensions differ");
  if (lambda == 0.0) return bayes_posterior;
  if (lambda == 1.0) return previous;
  std::vector<double> mix(previous.size());
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix[i] = lambda * previous[i] + (1.0 - lambda) * bayes_posterior[i];
  return *Belief::normalized(std::move(mix));
}

enum class SuperiorityKind { Belief, Uncertainty };

inline const char* to_string(SuperiorityKind kind) {
  return kind == SuperiorityKind::Belief ? "belief" : "uncertainty";
}

struct SuperiorityWindow {
  int start = 0;
  int end = 0;
  SuperiorityKind kind = SuperiorityKind::Belief;
  double threshold = 0.0;

  int length() const noexcept { return end - start + 1; }
  friend bool operator==(const SuperiorityWindow&, const SuperiorityWindow&) = default;
};

/// True when stage-k belief gives the defender superiority: b(mode) <= eta for
/// the belief kind, H(b) >= zeta for the uncertainty kind.
inline bool has_superiority(const Belief& b, std::size_t active_mode, double threshold, SuperiorityKind kind) {
  if (kind == SuperiorityKind::Belief) return b[active_mode] <= threshold;
  return entropy(b) >= threshold;
}

/// Maximal stage intervals on which the defender holds superiority. The
/// belief kind is evaluated against the mode active at each stage.
inline std::vector<SuperiorityWindow> superiority_windows(std::span<const Belief> beliefs,
                                                          std::span<const int> active_modes, double threshold,
                                                          SuperiorityKind kind) {
  if (beliefs.size() != active_modes.size()) throw InvalidModel("belief and mode trajectories differ in length");
  std::vector<SuperiorityWindow> out;
  int open = -1;
  const int n = static_cast<int>(beliefs.size());
  for (int k = 0; k < n; ++k) {
    const bool inside = has_superiority(beliefs[k], static_cast<std::size_t>(active_modes[k]), threshold, kind);
    if (inside && open < 0) open = k;
    if (!inside && open >= 0) {
      out.push_back({open, k - 1, kind, threshold});
      open = -1;
    }
  }
  if (open >= 0) out.push_back({open, n - 1, kind, threshold});
  return out;
}

}  // namespace cogarb
