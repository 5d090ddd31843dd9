#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/SpecialFunctions>

namespace lpts {

/// Regression losses supported by the coreset pipeline:
///   lp        g(t) = |t|^p
///   relu_p    g(t) = max{0, t}^p
///   logistic  g(t) = ln(1 + e^t)           (p fixed to 1 internally)
///   probit_p  g(t) = -ln(Phi_p(-t))
struct LossKind {
  enum Kind { kLp, kReluP, kLogistic, kProbitP };
  Kind kind = kLp;
  double p = 2.0;

  /// Exponent that drives sketching and sampling for this loss.
  double effective_p() const { return kind == kLogistic ? 1.0 : p; }

  void validate() const {
    if (kind != kLogistic && !(p >= 1.0 && p <= 2.0)) {
      throw std::invalid_argument("loss requires p in [1, 2]");
    }
  }

  static LossKind parse(const std::string& name, double p) {
    LossKind k;
    k.p = p;
    if (name == "lp") k.kind = kLp;
    else if (name == "relu") k.kind = kReluP;
    else if (name == "logistic") k.kind = kLogistic;
    else if (name == "probit") k.kind = kProbitP;
    else throw std::invalid_argument("unknown loss '" + name + "' (expected lp|relu|logistic|probit)");
    k.validate();
    return k;
  }

  std::string name() const {
    switch (kind) {
      case kLp: return "lp";
      case kReluP: return "relu";
      case kLogistic: return "logistic";
      case kProbitP: return "probit";
    }
    return "?";
  }
};

namespace detail {

// Regularized incomplete gamma functions (lower P, upper Q).
inline double gamma_p(double a, double x) { return Eigen::numext::igamma(a, x); }
inline double gamma_q(double a, double x) { return Eigen::numext::igammac(a, x); }

// Normalizer of exp(-|t|^p / p): 2 p^{1/p} Gamma(1 + 1/p).
inline double gen_normal_normalizer(double p) {
  return 2.0 * std::pow(p, 1.0 / p) * std::tgamma(1.0 + 1.0 / p);
}

// Above this value of x = t^p / p the upper tail switches to the asymptotic
// expansion ln Q(a, x) ~ -x + (a-1) ln x - ln Gamma(a) + ln(1 + (a-1)/x).
inline constexpr double kProbitAsymptoticX = 600.0;

}  // namespace detail

/// CDF of the p-generalized normal distribution (density prop. to
/// exp(-|t|^p / p)). Phi_2 is the standard normal CDF, Phi_1 the Laplace(1)
/// CDF.
inline double phi_p_cdf(double p, double t) {
  if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("phi_p_cdf requires p in [1, 2]");
  if (t == 0.0) return 0.5;
  const double x = std::pow(std::abs(t), p) / p;
  const double tail = detail::gamma_p(1.0 / p, x);
  return t > 0.0 ? 0.5 + 0.5 * tail : 0.5 - 0.5 * tail;
}

/// Density of the p-generalized normal.
inline double phi_p_pdf(double p, double t) {
  return std::exp(-std::pow(std::abs(t), p) / p) / detail::gen_normal_normalizer(p);
}

namespace detail {

// -ln(Phi_p(-t)); stable for the whole double range.
inline double probit_loss(double p, double t) {
  if (t <= 0.0) return -std::log1p(0.5 * (gamma_p(1.0 / p, std::pow(-t, p) / p) - 1.0));
  const double a = 1.0 / p;
  const double x = std::pow(t, p) / p;
  if (x < kProbitAsymptoticX) return -std::log(0.5 * gamma_q(a, x));
  return std::numbers::ln2 + x - (a - 1.0) * std::log(x) + std::lgamma(a) -
         std::log1p((a - 1.0) / x);
}

// g'(t) = phi_p(-t) / Phi_p(-t).
inline double probit_grad(double p, double t) {
  const double a = 1.0 / p;
  if (t <= 0.0) {
    const double cdf = 0.5 + 0.5 * gamma_p(a, std::pow(-t, p) / p);
    return phi_p_pdf(p, t) / cdf;
  }
  const double x = std::pow(t, p) / p;
  if (x < kProbitAsymptoticX) {
    return phi_p_pdf(p, t) / (0.5 * gamma_q(a, x));
  }
  // phi/Phi -> Z^-1 e^-x / (e^-x x^{a-1} / Gamma(a) (1 + (a-1)/x)) with
  // Z = 2 p^{1/p} Gamma(1+1/p).
  return std::tgamma(a) / gen_normal_normalizer(p) * 2.0 * std::pow(x, 1.0 - a) /
         (1.0 + (a - 1.0) / x);
}

}  // namespace detail

/// g(t) for the given loss; always finite and >= 0 for finite t.
inline double loss_value(const LossKind& loss, double t) {
  switch (loss.kind) {
    case LossKind::kLp:
      return std::pow(std::abs(t), loss.p);
    case LossKind::kReluP:
      return t <= 0.0 ? 0.0 : std::pow(t, loss.p);
    case LossKind::kLogistic:
      return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
    case LossKind::kProbitP:
      return detail::probit_loss(loss.p, t);
  }
  return 0.0;
}

/// dg/dt, using the symmetric subgradient at kinks (0 for |t|^p at p = 1,
/// 1/2 for max{0, t} at p = 1).
inline double loss_grad(const LossKind& loss, double t) {
  switch (loss.kind) {
    case LossKind::kLp:
      if (t == 0.0) return 0.0;
      return loss.p * std::pow(std::abs(t), loss.p - 1.0) * (t > 0.0 ? 1.0 : -1.0);
    case LossKind::kReluP:
      if (t < 0.0) return 0.0;
      if (t == 0.0) return loss.p == 1.0 ? 0.5 : 0.0;
      return loss.p * std::pow(t, loss.p - 1.0);
    case LossKind::kLogistic:
      return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    case LossKind::kProbitP:
      return detail::probit_grad(loss.p, t);
  }
  return 0.0;
}

/// Smoothed surrogates used by the reduced-problem solver for the
/// nondifferentiable cases; mu -> 0 recovers the original loss.
inline double smoothed_value(const LossKind& loss, double t, double mu) {
  switch (loss.kind) {
    case LossKind::kLp:
      return std::pow(t * t + mu * mu, loss.p / 2.0);
    case LossKind::kReluP: {
      const double m = 0.5 * (t + std::sqrt(t * t + mu * mu));
      return std::pow(m, loss.p);
    }
    default:
      return loss_value(loss, t);
  }
}

inline double smoothed_grad(const LossKind& loss, double t, double mu) {
  switch (loss.kind) {
    case LossKind::kLp:
      return loss.p * t * std::pow(t * t + mu * mu, loss.p / 2.0 - 1.0);
    case LossKind::kReluP: {
      const double root = std::sqrt(t * t + mu * mu);
      const double m = 0.5 * (t + root);
      return loss.p * std::pow(m, loss.p - 1.0) * 0.5 * (1.0 + t / root);
    }
    default:
      return loss_grad(loss, t);
  }
}

}  // namespace lpts
