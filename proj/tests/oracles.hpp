#pragma once

// Reference computations written independently of the library, used as
// test oracles. Nothing here calls into nggirt.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

namespace oracle {

/// Order-p sample quantile with linear interpolation between order statistics.
inline double interpolated_quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Clamped cubic knot vector with interior knots at equally spaced quantiles.
inline std::vector<double> clamped_knots(const std::vector<double>& times, int degree, int n_interior) {
  std::vector<double> knots(degree + 1, times.front());
  for (int k = 1; k <= n_interior; ++k) {
    knots.push_back(interpolated_quantile(times, static_cast<double>(k) / (n_interior + 1)));
  }
  knots.insert(knots.end(), degree + 1, times.back());
  return knots;
}

/// Textbook Cox-de Boor recursion for B_{i,p}(t) with 0/0 := 0. At the right
/// end of the span the last non-degenerate interval is closed.
inline double cox_de_boor(const std::vector<double>& u, int i, int p, double t) {
  if (p == 0) {
    const double right_end = u.back();
    if (u[i] <= t && t < u[i + 1]) return 1.0;
    if (t == right_end && u[i] < u[i + 1] && u[i + 1] == right_end) return 1.0;
    return 0.0;
  }
  double left = 0.0;
  double right = 0.0;
  const double dl = u[i + p] - u[i];
  const double dr = u[i + p + 1] - u[i + 1];
  if (dl > 0.0) left = (t - u[i]) / dl * cox_de_boor(u, i, p - 1, t);
  if (dr > 0.0) right = (u[i + p + 1] - t) / dr * cox_de_boor(u, i + 1, p - 1, t);
  return left + right;
}

inline std::vector<double> basis_at(const std::vector<double>& knots, int degree, double t) {
  const int d = static_cast<int>(knots.size()) - degree - 1;
  std::vector<double> out(d);
  for (int i = 0; i < d; ++i) out[i] = cox_de_boor(knots, i, degree, t);
  return out;
}

/// Partial credit probabilities by literal evaluation of
/// P(h) ~ exp(alpha (h theta - sum_{l<h} beta_l) + h eta), in long double.
inline std::vector<double> pcm_probs(double theta, double alpha, const std::vector<double>& beta, double eta) {
  const std::size_t m = beta.size();
  std::vector<long double> e(m);
  long double total = 0.0L;
  std::vector<long double> logits(m);
  long double top = -std::numeric_limits<long double>::infinity();
  for (std::size_t h = 0; h < m; ++h) {
    long double s = 0.0L;
    for (std::size_t l = 0; l < h; ++l) s += beta[l];
    logits[h] = static_cast<long double>(alpha) * (static_cast<long double>(h) * theta - s) +
                static_cast<long double>(h) * eta;
    top = std::max(top, logits[h]);
  }
  for (std::size_t h = 0; h < m; ++h) {
    e[h] = std::exp(logits[h] - top);
    total += e[h];
  }
  std::vector<double> p(m);
  for (std::size_t h = 0; h < m; ++h) p[h] = static_cast<double>(e[h] / total);
  return p;
}

/// log V(n, k) of the NGG(kappa, sigma) partition law,
/// V(n, k) = kappa^k / Gamma(n) int_0^inf u^{n-1} (1+u)^{k sigma - n} exp(-kappa/sigma ((1+u)^sigma - 1)) du,
/// by exp-sinh quadrature in u after factoring out the peak of the integrand.
inline double ngg_log_v(int n, int k, double kappa, double sigma) {
  auto log_f = [=](double u) {
    const double tilt = sigma > 0.0 ? kappa / sigma * (std::pow(1.0 + u, sigma) - 1.0) : kappa * std::log1p(u);
    return (n - 1) * std::log(u) + (k * sigma - n) * std::log1p(u) - tilt;
  };
  // Peak location by golden-section search on log u.
  double a = -40.0;
  double b = 40.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double c = b - g * (b - a);
    const double d = a + g * (b - a);
    if (log_f(std::exp(c)) > log_f(std::exp(d))) {
      b = d;
    } else {
      a = c;
    }
  }
  const double peak = log_f(std::exp(0.5 * (a + b)));
  boost::math::quadrature::exp_sinh<double> integrator;
  const double integral = integrator.integrate([&](double u) { return u > 0.0 ? std::exp(log_f(u) - peak) : 0.0; },
                                               1e-13);
  return k * std::log(kappa) - std::lgamma(static_cast<double>(n)) + peak + std::log(integral);
}

/// Sequential urn for the number of clusters: after n subjects in k
/// clusters, the next one opens a new cluster with probability
/// V(n+1, k+1) / V(n, k).
class NggUrn {
 public:
  NggUrn(int N, double kappa, double sigma) : N_(N), log_v_((N + 2) * (N + 2), 0.0) {
    for (int n = 1; n <= N; ++n) {
      for (int k = 1; k <= n; ++k) log_v_[n * (N + 2) + k] = ngg_log_v(n, k, kappa, sigma);
    }
  }

  double p_new(int n, int k) const { return std::exp(lv(n + 1, k + 1) - lv(n, k)); }

  int draw_k(std::mt19937_64& gen) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int k = 1;
    for (int n = 1; n < N_; ++n) {
      if (unif(gen) < p_new(n, k)) ++k;
    }
    return k;
  }

  double lv(int n, int k) const { return log_v_[n * (N_ + 2) + k]; }

 private:
  int N_;
  std::vector<double> log_v_;
};

/// Every set partition of n elements, built by inserting element i into
/// each existing block or a new one.
inline void for_each_partition(int n, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> labels(n, 0);
  std::function<void(int, int)> rec = [&](int i, int blocks) {
    if (i == n) {
      visit(labels);
      return;
    }
    for (int b = 0; b <= blocks; ++b) {
      labels[i] = b;
      rec(i + 1, std::max(blocks, b + 1));
    }
  };
  rec(0, 0);
}

/// sum_{i<k} |1[same] - P_ik| for a row-major N x N matrix.
inline double binder_loss(const std::vector<int>& c, const std::vector<double>& P) {
  const std::size_t n = c.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const double same = c[i] == c[k] ? 1.0 : 0.0;
      loss += std::abs(same - P[i * n + k]);
    }
  }
  return loss;
}

/// Adjusted Rand index from pair counts.
inline double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0.0, only_a = 0.0, only_b = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const bool sa = a[i] == a[k];
      const bool sb = b[i] == b[k];
      both += sa && sb;
      only_a += sa && !sb;
      only_b += !sa && sb;
      pairs += 1.0;
    }
  }
  const double same_a = both + only_a;
  const double same_b = both + only_b;
  const double expected = same_a * same_b / pairs;
  const double max_index = 0.5 * (same_a + same_b);
  if (max_index == expected) return 1.0;
  return (both - expected) / (max_index - expected);
}

}  // namespace oracle
