#pragma once

// Reference computations that share no code with the library: a Taylor
// scaling-and-squaring matrix exponential, a Fehlberg 7(8) integrator for
// Kolmogorov equations and Gauss-Kronrod quadrature.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.25) {
    scale *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd a = m * scale;
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * a / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Generator 1 pi^T - I of the forward process, rows source -> destination.
inline Eigen::MatrixXd base_generator(const std::vector<double>& pi) {
  const int n = static_cast<int>(pi.size());
  Eigen::MatrixXd g(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) g(x, y) = pi[y] - (x == y ? 1.0 : 0.0);
  return g;
}

inline double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14);
}

using State = std::vector<double>;

/// Row vector p evolved by dp/dtau = p G(tau) from tau0 to tau1.
inline State evolve(const std::function<Eigen::MatrixXd(double)>& generator, State p, double tau0, double tau1) {
  namespace ode = boost::numeric::odeint;
  const int n = static_cast<int>(p.size());
  auto rhs = [&](const State& q, State& dq, double tau) {
    const Eigen::MatrixXd g = generator(tau);
    for (int y = 0; y < n; ++y) {
      double s = 0.0;
      for (int x = 0; x < n; ++x) s += q[x] * g(x, y);
      dq[y] = s;
    }
  };
  ode::integrate_adaptive(ode::make_controlled(1e-15, 1e-15, ode::runge_kutta_fehlberg78<State>()), rhs, p, tau0,
                          tau1, (tau1 - tau0) * 1e-3);
  return p;
}

/// Transition matrix of the same flow, composed from short pieces: row x is evolve(e_x).
inline Eigen::MatrixXd flow(const std::function<Eigen::MatrixXd(double)>& generator, int n, double tau0,
                            double tau1, int pieces = 16) {
  Eigen::MatrixXd total = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k < pieces; ++k) {
    const double a = tau0 + (tau1 - tau0) * k / pieces, b = tau0 + (tau1 - tau0) * (k + 1) / pieces;
    Eigen::MatrixXd piece(n, n);
    for (int x = 0; x < n; ++x) {
      State e(n, 0.0);
      e[x] = 1.0;
      const auto row = evolve(generator, e, a, b);
      for (int y = 0; y < n; ++y) piece(x, y) = row[y];
    }
    total = (total * piece).eval();
  }
  return total;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

}  // namespace oracle
