#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace nlos {

// First-order dual number carrying N tangent components. Used to build the
// local Jacobians of the per-cell rendering contribution inside the reverse
// pass of the calibration gradient.
template <int N>
struct Dual {
  double v = 0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}
  static Dual var(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual operator-() const {
    Dual r(-v);
    for (int i = 0; i < N; ++i) r.d[i] = -d[i];
    return r;
  }
  Dual operator+(const Dual& o) const {
    Dual r(v + o.v);
    for (int i = 0; i < N; ++i) r.d[i] = d[i] + o.d[i];
    return r;
  }
  Dual operator-(const Dual& o) const {
    Dual r(v - o.v);
    for (int i = 0; i < N; ++i) r.d[i] = d[i] - o.d[i];
    return r;
  }
  Dual operator*(const Dual& o) const {
    Dual r(v * o.v);
    for (int i = 0; i < N; ++i) r.d[i] = d[i] * o.v + v * o.d[i];
    return r;
  }
  Dual operator/(const Dual& o) const {
    Dual r(v / o.v);
    const double inv = 1.0 / o.v;
    for (int i = 0; i < N; ++i) r.d[i] = (d[i] - r.v * o.d[i]) * inv;
    return r;
  }
  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }

  friend Dual operator+(double a, const Dual& b) { return Dual(a) + b; }
  friend Dual operator-(double a, const Dual& b) { return Dual(a) - b; }
  friend Dual operator*(double a, const Dual& b) { return Dual(a) * b; }
  friend Dual operator/(double a, const Dual& b) { return Dual(a) / b; }

  bool operator<(const Dual& o) const { return v < o.v; }
  bool operator>(const Dual& o) const { return v > o.v; }
};

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  const double s = 0.5 / r.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * s;
  return r;
}

template <int N>
Dual<N> exp(const Dual<N>& a) {
  Dual<N> r(std::exp(a.v));
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * r.v;
  return r;
}

template <int N>
Dual<N> abs(const Dual<N>& a) {
  const double s = a.v < 0 ? -1.0 : 1.0;
  Dual<N> r(std::fabs(a.v));
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * s;
  return r;
}

// Scalar fallbacks so templated code works with plain doubles.
using std::abs;
using std::exp;
using std::sqrt;

}  // namespace nlos
