#pragma once

// Forward-mode dual numbers with a fixed number of directions. Nesting the
// type (Dual<Dual<double, N>, N>) yields second derivatives, three levels give
// third derivatives. Used for small local likelihood terms only.

#include <array>
#include <cmath>

namespace samspline::ad {

template <class T, int N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit promotion of constants
  Dual(const T& value, const std::array<T, N>& deriv) : v(value), d(deriv) {}
};

template <class T>
struct is_dual : std::false_type {};
template <class T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};

inline double value_of(double x) { return x; }
template <class T, int N>
double value_of(const Dual<T, N>& x) {
  return value_of(x.v);
}

template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <class T, int N>
Dual<T, N> operator+(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v + b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}

template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v - b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}

template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v * b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.v * b.d[i] + a.d[i] * b.v;
  return r;
}

template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v / b.v;
  const T inv = T(1.0) / b.v;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}

// Mixed operations with plain doubles.
template <class T, int N>
Dual<T, N> operator+(const Dual<T, N>& a, double b) {
  Dual<T, N> r = a;
  r.v = a.v + b;
  return r;
}
template <class T, int N>
Dual<T, N> operator+(double a, const Dual<T, N>& b) {
  return b + a;
}
template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& a, double b) {
  Dual<T, N> r = a;
  r.v = a.v - b;
  return r;
}
template <class T, int N>
Dual<T, N> operator-(double a, const Dual<T, N>& b) {
  Dual<T, N> r = -b;
  r.v = r.v + a;
  return r;
}
template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& a, double b) {
  Dual<T, N> r;
  r.v = a.v * b;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b;
  return r;
}
template <class T, int N>
Dual<T, N> operator*(double a, const Dual<T, N>& b) {
  return b * a;
}
template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& a, double b) {
  return a * (1.0 / b);
}
template <class T, int N>
Dual<T, N> operator/(double a, const Dual<T, N>& b) {
  return Dual<T, N>(a) / b;
}

template <class T, int N>
Dual<T, N>& operator+=(Dual<T, N>& a, const Dual<T, N>& b) {
  return a = a + b;
}
template <class T, int N>
Dual<T, N>& operator-=(Dual<T, N>& a, const Dual<T, N>& b) {
  return a = a - b;
}

template <class T, int N>
bool operator<(const Dual<T, N>& a, const Dual<T, N>& b) {
  return value_of(a) < value_of(b);
}
template <class T, int N>
bool operator>(const Dual<T, N>& a, const Dual<T, N>& b) {
  return value_of(a) > value_of(b);
}

// Chain rule helper: f(x) with f'(x) already evaluated at the inner type.
template <class T, int N>
Dual<T, N> chain(const T& fx, const T& dfx, const Dual<T, N>& x) {
  Dual<T, N> r;
  r.v = fx;
  for (int i = 0; i < N; ++i) r.d[i] = dfx * x.d[i];
  return r;
}

using std::exp;
using std::expm1;
using std::log;
using std::log1p;

template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& x) {
  const T e = exp(x.v);
  return chain(e, e, x);
}

template <class T, int N>
Dual<T, N> expm1(const Dual<T, N>& x) {
  return chain(T(expm1(x.v)), T(exp(x.v)), x);
}

template <class T, int N>
Dual<T, N> log(const Dual<T, N>& x) {
  return chain(T(log(x.v)), T(T(1.0) / x.v), x);
}

template <class T, int N>
Dual<T, N> log1p(const Dual<T, N>& x) {
  return chain(T(log1p(x.v)), T(T(1.0) / (x.v + 1.0)), x);
}

// log(exp(a) + exp(b)) without overflow.
template <class T>
T logspace_add(const T& a, const T& b) {
  if (value_of(a) > value_of(b)) return a + log1p(exp(b - a));
  return b + log1p(exp(a - b));
}

// log(1 - exp(-x)) for x > 0.
template <class T>
T log1mexp(const T& x) {
  if (value_of(x) < 0.6931471805599453) return log(-expm1(-x));
  return log1p(-exp(-x));
}

}  // namespace samspline::ad
