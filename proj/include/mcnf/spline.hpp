#ifndef MCNF_SPLINE_HPP
#define MCNF_SPLINE_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mcnf {

// Forward-mode dual number with a fixed-size gradient slot, used to push
// derivatives through the closed-form spline inverse.
template <std::size_t N>
struct Dual {
  double v = 0.0;
  std::array<double, N> g{};

  Dual() = default;
  Dual(double value) : v(value) {}
  static Dual var(double value, std::size_t slot) {
    Dual d(value);
    d.g[slot] = 1.0;
    return d;
  }

  Dual operator-() const {
    Dual r(-v);
    for (std::size_t i = 0; i < N; ++i) r.g[i] = -g[i];
    return r;
  }
};

template <std::size_t N>
inline Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v + b.v);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] + b.g[i];
  return r;
}
template <std::size_t N>
inline Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v - b.v);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] - b.g[i];
  return r;
}
template <std::size_t N>
inline Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
  return r;
}
template <std::size_t N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v / b.v);
  const double inv = 1.0 / b.v;
  for (std::size_t i = 0; i < N; ++i)
    r.g[i] = (a.g[i] - r.v * b.g[i]) * inv;
  return r;
}
template <std::size_t N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  const double s = 0.5 / r.v;
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] * s;
  return r;
}
template <std::size_t N>
inline Dual<N> log(const Dual<N>& a) {
  Dual<N> r(std::log(a.v));
  const double inv = 1.0 / a.v;
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] * inv;
  return r;
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

// Monotone rational-quadratic spline on [-B, B], identity with unit boundary
// derivatives outside. Bin widths/heights come from a softmax over the raw
// parameters, internal derivatives from a shifted softplus so that raw zeros
// give the identity map.
struct RqSplineParams {
  std::size_t K = 16;
  double B = 5.0;
  double min_frac = 1e-3;   // minimum bin width/height as a fraction of 2B
  double min_deriv = 1e-3;
  std::vector<double> widths, heights;   // K each, sum to 2B
  std::vector<double> derivs;            // K+1 knot derivatives, ends fixed at 1
  std::vector<double> knots_x, knots_y;  // K+1 cumulative positions
  // softmax outputs and derivative-activation slopes kept for the jacobian
  std::vector<double> sm_w, sm_h, dsig;
  double scale = 0.0;  // 2B * (1 - K*min_frac)

  static std::size_t raw_size(std::size_t K) { return 3 * K - 1; }

  static RqSplineParams from_raw(const double* raw, std::size_t K, double B,
                                 double min_frac = 1e-3,
                                 double min_deriv = 1e-3) {
    RqSplineParams p;
    p.K = K;
    p.B = B;
    p.min_frac = min_frac;
    p.min_deriv = min_deriv;
    p.scale = 2.0 * B * (1.0 - double(K) * min_frac);

    auto softmax = [K](const double* r, std::vector<double>& out) {
      out.resize(K);
      double mx = r[0];
      for (std::size_t i = 1; i < K; ++i) mx = std::max(mx, r[i]);
      double sum = 0.0;
      for (std::size_t i = 0; i < K; ++i) {
        out[i] = std::exp(r[i] - mx);
        sum += out[i];
      }
      for (auto& v : out) v /= sum;
    };
    softmax(raw, p.sm_w);
    softmax(raw + K, p.sm_h);

    p.widths.resize(K);
    p.heights.resize(K);
    const double floor = 2.0 * B * min_frac;
    for (std::size_t i = 0; i < K; ++i) {
      p.widths[i] = floor + p.scale * p.sm_w[i];
      p.heights[i] = floor + p.scale * p.sm_h[i];
    }

    // shift so that a raw value of 0 yields a derivative of exactly 1
    const double shift = std::log(std::expm1(1.0 - min_deriv));
    p.derivs.assign(K + 1, 1.0);
    p.dsig.resize(K - 1);
    for (std::size_t i = 1; i < K; ++i) {
      const double r = raw[2 * K + i - 1] + shift;
      p.derivs[i] = min_deriv + softplus(r);
      p.dsig[i - 1] = 1.0 / (1.0 + std::exp(-r));
    }

    p.knots_x.resize(K + 1);
    p.knots_y.resize(K + 1);
    p.knots_x[0] = p.knots_y[0] = -B;
    for (std::size_t i = 0; i < K; ++i) {
      p.knots_x[i + 1] = p.knots_x[i] + p.widths[i];
      p.knots_y[i + 1] = p.knots_y[i] + p.heights[i];
    }
    p.knots_x[K] = B;
    p.knots_y[K] = B;
    return p;
  }

  static RqSplineParams identity(std::size_t K = 16, double B = 5.0) {
    std::vector<double> raw(raw_size(K), 0.0);
    return from_raw(raw.data(), K, B);
  }

  std::size_t find_bin_x(double z) const {
    std::size_t k = 0;
    while (k + 1 < K && z >= knots_x[k + 1]) ++k;
    return k;
  }
  std::size_t find_bin_y(double y) const {
    std::size_t k = 0;
    while (k + 1 < K && y >= knots_y[k + 1]) ++k;
    return k;
  }
};

// Forward map within one bin. T is double or a Dual.
template <typename T>
inline void rq_bin_forward(T xi, T w, T h, T d0, T d1, T& y_rel, T& log_deriv) {
  using std::log;
  const T s = h / w;
  const T t = d1 + d0 - T(2.0) * s;
  const T omx = T(1.0) - xi;
  const T xiomx = xi * omx;
  const T denom = s + t * xiomx;
  y_rel = h * (s * xi * xi + d0 * xiomx) / denom;
  const T deriv =
      s * s * (d1 * xi * xi + T(2.0) * s * xiomx + d0 * omx * omx) /
      (denom * denom);
  log_deriv = log(deriv);
}

// Algebraic inverse within one bin: the in-bin root of the quadratic.
// Returns xi in [0,1]; log_deriv is the forward derivative at that point.
template <typename T>
inline T rq_bin_inverse(T y_rel, T w, T h, T d0, T d1, T& log_deriv) {
  using std::log;
  using std::sqrt;
  const T s = h / w;
  const T t = d1 + d0 - T(2.0) * s;
  const T a = h * (s - d0) + y_rel * t;
  const T b = h * d0 - y_rel * t;
  const T c = -s * y_rel;
  const T disc = b * b - T(4.0) * a * c;
  const T xi = (T(2.0) * c) / (-b - sqrt(disc));
  const T omx = T(1.0) - xi;
  const T xiomx = xi * omx;
  const T denom = s + t * xiomx;
  const T deriv =
      s * s * (d1 * xi * xi + T(2.0) * s * xiomx + d0 * omx * omx) /
      (denom * denom);
  log_deriv = log(deriv);
  return xi;
}

struct SplineResult {
  double value = 0.0;
  double log_abs_det = 0.0;
};

inline SplineResult spline_forward(const RqSplineParams& p, double z) {
  if (z <= -p.B || z >= p.B) return {z, 0.0};  // linear tails
  const std::size_t k = p.find_bin_x(z);
  const double xi = (z - p.knots_x[k]) / p.widths[k];
  double y_rel, ld;
  rq_bin_forward(xi, p.widths[k], p.heights[k], p.derivs[k], p.derivs[k + 1],
                 y_rel, ld);
  return {p.knots_y[k] + y_rel, ld};
}

// Inverse; log_abs_det is the log-derivative of the inverse map,
// i.e. the negative forward log-derivative at the mapped point.
inline SplineResult spline_inverse(const RqSplineParams& p, double x) {
  if (x <= -p.B || x >= p.B) return {x, 0.0};
  const std::size_t k = p.find_bin_y(x);
  double ld;
  const double xi = rq_bin_inverse(x - p.knots_y[k], p.widths[k],
                                   p.heights[k], p.derivs[k],
                                   p.derivs[k + 1], ld);
  return {p.knots_x[k] + xi * p.widths[k], -ld};
}

// Inverse pass with gradients w.r.t. the 3K-1 raw parameters and the input.
struct SplineInvGrad {
  double z = 0.0;
  double log_abs_det = 0.0;  // inverse log-det, as in spline_inverse
  double dz_dx = 1.0;
  double dld_dx = 0.0;
  std::vector<double> dz_draw, dld_draw;  // 3K-1 each
};

inline SplineInvGrad spline_inverse_with_grad(const RqSplineParams& p,
                                              double x) {
  const std::size_t K = p.K;
  SplineInvGrad out;
  out.dz_draw.assign(RqSplineParams::raw_size(K), 0.0);
  out.dld_draw.assign(RqSplineParams::raw_size(K), 0.0);
  if (x <= -p.B || x >= p.B) {
    out.z = x;
    return out;
  }
  const std::size_t k = p.find_bin_y(x);

  // Local variables: 0:x 1:x_k 2:w_k 3:y_k 4:h_k 5:d_k 6:d_{k+1}
  using D = Dual<7>;
  const D vx = D::var(x, 0);
  const D vxk = D::var(p.knots_x[k], 1);
  const D vw = D::var(p.widths[k], 2);
  const D vyk = D::var(p.knots_y[k], 3);
  const D vh = D::var(p.heights[k], 4);
  const D vd0 = D::var(p.derivs[k], 5);
  const D vd1 = D::var(p.derivs[k + 1], 6);

  D ld;
  const D xi = rq_bin_inverse(vx - vyk, vw, vh, vd0, vd1, ld);
  const D z = vxk + xi * vw;
  const D inv_ld = -ld;

  out.z = z.v;
  out.log_abs_det = inv_ld.v;
  out.dz_dx = z.g[0];
  out.dld_dx = inv_ld.g[0];

  // Expand the local partials through softmax (widths/heights) and the
  // shifted softplus (derivatives).
  const double prefix_w = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += p.sm_w[i];
    return s;
  }();
  const double prefix_h = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += p.sm_h[i];
    return s;
  }();

  for (std::size_t j = 0; j < K; ++j) {
    // d x_k / d raw_w_j and d w_k / d raw_w_j
    const double dxk =
        p.scale * ((j < k ? p.sm_w[j] : 0.0) - prefix_w * p.sm_w[j]);
    const double dwk = p.scale * p.sm_w[k] * ((j == k ? 1.0 : 0.0) - p.sm_w[j]);
    out.dz_draw[j] = z.g[1] * dxk + z.g[2] * dwk;
    out.dld_draw[j] = inv_ld.g[1] * dxk + inv_ld.g[2] * dwk;

    const double dyk =
        p.scale * ((j < k ? p.sm_h[j] : 0.0) - prefix_h * p.sm_h[j]);
    const double dhk = p.scale * p.sm_h[k] * ((j == k ? 1.0 : 0.0) - p.sm_h[j]);
    out.dz_draw[K + j] = z.g[3] * dyk + z.g[4] * dhk;
    out.dld_draw[K + j] = inv_ld.g[3] * dyk + inv_ld.g[4] * dhk;
  }
  if (k >= 1) {  // d_k is an internal knot derivative
    out.dz_draw[2 * K + k - 1] += z.g[5] * p.dsig[k - 1];
    out.dld_draw[2 * K + k - 1] += inv_ld.g[5] * p.dsig[k - 1];
  }
  if (k + 1 <= K - 1) {  // d_{k+1} is internal
    out.dz_draw[2 * K + k] += z.g[6] * p.dsig[k];
    out.dld_draw[2 * K + k] += inv_ld.g[6] * p.dsig[k];
  }
  return out;
}

}  // namespace mcnf

#endif
