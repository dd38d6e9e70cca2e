#ifndef L2GP_REFERENCE_HPP_
#define L2GP_REFERENCE_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "l2gp/data.hpp"
#include "l2gp/model.hpp"
#include "l2gp/tensor.hpp"

/**
 * Hand-written forward and backward passes of the dual-head network in an
 * arbitrary scalar type, independent of the autodiff graph.
 *
 * Instantiated with long double it serves as the finite-difference oracle
 * for network-level gradient checks: at double precision the difference
 * quotient of a mathematically invariant coordinate (a linear bias feeding
 * batch normalization) is dominated by roundoff.
 */
namespace l2gp::reference {

template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), v(r * c, fill) {}
  T& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

template <typename T>
Mat<T> from_tensor(const Tensor& t) {
  Mat<T> m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) m.v[i] = static_cast<T>(t[i]);
  return m;
}

/// Parameters in ParamSet order.
template <typename T>
struct Params {
  std::vector<Mat<T>> W;
  std::vector<Mat<T>> H1;
  std::vector<Mat<T>> H2;
};

template <typename T>
Params<T> params_of(const DualHeadModel& m) {
  Params<T> p;
  for (const auto& v : m.W.vars()) p.W.push_back(from_tensor<T>(v.value()));
  for (const auto& v : m.H1.vars()) p.H1.push_back(from_tensor<T>(v.value()));
  for (const auto& v : m.H2.vars()) p.H2.push_back(from_tensor<T>(v.value()));
  return p;
}

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k)
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

template <typename T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {  // a^T b
  Mat<T> out(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k)
    for (std::size_t i = 0; i < a.cols; ++i)
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += a(k, i) * b(k, j);
  return out;
}

template <typename T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {  // a b^T
  Mat<T> out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      for (std::size_t k = 0; k < a.cols; ++k) out(i, j) += a(i, k) * b(j, k);
  return out;
}

template <typename T>
Mat<T> add_row(Mat<T> a, const Mat<T>& row) {
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) a(i, j) += row.v[j];
  return a;
}

template <typename T>
Mat<T> column_sums(const Mat<T>& a) {
  Mat<T> s(1, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) s.v[j] += a(i, j);
  return s;
}

template <typename T>
struct BnCache {
  Mat<T> xhat;
  std::vector<T> inv_std;
};

/// Batch-statistics normalization (biased variance); returns the affine output.
template <typename T>
Mat<T> bn_forward(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, T eps, BnCache<T>& cache) {
  const std::size_t n = x.rows, c = x.cols;
  cache.xhat = Mat<T>(n, c);
  cache.inv_std.assign(c, T(0));
  Mat<T> y(n, c);
  for (std::size_t j = 0; j < c; ++j) {
    T mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + eps);
    cache.inv_std[j] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      cache.xhat(i, j) = (x(i, j) - mean) * inv;
      y(i, j) = gamma.v[j] * cache.xhat(i, j) + beta.v[j];
    }
  }
  return y;
}

/// Gradients of the BN input, gamma and beta given the output gradient.
template <typename T>
Mat<T> bn_backward(const Mat<T>& dy, const Mat<T>& gamma, const BnCache<T>& cache, Mat<T>& dgamma, Mat<T>& dbeta) {
  const std::size_t n = dy.rows, c = dy.cols;
  Mat<T> dx(n, c);
  dgamma = Mat<T>(1, c);
  dbeta = Mat<T>(1, c);
  for (std::size_t j = 0; j < c; ++j) {
    T sum_d = 0, sum_dx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T dxhat = dy(i, j) * gamma.v[j];
      dgamma.v[j] += dy(i, j) * cache.xhat(i, j);
      dbeta.v[j] += dy(i, j);
      sum_d += dxhat;
      sum_dx += dxhat * cache.xhat(i, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const T dxhat = dy(i, j) * gamma.v[j];
      dx(i, j) = cache.inv_std[j] / static_cast<T>(n) *
                 (static_cast<T>(n) * dxhat - sum_d - cache.xhat(i, j) * sum_dx);
    }
  }
  return dx;
}

template <typename T>
struct FeatureCache {
  BnCache<T> input_bn;
  std::vector<Mat<T>> layer_inputs;
  std::vector<BnCache<T>> bn;
  std::vector<Mat<T>> pre_relu;
};

/// Features extractor forward with batch statistics everywhere.
template <typename T>
Mat<T> features(const ModelSpec& spec, const std::vector<Mat<T>>& W, const Mat<T>& x, T eps, FeatureCache<T>& cache) {
  std::size_t p = 0;
  Mat<T> h = x;
  if (spec.input_bn) {
    h = bn_forward(h, W[0], W[1], eps, cache.input_bn);
    p = 2;
  }
  cache.layer_inputs.clear();
  cache.bn.clear();
  cache.pre_relu.clear();
  for (std::size_t l = 0; l < spec.hidden.size(); ++l, p += 4) {
    cache.layer_inputs.push_back(h);
    Mat<T> a = add_row(matmul(h, W[p]), W[p + 1]);
    BnCache<T> bc;
    Mat<T> z = bn_forward(a, W[p + 2], W[p + 3], eps, bc);
    cache.bn.push_back(std::move(bc));
    cache.pre_relu.push_back(z);
    for (auto& v : z.v) v = v > T(0) ? v : T(0);
    h = std::move(z);
  }
  return h;
}

template <typename T>
Mat<T> head(const std::vector<Mat<T>>& H, const Mat<T>& f) {
  return add_row(matmul(f, H[0]), H[1]);
}

template <typename T>
T cross_entropy(const Mat<T>& z, std::span<const int> y) {
  T total = 0;
  for (std::size_t i = 0; i < z.rows; ++i) {
    T m = z(i, 0);
    for (std::size_t j = 1; j < z.cols; ++j) m = std::max(m, z(i, j));
    T s = 0;
    for (std::size_t j = 0; j < z.cols; ++j) s += std::exp(z(i, j) - m);
    total += m + std::log(s) - z(i, static_cast<std::size_t>(y[i]));
  }
  return total / static_cast<T>(z.rows);
}

template <typename T>
T l1_distance(const Mat<T>& a, const Mat<T>& b) {
  T total = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) total += std::fabs(a.v[i] - b.v[i]);
  return total / static_cast<T>(a.rows);
}

/// Gradient of cross_entropy(head(H, f(W, x)), y) with respect to W.
template <typename T>
std::vector<Mat<T>> cross_entropy_grad_w(const ModelSpec& spec, const std::vector<Mat<T>>& W,
                                         const std::vector<Mat<T>>& H, const Mat<T>& x, std::span<const int> y,
                                         T eps) {
  FeatureCache<T> cache;
  const Mat<T> f = features(spec, W, x, eps, cache);
  const Mat<T> z = head(H, f);
  const std::size_t n = z.rows, k = z.cols;
  Mat<T> dz(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    T m = z(i, 0);
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, z(i, j));
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z(i, j) - m);
    for (std::size_t j = 0; j < k; ++j) {
      const T prob = std::exp(z(i, j) - m) / s;
      dz(i, j) = (prob - (static_cast<int>(j) == y[i] ? T(1) : T(0))) / static_cast<T>(n);
    }
  }
  std::vector<Mat<T>> grads(W.size());
  Mat<T> dh = matmul_nt(dz, H[0]);
  const std::size_t first = spec.input_bn ? 2 : 0;
  for (std::size_t l = spec.hidden.size(); l-- > 0;) {
    const std::size_t p = first + 4 * l;
    Mat<T> dzl = dh;
    for (std::size_t i = 0; i < dzl.v.size(); ++i) {
      if (!(cache.pre_relu[l].v[i] > T(0))) dzl.v[i] = T(0);
    }
    Mat<T> da = bn_backward(dzl, W[p + 2], cache.bn[l], grads[p + 2], grads[p + 3]);
    grads[p] = matmul_tn(cache.layer_inputs[l], da);
    grads[p + 1] = column_sums(da);
    dh = matmul_nt(da, W[p]);
  }
  if (spec.input_bn) bn_backward(dh, W[0], cache.input_bn, grads[0], grads[1]);
  return grads;
}

/**
 * Two-batch objective value. With `fixed_direction` the perturbation
 * direction is that constant; otherwise it is recomputed from W. With
 * `fixed_plain` the unperturbed second-batch prediction is that constant.
 */
template <typename T>
T l2gp_objective(const ModelSpec& spec, const Params<T>& p, const Batch& b1, const Batch& b2, T alpha, T lr_plus,
                 bool single_head, T eps, const std::vector<Mat<T>>* fixed_direction = nullptr,
                 const Mat<T>* fixed_plain = nullptr) {
  const Mat<T> x1 = from_tensor<T>(b1.x);
  const Mat<T> x2 = from_tensor<T>(b2.x);
  const std::vector<Mat<T>>& H2 = single_head ? p.H1 : p.H2;
  FeatureCache<T> cache;
  const Mat<T> f1 = features(spec, p.W, x1, eps, cache);
  const T l1 = cross_entropy(head(p.H1, f1), b1.y);
  const T l2 = single_head ? l1 : cross_entropy(head(H2, f1), b1.y);

  const std::vector<Mat<T>> g =
      fixed_direction ? *fixed_direction : cross_entropy_grad_w(spec, p.W, H2, x1, b1.y, eps);
  std::vector<Mat<T>> w_plus = p.W;
  for (std::size_t i = 0; i < w_plus.size(); ++i)
    for (std::size_t j = 0; j < w_plus[i].v.size(); ++j) w_plus[i].v[j] += lr_plus * g[i].v[j];

  const Mat<T> plain = fixed_plain ? *fixed_plain : head(H2, features(spec, p.W, x2, eps, cache));
  const Mat<T> perturbed = head(H2, features(spec, w_plus, x2, eps, cache));
  const T l_sa = l1_distance(plain, perturbed);
  return (single_head ? l1 : (l1 + l2) / T(2)) + alpha * l_sa;
}

}  // namespace l2gp::reference

#endif  // L2GP_REFERENCE_HPP_
