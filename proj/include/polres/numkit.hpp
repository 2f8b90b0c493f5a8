// Small fully-connected networks with exact reverse-mode gradients, plus
// first-order optimizers. Everything is templated on the scalar type so the
// same code runs on doubles and on forward-mode dual numbers (the latter gives
// exact Hessian-vector products by differentiating the backward pass).
//
// Canonical parameter layout, per layer in order: weight matrix W (rows =
// fan_out, cols = fan_in) stored row-major, followed by bias b (fan_out).
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace polres {

enum class Activation { tanh, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct NetArch {
    int input_dim = 1;
    std::vector<int> hidden;
    int output_dim = 1;
    Activation activation = Activation::tanh;

    /// Throws std::invalid_argument unless every dim is >= 1 and there are at
    /// most four hidden layers.
    void validate() const;

    int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
    int fan_in(int layer) const { return layer == 0 ? input_dim : hidden[layer - 1]; }
    int fan_out(int layer) const { return layer == num_layers() - 1 ? output_dim : hidden[layer]; }
    Eigen::Index param_count() const;
    /// Offset of layer `layer`'s weight block inside the flat parameter vector.
    Eigen::Index layer_offset(int layer) const;

    bool operator==(const NetArch&) const = default;
};

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using ParamVector = Eigen::VectorXd;
using GradVector = Eigen::VectorXd;

/// Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases zero.
ParamVector net_init(const NetArch& arch, std::uint64_t seed);

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v);

// ---------------------------------------------------------------------------
// Forward-mode dual number. `v` is the value, `d` the directional derivative.

struct Dual {
    double v = 0.0;
    double d = 0.0;

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit from double by design of Eigen scalars
    Dual(double value, double tangent) : v(value), d(tangent) {}

    Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
    Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
    Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
    Dual& operator/=(const Dual& o) { d = (d * o.v - v * o.d) / (o.v * o.v); v /= o.v; return *this; }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v && a.d == b.d; }
inline bool operator!=(const Dual& a, const Dual& b) { return !(a == b); }

inline Dual tanh(const Dual& a) {
    const double t = std::tanh(a.v);
    return {t, (1.0 - t * t) * a.d};
}
inline Dual exp(const Dual& a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sqrt(const Dual& a) {
    const double s = std::sqrt(a.v);
    return {s, a.d / (2.0 * s)};
}
inline Dual abs(const Dual& a) { return a.v < 0 ? -a : a; }
inline bool isfinite(const Dual& a) { return std::isfinite(a.v) && std::isfinite(a.d); }
inline std::ostream& operator<<(std::ostream& os, const Dual& a) { return os << a.v << "+" << a.d << "e"; }

/// Value part of a scalar; identity for double.
inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

}  // namespace polres

namespace Eigen {
template <>
struct NumTraits<polres::Dual> : NumTraits<double> {
    using Real = polres::Dual;
    using NonInteger = polres::Dual;
    using Nested = polres::Dual;
    using Literal = polres::Dual;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 2,
        AddCost = 2,
        MulCost = 4
    };
};
}  // namespace Eigen

namespace polres {

namespace detail {

template <typename Scalar>
Scalar activate(const Scalar& z, Activation act) {
    using std::tanh;
    if (act == Activation::tanh) return tanh(z);
    return z > Scalar(0.0) ? z : Scalar(0.0);
}

// Derivative expressed through the activation output `a` (tanh) or input `z`.
template <typename Scalar>
Scalar activate_grad(const Scalar& z, const Scalar& a, Activation act) {
    if (act == Activation::tanh) return Scalar(1.0) - a * a;
    return z > Scalar(0.0) ? Scalar(1.0) : Scalar(0.0);
}

template <typename Scalar>
using RowMajorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename Scalar>
using MutRowMajorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline void check_params(const NetArch& arch, Eigen::Index n) {
    if (n != arch.param_count())
        throw std::invalid_argument("parameter vector length " + std::to_string(n) + " does not match arch (" +
                                    std::to_string(arch.param_count()) + ")");
}

}  // namespace detail

/// Cached activations of a batched forward pass; column j is sample j.
template <typename Scalar>
struct ForwardCache {
    std::vector<Mat<Scalar>> pre;   // z per layer
    std::vector<Mat<Scalar>> post;  // a per layer; post[0] is the input batch
};

template <typename Scalar>
Mat<Scalar> net_forward_batch(const NetArch& arch, const Eigen::Ref<const Vec<Scalar>>& params,
                              const Eigen::Ref<const Mat<Scalar>>& inputs, ForwardCache<Scalar>* cache = nullptr) {
    detail::check_params(arch, params.size());
    if (inputs.rows() != arch.input_dim)
        throw std::invalid_argument("input dimension mismatch: got " + std::to_string(inputs.rows()) + ", expected " +
                                    std::to_string(arch.input_dim));
    const int layers = arch.num_layers();
    if (cache) {
        cache->pre.assign(layers, {});
        cache->post.assign(layers + 1, {});
        cache->post[0] = inputs;
    }
    Mat<Scalar> a = inputs;
    Eigen::Index off = 0;
    for (int l = 0; l < layers; ++l) {
        const int in = arch.fan_in(l);
        const int out = arch.fan_out(l);
        detail::RowMajorMap<Scalar> W(params.data() + off, out, in);
        off += static_cast<Eigen::Index>(out) * in;
        Eigen::Map<const Vec<Scalar>> b(params.data() + off, out);
        off += out;
        Mat<Scalar> z = W * a;
        z.colwise() += b;
        if (l + 1 < layers) {
            if constexpr (std::is_same_v<Scalar, double>) {
                // Vectorised exp-based tanh; std::tanh dominates planner cost.
                if (arch.activation == Activation::tanh)
                    a = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
                else
                    a = z.cwiseMax(0.0);
            } else {
                a = z.unaryExpr([&](const Scalar& x) { return detail::activate(x, arch.activation); });
            }
        } else {
            a = z;
        }
        if (cache) {
            cache->pre[l] = std::move(z);
            cache->post[l + 1] = a;
        }
    }
    return a;
}

template <typename Scalar>
struct BackwardResult {
    Vec<Scalar> param_grad;
    Mat<Scalar> input_grad;
};

/// Gradients of L = sum_j <output_j, output_grad_j> with respect to the
/// parameters (summed over the batch) and to each input column.
template <typename Scalar>
BackwardResult<Scalar> net_backward_batch(const NetArch& arch, const Eigen::Ref<const Vec<Scalar>>& params,
                                          const ForwardCache<Scalar>& cache,
                                          const Eigen::Ref<const Mat<Scalar>>& output_grad) {
    detail::check_params(arch, params.size());
    const int layers = arch.num_layers();
    if (output_grad.rows() != arch.output_dim || output_grad.cols() != cache.post[0].cols())
        throw std::invalid_argument("output gradient dimension mismatch");
    BackwardResult<Scalar> res;
    res.param_grad = Vec<Scalar>::Zero(params.size());
    Mat<Scalar> dz = output_grad;
    for (int l = layers - 1; l >= 0; --l) {
        const int in = arch.fan_in(l);
        const int out = arch.fan_out(l);
        const Eigen::Index off = arch.layer_offset(l);
        detail::RowMajorMap<Scalar> W(params.data() + off, out, in);
        detail::MutRowMajorMap<Scalar> dW(res.param_grad.data() + off, out, in);
        Eigen::Map<Vec<Scalar>> db(res.param_grad.data() + off + static_cast<Eigen::Index>(out) * in, out);
        const Mat<Scalar>& a_prev = cache.post[l];
        dW.noalias() = dz * a_prev.transpose();
        db = dz.rowwise().sum();
        Mat<Scalar> da = W.transpose() * dz;
        if (l == 0) {
            res.input_grad = std::move(da);
        } else {
            const Mat<Scalar>& z_prev = cache.pre[l - 1];
            const Mat<Scalar>& a_prev_act = cache.post[l];
            dz.resize(da.rows(), da.cols());
            for (Eigen::Index j = 0; j < da.cols(); ++j)
                for (Eigen::Index i = 0; i < da.rows(); ++i)
                    dz(i, j) = da(i, j) * detail::activate_grad(z_prev(i, j), a_prev_act(i, j), arch.activation);
        }
    }
    return res;
}

/// Single-sample forward pass.
Eigen::VectorXd net_forward(const NetArch& arch, const ParamVector& params, const Eigen::VectorXd& input);

struct NetGradients {
    GradVector params;
    Eigen::VectorXd input;
};

/// Single-sample backward pass for L = output . output_grad.
NetGradients net_backward(const NetArch& arch, const ParamVector& params, const Eigen::VectorXd& input,
                          const Eigen::VectorXd& output_grad);

ParamVector sgd_step(const ParamVector& params, const GradVector& grad, double lr);

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState zeros(Eigen::Index n) {
        AdamState s;
        s.m = Eigen::VectorXd::Zero(n);
        s.v = Eigen::VectorXd::Zero(n);
        return s;
    }
};

struct AdamResult {
    AdamState state;
    ParamVector params;
};

/// Bias-corrected Adam update: x -= lr * m_hat / (sqrt(v_hat) + eps).
AdamResult adam_step(const AdamState& state, const ParamVector& params, const GradVector& grad, double lr);

}  // namespace polres
