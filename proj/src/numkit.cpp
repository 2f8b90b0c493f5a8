#include "polres/numkit.hpp"

#include "polres/rng.hpp"

namespace polres {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation: " + s);
}

void NetArch::validate() const {
    if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("NetArch: input/output dims must be >= 1");
    if (hidden.size() > 4) throw std::invalid_argument("NetArch: at most 4 hidden layers");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("NetArch: hidden widths must be >= 1");
}

Eigen::Index NetArch::param_count() const {
    Eigen::Index n = 0;
    for (int l = 0; l < num_layers(); ++l) n += static_cast<Eigen::Index>(fan_out(l)) * (fan_in(l) + 1);
    return n;
}

Eigen::Index NetArch::layer_offset(int layer) const {
    Eigen::Index n = 0;
    for (int l = 0; l < layer; ++l) n += static_cast<Eigen::Index>(fan_out(l)) * (fan_in(l) + 1);
    return n;
}

ParamVector net_init(const NetArch& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    ParamVector p = ParamVector::Zero(arch.param_count());
    for (int l = 0; l < arch.num_layers(); ++l) {
        const int in = arch.fan_in(l);
        const int out = arch.fan_out(l);
        const double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        const Eigen::Index off = arch.layer_offset(l);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(out) * in; ++i) p[off + i] = dist(rng);
    }
    return p;
}

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.allFinite(); }

Eigen::VectorXd net_forward(const NetArch& arch, const ParamVector& params, const Eigen::VectorXd& input) {
    return net_forward_batch<double>(arch, params, input);
}

NetGradients net_backward(const NetArch& arch, const ParamVector& params, const Eigen::VectorXd& input,
                          const Eigen::VectorXd& output_grad) {
    if (output_grad.size() != arch.output_dim) throw std::invalid_argument("output gradient dimension mismatch");
    ForwardCache<double> cache;
    net_forward_batch<double>(arch, params, input, &cache);
    auto res = net_backward_batch<double>(arch, params, cache, output_grad);
    return {std::move(res.param_grad), res.input_grad.col(0)};
}

ParamVector sgd_step(const ParamVector& params, const GradVector& grad, double lr) {
    if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: length mismatch");
    return params - lr * grad;
}

AdamResult adam_step(const AdamState& state, const ParamVector& params, const GradVector& grad, double lr) {
    if (state.m.size() != params.size() || grad.size() != params.size())
        throw std::invalid_argument("adam_step: length mismatch");
    AdamResult r{state, params};
    AdamState& s = r.state;
    s.step += 1;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    r.params.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
    return r;
}

}  // namespace polres
