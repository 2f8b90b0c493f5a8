#include "polres/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace polres {

std::string to_string(ModelKind k) { return k == ModelKind::continuous ? "continuous" : "discrete"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "continuous") return ModelKind::continuous;
    if (s == "discrete") return ModelKind::discrete;
    throw std::invalid_argument("unknown model kind: " + s);
}

ModelKind model_kind_for(EnvKind k) { return k == EnvKind::grid ? ModelKind::discrete : ModelKind::continuous; }

void DynamicsModel::validate() const {
    arch.validate();
    if (arch.input_dim <= arch.output_dim) throw std::invalid_argument("model input must hold state and action");
    if (params.size() != arch.param_count()) throw std::invalid_argument("model params do not match arch");
    if (!params.allFinite()) throw std::invalid_argument("model params not finite");
    if (kind == ModelKind::discrete && normalizer) throw std::invalid_argument("discrete model with normalizer");
    if (normalizer) {
        if (normalizer->mean.size() != arch.input_dim || normalizer->scale.size() != arch.input_dim)
            throw std::invalid_argument("normalizer dimension mismatch");
        if ((normalizer->scale.array() <= 0.0).any()) throw std::invalid_argument("normalizer scale must be positive");
    }
}

bool bit_equal(const DynamicsModel& a, const DynamicsModel& b) {
    if (a.kind != b.kind || !(a.arch == b.arch) || a.params.size() != b.params.size()) return false;
    if (a.normalizer.has_value() != b.normalizer.has_value()) return false;
    if (a.normalizer && !(*a.normalizer == *b.normalizer)) return false;
    return std::equal(a.params.data(), a.params.data() + a.params.size(), b.params.data());
}

DynamicsModel default_grid_model(std::uint64_t seed) {
    DynamicsModel m;
    m.kind = ModelKind::discrete;
    m.arch = NetArch{kGridCells + kGridActions, {64}, kGridCells, Activation::tanh};
    m.params = net_init(m.arch, seed);
    return m;
}

DynamicsModel default_cartpole_model(std::uint64_t seed, std::vector<int> hidden) {
    DynamicsModel m;
    m.kind = ModelKind::continuous;
    m.arch = NetArch{kCartpoleStateDim + kCartpoleActions, std::move(hidden), kCartpoleStateDim, Activation::tanh};
    m.params = net_init(m.arch, seed);
    return m;
}

DynamicsModel fresh_model_like(const DynamicsModel& shape, std::uint64_t seed) {
    DynamicsModel m = shape;
    m.params = net_init(m.arch, seed);
    m.normalizer.reset();
    return m;
}

void EnsembleModel::validate() const {
    if (members.empty()) throw std::invalid_argument("empty ensemble");
    for (const auto& m : members) {
        m.validate();
        if (m.kind != members.front().kind || !(m.arch == members.front().arch))
            throw std::invalid_argument("ensemble members differ in kind or arch");
    }
}

EnsembleModel make_ensemble(const DynamicsModel& shape, std::uint64_t seed, int size) {
    EnsembleModel e;
    for (int i = 0; i < size; ++i) {
        DynamicsModel m = shape;
        m.params = net_init(m.arch, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        e.members.push_back(std::move(m));
    }
    return e;
}

SupportQuerySplit split_support_query(const TransitionBatch& batch, int m, int n, Rng& rng) {
    if (m < 0 || n < 0 || static_cast<std::size_t>(m) + static_cast<std::size_t>(n) > batch.size())
        throw std::invalid_argument("split_support_query: insufficient data");
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates over the first m + n slots.
    for (std::size_t i = 0; i < static_cast<std::size_t>(m + n); ++i) {
        std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
        std::swap(idx[i], idx[d(rng)]);
    }
    SupportQuerySplit out;
    out.support.reserve(m);
    out.query.reserve(n);
    for (int i = 0; i < m; ++i) out.support.push_back(batch[idx[i]]);
    for (int i = 0; i < n; ++i) out.query.push_back(batch[idx[m + i]]);
    return out;
}

Eigen::VectorXd raw_continuous_input(const State& s, int a, int num_actions) {
    const auto& c = std::get<CartpoleState>(s);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(kCartpoleStateDim + num_actions);
    x.head<4>() = c.vec();
    x[kCartpoleStateDim + a] = 1.0;
    return x;
}

namespace {

void require_kind(const DynamicsModel& model, const State& s) {
    const bool grid = std::holds_alternative<GridState>(s);
    if (grid != (model.kind == ModelKind::discrete)) throw std::invalid_argument("model kind does not match state kind");
}

}  // namespace

Normalizer fit_normalizer(const TransitionBatch& batch, int num_actions) {
    if (batch.empty()) throw std::invalid_argument("fit_normalizer: empty batch");
    const int dim = kCartpoleStateDim + num_actions;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
    for (const auto& t : batch) {
        const Eigen::VectorXd x = raw_continuous_input(t.s, t.a, num_actions);
        sum += x;
        sq += x.cwiseProduct(x);
    }
    const double n = static_cast<double>(batch.size());
    Normalizer nz;
    nz.mean = sum / n;
    nz.scale = (sq / n - nz.mean.cwiseProduct(nz.mean)).cwiseMax(0.0).cwiseSqrt();
    for (int i = 0; i < dim; ++i) nz.scale[i] = nz.scale[i] < 1e-6 ? 1.0 : nz.scale[i];
    return nz;
}

Eigen::VectorXd encode_input(const DynamicsModel& model, const State& s, int a) {
    require_kind(model, s);
    if (a < 0 || a >= model.num_actions()) throw std::invalid_argument("action out of range for model");
    if (model.kind == ModelKind::discrete) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(model.arch.input_dim);
        x[std::get<GridState>(s).index()] = 1.0;
        x[model.state_dim() + a] = 1.0;
        return x;
    }
    Eigen::VectorXd x = raw_continuous_input(s, a, model.num_actions());
    if (model.normalizer) x = (x - model.normalizer->mean).cwiseQuotient(model.normalizer->scale);
    return x;
}

EncodedBatch encode_batch(const DynamicsModel& model, const TransitionBatch& batch) {
    EncodedBatch e;
    const auto B = static_cast<Eigen::Index>(batch.size());
    e.inputs.resize(model.arch.input_dim, B);
    if (model.kind == ModelKind::continuous) e.targets.resize(model.state_dim(), B);
    else e.labels.resize(batch.size());
    for (Eigen::Index j = 0; j < B; ++j) {
        const Transition& t = batch[static_cast<std::size_t>(j)];
        e.inputs.col(j) = encode_input(model, t.s, t.a);
        if (model.kind == ModelKind::continuous) {
            e.targets.col(j) = std::get<CartpoleState>(t.s_next).vec() - std::get<CartpoleState>(t.s).vec();
        } else {
            e.labels[static_cast<std::size_t>(j)] = std::get<GridState>(t.s_next).index();
        }
    }
    return e;
}

LossGrad loss_and_grad(const DynamicsModel& model, const EncodedBatch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("loss on empty batch");
    auto r = loss_and_grad_generic<double>(model.kind, model.arch, model.params, batch);
    return {r.loss, std::move(r.grad)};
}

LossGrad loss_and_grad(const DynamicsModel& model, const TransitionBatch& batch) {
    return loss_and_grad(model, encode_batch(model, batch));
}

double loss_continuous(const DynamicsModel& model, const TransitionBatch& batch) {
    if (model.kind != ModelKind::continuous) throw std::invalid_argument("loss_continuous on a discrete model");
    return loss_and_grad(model, batch).loss;
}

double loss_discrete(const DynamicsModel& model, const TransitionBatch& batch) {
    if (model.kind != ModelKind::discrete) throw std::invalid_argument("loss_discrete on a continuous model");
    return loss_and_grad(model, batch).loss;
}

double model_loss(const DynamicsModel& model, const TransitionBatch& batch) {
    return model.kind == ModelKind::continuous ? loss_continuous(model, batch) : loss_discrete(model, batch);
}

GradVector hessian_vector_product(const DynamicsModel& model, const EncodedBatch& batch, const Eigen::VectorXd& v) {
    if (v.size() != model.params.size()) throw std::invalid_argument("hvp: direction length mismatch");
    Vec<Dual> p(model.params.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = Dual(model.params[i], v[i]);
    const auto r = loss_and_grad_generic<Dual>(model.kind, model.arch, p, batch);
    GradVector hv(p.size());
    for (Eigen::Index i = 0; i < hv.size(); ++i) hv[i] = r.grad[i].d;
    return hv;
}

DynamicsModel adapt(const DynamicsModel& model, const TransitionBatch& support, double alpha, int steps) {
    if (support.empty()) throw std::invalid_argument("adapt: empty support set");
    if (steps < 1) throw std::invalid_argument("adapt: steps must be >= 1");
    DynamicsModel out = model;
    const EncodedBatch enc = encode_batch(model, support);
    for (int k = 0; k < steps; ++k) out.params = sgd_step(out.params, loss_and_grad(out, enc).grad, alpha);
    return out;
}

DynamicsModel fit_model(const DynamicsModel& model, const TransitionBatch& data, const FitConfig& cfg, Rng& rng) {
    if (data.empty()) throw std::invalid_argument("fit_model: empty data");
    DynamicsModel out = model;
    const EncodedBatch all = encode_batch(model, data);
    AdamState adam = AdamState::zeros(out.params.size());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(all.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const Eigen::Index mb = std::max<Eigen::Index>(1, cfg.minibatch);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (Eigen::Index start = 0; start < all.size(); start += mb) {
            const Eigen::Index len = std::min(mb, all.size() - start);
            EncodedBatch sub;
            sub.inputs.resize(all.inputs.rows(), len);
            if (model.kind == ModelKind::continuous) sub.targets.resize(all.targets.rows(), len);
            else sub.labels.resize(static_cast<std::size_t>(len));
            for (Eigen::Index j = 0; j < len; ++j) {
                const Eigen::Index src = idx[static_cast<std::size_t>(start + j)];
                sub.inputs.col(j) = all.inputs.col(src);
                if (model.kind == ModelKind::continuous) sub.targets.col(j) = all.targets.col(src);
                else sub.labels[static_cast<std::size_t>(j)] = all.labels[static_cast<std::size_t>(src)];
            }
            LossGrad lg = loss_and_grad(out, sub);
            // Continuous loss is a sum; rescale to a per-sample mean for Adam.
            if (model.kind == ModelKind::continuous) lg.grad /= static_cast<double>(len);
            auto r = adam_step(adam, out.params, lg.grad, cfg.lr);
            adam = std::move(r.state);
            out.params = std::move(r.params);
        }
    }
    return out;
}

Eigen::VectorXd successor_distribution(const DynamicsModel& model, const State& s, int a) {
    if (model.kind != ModelKind::discrete) throw std::invalid_argument("successor_distribution needs a discrete model");
    const Eigen::VectorXd logits = net_forward(model.arch, model.params, encode_input(model, s, a));
    const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

State predict_next(const DynamicsModel& model, const State& s, int a) {
    if (model.kind == ModelKind::discrete) {
        Eigen::Index best = 0;
        successor_distribution(model, s, a).maxCoeff(&best);
        return GridState::from_index(static_cast<int>(best));
    }
    const Eigen::VectorXd delta = net_forward(model.arch, model.params, encode_input(model, s, a));
    return CartpoleState::from_vec(std::get<CartpoleState>(s).vec() + delta);
}

State predict_next(const DynamicsModel& model, const State& s, int a, Rng& rng) {
    if (model.kind == ModelKind::continuous) return predict_next(model, s, a);
    const Eigen::VectorXd p = successor_distribution(model, s, a);
    const double u = uniform01(rng);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return GridState::from_index(static_cast<int>(i));
    }
    return GridState::from_index(static_cast<int>(p.size() - 1));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ensemble_moments(const EnsembleModel& ens, const State& s, int a) {
    if (ens.members.empty()) throw std::invalid_argument("empty ensemble");
    if (ens.members.front().kind != ModelKind::continuous)
        throw std::invalid_argument("stochastic ensemble prediction needs continuous members");
    const auto n = static_cast<double>(ens.members.size());
    std::vector<Eigen::VectorXd> preds;
    preds.reserve(ens.members.size());
    for (const auto& m : ens.members) preds.push_back(std::get<CartpoleState>(predict_next(m, s, a)).vec());
    // Offsets from the first member keep the mean exact when members agree.
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(preds.front().size());
    for (const auto& p : preds) offset += p - preds.front();
    const Eigen::VectorXd mean = preds.front() + offset / n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (const auto& p : preds) var += (p - mean).cwiseProduct(p - mean);
    return {mean, (var / n).cwiseSqrt()};
}

State predict_next_stochastic(const EnsembleModel& ens, const State& s, int a, Rng& rng) {
    auto [mean, sd] = ensemble_moments(ens, s, a);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd out(mean.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = mean[i] + sd[i] * z(rng);
    return CartpoleState::from_vec(out);
}

Eigen::MatrixXd predict_next_batch(const DynamicsModel& model, const Eigen::MatrixXd& states,
                                   const std::vector<int>& actions) {
    if (model.kind != ModelKind::continuous) throw std::invalid_argument("predict_next_batch needs a continuous model");
    const Eigen::Index B = states.cols();
    const int sd = model.state_dim();
    Eigen::MatrixXd in = Eigen::MatrixXd::Zero(model.arch.input_dim, B);
    in.topRows(sd) = states;
    for (Eigen::Index j = 0; j < B; ++j) in(sd + actions[static_cast<std::size_t>(j)], j) = 1.0;
    if (model.normalizer) {
        in.colwise() -= model.normalizer->mean;
        in.array().colwise() /= model.normalizer->scale.array();
    }
    return states + net_forward_batch<double>(model.arch, model.params, in);
}

// ----------------------------------------------------------------- checkpoint

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_checkpoint(const DynamicsModel& model) {
    nlohmann::json j;
    j["version"] = 1;
    j["kind"] = to_string(model.kind);
    j["arch"] = {{"input_dim", model.arch.input_dim},
                 {"hidden", model.arch.hidden},
                 {"output_dim", model.arch.output_dim},
                 {"activation", to_string(model.arch.activation)}};
    if (model.normalizer) {
        j["normalizer"] = {{"mean", to_std(model.normalizer->mean)}, {"scale", to_std(model.normalizer->scale)}};
    } else {
        j["normalizer"] = nullptr;
    }
    j["params"] = to_std(model.params);
    return j;
}

DynamicsModel from_checkpoint(const nlohmann::json& j) {
    try {
        if (!j.is_object()) throw std::invalid_argument("checkpoint is not an object");
        for (const auto& [key, _] : j.items())
            if (key != "version" && key != "kind" && key != "arch" && key != "normalizer" && key != "params")
                throw std::invalid_argument("unknown checkpoint key: " + key);
        if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported checkpoint version");
        DynamicsModel m;
        m.kind = model_kind_from_string(j.at("kind").get<std::string>());
        const auto& a = j.at("arch");
        m.arch.input_dim = a.at("input_dim").get<int>();
        m.arch.hidden = a.at("hidden").get<std::vector<int>>();
        m.arch.output_dim = a.at("output_dim").get<int>();
        m.arch.activation = activation_from_string(a.at("activation").get<std::string>());
        if (!j.at("normalizer").is_null()) {
            const auto& nz = j.at("normalizer");
            m.normalizer = Normalizer{from_std(nz.at("mean").get<std::vector<double>>()),
                                      from_std(nz.at("scale").get<std::vector<double>>())};
        }
        m.params = from_std(j.at("params").get<std::vector<double>>());
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const DynamicsModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f << to_checkpoint(model).dump(2) << "\n";
}

DynamicsModel load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed checkpoint: ") + e.what());
    }
    return from_checkpoint(j);
}

}  // namespace polres
