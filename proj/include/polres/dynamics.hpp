// Learnable environment-dynamics models: next-state regressors for
// continuous families and categorical successor models for the grid.
#pragma once

#include "polres/envs.hpp"
#include "polres/numkit.hpp"
#include "polres/rng.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace polres {

enum class ModelKind { continuous, discrete };
std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
ModelKind model_kind_for(EnvKind k);

/// Per-input-dimension affine normalization: x_n = (x - mean) / scale.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    bool operator==(const Normalizer& o) const {
        return mean.size() == o.mean.size() && scale.size() == o.scale.size() && mean == o.mean && scale == o.scale;
    }
};

/// Continuous models predict the state delta s' - s from [s; onehot(a)].
/// Discrete models map [onehot(s); onehot(a)] to logits over successor cells.
struct DynamicsModel {
    ModelKind kind = ModelKind::discrete;
    NetArch arch;
    ParamVector params;
    std::optional<Normalizer> normalizer;  // continuous only

    int state_dim() const { return arch.output_dim; }
    int num_actions() const { return arch.input_dim - arch.output_dim; }
    /// Throws std::invalid_argument if arch, params and normalizer disagree.
    void validate() const;
};

bool bit_equal(const DynamicsModel& a, const DynamicsModel& b);

/// (|S| + |A|) -> [64] tanh -> |S| logits.
DynamicsModel default_grid_model(std::uint64_t seed);
/// (4 + 2) -> hidden (default [64, 64]) tanh -> 4 deltas.
DynamicsModel default_cartpole_model(std::uint64_t seed, std::vector<int> hidden = {64, 64});
DynamicsModel fresh_model_like(const DynamicsModel& shape, std::uint64_t seed);

struct EnsembleModel {
    std::vector<DynamicsModel> members;
    void validate() const;
};

/// Independently initialised copies of `shape` (default five members).
EnsembleModel make_ensemble(const DynamicsModel& shape, std::uint64_t seed, int size = 5);

using TransitionBatch = std::vector<Transition>;

struct SupportQuerySplit {
    TransitionBatch support;
    TransitionBatch query;
};

/// Uniform sample without replacement: m support and n disjoint query items.
SupportQuerySplit split_support_query(const TransitionBatch& batch, int m, int n, Rng& rng);

/// Unnormalised continuous model input [s; onehot(a)].
Eigen::VectorXd raw_continuous_input(const State& s, int a, int num_actions);

/// Mean and standard deviation (floored at 1e-6; 1 for constant dims) of the
/// raw model inputs seen in `batch`.
Normalizer fit_normalizer(const TransitionBatch& batch, int num_actions);

// ------------------------------------------------------------------- encoding

Eigen::VectorXd encode_input(const DynamicsModel& model, const State& s, int a);

struct EncodedBatch {
    Eigen::MatrixXd inputs;   // input_dim x B
    Eigen::MatrixXd targets;  // continuous: state_dim x B deltas
    std::vector<int> labels;  // discrete: successor index per column
    Eigen::Index size() const { return inputs.cols(); }
};

EncodedBatch encode_batch(const DynamicsModel& model, const TransitionBatch& batch);

// --------------------------------------------------------------------- losses

/// Sum over the batch of squared 2-norm errors on the predicted delta.
double loss_continuous(const DynamicsModel& model, const TransitionBatch& batch);
/// Mean negative natural-log likelihood of the observed successor.
double loss_discrete(const DynamicsModel& model, const TransitionBatch& batch);
/// Dispatches on the model kind.
double model_loss(const DynamicsModel& model, const TransitionBatch& batch);

template <typename Scalar>
struct ScalarLossGrad {
    Scalar loss;
    Vec<Scalar> grad;
};

/// Loss and its parameter gradient for the model family `kind`.
template <typename Scalar>
ScalarLossGrad<Scalar> loss_and_grad_generic(ModelKind kind, const NetArch& arch, const Vec<Scalar>& params,
                                             const EncodedBatch& batch) {
    using std::exp;
    using std::log;
    const Eigen::Index B = batch.size();
    const Mat<Scalar> inputs = batch.inputs.template cast<Scalar>();
    ForwardCache<Scalar> cache;
    const Mat<Scalar> out = net_forward_batch<Scalar>(arch, params, inputs, &cache);
    Mat<Scalar> dout(out.rows(), out.cols());
    Scalar loss(0.0);
    if (kind == ModelKind::continuous) {
        const Mat<Scalar> residual = out - batch.targets.template cast<Scalar>();
        for (Eigen::Index j = 0; j < residual.cols(); ++j)
            for (Eigen::Index i = 0; i < residual.rows(); ++i) loss += residual(i, j) * residual(i, j);
        dout = Scalar(2.0) * residual;
    } else {
        const Scalar inv_b(1.0 / static_cast<double>(B));
        for (Eigen::Index j = 0; j < B; ++j) {
            Scalar mx = out(0, j);
            for (Eigen::Index i = 1; i < out.rows(); ++i)
                if (out(i, j) > mx) mx = out(i, j);
            Scalar sum(0.0);
            for (Eigen::Index i = 0; i < out.rows(); ++i) {
                dout(i, j) = exp(out(i, j) - mx);
                sum += dout(i, j);
            }
            const int y = batch.labels[static_cast<std::size_t>(j)];
            loss -= (out(y, j) - mx - log(sum)) * inv_b;
            for (Eigen::Index i = 0; i < out.rows(); ++i) dout(i, j) = dout(i, j) / sum * inv_b;
            dout(y, j) -= inv_b;
        }
    }
    auto back = net_backward_batch<Scalar>(arch, params, cache, dout);
    return {loss, std::move(back.param_grad)};
}

struct LossGrad {
    double loss = 0.0;
    GradVector grad;
};

LossGrad loss_and_grad(const DynamicsModel& model, const EncodedBatch& batch);
LossGrad loss_and_grad(const DynamicsModel& model, const TransitionBatch& batch);

/// Exact H(params) * v for the model's loss on `batch`, by forward-mode
/// differentiation of the reverse-mode gradient.
GradVector hessian_vector_product(const DynamicsModel& model, const EncodedBatch& batch, const Eigen::VectorXd& v);

/// `steps` full-batch SGD steps at rate `alpha` on the matching loss.
DynamicsModel adapt(const DynamicsModel& model, const TransitionBatch& support, double alpha, int steps);

struct FitConfig {
    int epochs = 50;
    int minibatch = 64;
    double lr = 1e-3;
};

/// Minibatch Adam training on mean loss; used for agents that learn a model
/// on their own, outside the federation.
DynamicsModel fit_model(const DynamicsModel& model, const TransitionBatch& data, const FitConfig& cfg, Rng& rng);

// ----------------------------------------------------------------- prediction

/// Softmax over successor cells (discrete models).
Eigen::VectorXd successor_distribution(const DynamicsModel& model, const State& s, int a);
/// Deterministic prediction: s + delta (continuous) or the argmax cell.
State predict_next(const DynamicsModel& model, const State& s, int a);
/// Sampled prediction: categorical draw (discrete); continuous ignores rng.
State predict_next(const DynamicsModel& model, const State& s, int a, Rng& rng);

/// Per-dimension ensemble mean and population standard deviation of the
/// predicted next state.
std::pair<Eigen::VectorXd, Eigen::VectorXd> ensemble_moments(const EnsembleModel& ens, const State& s, int a);
/// Draw from Normal(ensemble mean, ensemble std) per state dimension.
State predict_next_stochastic(const EnsembleModel& ens, const State& s, int a, Rng& rng);

/// Batched deterministic next-state prediction for a continuous model.
/// `states` is state_dim x B; `actions` has B entries.
Eigen::MatrixXd predict_next_batch(const DynamicsModel& model, const Eigen::MatrixXd& states,
                                   const std::vector<int>& actions);

// ----------------------------------------------------------------- checkpoint

nlohmann::json to_checkpoint(const DynamicsModel& model);
/// Throws std::invalid_argument on any schema violation.
DynamicsModel from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const DynamicsModel& model, const std::string& path);
DynamicsModel load_checkpoint(const std::string& path);

}  // namespace polres
