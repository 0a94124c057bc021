#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taillab/matrix.hpp"

namespace taillab {

// Feed-forward classifier: rectifier hidden layers, identity output.
// weights[l] is (dims[l] x dims[l+1]); forward is h W + b.
struct Classifier {
    std::vector<int> layer_dims;  // input dim, hidden..., num classes
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    int input_dim() const { return layer_dims.front(); }
    int num_classes() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
};

// Fan-in-scaled uniform weights in (-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
Classifier init_model(const std::vector<int>& layer_dims, std::uint64_t seed);

Matrix forward(const Classifier& model, const Matrix& batch);

// Post-activation values per layer, kept for backprop.
struct ForwardTrace {
    std::vector<Matrix> activations;  // [0] = input, ..., [L] = logits
};

Matrix forward_trace(const Classifier& model, const Matrix& batch, ForwardTrace& trace);

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

// Backpropagates dL/dlogits through the trace. Sequential reductions keep
// results bit-identical across runs.
Gradients backward(const Classifier& model, const ForwardTrace& trace, const Matrix& dlogits);

// Max-shifted softmax over one logit vector / each row of a matrix.
std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

struct LossResult {
    double value = 0.0;
    Matrix dlogits;  // same shape as the logits the loss was evaluated on
};

// Mean over the batch of -sum_i q_i log softmax_i. Gradient (softmax - q)/B.
LossResult ce_loss_soft(const Matrix& logits, const Matrix& targets);

// Mean over the batch of ||q - softmax(f)||^2.
LossResult mse_loss(const Matrix& logits, const Matrix& targets);

// Mean over the batch of -sum_i q_i [f_i - log sum_j alpha_ij exp(f_j)].
// alpha must be entrywise positive with unit diagonal, which keeps the loss
// nonnegative (each log argument is >= 1).
LossResult balanced_loss(const Matrix& logits, const Matrix& targets, const Matrix& alpha);

// Class-balanced uniformity regularizer: sum_i (n_min/n_i) pi_i log(pi_i / qbar_i)
// with pi_i = 1/C and qbar the class-balanced mean prediction over the batch
// (per-class means over the classes present, averaged). qbar is floored at
// 1e-12 before the log.
LossResult reg_loss(const Matrix& logits, const std::vector<int>& hard_labels,
                    const std::vector<std::int64_t>& full_train_counts);

struct OptimizerConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double initial_lr = 0.02;
    int drop_epoch = 150;      // lr divided by drop_factor from this epoch on
    double drop_factor = 10.0;
};

struct OptimizerState {
    OptimizerConfig config;
    std::vector<Matrix> weight_velocity;
    std::vector<std::vector<double>> bias_velocity;
};

OptimizerState make_optimizer(const Classifier& model, const OptimizerConfig& config);

double learning_rate(const OptimizerConfig& config, int epoch);

// Classical momentum with decoupled schedule:
// v <- m v + (g + wd theta); theta <- theta - lr(epoch) v.
void sgd_step(Classifier& model, OptimizerState& state, const Gradients& grads, int epoch);

// Checkpoint format: header line of layer dims, then per layer one line of
// row-major weights and one line of biases, all at 17 significant digits.
void save_model(const Classifier& model, const std::string& path);
Classifier load_model(const std::string& path);

namespace detail {
// Test hook: flips the sign of the balanced-loss gradient so gradient
// checkers can prove they would catch a broken backward pass.
extern bool balanced_loss_gradient_sign_flip;
}  // namespace detail

}  // namespace taillab
