#include "taillab/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "taillab/dataset.hpp"
#include "taillab/rng.hpp"

namespace taillab {

namespace detail {
bool balanced_loss_gradient_sign_flip = false;
}

Classifier init_model(const std::vector<int>& layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("init_model: need at least input and output dims");
    for (int d : layer_dims) {
        if (d < 1) throw std::invalid_argument("init_model: layer dims must be >= 1");
    }
    Classifier model;
    model.layer_dims = layer_dims;
    Rng rng(splitmix64(seed ^ 0x1417u));
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const auto in = static_cast<std::size_t>(layer_dims[l]);
        const auto out = static_cast<std::size_t>(layer_dims[l + 1]);
        Matrix w(in, out);
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(out, 0.0);
    }
    return model;
}

Matrix forward_trace(const Classifier& model, const Matrix& batch, ForwardTrace& trace) {
    if (batch.cols() != static_cast<std::size_t>(model.input_dim()))
        throw std::invalid_argument("forward: batch width != model input dim");
    trace.activations.clear();
    trace.activations.push_back(batch);
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        Matrix z = matmul(trace.activations.back(), model.weights[l]);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += model.biases[l][j];
        }
        if (l + 1 < model.num_layers()) {
            for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
        }
        trace.activations.push_back(std::move(z));
    }
    return trace.activations.back();
}

Matrix forward(const Classifier& model, const Matrix& batch) {
    ForwardTrace trace;
    return forward_trace(model, batch, trace);
}

Gradients backward(const Classifier& model, const ForwardTrace& trace, const Matrix& dlogits) {
    if (trace.activations.size() != model.num_layers() + 1)
        throw std::invalid_argument("backward: trace does not match model");
    if (!dlogits.same_shape(trace.activations.back()))
        throw std::invalid_argument("backward: dlogits shape mismatch");

    Gradients grads;
    grads.weights.resize(model.num_layers());
    grads.biases.resize(model.num_layers());

    Matrix delta = dlogits;
    for (std::size_t l = model.num_layers(); l-- > 0;) {
        const Matrix& input = trace.activations[l];
        Matrix gw(input.cols(), delta.cols());
        for (std::size_t b = 0; b < input.rows(); ++b) {
            for (std::size_t i = 0; i < input.cols(); ++i) {
                const double x = input(b, i);
                for (std::size_t j = 0; j < delta.cols(); ++j) {
                    gw(i, j) += x * delta(b, j);
                }
            }
        }
        std::vector<double> gb(delta.cols(), 0.0);
        for (std::size_t b = 0; b < delta.rows(); ++b) {
            for (std::size_t j = 0; j < delta.cols(); ++j) gb[j] += delta(b, j);
        }
        grads.weights[l] = std::move(gw);
        grads.biases[l] = std::move(gb);

        if (l > 0) {
            const Matrix& w = model.weights[l];
            Matrix next(delta.rows(), w.rows());
            for (std::size_t b = 0; b < delta.rows(); ++b) {
                for (std::size_t i = 0; i < w.rows(); ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < w.cols(); ++j) acc += delta(b, j) * w(i, j);
                    // rectifier mask from the post-activation value
                    next(b, i) = input(b, i) > 0.0 ? acc : 0.0;
                }
            }
            delta = std::move(next);
        }
    }
    return grads;
}

std::vector<double> softmax(std::span<const double> logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
        m = std::max(m, v);
    }
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto p = softmax(logits.row(b));
        for (std::size_t j = 0; j < logits.cols(); ++j) out(b, j) = p[j];
    }
    return out;
}

namespace {

void check_soft_labels(const Matrix& targets) {
    for (std::size_t b = 0; b < targets.rows(); ++b) {
        double sum = 0.0;
        for (std::size_t j = 0; j < targets.cols(); ++j) {
            const double q = targets(b, j);
            if (q < 0.0 || q > 1.0 + 1e-9)
                throw std::invalid_argument("soft label entry outside [0,1]");
            sum += q;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("soft label row does not sum to 1");
    }
}

void check_loss_inputs(const Matrix& logits, const Matrix& targets) {
    if (!logits.same_shape(targets))
        throw std::invalid_argument("loss: logits/targets shape mismatch");
    if (logits.rows() == 0) throw std::invalid_argument("loss: empty batch");
    check_soft_labels(targets);
}

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - m);
    return m + std::log(sum);
}

}  // namespace

LossResult ce_loss_soft(const Matrix& logits, const Matrix& targets) {
    check_loss_inputs(logits, targets);
    const std::size_t batch = logits.rows();
    LossResult result;
    result.dlogits = Matrix(logits.rows(), logits.cols());
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = logits.row(b);
        const double lse = log_sum_exp(row);
        double dot = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) dot += targets(b, j) * row[j];
        result.value += lse - dot;
        const auto p = softmax(row);
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            result.dlogits(b, j) = (p[j] - targets(b, j)) / static_cast<double>(batch);
        }
    }
    result.value /= static_cast<double>(batch);
    return result;
}

LossResult mse_loss(const Matrix& logits, const Matrix& targets) {
    check_loss_inputs(logits, targets);
    const std::size_t batch = logits.rows();
    LossResult result;
    result.dlogits = Matrix(logits.rows(), logits.cols());
    for (std::size_t b = 0; b < batch; ++b) {
        const auto p = softmax(logits.row(b));
        double inner = 0.0;  // sum_i (p_i - q_i) p_i
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            const double diff = p[j] - targets(b, j);
            result.value += diff * diff;
            inner += diff * p[j];
        }
        for (std::size_t k = 0; k < logits.cols(); ++k) {
            const double diff = p[k] - targets(b, k);
            result.dlogits(b, k) = 2.0 * p[k] * (diff - inner) / static_cast<double>(batch);
        }
    }
    result.value /= static_cast<double>(batch);
    return result;
}

LossResult balanced_loss(const Matrix& logits, const Matrix& targets, const Matrix& alpha) {
    check_loss_inputs(logits, targets);
    const std::size_t c = logits.cols();
    if (alpha.rows() != c || alpha.cols() != c)
        throw std::invalid_argument("balanced_loss: alpha must be C x C");
    for (std::size_t i = 0; i < c; ++i) {
        if (alpha(i, i) != 1.0)
            throw std::invalid_argument("balanced_loss: alpha diagonal must be 1");
        for (std::size_t j = 0; j < c; ++j) {
            if (!(alpha(i, j) > 0.0) || !std::isfinite(alpha(i, j)))
                throw std::invalid_argument("balanced_loss: alpha entries must be positive");
        }
    }

    const std::size_t batch = logits.rows();
    LossResult result;
    result.dlogits = Matrix(logits.rows(), logits.cols());
    std::vector<double> shifted(c);
    std::vector<double> weighted_sum(c);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = logits.row(b);
        double m = -std::numeric_limits<double>::infinity();
        for (double v : row) {
            if (!std::isfinite(v)) throw std::invalid_argument("balanced_loss: non-finite logit");
            m = std::max(m, v);
        }
        for (std::size_t j = 0; j < c; ++j) shifted[j] = std::exp(row[j] - m);

        // S_i = sum_j alpha_ij exp(f_j - m); the log argument exp(f_i - m)/S_i
        // stays <= 1 because alpha_ii = 1.
        for (std::size_t i = 0; i < c; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += alpha(i, j) * shifted[j];
            weighted_sum[i] = s;
            const double qi = targets(b, i);
            if (qi != 0.0) {
                result.value += qi * (std::log(s) - (row[i] - m));
            }
        }
        for (std::size_t k = 0; k < c; ++k) {
            double acc = -targets(b, k);
            for (std::size_t i = 0; i < c; ++i) {
                const double qi = targets(b, i);
                if (qi != 0.0) acc += qi * alpha(i, k) * shifted[k] / weighted_sum[i];
            }
            result.dlogits(b, k) = acc / static_cast<double>(batch);
        }
    }
    result.value /= static_cast<double>(batch);
    if (detail::balanced_loss_gradient_sign_flip) {
        for (double& v : result.dlogits.data()) v = -v;
    }
    return result;
}

LossResult reg_loss(const Matrix& logits, const std::vector<int>& hard_labels,
                    const std::vector<std::int64_t>& full_train_counts) {
    const std::size_t batch = logits.rows();
    const std::size_t c = logits.cols();
    if (batch == 0) throw std::invalid_argument("reg_loss: empty batch");
    if (hard_labels.size() != batch)
        throw std::invalid_argument("reg_loss: label count != batch size");
    if (full_train_counts.size() != c)
        throw std::invalid_argument("reg_loss: counts length != C");
    for (int y : hard_labels) {
        if (y < 0 || y >= static_cast<int>(c))
            throw std::invalid_argument("reg_loss: label out of range");
    }

    std::vector<std::int64_t> batch_counts(c, 0);
    for (int y : hard_labels) batch_counts[static_cast<std::size_t>(y)] += 1;
    std::size_t present = 0;
    for (std::int64_t n : batch_counts) present += n > 0 ? 1 : 0;

    Matrix probs = softmax_rows(logits);

    // qbar_i = (1/C') sum_{j present} (1/b_j) sum_{x with label j} p_i(x)
    std::vector<double> qbar(c, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        const double w = 1.0 / (static_cast<double>(present) *
                                static_cast<double>(batch_counts[static_cast<std::size_t>(
                                    hard_labels[b])]));
        for (std::size_t i = 0; i < c; ++i) qbar[i] += w * probs(b, i);
    }

    // Strength n_min/n_i from the full training set; empty classes count as 1.
    std::int64_t n_min = std::numeric_limits<std::int64_t>::max();
    for (std::int64_t n : full_train_counts) {
        if (n > 0) n_min = std::min(n_min, n);
    }
    if (n_min == std::numeric_limits<std::int64_t>::max()) n_min = 1;

    constexpr double kFloor = 1e-12;
    const double pi = 1.0 / static_cast<double>(c);
    LossResult result;
    result.dlogits = Matrix(logits.rows(), logits.cols());
    std::vector<double> dqbar(c, 0.0);  // dL/dqbar_i (zero where the floor binds)
    for (std::size_t i = 0; i < c; ++i) {
        const double strength =
            static_cast<double>(n_min) /
            static_cast<double>(std::max(full_train_counts[i], n_min));
        const double clamped = std::max(qbar[i], kFloor);
        result.value += strength * pi * std::log(pi / clamped);
        dqbar[i] = qbar[i] > kFloor ? -strength * pi / clamped : 0.0;
    }

    for (std::size_t b = 0; b < batch; ++b) {
        const double w = 1.0 / (static_cast<double>(present) *
                                static_cast<double>(batch_counts[static_cast<std::size_t>(
                                    hard_labels[b])]));
        double inner = 0.0;  // sum_i dqbar_i p_i
        for (std::size_t i = 0; i < c; ++i) inner += dqbar[i] * probs(b, i);
        for (std::size_t k = 0; k < c; ++k) {
            result.dlogits(b, k) = w * probs(b, k) * (dqbar[k] - inner);
        }
    }
    return result;
}

OptimizerState make_optimizer(const Classifier& model, const OptimizerConfig& config) {
    OptimizerState state;
    state.config = config;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        state.weight_velocity.emplace_back(model.weights[l].rows(), model.weights[l].cols());
        state.bias_velocity.emplace_back(model.biases[l].size(), 0.0);
    }
    return state;
}

double learning_rate(const OptimizerConfig& config, int epoch) {
    return epoch >= config.drop_epoch ? config.initial_lr / config.drop_factor
                                      : config.initial_lr;
}

void sgd_step(Classifier& model, OptimizerState& state, const Gradients& grads, int epoch) {
    if (grads.weights.size() != model.num_layers())
        throw std::invalid_argument("sgd_step: gradient layer count mismatch");
    const double lr = learning_rate(state.config, epoch);
    const double m = state.config.momentum;
    const double wd = state.config.weight_decay;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        if (!grads.weights[l].same_shape(model.weights[l]))
            throw std::invalid_argument("sgd_step: weight gradient shape mismatch");
        auto& w = model.weights[l].data();
        auto& v = state.weight_velocity[l].data();
        const auto& g = grads.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = m * v[i] + (g[i] + wd * w[i]);
            w[i] -= lr * v[i];
        }
        auto& bias = model.biases[l];
        auto& bv = state.bias_velocity[l];
        const auto& bg = grads.biases[l];
        for (std::size_t i = 0; i < bias.size(); ++i) {
            bv[i] = m * bv[i] + (bg[i] + wd * bias[i]);
            bias[i] -= lr * bv[i];
        }
    }
}

void save_model(const Classifier& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t i = 0; i < model.layer_dims.size(); ++i) {
        if (i) out << ' ';
        out << model.layer_dims[i];
    }
    out << '\n';
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const auto& w = model.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (i) out << ' ';
            out << format_double(w[i]);
        }
        out << '\n';
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
            if (i) out << ' ';
            out << format_double(model.biases[l][i]);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Classifier load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw std::runtime_error(path + ":1: missing layer_dims header");
    std::istringstream header(line);
    std::vector<int> dims;
    int d;
    while (header >> d) dims.push_back(d);
    if (dims.size() < 2) throw std::runtime_error(path + ":1: need at least 2 layer dims");

    Classifier model;
    model.layer_dims = dims;
    std::size_t lineno = 1;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in_dim = static_cast<std::size_t>(dims[l]);
        const auto out_dim = static_cast<std::size_t>(dims[l + 1]);
        Matrix w(in_dim, out_dim);
        ++lineno;
        if (!std::getline(in, line))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing weights");
        std::istringstream ws(line);
        for (double& v : w.data()) {
            if (!(ws >> v) || !std::isfinite(v))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": bad weight row");
        }
        std::vector<double> b(out_dim);
        ++lineno;
        if (!std::getline(in, line))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing biases");
        std::istringstream bs(line);
        for (double& v : b) {
            if (!(bs >> v) || !std::isfinite(v))
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad bias row");
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

}  // namespace taillab
