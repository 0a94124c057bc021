#include "taillab/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace taillab {

std::vector<double> augment(std::span<const double> x, double stddev, Rng& rng) {
    if (stddev < 0.0) throw std::invalid_argument("augment: stddev must be >= 0");
    std::vector<double> out(x.begin(), x.end());
    if (stddev == 0.0) return out;
    for (double& v : out) v += stddev * rng.normal();
    return out;
}

std::vector<double> sharpen(const std::vector<double>& q, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("sharpen: temperature must be > 0");
    double sum = 0.0;
    double maxq = 0.0;
    for (double v : q) {
        if (v < 0.0 || v > 1.0 + 1e-9) throw std::invalid_argument("sharpen: not a soft label");
        sum += v;
        maxq = std::max(maxq, v);
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("sharpen: row does not sum to 1");
    if (temperature == 1.0) return q;

    // (q_i / max q)^(1/T) keeps the powers in [0,1]; renormalize after.
    std::vector<double> out(q.size());
    const double inv_t = 1.0 / temperature;
    double norm = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = q[i] > 0.0 ? std::pow(q[i] / maxq, inv_t) : 0.0;
        norm += out[i];
    }
    for (double& v : out) v /= norm;
    return out;
}

Matrix guess_labels(const Classifier& model, const Matrix& u_batch, const SslConfig& cfg,
                    Rng& rng) {
    if (cfg.num_augmentations < 1)
        throw std::invalid_argument("guess_labels: need K >= 1 augmentations");
    const std::size_t b = u_batch.rows();
    const auto c = static_cast<std::size_t>(model.num_classes());
    Matrix guesses(b, c);
    std::vector<double> mean(c);
    for (std::size_t row = 0; row < b; ++row) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (int k = 0; k < cfg.num_augmentations; ++k) {
            const auto view = augment(u_batch.row(row), cfg.augment_stddev, rng);
            Matrix one(1, u_batch.cols());
            std::copy(view.begin(), view.end(), one.data().begin());
            const Matrix logits = forward(model, one);
            const auto p = softmax(logits.row(0));
            for (std::size_t j = 0; j < c; ++j) mean[j] += p[j];
        }
        for (double& v : mean) v /= static_cast<double>(cfg.num_augmentations);
        const auto sharp = sharpen(mean, cfg.sharpen_temperature);
        for (std::size_t j = 0; j < c; ++j) guesses(row, j) = sharp[j];
    }
    return guesses;
}

namespace {

int argmax_index(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return static_cast<int>(best);
}

}  // namespace

void mixup_pair(std::span<const double> x_a, std::span<const double> q_a,
                std::span<const double> x_b, std::span<const double> q_b, double mix_alpha,
                Rng& rng, MixedBatch& out, std::size_t row) {
    if (!(mix_alpha > 0.0)) throw std::invalid_argument("mixup_pair: mix_alpha must be > 0");
    const double lambda = rng.beta(mix_alpha, mix_alpha);
    const double lam = std::max(lambda, 1.0 - lambda);
    for (std::size_t j = 0; j < x_a.size(); ++j) {
        out.inputs(row, j) = lam * x_a[j] + (1.0 - lam) * x_b[j];
    }
    for (std::size_t j = 0; j < q_a.size(); ++j) {
        out.soft_labels(row, j) = lam * q_a[j] + (1.0 - lam) * q_b[j];
    }
    out.hard_labels[row] = argmax_index(q_a);
    out.dominance[row] = lam;
}

std::pair<MixedBatch, MixedBatch> build_mixed_batches(const Matrix& labeled_inputs,
                                                      const std::vector<int>& labeled_labels,
                                                      const Matrix& unlabeled_inputs,
                                                      const Classifier& model,
                                                      const SslConfig& cfg, Rng& rng) {
    const std::size_t n_l = labeled_inputs.rows();
    const std::size_t n_u = unlabeled_inputs.rows();
    const std::size_t d = labeled_inputs.cols();
    const auto c = static_cast<std::size_t>(model.num_classes());
    if (n_l == 0) throw std::invalid_argument("build_mixed_batches: empty labeled batch");
    if (labeled_labels.size() != n_l)
        throw std::invalid_argument("build_mixed_batches: label count mismatch");
    if (n_u > 0 && unlabeled_inputs.cols() != d)
        throw std::invalid_argument("build_mixed_batches: width mismatch");

    MixedBatch mixed_l{Matrix(n_l, d), Matrix(n_l, c), std::vector<int>(n_l),
                       std::vector<double>(n_l)};
    MixedBatch mixed_u{Matrix(n_u, d), Matrix(n_u, c), std::vector<int>(n_u),
                       std::vector<double>(n_u)};

    if (cfg.identity_mix) {
        // Identity pipeline: raw inputs, one-hot labels, lambda' = 1.
        for (std::size_t b = 0; b < n_l; ++b) {
            for (std::size_t j = 0; j < d; ++j) mixed_l.inputs(b, j) = labeled_inputs(b, j);
            mixed_l.soft_labels(b, static_cast<std::size_t>(labeled_labels[b])) = 1.0;
            mixed_l.hard_labels[b] = labeled_labels[b];
            mixed_l.dominance[b] = 1.0;
        }
        if (n_u > 0) {
            const Matrix guesses = guess_labels(model, unlabeled_inputs, cfg, rng);
            for (std::size_t b = 0; b < n_u; ++b) {
                for (std::size_t j = 0; j < d; ++j) mixed_u.inputs(b, j) = unlabeled_inputs(b, j);
                for (std::size_t j = 0; j < c; ++j) mixed_u.soft_labels(b, j) = guesses(b, j);
                mixed_u.hard_labels[b] = argmax_index(guesses.row(b));
                mixed_u.dominance[b] = 1.0;
            }
        }
        return {std::move(mixed_l), std::move(mixed_u)};
    }

    // Guess first, then augment every row once for mixing.
    Matrix guesses;
    if (n_u > 0) guesses = guess_labels(model, unlabeled_inputs, cfg, rng);

    const std::size_t pool_size = n_l + n_u;
    Matrix pool_inputs(pool_size, d);
    Matrix pool_labels(pool_size, c);
    for (std::size_t b = 0; b < n_l; ++b) {
        const auto aug = augment(labeled_inputs.row(b), cfg.augment_stddev, rng);
        for (std::size_t j = 0; j < d; ++j) pool_inputs(b, j) = aug[j];
        pool_labels(b, static_cast<std::size_t>(labeled_labels[b])) = 1.0;
    }
    for (std::size_t b = 0; b < n_u; ++b) {
        const auto aug = augment(unlabeled_inputs.row(b), cfg.augment_stddev, rng);
        for (std::size_t j = 0; j < d; ++j) pool_inputs(n_l + b, j) = aug[j];
        for (std::size_t j = 0; j < c; ++j) pool_labels(n_l + b, j) = guesses(b, j);
    }

    std::vector<std::size_t> perm(pool_size);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    for (std::size_t b = 0; b < pool_size; ++b) {
        const std::size_t partner = perm[b];
        MixedBatch& target = b < n_l ? mixed_l : mixed_u;
        const std::size_t row = b < n_l ? b : b - n_l;
        mixup_pair(pool_inputs.row(b), pool_labels.row(b), pool_inputs.row(partner),
                   pool_labels.row(partner), cfg.mixup_concentration, rng, target, row);
    }
    return {std::move(mixed_l), std::move(mixed_u)};
}

}  // namespace taillab
