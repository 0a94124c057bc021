#pragma once

#include <utility>
#include <vector>

#include "taillab/matrix.hpp"
#include "taillab/net.hpp"
#include "taillab/rng.hpp"

namespace taillab {

struct SslConfig {
    int num_augmentations = 2;         // K
    double sharpen_temperature = 0.5;  // T
    double mixup_concentration = 4.0;  // Beta(alpha, alpha)
    double augment_stddev = 0.1;
    double lambda_u = 25.0;
    // Test knob: pins lambda' to 1 and skips partner mixing entirely, so the
    // pipeline becomes the identity on its inputs (no rng consumed).
    bool identity_mix = false;
};

// x plus isotropic Gaussian noise; stddev 0 returns x untouched without
// consuming the rng.
std::vector<double> augment(std::span<const double> x, double stddev, Rng& rng);

// Temperature sharpening q_i^(1/T), renormalized. T = 1 is the exact identity.
std::vector<double> sharpen(const std::vector<double>& q, double temperature);

// Pseudo-labels for an unlabeled batch: mean softmax over K augmentations,
// sharpened. Constants to the trainer; no gradient flows through them.
Matrix guess_labels(const Classifier& model, const Matrix& u_batch, const SslConfig& cfg,
                    Rng& rng);

// Convex mixes with the dominant component first: lambda' = max(lambda, 1-lambda).
struct MixedBatch {
    Matrix inputs;
    Matrix soft_labels;
    std::vector<int> hard_labels;  // argmax of the dominant component's label
    std::vector<double> dominance;  // lambda' per row, >= 0.5
};

// One mixed row out = lambda' a + (1 - lambda') b, written into row `row` of out.
void mixup_pair(std::span<const double> x_a, std::span<const double> q_a,
                std::span<const double> x_b, std::span<const double> q_b, double mix_alpha,
                Rng& rng, MixedBatch& out, std::size_t row);

// The MixMatch batch transform: one-hot labels on the labeled rows, guessed
// labels on the unlabeled rows, every row augmented once, then mixed against
// a shuffled pool of all rows. Sizes are preserved.
std::pair<MixedBatch, MixedBatch> build_mixed_batches(const Matrix& labeled_inputs,
                                                      const std::vector<int>& labeled_labels,
                                                      const Matrix& unlabeled_inputs,
                                                      const Classifier& model,
                                                      const SslConfig& cfg, Rng& rng);

}  // namespace taillab
