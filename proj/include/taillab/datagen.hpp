#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "taillab/dataset.hpp"
#include "taillab/matrix.hpp"

namespace taillab {

// Exponential long-tail profile and per-class class sizes.
struct ImbalanceProfile {
    std::vector<std::int64_t> base_counts;       // O_i
    double imbalance_ratio = 1.0;                // rho = n_1 / n_C
    std::vector<std::int64_t> resulting_counts;  // n_i
};

// n_i = max(1, floor(O_i * rho^(-(i-1)/(C-1)))).
std::vector<std::int64_t> make_long_tail_counts(const std::vector<std::int64_t>& base_counts,
                                                double rho);

ImbalanceProfile make_imbalance_profile(const std::vector<std::int64_t>& base_counts, double rho);

// Row-stochastic symmetric-noise transition: diagonal 1-r, off-diagonal
// r * n_j / sum_{k != i} n_k.
Matrix build_symmetric_transition(const std::vector<std::int64_t>& counts, double r);

// Label-corruption recipe. Symmetric noise carries its derived transition
// matrix; asymmetric noise carries the pair-exchange parameters.
struct NoiseSpec {
    enum class Kind { symmetric, asymmetric };
    Kind kind = Kind::symmetric;
    double rate = 0.0;                       // symmetric r
    Matrix transition;                       // derived, row-stochastic (symmetric)
    std::vector<std::pair<int, int>> pairs;  // asymmetric exchanges
    double flip_rate = 0.4;
    double step_ratio = 1.0;
};

NoiseSpec symmetric_noise(const std::vector<std::int64_t>& counts, double rate);
NoiseSpec asymmetric_noise(const std::vector<std::pair<int, int>>& pairs, double flip_rate,
                           double step_ratio);

LabeledDataset apply_noise(const LabeledDataset& ds, const NoiseSpec& spec, std::uint64_t seed);

// Resamples observed labels from the transition row of each sample's true
// label. True labels are preserved; counts are recomputed.
LabeledDataset corrupt_labels(const LabeledDataset& ds, const Matrix& transition,
                              std::uint64_t seed);

// Pairwise exact-count label exchange (flip_rate fraction each direction)
// followed by step subsampling of the corrupted classes down to
// ceil(n / step_ratio) samples.
LabeledDataset make_step_asymmetric(const LabeledDataset& ds,
                                    const std::vector<std::pair<int, int>>& pairs,
                                    double flip_rate, double step_ratio, std::uint64_t seed);

// Isotropic Gaussian blobs standing in for image features.
struct BlobSpec {
    int dim = 2;
    Matrix class_centers;        // C x dim
    double center_scale = 1.0;   // sampling radius for centers
    double cluster_stddev = 0.1;
    std::uint64_t seed = 0;
};

// Draws centers uniformly in the radius-center_scale ball, redrawing until
// all pairwise distances are >= cluster_stddev.
BlobSpec make_blob_spec(int num_classes, int dim, double center_scale, double cluster_stddev,
                        std::uint64_t seed);

LabeledDataset generate_blobs(const BlobSpec& spec, const std::vector<std::int64_t>& counts);

}  // namespace taillab
