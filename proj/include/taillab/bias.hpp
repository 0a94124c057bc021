#pragma once

#include <cstdint>
#include <vector>

#include "taillab/matrix.hpp"

namespace taillab {

// Per-epoch model-bias accumulator plus its EMA. Row c of the epoch matrix
// collects softmax outputs of clean samples observed as class c; finalize
// turns rows into means and folds them into the EMA.
struct BiasState {
    Matrix epoch_matrix;                  // C x C accumulator
    std::vector<std::int64_t> counters;   // per-class samples accumulated this epoch
    Matrix ema_matrix;                    // starts at zeros, per Algorithm 1
    double ema_sigma = 0.9;
    std::vector<bool> rows_ever_updated;
    bool accumulated_since_finalize = false;
    int finalize_warnings = 0;  // finalize calls that had nothing to fold in
};

BiasState make_bias_state(int num_classes, double ema_sigma);

// Adds each sample's softmax vector into the row of its (observed) label.
void accumulate(BiasState& state, const Matrix& softmax_outputs,
                const std::vector<int>& clean_labels);

// Normalizes accumulated rows to means and applies the EMA row-wise. Rows
// with no samples this epoch keep their EMA row; rows never seen at all get
// a uniform row. A finalize with nothing accumulated is a warned no-op.
void finalize_epoch(BiasState& state);

// R_ij = ema_ij / ema_ji with exact unit diagonal. Scale-invariant in ema.
Matrix ratio_matrix(const Matrix& ema);

// alpha_ij = R_ij^gamma_sup when R_ij > 1 (suppress), R_ij^gamma_rel
// otherwise (relax); unit diagonal.
Matrix alpha_matrix(const Matrix& ratio, double gamma_sup, double gamma_rel);

// Label-frequency substitute for model bias: R_ij = n_j / n_i, same mapping.
Matrix frequency_alpha(const std::vector<std::int64_t>& observed_counts, double gamma_sup,
                       double gamma_rel);

}  // namespace taillab
