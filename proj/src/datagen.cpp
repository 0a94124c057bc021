#include "taillab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "taillab/rng.hpp"

namespace taillab {

std::vector<std::int64_t> make_long_tail_counts(const std::vector<std::int64_t>& base_counts,
                                                double rho) {
    const std::size_t c = base_counts.size();
    if (c < 2) throw std::invalid_argument("make_long_tail_counts: need at least 2 classes");
    if (!(rho >= 1.0)) throw std::invalid_argument("make_long_tail_counts: rho must be >= 1");
    for (std::int64_t o : base_counts) {
        if (o < 1) throw std::invalid_argument("make_long_tail_counts: base counts must be >= 1");
    }
    std::vector<std::int64_t> counts(c);
    for (std::size_t i = 0; i < c; ++i) {
        const double exponent = -static_cast<double>(i) / static_cast<double>(c - 1);
        const double n = static_cast<double>(base_counts[i]) * std::pow(rho, exponent);
        counts[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(n)));
    }
    return counts;
}

ImbalanceProfile make_imbalance_profile(const std::vector<std::int64_t>& base_counts, double rho) {
    ImbalanceProfile p;
    p.base_counts = base_counts;
    p.imbalance_ratio = rho;
    p.resulting_counts = make_long_tail_counts(base_counts, rho);
    return p;
}

Matrix build_symmetric_transition(const std::vector<std::int64_t>& counts, double r) {
    if (!(r >= 0.0 && r <= 1.0))
        throw std::invalid_argument("build_symmetric_transition: r must be in [0,1]");
    const std::size_t c = counts.size();
    for (std::int64_t n : counts) {
        if (n < 1) throw std::invalid_argument("build_symmetric_transition: counts must be >= 1");
    }
    const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
    Matrix t(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        const double denom = static_cast<double>(total - counts[i]);
        for (std::size_t j = 0; j < c; ++j) {
            if (i == j) {
                t(i, j) = 1.0 - r;
            } else {
                t(i, j) = r * static_cast<double>(counts[j]) / denom;
            }
        }
    }
    return t;
}

NoiseSpec symmetric_noise(const std::vector<std::int64_t>& counts, double rate) {
    NoiseSpec spec;
    spec.kind = NoiseSpec::Kind::symmetric;
    spec.rate = rate;
    spec.transition = build_symmetric_transition(counts, rate);
    return spec;
}

NoiseSpec asymmetric_noise(const std::vector<std::pair<int, int>>& pairs, double flip_rate,
                           double step_ratio) {
    NoiseSpec spec;
    spec.kind = NoiseSpec::Kind::asymmetric;
    spec.pairs = pairs;
    spec.flip_rate = flip_rate;
    spec.step_ratio = step_ratio;
    return spec;
}

LabeledDataset apply_noise(const LabeledDataset& ds, const NoiseSpec& spec, std::uint64_t seed) {
    if (spec.kind == NoiseSpec::Kind::symmetric) {
        return corrupt_labels(ds, spec.transition, seed);
    }
    return make_step_asymmetric(ds, spec.pairs, spec.flip_rate, spec.step_ratio, seed);
}

namespace {

void check_row_stochastic(const Matrix& transition) {
    if (transition.rows() != transition.cols())
        throw std::invalid_argument("transition matrix must be square");
    for (std::size_t i = 0; i < transition.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < transition.cols(); ++j) {
            if (transition(i, j) < 0.0)
                throw std::invalid_argument("transition matrix has a negative entry");
            sum += transition(i, j);
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("transition matrix row does not sum to 1");
    }
}

}  // namespace

LabeledDataset corrupt_labels(const LabeledDataset& ds, const Matrix& transition,
                              std::uint64_t seed) {
    if (!ds.true_labels)
        throw std::logic_error("corrupt_labels: dataset has no true labels");
    check_row_stochastic(transition);
    if (transition.rows() != static_cast<std::size_t>(ds.num_classes))
        throw std::invalid_argument("corrupt_labels: transition size != num_classes");

    LabeledDataset out = ds;
    Rng rng(seed);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = transition.row(static_cast<std::size_t>((*ds.true_labels)[i]));
        const double u = rng.uniform01();
        double acc = 0.0;
        int drawn = ds.num_classes - 1;  // guards against rounding past the last bin
        for (int j = 0; j < ds.num_classes; ++j) {
            acc += row[static_cast<std::size_t>(j)];
            if (u < acc) {
                drawn = j;
                break;
            }
        }
        out.observed_labels[i] = drawn;
    }
    out.recompute_counts();
    return out;
}

LabeledDataset make_step_asymmetric(const LabeledDataset& ds,
                                    const std::vector<std::pair<int, int>>& pairs,
                                    double flip_rate, double step_ratio, std::uint64_t seed) {
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0))
        throw std::invalid_argument("make_step_asymmetric: flip_rate must be in [0,1]");
    if (!(step_ratio >= 1.0))
        throw std::invalid_argument("make_step_asymmetric: step_ratio must be >= 1");
    std::vector<bool> seen(static_cast<std::size_t>(ds.num_classes), false);
    for (const auto& [a, b] : pairs) {
        if (a < 0 || a >= ds.num_classes || b < 0 || b >= ds.num_classes || a == b)
            throw std::invalid_argument("make_step_asymmetric: invalid class pair");
        if (seen[static_cast<std::size_t>(a)] || seen[static_cast<std::size_t>(b)])
            throw std::invalid_argument("make_step_asymmetric: overlapping pairs");
        seen[static_cast<std::size_t>(a)] = seen[static_cast<std::size_t>(b)] = true;
    }

    LabeledDataset flipped = ds;
    Rng rng(seed);

    // Exact-count exchange: a seeded shuffle of each side, first
    // round(flip_rate * n) samples swap labels.
    for (const auto& [a, b] : pairs) {
        for (int side = 0; side < 2; ++side) {
            const int from = side == 0 ? a : b;
            const int to = side == 0 ? b : a;
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                if (ds.observed_labels[i] == from) members.push_back(i);
            }
            Rng side_rng = rng.spawn(static_cast<std::uint64_t>(from) * 2654435761u + 17);
            side_rng.shuffle(members);
            const auto n_flip = static_cast<std::size_t>(
                std::llround(flip_rate * static_cast<double>(members.size())));
            for (std::size_t k = 0; k < n_flip; ++k) {
                flipped.observed_labels[members[k]] = to;
            }
        }
    }

    // Step subsampling: corrupted classes keep ceil(n / step_ratio) samples
    // (by original observed label), chosen by a seeded shuffle.
    std::vector<bool> keep(ds.size(), true);
    if (step_ratio > 1.0) {
        for (int c = 0; c < ds.num_classes; ++c) {
            if (!seen[static_cast<std::size_t>(c)]) continue;
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                if (ds.observed_labels[i] == c) members.push_back(i);
            }
            Rng sub_rng = rng.spawn(static_cast<std::uint64_t>(c) * 40503u + 101);
            sub_rng.shuffle(members);
            const auto retain = static_cast<std::size_t>(
                std::ceil(static_cast<double>(members.size()) / step_ratio));
            for (std::size_t k = retain; k < members.size(); ++k) keep[members[k]] = false;
        }
    }

    LabeledDataset out;
    out.num_classes = ds.num_classes;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) kept += keep[i] ? 1 : 0;
    out.features = Matrix(kept, ds.dim());
    out.observed_labels.reserve(kept);
    if (ds.true_labels) out.true_labels = std::vector<int>();
    std::size_t w = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t j = 0; j < ds.dim(); ++j) out.features(w, j) = ds.features(i, j);
        out.observed_labels.push_back(flipped.observed_labels[i]);
        if (ds.true_labels) out.true_labels->push_back((*ds.true_labels)[i]);
        ++w;
    }
    out.recompute_counts();
    return out;
}

BlobSpec make_blob_spec(int num_classes, int dim, double center_scale, double cluster_stddev,
                        std::uint64_t seed) {
    if (num_classes < 1) throw std::invalid_argument("make_blob_spec: need >= 1 class");
    if (dim < 1) throw std::invalid_argument("make_blob_spec: need dim >= 1");
    if (!(cluster_stddev > 0.0))
        throw std::invalid_argument("make_blob_spec: cluster_stddev must be > 0");

    BlobSpec spec;
    spec.dim = dim;
    spec.center_scale = center_scale;
    spec.cluster_stddev = cluster_stddev;
    spec.seed = seed;
    spec.class_centers = Matrix(static_cast<std::size_t>(num_classes),
                                static_cast<std::size_t>(dim));

    Rng rng = Rng(seed).spawn(0xb10b);
    const int max_attempts = 10000;
    for (int c = 0; c < num_classes; ++c) {
        int attempts = 0;
        while (true) {
            if (++attempts > max_attempts)
                throw std::runtime_error(
                    "make_blob_spec: cannot place centers at pairwise distance >= "
                    "cluster_stddev; lower cluster_stddev or raise center_scale");
            // Uniform in the ball: isotropic direction, radius ~ R * u^(1/d).
            std::vector<double> candidate(static_cast<std::size_t>(dim));
            double norm2 = 0.0;
            for (auto& v : candidate) {
                v = rng.normal();
                norm2 += v * v;
            }
            const double norm = std::sqrt(norm2);
            const double radius =
                center_scale * std::pow(rng.uniform01(), 1.0 / static_cast<double>(dim));
            for (auto& v : candidate) v = v / norm * radius;

            bool ok = true;
            for (int prev = 0; prev < c && ok; ++prev) {
                double dist2 = 0.0;
                for (int j = 0; j < dim; ++j) {
                    const double diff = candidate[static_cast<std::size_t>(j)] -
                                        spec.class_centers(static_cast<std::size_t>(prev),
                                                           static_cast<std::size_t>(j));
                    dist2 += diff * diff;
                }
                ok = dist2 >= cluster_stddev * cluster_stddev;
            }
            if (ok) {
                for (int j = 0; j < dim; ++j) {
                    spec.class_centers(static_cast<std::size_t>(c), static_cast<std::size_t>(j)) =
                        candidate[static_cast<std::size_t>(j)];
                }
                break;
            }
        }
    }
    return spec;
}

LabeledDataset generate_blobs(const BlobSpec& spec, const std::vector<std::int64_t>& counts) {
    const std::size_t c = counts.size();
    if (spec.class_centers.rows() != c)
        throw std::invalid_argument("generate_blobs: counts length != number of centers");
    if (spec.class_centers.cols() != static_cast<std::size_t>(spec.dim))
        throw std::invalid_argument("generate_blobs: center width != dim");
    if (!(spec.cluster_stddev >= 0.0))
        throw std::invalid_argument("generate_blobs: cluster_stddev must be >= 0");

    std::int64_t total = 0;
    for (std::int64_t n : counts) {
        if (n < 0) throw std::invalid_argument("generate_blobs: negative count");
        total += n;
    }

    LabeledDataset ds;
    ds.num_classes = static_cast<int>(c);
    ds.features = Matrix(static_cast<std::size_t>(total), static_cast<std::size_t>(spec.dim));
    ds.observed_labels.resize(static_cast<std::size_t>(total));
    ds.true_labels = std::vector<int>(static_cast<std::size_t>(total));

    Rng rng = Rng(spec.seed).spawn(0x901e7);
    std::size_t row = 0;
    for (std::size_t cls = 0; cls < c; ++cls) {
        for (std::int64_t k = 0; k < counts[cls]; ++k) {
            for (int j = 0; j < spec.dim; ++j) {
                ds.features(row, static_cast<std::size_t>(j)) =
                    spec.class_centers(cls, static_cast<std::size_t>(j)) +
                    spec.cluster_stddev * rng.normal();
            }
            ds.observed_labels[row] = static_cast<int>(cls);
            (*ds.true_labels)[row] = static_cast<int>(cls);
            ++row;
        }
    }
    ds.recompute_counts();
    return ds;
}

}  // namespace taillab
