#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "taillab/cass.hpp"
#include "taillab/datagen.hpp"
#include "taillab/rng.hpp"

using namespace taillab;

namespace {

// Identity-map model: logits equal the input features (d == C).
Classifier identity_model(int c) {
    Classifier model;
    model.layer_dims = {c, c};
    model.weights.push_back(Matrix::identity(static_cast<std::size_t>(c)));
    model.biases.push_back(std::vector<double>(static_cast<std::size_t>(c), 0.0));
    return model;
}

// Planted dataset for the identity model: "clean" samples carry a strong
// logit on their observed label (small loss), "noisy" ones a strong logit
// elsewhere (large loss). Returns the planted clean flags.
std::pair<LabeledDataset, std::vector<bool>> planted_losses(int c, int per_class,
                                                            double clean_frac,
                                                            std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset ds;
    ds.num_classes = c;
    const std::size_t n = static_cast<std::size_t>(c) * static_cast<std::size_t>(per_class);
    ds.features = Matrix(n, static_cast<std::size_t>(c));
    ds.observed_labels.resize(n);
    ds.true_labels = std::vector<int>(n);
    std::vector<bool> clean(n);
    std::size_t row = 0;
    for (int cls = 0; cls < c; ++cls) {
        for (int k = 0; k < per_class; ++k, ++row) {
            ds.observed_labels[row] = cls;
            const bool is_clean = rng.uniform01() < clean_frac;
            clean[row] = is_clean;
            (*ds.true_labels)[row] = is_clean ? cls : (cls + 1) % c;
            const int peak = is_clean ? cls : (cls + 1) % c;
            const double scale = 6.0 + rng.uniform(-0.5, 0.5);
            ds.features(row, static_cast<std::size_t>(peak)) = scale;
        }
    }
    ds.recompute_counts();
    return {ds, clean};
}

}  // namespace

TEST_CASE("uniform model gives every sample loss ln C") {
    Classifier model = identity_model(4);
    model.weights[0].fill(0.0);
    const BlobSpec spec = make_blob_spec(4, 4, 3.0, 0.5, 3);
    const auto ds = generate_blobs(spec, {5, 5, 5, 5});
    const auto grouped = per_class_losses(model, ds);
    for (const auto& cls : grouped) {
        for (double v : cls) CHECK(v == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
}

TEST_CASE("a class with no samples yields an empty loss list") {
    LabeledDataset ds;
    ds.num_classes = 3;
    ds.features = Matrix(2, 3);
    ds.observed_labels = {0, 0};
    ds.recompute_counts();
    const auto grouped = per_class_losses(identity_model(3), ds);
    CHECK(grouped[0].size() == 2);
    CHECK(grouped[1].empty());
    CHECK(grouped[2].empty());
}

TEST_CASE("losses are identical across repeated passes with a frozen model") {
    const BlobSpec spec = make_blob_spec(3, 3, 3.0, 0.6, 5);
    const auto ds = generate_blobs(spec, {10, 8, 6});
    const Classifier model = identity_model(3);
    CHECK(sample_ce_losses(model, ds) == sample_ce_losses(model, ds));
}

TEST_CASE("selection recovers a planted bimodal split per class") {
    const auto [ds, clean] = planted_losses(2, 300, 0.6, 11);
    const Partition part = select(identity_model(2), ds);
    std::vector<bool> selected(ds.size(), false);
    for (const auto& cls : part.clean_indices) {
        for (int i : cls) selected[static_cast<std::size_t>(i)] = true;
    }
    for (int cls = 0; cls < 2; ++cls) {
        std::size_t correct = 0, total = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.observed_labels[i] != cls) continue;
            ++total;
            correct += selected[i] == clean[i] ? 1 : 0;
        }
        CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.99);
    }
}

TEST_CASE("partition is a disjoint cover with labels matching their class list") {
    const auto [ds, clean] = planted_losses(3, 50, 0.7, 13);
    (void)clean;
    const Partition part = select(identity_model(3), ds);
    std::set<int> seen;
    for (int c = 0; c < 3; ++c) {
        for (int i : part.clean_indices[static_cast<std::size_t>(c)]) {
            CHECK(ds.observed_labels[static_cast<std::size_t>(i)] == c);
            CHECK(seen.insert(i).second);
        }
    }
    for (int i : part.unlabeled_indices) CHECK(seen.insert(i).second);
    CHECK(seen.size() == ds.size());
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == static_cast<int>(ds.size()) - 1);
}

TEST_CASE("a posterior of exactly one half goes to the unlabeled set") {
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.features = Matrix(3, 2);
    ds.observed_labels = {0, 0, 1};
    ds.recompute_counts();
    const std::vector<double> posteriors = {0.5, 0.500000001, 1.0};
    const Partition part = make_partition(ds, posteriors, std::vector<GmmFit>(2));
    CHECK(part.unlabeled_indices == std::vector<int>{0});
    CHECK(part.clean_indices[0] == std::vector<int>{1});
    CHECK(part.clean_indices[1] == std::vector<int>{2});
}

TEST_CASE("degenerate classes are wholly selected as clean") {
    // three identical samples of class 1 -> n < 4 fallback declares them clean
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.features = Matrix(103, 2);
    Rng rng(17);
    for (std::size_t i = 0; i < 100; ++i) {
        ds.observed_labels.push_back(0);
        ds.features(i, 0) = rng.uniform01() < 0.5 ? 6.0 : 0.0;
        ds.features(i, 1) = 6.0 - ds.features(i, 0);
    }
    for (std::size_t i = 100; i < 103; ++i) {
        ds.observed_labels.push_back(1);
        ds.features(i, 1) = 2.0;
    }
    ds.recompute_counts();
    const Partition part = select(identity_model(2), ds);
    CHECK(part.per_class_fits[1].degenerate);
    CHECK(part.clean_indices[1].size() == 3);
}

TEST_CASE("selection equals thresholding the fitted posterior (Bayes rule)") {
    const auto [ds, clean] = planted_losses(3, 80, 0.65, 19);
    (void)clean;
    const Classifier model = identity_model(3);
    const Partition part = select(model, ds);
    const auto losses = sample_ce_losses(model, ds);
    std::vector<bool> selected(ds.size(), false);
    for (const auto& cls : part.clean_indices) {
        for (int i : cls) selected[static_cast<std::size_t>(i)] = true;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& fit =
            part.per_class_fits[static_cast<std::size_t>(ds.observed_labels[i])];
        const double w = posterior_clean(fit, losses[i]);
        CHECK(part.clean_posteriors[i] == w);
        CHECK(selected[i] == (w > 0.5));
    }
}

TEST_CASE("selection is deterministic with a frozen model") {
    const auto [ds, clean] = planted_losses(2, 60, 0.6, 23);
    (void)clean;
    const Classifier model = identity_model(2);
    const Partition a = select(model, ds);
    const Partition b = select(model, ds);
    CHECK(a.clean_indices == b.clean_indices);
    CHECK(a.unlabeled_indices == b.unlabeled_indices);
    CHECK(a.clean_posteriors == b.clean_posteriors);
}

TEST_CASE("single-GMM selection pools the losses") {
    const auto [ds, clean] = planted_losses(2, 100, 0.6, 29);
    (void)clean;
    const Partition part = select_single_gmm(identity_model(2), ds);
    CHECK(part.per_class_fits.size() == 2);
    CHECK(part.per_class_fits[0].mean_clean == part.per_class_fits[1].mean_clean);
    std::size_t covered = part.unlabeled_indices.size();
    for (const auto& cls : part.clean_indices) covered += cls.size();
    CHECK(covered == ds.size());
}

TEST_CASE("perfect selection scores unit precision and recall") {
    const auto [ds, clean] = planted_losses(2, 50, 0.7, 31);
    std::vector<double> posteriors(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) posteriors[i] = clean[i] ? 1.0 : 0.0;
    const Partition part = make_partition(ds, posteriors, std::vector<GmmFit>(2));
    const SelectionQuality q = selection_quality(part, ds);
    CHECK(q.overall.precision == 1.0);
    CHECK(q.overall.recall == 1.0);
}

TEST_CASE("selecting everything gives clean-fraction precision and unit recall") {
    const auto [ds, clean] = planted_losses(2, 50, 0.7, 37);
    const Partition part = make_partition(ds, std::vector<double>(ds.size(), 1.0),
                                          std::vector<GmmFit>(2));
    const SelectionQuality q = selection_quality(part, ds);
    std::size_t n_clean = 0;
    for (bool b : clean) n_clean += b ? 1 : 0;
    CHECK(q.overall.precision ==
          doctest::Approx(static_cast<double>(n_clean) / static_cast<double>(ds.size())));
    CHECK(q.overall.recall == 1.0);
}

TEST_CASE("selecting nothing gives zero precision and recall") {
    const auto [ds, clean] = planted_losses(2, 50, 0.7, 41);
    (void)clean;
    const Partition part = make_partition(ds, std::vector<double>(ds.size(), 0.0),
                                          std::vector<GmmFit>(2));
    const SelectionQuality q = selection_quality(part, ds);
    CHECK(q.overall.precision == 0.0);
    CHECK(q.overall.recall == 0.0);
    CHECK(q.overall.selected == 0);
}

TEST_CASE("split thresholds route classes by observed size") {
    LabeledDataset ds;
    ds.num_classes = 3;
    const std::size_t n = 150 + 50 + 10;
    ds.features = Matrix(n, 1);
    ds.true_labels = std::vector<int>();
    for (int c = 0; c < 3; ++c) {
        const int size = c == 0 ? 150 : c == 1 ? 50 : 10;
        for (int k = 0; k < size; ++k) {
            ds.observed_labels.push_back(c);
            ds.true_labels->push_back(c);
        }
    }
    ds.recompute_counts();
    const Partition part = make_partition(ds, std::vector<double>(n, 1.0),
                                          std::vector<GmmFit>(3));
    const SelectionQuality q = selection_quality(part, ds);
    CHECK(q.many.selected == 150);
    CHECK(q.medium.selected == 50);
    CHECK(q.few.selected == 10);
    CHECK(q.overall.selected == static_cast<std::int64_t>(n));
}

TEST_CASE("selection quality requires ground truth") {
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.features = Matrix(2, 1);
    ds.observed_labels = {0, 1};
    ds.recompute_counts();
    const Partition part = make_partition(ds, {1.0, 1.0}, std::vector<GmmFit>(2));
    CHECK_THROWS_AS(selection_quality(part, ds), std::logic_error);
}
