#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "taillab/bias.hpp"
#include "taillab/rng.hpp"

using namespace taillab;

namespace {

Matrix single_row(const std::vector<double>& p) {
    Matrix m(1, p.size());
    for (std::size_t j = 0; j < p.size(); ++j) m(0, j) = p[j];
    return m;
}

}  // namespace

TEST_CASE("a single accumulated sample lands in its label row") {
    BiasState state = make_bias_state(3, 0.9);
    accumulate(state, single_row({0.2, 0.3, 0.5}), {2});
    CHECK(state.epoch_matrix(2, 0) == 0.2);
    CHECK(state.epoch_matrix(2, 1) == 0.3);
    CHECK(state.epoch_matrix(2, 2) == 0.5);
    CHECK(state.counters[2] == 1);
    CHECK(state.epoch_matrix(0, 0) == 0.0);
}

TEST_CASE("accumulation is additive before normalization") {
    BiasState state = make_bias_state(2, 0.9);
    accumulate(state, single_row({0.6, 0.4}), {1});
    accumulate(state, single_row({0.6, 0.4}), {1});
    CHECK(state.epoch_matrix(1, 0) == doctest::Approx(1.2));
    CHECK(state.counters[1] == 2);
}

TEST_CASE("a batch without label-c samples leaves row c untouched") {
    BiasState state = make_bias_state(3, 0.9);
    Matrix probs(2, 3);
    probs(0, 0) = 1.0;
    probs(1, 1) = 1.0;
    accumulate(state, probs, {0, 1});
    for (std::size_t j = 0; j < 3; ++j) CHECK(state.epoch_matrix(2, j) == 0.0);
    CHECK(state.counters[2] == 0);
}

TEST_CASE("EMA of a constant epoch matrix unrolls to (1 - sigma^E) M") {
    const std::vector<double> p = {0.7, 0.2, 0.1};
    for (int e : {1, 5, 20}) {
        BiasState state = make_bias_state(3, 0.9);
        for (int epoch = 0; epoch < e; ++epoch) {
            accumulate(state, single_row(p), {0});
            accumulate(state, single_row(p), {1});
            accumulate(state, single_row(p), {2});
            finalize_epoch(state);
        }
        const double scale = 1.0 - std::pow(0.9, e);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(state.ema_matrix(i, j) == doctest::Approx(scale * p[j]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("sigma zero makes the EMA equal the latest normalized epoch matrix") {
    BiasState state = make_bias_state(2, 0.0);
    accumulate(state, single_row({0.9, 0.1}), {0});
    accumulate(state, single_row({0.3, 0.7}), {1});
    finalize_epoch(state);
    accumulate(state, single_row({0.6, 0.4}), {0});
    accumulate(state, single_row({0.6, 0.4}), {0});
    accumulate(state, single_row({0.2, 0.8}), {1});
    finalize_epoch(state);
    CHECK(state.ema_matrix(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(state.ema_matrix(0, 1) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(state.ema_matrix(1, 1) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("normalized rows are probability vectors") {
    Rng rng(7);
    BiasState state = make_bias_state(4, 0.0);
    for (int k = 0; k < 50; ++k) {
        Matrix probs(1, 4);
        double sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            probs(0, j) = rng.uniform01() + 1e-3;
            sum += probs(0, j);
        }
        for (std::size_t j = 0; j < 4; ++j) probs(0, j) /= sum;
        accumulate(state, probs, {static_cast<int>(rng.uniform_index(4))});
    }
    finalize_epoch(state);
    for (std::size_t i = 0; i < 4; ++i) {
        if (!state.rows_ever_updated[i]) continue;
        double sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(state.ema_matrix(i, j) > 0.0);
            sum += state.ema_matrix(i, j);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("classes never seen get a uniform EMA row") {
    BiasState state = make_bias_state(3, 0.9);
    accumulate(state, single_row({0.5, 0.3, 0.2}), {0});
    finalize_epoch(state);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(state.ema_matrix(1, j) == doctest::Approx(1.0 / 3.0));
        CHECK(state.ema_matrix(2, j) == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("rows absent in a later epoch keep their EMA value") {
    BiasState state = make_bias_state(2, 0.5);
    accumulate(state, single_row({0.8, 0.2}), {0});
    accumulate(state, single_row({0.4, 0.6}), {1});
    finalize_epoch(state);
    const double row1_before = state.ema_matrix(1, 0);
    accumulate(state, single_row({0.9, 0.1}), {0});  // class 1 absent this epoch
    finalize_epoch(state);
    CHECK(state.ema_matrix(1, 0) == row1_before);
}

TEST_CASE("finalize without accumulation is a warned no-op") {
    BiasState state = make_bias_state(2, 0.9);
    accumulate(state, single_row({0.5, 0.5}), {0});
    finalize_epoch(state);
    const Matrix before = state.ema_matrix;
    finalize_epoch(state);
    CHECK(state.finalize_warnings == 1);
    CHECK(state.ema_matrix == before);
}

TEST_CASE("ratio matrix reproduces hand values and the unit diagonal") {
    Matrix ema(2, 2);
    ema(0, 0) = 0.8;
    ema(0, 1) = 0.2;
    ema(1, 0) = 0.05;
    ema(1, 1) = 0.95;
    const Matrix r = ratio_matrix(ema);
    CHECK(r(0, 1) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r(0, 0) == 1.0);
    CHECK(r(1, 1) == 1.0);
}

TEST_CASE("ratio matrix is scale-invariant, symmetric-reciprocal, unit-diagonal") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(8);
        Matrix ema(c, c);
        for (double& v : ema.data()) v = rng.uniform01() + 1e-3;
        const Matrix r = ratio_matrix(ema);

        Matrix scaled = ema;
        for (double& v : scaled.data()) v *= 7.0;
        const Matrix rs = ratio_matrix(scaled);
        for (std::size_t i = 0; i < c; ++i) {
            CHECK(r(i, i) == 1.0);
            for (std::size_t j = 0; j < c; ++j) {
                CHECK(std::abs(r(i, j) * r(j, i) - 1.0) <= 1e-9);
                CHECK(std::abs(rs(i, j) - r(i, j)) <=
                      1e-12 * std::max(1.0, std::abs(r(i, j))));
            }
        }

        // power-of-two scaling is bit-exact
        Matrix pow2 = ema;
        for (double& v : pow2.data()) v *= 4.0;
        CHECK(ratio_matrix(pow2) == r);
    }
}

TEST_CASE("ratio matrix rejects non-positive entries") {
    Matrix ema(2, 2, 0.5);
    ema(1, 0) = 0.0;
    CHECK_THROWS_AS(ratio_matrix(ema), std::logic_error);
}

TEST_CASE("alpha Matrix: unit ratios give unit alphas") {
    Matrix r(3, 3, 1.0);
    const Matrix a = alpha_matrix(r, 3.0, 1.0);
    for (double v : a.data()) CHECK(v == 1.0);
}

TEST_CASE("alpha hand values: suppression cubes, relaxation passes through") {
    Matrix r(2, 2, 1.0);
    r(0, 1) = 2.0;
    r(1, 0) = 0.5;
    const Matrix a = alpha_matrix(r, 3.0, 1.0);
    CHECK(a(0, 1) == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(a(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("equal gammas make paired alphas multiply to one") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix ema(4, 4);
        for (double& v : ema.data()) v = rng.uniform01() + 0.1;
        const Matrix a = alpha_matrix(ratio_matrix(ema), 2.0, 2.0);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(a(i, j) * a(j, i) == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("suppress/relax dichotomy holds for positive gammas") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix ema(3, 3);
        for (double& v : ema.data()) v = rng.uniform01() + 1e-2;
        const Matrix r = ratio_matrix(ema);
        const Matrix a = alpha_matrix(r, 3.0, 1.0);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                if (i == j) continue;
                if (r(i, j) > 1.0) {
                    CHECK(a(i, j) > 1.0);
                    CHECK(a(j, i) < 1.0);
                }
                CHECK(a(i, j) > 0.0);
                CHECK(std::isfinite(a(i, j)));
            }
        }
    }
}

TEST_CASE("frequency alpha mirrors count ratios") {
    const Matrix a = frequency_alpha({100, 25}, 3.0, 1.0);
    // R_21 = n_1/n_2 = 4 -> suppression 4^3
    CHECK(a(1, 0) == doctest::Approx(64.0).epsilon(1e-12));
    CHECK(a(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("balanced counts give the all-ones frequency alpha") {
    const Matrix a = frequency_alpha({50, 50, 50}, 3.0, 1.0);
    for (double v : a.data()) CHECK(v == 1.0);
}

TEST_CASE("single-class frequency alpha is the 1x1 unit") {
    const Matrix a = frequency_alpha({10}, 3.0, 1.0);
    CHECK(a.rows() == 1);
    CHECK(a(0, 0) == 1.0);
}
