#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "matrix.hpp"
#include "rng.hpp"

using namespace pmad;

TEST_CASE("softmax known values") {
    auto s = softmax({0.0, 0.0, 0.0}, 1.0);
    CHECK(s[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    s = softmax({std::log(2.0), 0.0}, 1.0);
    CHECK(s[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    s = softmax({1.0, 0.0, -1.0}, 1.0);
    CHECK(s[0] == doctest::Approx(0.66524096).epsilon(1e-7));
    CHECK(s[1] == doctest::Approx(0.24472847).epsilon(1e-7));
    CHECK(s[2] == doctest::Approx(0.09003057).epsilon(1e-7));
}

TEST_CASE("softmax properties") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(1 + rng.below(8));
        for (double& x : v) x = rng.uniform(-5.0, 5.0);

        auto s = softmax(v, 1.0);
        double sum = 0.0;
        for (double x : s) {
            CHECK(x > 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        // shift invariance
        std::vector<double> shifted = v;
        const double c = rng.uniform(-100.0, 100.0);
        for (double& x : shifted) x += c;
        auto s2 = softmax(shifted, 1.0);
        for (size_t i = 0; i < v.size(); ++i)
            CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-9));

        // lower tau sharpens: max entry does not shrink
        if (v.size() > 1) {
            auto sharp = softmax(v, 0.25);
            size_t argmax = 0;
            for (size_t i = 1; i < v.size(); ++i)
                if (v[i] > v[argmax]) argmax = i;
            CHECK(sharp[argmax] >= s[argmax] - 1e-12);
        }
    }
    CHECK_THROWS_AS(softmax({}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, 2.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, std::nan("")}, 1.0), std::invalid_argument);
}

TEST_CASE("softmax survives large magnitudes") {
    auto s = softmax({1000.0, 999.0, -1000.0}, 1.0);
    CHECK(std::isfinite(s[0]));
    CHECK(s[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(s[2] == doctest::Approx(0.0).epsilon(1e-12));
    double sum = s[0] + s[1] + s[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("row_softmax matches vector softmax per row") {
    Rng rng(3);
    Matrix a(4, 6);
    for (double& x : a.data) x = rng.uniform(-3.0, 3.0);
    Matrix s = row_softmax(a, 0.7);
    for (int r = 0; r < a.rows; ++r) {
        std::vector<double> v(a.row(r), a.row(r) + a.cols);
        auto ref = softmax(v, 0.7);
        for (int c = 0; c < a.cols; ++c) CHECK(s.at(r, c) == ref[c]);
    }
}

TEST_CASE("sigmoid known values and saturation") {
    Matrix a = Matrix::from_rows({{std::log(3.0), 0.0, -40.0, 20.0}});
    Matrix s = sigmoid(a);
    CHECK(s.at(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.at(0, 2) > 0.0);
    CHECK(s.at(0, 2) < 1e-15);
    CHECK(s.at(0, 3) < 1.0);
    CHECK(s.at(0, 3) > 1.0 - 1e-8);
    Matrix big = Matrix::from_rows({{-1e6, 1e6}});
    Matrix sb = sigmoid(big);
    CHECK(std::isfinite(sb.at(0, 0)));
    CHECK(std::isfinite(sb.at(0, 1)));
}

TEST_CASE("gelu known values") {
    Matrix a = Matrix::from_rows({{0.0, 1.0, -1.0, 10.0}});
    Matrix g = gelu(a);
    CHECK(g.at(0, 0) == 0.0);
    CHECK(g.at(0, 1) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(g.at(0, 2) == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
    CHECK(g.at(0, 3) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("l2_normalize_rows") {
    Matrix a = Matrix::from_rows({{3.0, 4.0}, {0.0, 0.0}});
    int degenerate = -1;
    Matrix n = l2_normalize_rows(a, 1e-8, &degenerate);
    CHECK(n.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(n.at(1, 0) == 0.0);
    CHECK(n.at(1, 1) == 0.0);
    CHECK(degenerate == 1);

    // unit norm after normalization, idempotent
    Rng rng(11);
    Matrix b(5, 7);
    for (double& x : b.data) x = rng.uniform(-2.0, 2.0);
    Matrix nb = l2_normalize_rows(b, 1e-8);
    for (int r = 0; r < nb.rows; ++r) {
        double norm = 0.0;
        for (int c = 0; c < nb.cols; ++c) norm += nb.at(r, c) * nb.at(r, c);
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
    }
    Matrix twice = l2_normalize_rows(nb, 1e-8);
    for (size_t i = 0; i < nb.data.size(); ++i)
        CHECK(twice.data[i] == doctest::Approx(nb.data[i]).epsilon(1e-12));
}

TEST_CASE("matmul analytic cases") {
    Matrix a = Matrix::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    Matrix b = Matrix::from_rows({{7.0, 8.0}, {9.0, 10.0}, {11.0, 12.0}});
    Matrix c = matmul(a, b);
    CHECK(c.rows == 2);
    CHECK(c.cols == 2);
    CHECK(c.at(0, 0) == 58.0);
    CHECK(c.at(0, 1) == 64.0);
    CHECK(c.at(1, 0) == 139.0);
    CHECK(c.at(1, 1) == 154.0);

    Matrix i3 = Matrix::identity(3);
    Matrix ai = matmul(a, i3);
    for (size_t k = 0; k < a.data.size(); ++k) CHECK(ai.data[k] == a.data[k]);

    CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transpose") {
    Rng rng(5);
    Matrix a(3, 4), b(5, 4), c(3, 5);
    for (double& x : a.data) x = rng.normal();
    for (double& x : b.data) x = rng.normal();
    for (double& x : c.data) x = rng.normal();

    Matrix nt = matmul_nt(a, b);
    Matrix nt_ref = matmul(a, transpose(b));
    REQUIRE(nt.same_shape(nt_ref));
    for (size_t k = 0; k < nt.data.size(); ++k)
        CHECK(nt.data[k] == doctest::Approx(nt_ref.data[k]).epsilon(1e-12));

    Matrix tn = matmul_tn(a, c);  // (4x3)·(3x5)
    Matrix tn_ref = matmul(transpose(a), c);
    REQUIRE(tn.same_shape(tn_ref));
    for (size_t k = 0; k < tn.data.size(); ++k)
        CHECK(tn.data[k] == doctest::Approx(tn_ref.data[k]).epsilon(1e-12));
}

TEST_CASE("slice and concat round trips") {
    Rng rng(9);
    Matrix a(6, 8);
    for (double& x : a.data) x = rng.normal();
    Matrix top = slice_rows(a, 0, 2), rest = slice_rows(a, 2, 4);
    CHECK(top.rows == 2);
    CHECK(rest.rows == 4);
    CHECK(top.at(1, 3) == a.at(1, 3));
    CHECK(rest.at(0, 0) == a.at(2, 0));

    Matrix left = slice_cols(a, 0, 3), right = slice_cols(a, 3, 5);
    Matrix joined = concat_cols(left, right);
    REQUIRE(joined.same_shape(a));
    for (size_t k = 0; k < a.data.size(); ++k) CHECK(joined.data[k] == a.data[k]);

    CHECK_THROWS_AS(slice_rows(a, 5, 3), std::invalid_argument);
    CHECK_THROWS_AS(slice_cols(a, -1, 2), std::invalid_argument);
}

TEST_CASE("ParamStore flatten and assign round trip") {
    ParamStore ps;
    ps.add("w", Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}}));
    ps.add("b", Matrix::from_rows({{5.0, 6.0}}));
    CHECK(ps.count() == 2);
    CHECK(ps.scalar_count() == 6);

    ParamVector pv = ps.flatten();
    REQUIRE(pv.values.size() == 6);
    CHECK(pv.layout[0].name == "w");
    CHECK(pv.layout[1].name == "b");
    CHECK(pv.layout[1].offset == 4);
    CHECK(pv.values[0] == 1.0);
    CHECK(pv.values[4] == 5.0);

    std::vector<double> repl = {9, 8, 7, 6, 5, 4};
    ps.assign(repl);
    CHECK(ps.get("w").at(0, 0) == 9.0);
    CHECK(ps.get("b").at(0, 1) == 4.0);
    CHECK_THROWS_AS(ps.assign({1.0}), std::invalid_argument);
    CHECK_THROWS_AS(ps.add("w", Matrix(1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(ps.get("missing"), std::invalid_argument);
}

TEST_CASE("grad_check validates an exact gradient") {
    Rng rng(23);
    std::vector<double> x(10);
    for (double& v : x) v = rng.uniform(-2.0, 2.0);
    auto f = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double t : v) s += 0.5 * t * t;
        return s;
    };
    GradCheckResult r = grad_check(f, x, x, 1e-5);
    CHECK(r.max_rel_err <= 1e-8);

    auto fc = [](const std::vector<double>&) { return 3.0; };
    std::vector<double> zero(10, 0.0);
    r = grad_check(fc, x, zero, 1e-5);
    CHECK(r.max_rel_err <= 1e-10);
}

TEST_CASE("grad_check flags a wrong gradient") {
    std::vector<double> x = {1.0, -2.0, 0.5};
    auto f = [](const std::vector<double>& v) { return v[0] * v[0] + v[1] + v[2]; };
    std::vector<double> wrong = {2.0 * x[0], 1.0, 0.0};  // last entry off by 1
    GradCheckResult r = grad_check(f, x, wrong, 1e-5);
    CHECK(r.max_rel_err > 0.5);
    CHECK(r.worst_index == 2);
}

TEST_CASE("rng determinism and shuffle") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    bool diverged = false;
    for (int i = 0; i < 10; ++i)
        if (a.uniform() != c.uniform()) diverged = true;
    CHECK(diverged);

    Rng r1(7), r2(7);
    std::vector<int> v1 = {0, 1, 2, 3, 4, 5, 6, 7}, v2 = v1;
    r1.shuffle(v1);
    r2.shuffle(v2);
    CHECK(v1 == v2);
    std::vector<int> sorted = v1;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>({0, 1, 2, 3, 4, 5, 6, 7}));

    Rng r3(99);
    auto idx = r3.sample_indices(10, 4);
    CHECK(idx.size() == 4);
    std::sort(idx.begin(), idx.end());
    CHECK(std::unique(idx.begin(), idx.end()) == idx.end());
    for (int i : idx) CHECK(i < 10);

    // normal() should have roughly zero mean, unit variance
    Rng r4(2024);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double z = r4.normal();
        sum += z;
        sum2 += z * z;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05));
    CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("derive_seed separates tags") {
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(5, "cell/0") == derive_seed(5, "cell/0"));
}
