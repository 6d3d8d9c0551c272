#include <doctest.h>

#include <cmath>
#include <random>

#include "cts/nn/optim.hpp"

using namespace cts::nn;

namespace {

struct Quadratic {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;

    double operator()(std::span<const double> x, std::span<double> g) const {
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), x.size());
        Eigen::Map<Eigen::VectorXd> gv(g.data(), g.size());
        gv = A * xv - b;
        return 0.5 * xv.dot(A * xv) - b.dot(xv);
    }
};

Quadratic random_spd(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd R(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) R(i, j) = nd(rng);
    Quadratic q;
    q.A = R * R.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    q.b = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) q.b(i) = nd(rng);
    return q;
}

double rosenbrock(std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
}

}  // namespace

TEST_CASE("lbfgs solves SPD quadratics to the closed-form minimizer") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const Quadratic q = random_spd(10, seed);
        LbfgsConfig cfg;
        cfg.gradient_tolerance = 1e-10;
        const LbfgsResult r = lbfgs_minimize(q, std::vector<double>(10, 0.0), cfg);
        const Eigen::VectorXd exact = q.A.ldlt().solve(q.b);
        Eigen::Map<const Eigen::VectorXd> x(r.x.data(), 10);
        CHECK((x - exact).norm() < 1e-6);
    }
}

TEST_CASE("lbfgs drives a convex bowl to the origin") {
    auto bowl = [](std::span<const double> x, std::span<double> g) {
        double f = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            f += x[i] * x[i];
            g[i] = 2 * x[i];
        }
        return f;
    };
    const LbfgsResult r = lbfgs_minimize(bowl, {3.0, -7.0, 1e3, 0.25}, LbfgsConfig{});
    for (double v : r.x) CHECK(std::abs(v) < 1e-8);
    CHECK(r.converged());
}

TEST_CASE("lbfgs minimizes Rosenbrock from the standard start") {
    LbfgsConfig cfg;
    cfg.gradient_tolerance = 1e-10;
    const LbfgsResult r = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, cfg);
    std::vector<double> g(2);
    CHECK(rosenbrock(r.x, g) < 1e-8);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("objective history never increases") {
    LbfgsConfig cfg;
    const LbfgsResult smooth = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, cfg);
    for (std::size_t i = 1; i < smooth.history.size(); ++i)
        CHECK(smooth.history[i] <= smooth.history[i - 1]);

    cfg.l1 = 0.5;
    const Quadratic q = random_spd(8, 77);
    const LbfgsResult sparse = lbfgs_minimize(q, std::vector<double>(8, 1.0), cfg);
    for (std::size_t i = 1; i < sparse.history.size(); ++i)
        CHECK(sparse.history[i] <= sparse.history[i - 1]);
}

TEST_CASE("orthant-wise mode matches soft thresholding on a separable problem") {
    // f(x) = 0.5 * ||x - a||^2 + l1 * ||x||_1 has minimizer sign(a) * max(|a| - l1, 0).
    const std::vector<double> a = {2.0, -0.3, 0.05, -4.0, 0.7, 0.0};
    auto f = [&](std::span<const double> x, std::span<double> g) {
        double v = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            v += 0.5 * (x[i] - a[i]) * (x[i] - a[i]);
            g[i] = x[i] - a[i];
        }
        return v;
    };
    LbfgsConfig cfg;
    cfg.l1 = 0.5;
    cfg.gradient_tolerance = 1e-12;
    const LbfgsResult r = lbfgs_minimize(f, std::vector<double>(a.size(), 0.3), cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double expect = std::copysign(std::max(std::abs(a[i]) - 0.5, 0.0), a[i]);
        CHECK(r.x[i] == doctest::Approx(expect).epsilon(1e-9));
        if (expect == 0.0) CHECK(r.x[i] == 0.0);
    }
}

TEST_CASE("l1 mask exempts coordinates from the penalty") {
    auto f = [](std::span<const double> x, std::span<double> g) {
        g[0] = x[0] - 0.2;
        g[1] = x[1] - 0.2;
        return 0.5 * ((x[0] - 0.2) * (x[0] - 0.2) + (x[1] - 0.2) * (x[1] - 0.2));
    };
    LbfgsConfig cfg;
    cfg.l1 = 10.0;
    cfg.l1_mask = {true, false};
    const LbfgsResult r = lbfgs_minimize(f, {1.0, 1.0}, cfg);
    CHECK(r.x[0] == 0.0);
    CHECK(r.x[1] == doctest::Approx(0.2));
}

TEST_CASE("hitting the iteration cap returns the best iterate with a flag") {
    LbfgsConfig cfg;
    cfg.max_iterations = 3;
    const LbfgsResult r = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, cfg);
    CHECK(r.status == LbfgsStatus::MaxIterations);
    CHECK(r.iterations == 3);
    CHECK(r.objective == doctest::Approx(*std::min_element(r.history.begin(), r.history.end())));
}

TEST_CASE("a gradient that lies is reported as a line-search failure") {
    auto bad = [](std::span<const double> x, std::span<double> g) {
        g[0] = -1.0;  // claims descent to the right, but f grows there
        return x[0] * x[0] + 1.0;
    };
    LbfgsConfig cfg;
    cfg.max_line_search = 10;
    const LbfgsResult r = lbfgs_minimize(bad, {1.0}, cfg);
    CHECK(r.status == LbfgsStatus::LineSearchFailed);
    CHECK(r.x[0] == 1.0);
}

TEST_CASE("adam: zero gradient with zero moments is a fixed point") {
    ParamLayout layout;
    layout.add("w", 3);
    std::vector<double> p = {0.0, 0.0, 0.0}, g = {0.0, 0.0, 0.0};
    OptimState st;
    adam_step(p, g, st, AdamConfig{}, layout);
    for (double v : p) CHECK(v == 0.0);
    CHECK(st.step == 1);
}

TEST_CASE("adam: constant gradient gives steps of size close to the learning rate") {
    ParamLayout layout;
    layout.add("w", 1);
    AdamConfig cfg;
    cfg.l2 = 0;
    std::vector<double> p = {0.0}, g = {3.0};
    OptimState st;
    double prev = 0;
    for (int i = 0; i < 500; ++i) {
        prev = p[0];
        adam_step(p, g, st, cfg, layout);
    }
    CHECK(std::abs(prev - p[0]) == doctest::Approx(cfg.learning_rate).epsilon(1e-3));
}

TEST_CASE("adam: minimizes x^2 from 5") {
    ParamLayout layout;
    layout.add("x", 1);
    AdamConfig cfg;
    cfg.learning_rate = 0.01;  // lr 0.001 cannot travel distance 5 in 2000 steps
    std::vector<double> p = {5.0}, g(1);
    OptimState st;
    int steps = 0;
    while (std::abs(p[0]) >= 1e-2 && steps < 2000) {
        g[0] = 2 * p[0];
        adam_step(p, g, st, cfg, layout);
        ++steps;
    }
    CHECK(std::abs(p[0]) < 1e-2);
    CHECK(p[0] * p[0] < 1e-2);
}

TEST_CASE("adam: non-finite gradient names the tensor") {
    ParamLayout layout;
    layout.add("encoder.W", 2);
    layout.add("head.b", 2);
    std::vector<double> p(4, 1.0), g = {0.0, 0.0, 0.0, std::nan("")};
    OptimState st;
    try {
        adam_step(p, g, st, AdamConfig{}, layout);
        FAIL("expected an exception");
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("head.b") != std::string::npos);
    }
    for (double v : p) CHECK(v == 1.0);
}
