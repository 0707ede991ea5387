#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "net.hpp"
#include "rng.hpp"

using namespace cloudnn;

namespace {

Architecture tiny_rpnn() {
    Architecture a;
    a.kind = ArchKind::Rpnn;
    a.levels = 2;
    a.width = 3;
    a.n_final = 2;
    a.points_per_level = 2;
    return a;
}

Architecture tiny_mlp(ArchKind kind) {
    Architecture a;
    a.kind = kind;
    a.levels = 2;
    a.width = 4;
    a.n_final = 2;
    a.points_per_level = 2;
    return a;
}

// Straight transcription of the block equations, kept independent of the
// cached batched implementation under test.
double reference_forward(const Params& p, const Eigen::VectorXd& z) {
    const Architecture& a = p.arch;
    auto relu = [](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v.cwiseMax(0.0); };
    size_t ti = 0;
    Eigen::VectorXd o;
    if (a.kind == ArchKind::Rpnn) {
        o = Eigen::VectorXd::Zero(a.width);
        for (int k = 1; k <= a.levels; ++k) {
            Eigen::VectorXd zk(a.points_per_level + 1);
            zk.head(a.points_per_level) = z.segment((k - 1) * a.points_per_level, a.points_per_level);
            zk(a.points_per_level) = z(z.size() - 1);
            const auto& V = p.tensors[ti++];
            const auto& W1 = p.tensors[ti++];
            const auto& b1 = p.tensors[ti++];
            const auto& W2 = p.tensors[ti++];
            const auto& b2 = p.tensors[ti++];
            Eigen::VectorXd f1 = relu(V * zk + W1 * o + b1.col(0));
            Eigen::VectorXd f2 = W2 * f1 + b2.col(0);
            o = relu(f2 + o);
        }
    } else {
        o = z;
    }
    while (ti < p.tensors.size()) {
        const auto& W = p.tensors[ti++];
        const auto& b = p.tensors[ti++];
        o = relu(W * o + b.col(0));
    }
    return o(0);
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parameter counts of the reference architectures") {
    Architecture rpnn;  // defaults: K=10, width=200, n_final=3, 225 points
    CHECK(rpnn.input_size() == 2251);
    CHECK(rpnn.per_level_input() == 226);
    CHECK(rpnn.layer_count() == 23);
    CHECK(rpnn.param_count() == 1336601);

    Architecture deep = rpnn;
    deep.kind = ArchKind::DeepNarrowMlp;
    CHECK(deep.param_count() == 1335001);
    CHECK(std::abs(deep.param_count() - rpnn.param_count()) <= rpnn.param_count() / 10);

    Architecture wide = rpnn;
    wide.kind = ArchKind::ShallowWideMlp;
    CHECK(wide.param_count() == 1222001);
    CHECK(std::abs(wide.param_count() - rpnn.param_count()) <= rpnn.param_count() / 10);

    // shapes agree with the count
    for (const Architecture& a : {rpnn, deep, wide}) {
        long n = 0;
        for (auto [r, c] : a.tensor_shapes()) n += static_cast<long>(r) * c;
        CHECK(n == a.param_count());
    }
}

TEST_CASE("init is deterministic, he-scaled, with expected biases") {
    Architecture a = tiny_rpnn();
    Params p1 = init_params(a, 5), p2 = init_params(a, 5), p3 = init_params(a, 6);
    REQUIRE(p1.tensors.size() == a.tensor_shapes().size());
    const size_t n_block = 5 * static_cast<size_t>(a.levels);
    for (size_t i = 0; i < p1.tensors.size(); ++i) {
        CHECK(p1.tensors[i] == p2.tensors[i]);
        if (p1.tensors[i].cols() == 1) {
            // block biases start at zero (blocks begin as the identity);
            // trailing dense layers start with a small positive bias so the
            // output relu is alive from the first step.
            if (i < n_block)
                CHECK(p1.tensors[i].isZero(0.0));
            else
                CHECK((p1.tensors[i].array() == 0.1).all());
        } else if (i == p1.tensors.size() - 2) {
            CHECK((p1.tensors[i].array() >= 0.0).all());  // output layer alive
        }
    }
    CHECK(p1.tensors[0] != p3.tensors[0]);

    // empirical stddev of a big weight matrix ~ sqrt(2/cols)
    Architecture big;
    big.kind = ArchKind::Rpnn;
    big.levels = 1;
    big.width = 200;
    big.n_final = 1;
    big.points_per_level = 225;
    Params pb = init_params(big, 1);
    const Eigen::MatrixXd& V = pb.tensors[0];
    double mean = V.mean();
    double var = (V.array() - mean).square().mean();
    CHECK(std::sqrt(var) == doctest::Approx(std::sqrt(2.0 / 226)).epsilon(0.05));
    CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("all-zero parameters predict zero") {
    Architecture a = tiny_rpnn();
    Params p;
    p.arch = a;
    for (auto [r, c] : a.tensor_shapes()) p.tensors.push_back(Eigen::MatrixXd::Zero(r, c));
    Eigen::VectorXd z = Eigen::VectorXd::Ones(a.input_size());
    CHECK(forward(p, z) == 0.0);
}

TEST_CASE("forward matches an independent transcription of the equations") {
    Rng rng(3);
    for (ArchKind kind : {ArchKind::Rpnn, ArchKind::DeepNarrowMlp, ArchKind::ShallowWideMlp}) {
        Architecture a = kind == ArchKind::Rpnn ? tiny_rpnn() : tiny_mlp(kind);
        if (kind == ArchKind::ShallowWideMlp) a.width = 4;
        Params p = init_params(a, 17);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::VectorXd z(a.input_size());
            for (int i = 0; i < z.size(); ++i) z(i) = rng.uniform() * 2;
            CHECK(forward(p, z) == doctest::Approx(reference_forward(p, z)).epsilon(1e-12));
        }
    }
}

TEST_CASE("hand-computed forward for a one-block width-one net") {
    Architecture a;
    a.kind = ArchKind::Rpnn;
    a.levels = 1;
    a.width = 1;
    a.n_final = 1;
    a.points_per_level = 1;
    Params p;
    p.arch = a;
    // V=[2, 3] (sigma, gamma), W1=[0.5], b1=[0.1], W2=[1.5], b2=[-0.2], final W=[2], b=[0.3]
    p.tensors.push_back((Eigen::MatrixXd(1, 2) << 2, 3).finished());
    p.tensors.push_back((Eigen::MatrixXd(1, 1) << 0.5).finished());
    p.tensors.push_back((Eigen::MatrixXd(1, 1) << 0.1).finished());
    p.tensors.push_back((Eigen::MatrixXd(1, 1) << 1.5).finished());
    p.tensors.push_back((Eigen::MatrixXd(1, 1) << -0.2).finished());
    p.tensors.push_back((Eigen::MatrixXd(1, 1) << 2.0).finished());
    p.tensors.push_back((Eigen::MatrixXd(1, 1) << 0.3).finished());
    Eigen::VectorXd z(2);
    z << 0.4, 0.25;  // sigma, gamma
    // f1 = relu(2*0.4 + 3*0.25 + 0.5*0 + 0.1) = 1.65
    // o  = relu(1.5*1.65 - 0.2 + 0) = 2.275
    // out = relu(2*2.275 + 0.3) = 4.85
    CHECK(forward(p, z) == doctest::Approx(4.85).epsilon(1e-12));
}

TEST_CASE("loss fixtures") {
    CHECK(loss(0, 0) == 0.0);
    CHECK(loss(1, 0) == doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-12));
    CHECK(loss(1, 0) == doctest::Approx(0.4804530139182014).epsilon(1e-12));
    CHECK(loss(std::exp(1.0) - 1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(loss(3, 3) == 0.0);
    CHECK(loss(0.5, 2.0) == doctest::Approx(std::pow(std::log(1.5) - std::log(3.0), 2)).epsilon(1e-12));
    CHECK_THROWS(loss(-0.1, 0));
    CHECK_THROWS(loss(0, -0.1));
}

TEST_CASE("backward agrees with batch-mean of per-sample losses") {
    Architecture a = tiny_rpnn();
    Params p = init_params(a, 9);
    Rng rng(10);
    const int B = 6;
    Eigen::MatrixXd Z(a.input_size(), B);
    Eigen::VectorXd y(B);
    for (int j = 0; j < B; ++j) {
        for (int i = 0; i < Z.rows(); ++i) Z(i, j) = rng.uniform();
        y(j) = rng.uniform() * 2;
    }
    BatchGrad bg = backward(p, Z, y);
    double manual = 0;
    for (int j = 0; j < B; ++j) manual += loss(forward(p, Z.col(j)), y(j)) / B;
    CHECK(bg.loss == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("gradients pass a finite-difference check for all architectures") {
    Rng rng(21);
    for (ArchKind kind : {ArchKind::Rpnn, ArchKind::DeepNarrowMlp, ArchKind::ShallowWideMlp}) {
        Architecture a = kind == ArchKind::Rpnn ? tiny_rpnn() : tiny_mlp(kind);
        Params p = init_params(a, 33);
        const int B = 4;
        Eigen::MatrixXd Z(a.input_size(), B);
        Eigen::VectorXd y(B);
        for (int j = 0; j < B; ++j) {
            for (int i = 0; i < Z.rows(); ++i) Z(i, j) = 0.2 + rng.uniform();
            y(j) = 0.1 + rng.uniform();
        }
        BatchGrad bg = backward(p, Z, y);
        REQUIRE(bg.grads.size() == p.tensors.size());

        auto loss_at = [&]() {
            double s = 0;
            Eigen::VectorXd pred = forward_batch(p, Z);
            for (int j = 0; j < B; ++j) s += loss(pred(j), y(j)) / B;
            return s;
        };
        double h = 1e-6;
        int checked = 0;
        for (size_t t = 0; t < p.tensors.size(); ++t) {
            for (int i = 0; i < p.tensors[t].rows() && checked < 400; i += 1) {
                for (int j = 0; j < p.tensors[t].cols(); j += 2, ++checked) {
                    double orig = p.tensors[t](i, j);
                    double mid = loss_at();
                    p.tensors[t](i, j) = orig + h;
                    double up = loss_at();
                    p.tensors[t](i, j) = orig - h;
                    double dn = loss_at();
                    p.tensors[t](i, j) = orig;
                    double right = (up - mid) / h, left = (mid - dn) / h;
                    if (std::abs(right - left) > 1e-3 * (std::abs(right) + std::abs(left) + 1)) {
                        --checked;  // relu kink inside the stencil; not differentiable here
                        continue;
                    }
                    double fd = (up - dn) / (2 * h);
                    CHECK(bg.grads[t](i, j) == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
                }
            }
        }
        CHECK(checked >= 40);
    }
}

TEST_CASE("adam step fixture") {
    // single scalar parameter, first step: m_hat = g, v_hat = g^2,
    // delta = -lr * g / (|g| + eps) ~= -lr * sign(g)
    Architecture a;
    a.kind = ArchKind::DeepNarrowMlp;
    a.levels = 1;
    a.width = 1;
    a.n_final = 1;
    a.points_per_level = 0;
    // smallest possible: use tiny rpnn instead and a uniform gradient
    Architecture t = tiny_rpnn();
    Params p = init_params(t, 2);
    Params p0 = p;
    AdamState s = init_adam(p, 1e-3);
    std::vector<Eigen::MatrixXd> g;
    for (const auto& m : p.tensors) g.push_back(Eigen::MatrixXd::Constant(m.rows(), m.cols(), 0.5));
    adam_step(p, s, g);
    CHECK(s.t == 1);
    double expect = -1e-3 * 0.5 / (0.5 + 1e-8);
    for (size_t i = 0; i < p.tensors.size(); ++i)
        CHECK(p.tensors[i](0, 0) == doctest::Approx(p0.tensors[i](0, 0) + expect).epsilon(1e-9));

    // second identical step keeps moving in the same direction
    Params p1 = p;
    adam_step(p, s, g);
    CHECK(s.t == 2);
    CHECK(p.tensors[0](0, 0) < p1.tensors[0](0, 0));
}

TEST_CASE("training fits a constant target") {
    Architecture a = tiny_rpnn();
    const int n = 256;
    Eigen::MatrixXf X(a.input_size(), n);
    Eigen::VectorXf y(n);
    Rng rng(4);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < X.rows(); ++i) X(i, j) = static_cast<float>(rng.uniform());
        y(j) = 0.7f;
    }
    TrainConfig cfg;
    cfg.steps = 800;
    cfg.batch_size = 64;
    cfg.seed = 1;
    cfg.val_every = 100;
    TrainResult r = train(X.leftCols(192), y.head(192), X.rightCols(64), y.tail(64), a, cfg);
    CHECK(r.best_val_loss < 1e-3);
    CHECK(!r.curves.empty());
    CHECK(r.curves.back().step == 800);
    // curves are recorded in increasing step order
    for (size_t i = 1; i < r.curves.size(); ++i) CHECK(r.curves[i].step > r.curves[i - 1].step);
    CHECK(mean_loss(r.params, X.rightCols(64), y.tail(64)) ==
          doctest::Approx(r.best_val_loss).epsilon(1e-9));
}

TEST_CASE("model save/load round trip") {
    Architecture a = tiny_rpnn();
    Params p = init_params(a, 12);
    std::string path = tmp_path("model.rpnw");
    save_model(p, path);
    LoadedModel lm = load_model(path);
    CHECK(!lm.has_adam);
    CHECK(lm.params.arch.kind == a.kind);
    CHECK(lm.params.arch.levels == a.levels);
    CHECK(lm.params.arch.width == a.width);
    REQUIRE(lm.params.tensors.size() == p.tensors.size());
    // weights are serialized as f32
    for (size_t i = 0; i < p.tensors.size(); ++i)
        for (int r = 0; r < p.tensors[i].rows(); ++r)
            for (int c = 0; c < p.tensors[i].cols(); ++c)
                CHECK(lm.params.tensors[i](r, c) ==
                      static_cast<double>(static_cast<float>(p.tensors[i](r, c))));

    // predictions agree to f32 precision
    Rng rng(6);
    Eigen::VectorXd z(a.input_size());
    for (int i = 0; i < z.size(); ++i) z(i) = rng.uniform();
    CHECK(forward(lm.params, z) == doctest::Approx(forward(p, z)).epsilon(1e-5));
    std::remove(path.c_str());
}

TEST_CASE("optimizer state round trips and resuming continues the descent") {
    Architecture a = tiny_rpnn();
    const int n = 128;
    Eigen::MatrixXf X(a.input_size(), n);
    Eigen::VectorXf y(n);
    Rng rng(8);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < X.rows(); ++i) X(i, j) = static_cast<float>(rng.uniform());
        y(j) = static_cast<float>(0.2 + 0.5 * X(0, j));
    }
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.batch_size = 32;
    cfg.seed = 3;
    cfg.val_every = 50;
    TrainResult first = train(X.leftCols(96), y.head(96), X.rightCols(32), y.tail(32), a, cfg);

    std::string path = tmp_path("resume.rpnw");
    save_model(first.final_params, path, &first.final_adam);
    LoadedModel lm = load_model(path);
    REQUIRE(lm.has_adam);
    CHECK(lm.adam.t == first.final_adam.t);
    CHECK(lm.adam.lr == doctest::Approx(first.final_adam.lr));
    REQUIRE(lm.adam.m.size() == first.final_adam.m.size());

    TrainResult resumed = train(X.leftCols(96), y.head(96), X.rightCols(32), y.tail(32), a, cfg,
                                &lm.params, &lm.adam);
    CHECK(resumed.final_adam.t == first.final_adam.t + cfg.steps);
    // resuming starts from the first run's final params, so its best can never
    // exceed the val loss those params had at the end of the first run
    CHECK(resumed.best_val_loss <= first.curves.back().val_loss + 1e-9);
    std::remove(path.c_str());
}

TEST_CASE("model loader rejects garbage") {
    std::string path = tmp_path("bad.rpnw");
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
    }
    CHECK_THROWS(load_model(path));
    std::remove(path.c_str());
    CHECK_THROWS(load_model(tmp_path("does_not_exist.rpnw")));
}

TEST_CASE("forward rejects a feature vector of the wrong length") {
    Params p = init_params(tiny_rpnn(), 1);
    CHECK_THROWS(forward(p, Eigen::VectorXd::Zero(7)));
}
