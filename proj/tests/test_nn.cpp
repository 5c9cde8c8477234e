#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "harl/nn.hpp"

using namespace harl;

namespace {

double fd_rel_error(const Vec& a, const Vec& b) {
  return (a - b).norm() / std::max(1e-12, a.norm() + b.norm());
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("orthogonal init") {
  Rng rng(1);
  Mat q = orthogonal_matrix(4, 6, 2.0, rng);
  Mat qqt = q * q.transpose();
  CHECK((qqt - 4.0 * Mat::Identity(4, 4)).norm() < 1e-10);
}

TEST_CASE("mlp parameter and input gradients match finite differences") {
  Rng rng(2);
  for (auto act : {Activation::tanh, Activation::relu}) {
    Mlp net({3, 5, 2}, act, Activation::identity, 1.0, rng);
    Mat x = Mat::Random(3, 4);
    Mat w = Mat::Random(2, 4);
    auto loss = [&](const Mlp& m, const Mat& in) { return (m.forward(in).array() * w.array()).sum(); };
    Mlp::Cache cache;
    net.forward(x, &cache);
    Vec grad = Vec::Zero(net.n_params());
    Mat dx = net.backward(cache, w, grad, true);
    Vec fd(net.n_params());
    const double h = 1e-6;
    for (int k = 0; k < net.n_params(); ++k) {
      Mlp p = net, m = net;
      p.params()[k] += h;
      m.params()[k] -= h;
      fd[k] = (loss(p, x) - loss(m, x)) / (2 * h);
    }
    CHECK(fd_rel_error(grad, fd) < 1e-6);
    Mat fdx(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int b = 0; b < 4; ++b) {
        Mat xp = x, xm = x;
        xp(i, b) += h;
        xm(i, b) -= h;
        fdx(i, b) = (loss(net, xp) - loss(net, xm)) / (2 * h);
      }
    CHECK((dx - fdx).norm() / (dx.norm() + 1e-12) < 1e-6);
  }
}

TEST_CASE("categorical helpers") {
  Mat logits(3, 2);
  logits << 1.0, -2.0, 0.5, 0.0, -1.0, 3.0;
  Mat p = Categorical::probs(logits);
  CHECK(p.col(0).sum() == doctest::Approx(1.0));
  CHECK(p.col(1).sum() == doctest::Approx(1.0));
  Mat lp = Categorical::log_probs(logits);
  CHECK((lp.array().exp().matrix() - p).norm() < 1e-12);
  Vec u = Vec::Constant(3, 1.0 / 3.0);
  CHECK(Categorical::kl(u, u) == doctest::Approx(0.0));
  CHECK(Categorical::entropy(u) == doctest::Approx(std::log(3.0)));
  CHECK(Categorical::kl(p.col(0), u) > 0.0);
}

TEST_CASE("categorical policy kl is zero at itself and fvp is symmetric") {
  Rng rng(3);
  CategoricalPolicy pol(4, {6}, 3, Activation::tanh, 1.0, rng);
  Mat obs = Mat::Random(4, 5);
  CHECK(pol.mean_kl(obs, pol.probs(obs)) == doctest::Approx(0.0).epsilon(1e-12));
  Vec u = Vec::Random(pol.n_params()), v = Vec::Random(pol.n_params());
  double uhv = u.dot(pol.fisher_vector_product(obs, v));
  double vhu = v.dot(pol.fisher_vector_product(obs, u));
  CHECK(uhv == doctest::Approx(vhu).epsilon(1e-9));
  CHECK(u.dot(pol.fisher_vector_product(obs, u)) >= -1e-12);
}

TEST_CASE("gaussian policy squashing stays in bounds") {
  Rng rng(4);
  DiagGaussianPolicy pol(2, {4}, 2, Activation::tanh, 0.01, std::log(0.5), true, -2.0, 3.0, rng);
  Vec obs = Vec::Random(2);
  for (int k = 0; k < 100; ++k) {
    Vec raw = pol.sample(obs, rng);
    Vec env = pol.to_env(raw);
    CHECK(env.minCoeff() >= -2.0);
    CHECK(env.maxCoeff() <= 3.0);
  }
  Vec m = Vec::Zero(2), s = Vec::Zero(2);
  CHECK(DiagGaussianPolicy::kl(m, s, m, s) == doctest::Approx(0.0));
}

TEST_CASE("deterministic policy respects bounds") {
  Rng rng(5);
  DeterministicPolicy pol(3, {8}, 2, Activation::relu, 1.0, -0.5, 1.5, rng);
  Mat a = pol.act(Mat::Random(3, 50) * 10.0);
  CHECK(a.minCoeff() >= -0.5);
  CHECK(a.maxCoeff() <= 1.5);
}

TEST_CASE("dueling aggregation") {
  Mat v(1, 2), a(3, 2);
  v << 1.0, -1.0;
  a << 1.0, 0.0, 2.0, 0.0, 3.0, 3.0;
  Mat q = DuelingNet::aggregate(v, a);
  CHECK(q(0, 0) == doctest::Approx(0.0));
  CHECK(q(2, 0) == doctest::Approx(2.0));
  CHECK(q(0, 1) == doctest::Approx(-2.0));
  CHECK(q(2, 1) == doctest::Approx(1.0));
  Rng rng(6);
  DuelingNet net(2, {4}, {4}, 3, Activation::relu, rng);
  Mat obs = Mat::Random(2, 3);
  Mat qv = net.q_values(obs);
  Mat direct = DuelingNet::aggregate(net.value_net().forward(obs), net.advantage_net().forward(obs));
  CHECK((qv - direct).norm() < 1e-12);
}

TEST_CASE("adam, clipping and huber") {
  AdamState opt(2, 0.1);
  Vec p = Vec::Zero(2), g(2);
  g << 1.0, -2.0;
  opt.update(p, g);
  CHECK(p[0] < 0.0);
  CHECK(p[1] > 0.0);
  CHECK(std::abs(p[0]) == doctest::Approx(0.1).epsilon(1e-3));

  Vec big(2);
  big << 3.0, 4.0;
  CHECK(clip_grad_norm(big, 1.0) == doctest::Approx(5.0));
  CHECK(big.norm() == doctest::Approx(1.0));

  CHECK(huber(0.5, 1.0) == doctest::Approx(0.125));
  CHECK(huber(3.0, 1.0) == doctest::Approx(2.5));
  CHECK(huber_grad(3.0, 1.0) == doctest::Approx(1.0));
  CHECK(huber_grad(-0.3, 1.0) == doctest::Approx(-0.3));
}

TEST_CASE("checkpoint round trip") {
  auto dir = std::filesystem::temp_directory_path() / "harl_nn_ckpt";
  std::filesystem::create_directories(dir);
  CheckpointBlock b;
  b.name = "actor_0";
  b.widths = {3, 4, 2};
  b.hidden_activation = "relu";
  b.output_activation = "identity";
  b.extra = 2;
  b.params = Vec::LinSpaced(3 * 4 + 4 + 4 * 2 + 2 + 2, -1.0, 1.0);
  auto manifest = (dir / "m.json").string();
  save_checkpoint(manifest, (dir / "m.bin").string(), {b}, 9);
  auto back = load_checkpoint(manifest);
  REQUIRE(back.size() == 1);
  CHECK(back[0].name == "actor_0");
  CHECK(back[0].widths == b.widths);
  CHECK(back[0].extra == 2);
  CHECK((back[0].params - b.params).norm() == 0.0);
  std::filesystem::remove_all(dir);
}

}
