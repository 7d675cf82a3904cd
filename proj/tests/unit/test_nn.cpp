#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "menv/error.hpp"
#include "menv/nn.hpp"
#include "oracles.hpp"

using namespace menv;
using namespace menv::nn;

namespace {

double sample_std(const Eigen::MatrixXd& m) {
  const double mean = m.mean();
  return std::sqrt((m.array() - mean).square().sum() / static_cast<double>(m.size() - 1));
}

}  // namespace

TEST_CASE("initializers") {
  CHECK((bias_init(5).array() == 0.01).all());
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd w2 = kaiming_init(50000, 2, rng);
  CHECK(sample_std(w2) == doctest::Approx(1.0).epsilon(0.02));
  const Eigen::MatrixXd w100 = kaiming_init(1000, 100, rng);
  CHECK(sample_std(w100) == doctest::Approx(std::sqrt(0.02)).epsilon(0.02));
  CHECK_THROWS_AS(kaiming_init(0, 3, rng), InvalidArgument);
}

TEST_CASE("forward edge cases") {
  DenseLayer relu{Eigen::MatrixXd::Zero(4, 3), bias_init(4), Activation::kReLU};
  const Eigen::MatrixXd out = forward(std::span<const DenseLayer>(&relu, 1), Eigen::MatrixXd::Random(3, 2));
  CHECK((out.array() == 0.01).all());

  DenseLayer tanh6{Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2), Activation::kTanh6};
  CHECK((forward(std::span<const DenseLayer>(&tanh6, 1), Eigen::MatrixXd::Ones(2, 1)).array() == 0.0).all());

  DenseLayer bad{Eigen::MatrixXd::Zero(2, 5), Eigen::VectorXd::Zero(2), Activation::kLinear};
  CHECK_THROWS_AS(forward(std::span<const DenseLayer>(&bad, 1), Eigen::MatrixXd::Ones(3, 1)), InvalidArgument);
}

TEST_CASE("forward matches a loop implementation") {
  std::mt19937_64 rng(5);
  std::vector<DenseLayer> net{make_layer(7, 6, Activation::kReLU, rng), make_layer(6, 5, Activation::kReLU, rng),
                              make_layer(5, 4, Activation::kTanh6, rng)};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 3);
  const Eigen::MatrixXd y = forward(net, x);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> h(x.col(c).data(), x.col(c).data() + 7);
    const int acts[] = {0, 0, 1};
    for (std::size_t l = 0; l < net.size(); ++l) h = oracle::dense_forward(net[l].weights, net[l].biases, h, acts[l]);
    for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(std::abs(y(r, c) - h[static_cast<std::size_t>(r)]) < 1e-12);
  }
}

TEST_CASE("backward identities") {
  SUBCASE("linear sum loss gives x per row") {
    DenseLayer lin{Eigen::MatrixXd::Random(3, 4), Eigen::VectorXd::Zero(3), Activation::kLinear};
    Eigen::MatrixXd x(4, 1);
    x << 1, 2, 3, 4;
    Tape tape;
    forward(std::span<const DenseLayer>(&lin, 1), x, &tape);
    const Gradients g = backward(std::span<const DenseLayer>(&lin, 1), tape, Eigen::MatrixXd::Ones(3, 1));
    for (Eigen::Index r = 0; r < 3; ++r)
      for (Eigen::Index c = 0; c < 4; ++c) CHECK(g.layers[0].weights(r, c) == x(c, 0));
  }
  SUBCASE("negative pre-activation blocks the gradient") {
    DenseLayer relu{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::kReLU};
    Eigen::MatrixXd x(2, 1);
    x << -1.0, 2.0;
    Tape tape;
    forward(std::span<const DenseLayer>(&relu, 1), x, &tape);
    const Gradients g = backward(std::span<const DenseLayer>(&relu, 1), tape, Eigen::MatrixXd::Ones(2, 1));
    CHECK(g.layers[0].weights.row(0).isZero());
    CHECK(g.layers[0].biases[0] == 0.0);
    CHECK(g.layers[0].biases[1] == 1.0);
    CHECK(g.input(0, 0) == 0.0);
  }
  SUBCASE("stack gradients match finite differences") {
    std::mt19937_64 rng(8);
    std::vector<DenseLayer> net{make_layer(5, 4, Activation::kReLU, rng), make_layer(4, 3, Activation::kTanh6, rng)};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2), w = Eigen::MatrixXd::Random(3, 2);
    auto loss = [&] { return forward(net, x).cwiseProduct(w).sum(); };
    Tape tape;
    forward(net, x, &tape);
    const Gradients g = backward(net, tape, w);
    for (std::size_t l = 0; l < net.size(); ++l)
      for (Eigen::Index i = 0; i < net[l].weights.size(); ++i) {
        double& p = net[l].weights.data()[i];
        const double p0 = p;
        p = p0 + 1e-6;
        const double up = loss();
        p = p0 - 1e-6;
        const double down = loss();
        p = p0;
        CHECK(oracle::rel_err(g.layers[l].weights.data()[i], (up - down) / 2e-6) < 1e-6);
      }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
    AdamState s;
    std::vector<ParamBlock> blocks{{"p", p, g}};
    for (int i = 0; i < 5; ++i) adam_step(blocks, s);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
  }
  SUBCASE("first step moves by lr in the gradient sign") {
    std::vector<double> p{0.0, 0.0}, g{3.0, -0.5};
    AdamState s;
    std::vector<ParamBlock> blocks{{"p", p, g}};
    adam_step(blocks, s);
    CHECK(-p[0] > 0.0009);
    CHECK(-p[0] <= 0.001);
    CHECK(p[1] > 0.0009);
    CHECK(p[1] <= 0.001);
  }
  SUBCASE("quadratic bowl converges") {
    std::vector<double> w{3.0}, g{0.0};
    AdamState s;
    s.lr = 0.1;
    std::vector<ParamBlock> blocks{{"w", w, g}};
    for (int i = 0; i < 500; ++i) {
      g[0] = 2.0 * w[0];
      adam_step(blocks, s);
    }
    CHECK(std::abs(w[0]) < 0.01);
  }
  SUBCASE("non-finite gradients name the block and leave values alone") {
    std::vector<double> p{1.0}, g{NAN};
    AdamState s;
    std::vector<ParamBlock> blocks{{"decoder.0.weights", p, g}};
    try {
      adam_step(blocks, s);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("decoder.0.weights") != std::string::npos);
    }
    CHECK(p[0] == 1.0);
    CHECK(s.step_count == 0);
  }
  SUBCASE("shape mismatch") {
    std::vector<double> p{1.0, 2.0}, g{1.0};
    AdamState s;
    std::vector<ParamBlock> blocks{{"p", p, g}};
    CHECK_THROWS_AS(adam_step(blocks, s), InvalidArgument);
  }
}

TEST_CASE("layer json round trip") {
  std::mt19937_64 rng(2);
  const DenseLayer l = make_layer(3, 2, Activation::kTanh6, rng);
  const DenseLayer back = layer_from_json(layer_to_json(l));
  CHECK(back.weights == l.weights);
  CHECK(back.biases == l.biases);
  CHECK(back.activation == Activation::kTanh6);
  auto j = layer_to_json(l);
  j["weights"].erase(0);
  CHECK_THROWS_AS(layer_from_json(j), ParseError);
}

TEST_CASE("VAE gradients match finite differences on a 183-8-4 toy") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto r = gradcheck::vae_gradients(seed, {8}, 4);
    INFO("worst " << r.worst << " rel err " << r.max_rel_err);
    CHECK(r.checked > 1500);
    CHECK(r.max_rel_err < 1e-4);
  }
}
