#include <cmath>
#include <bit>
#include <filesystem>

#include <gtest/gtest.h>

#include "statemix/autodiff/gradcheck.hpp"
#include "statemix/neuralnet/adam.hpp"
#include "statemix/neuralnet/checkpoint.hpp"
#include "statemix/neuralnet/network.hpp"

namespace statemix::nn {
namespace {

using ad::Tape;

TEST(InitParams, ParameterCountForSixComponents) {
  Rng rng{1};
  const Network net = init_mixture_network(20, {128, 256}, 6, 20, rng);
  EXPECT_EQ(net.dims(), (std::vector<Index>{20, 128, 256, 240}));
  EXPECT_EQ(net.parameter_count(), std::size_t{20 * 128 + 128 + 128 * 256 + 256 + 256 * 240 + 240});
  EXPECT_EQ(net.parameter_count(), 97392u);
}

TEST(InitParams, OutputWidthForTenComponents) {
  Rng rng{1};
  EXPECT_EQ(init_mixture_network(20, {128, 256}, 10, 20, rng).output_dim(), 400);
}

TEST(InitParams, DeterministicAndWithinBounds) {
  Rng a{99};
  Rng b{99};
  const Network na = init_mixture_network(7, {16, 32}, 2, 3, a);
  const Network nb = init_mixture_network(7, {16, 32}, 2, 3, b);
  EXPECT_EQ(parameter_hash(na), parameter_hash(nb));
  const auto dims = na.dims();
  for (std::size_t l = 0; l < na.layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    EXPECT_LE(na.layers[l].weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(na.layers[l].bias.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(na.layers[l].weight, nb.layers[l].weight);
  }
}

TEST(InitParams, RejectsBadDims) {
  Rng rng{1};
  EXPECT_THROW(init_params({3, 0, 2}, {Activation::relu, Activation::identity}, rng), std::invalid_argument);
  EXPECT_THROW(init_params({3, 2}, {}, rng), std::invalid_argument);
}

TEST(Forward, ZeroParametersGiveZeroOutput) {
  Rng rng{1};
  Network net = init_mixture_network(4, {8}, 1, 2, rng);
  for (Matrix* p : net.parameters()) p->setZero();
  Tape tape;
  const Var out = forward(bind(tape, net, false), tape.constant(Matrix::Random(4, 5)));
  EXPECT_EQ(out.value(), Matrix::Zero(4, 5));
}

TEST(Forward, ZeroWeightsReduceToBiases) {
  Rng rng{1};
  Network net = init_mixture_network(3, {4}, 1, 1, rng);
  net.layers[0].weight.setZero();
  net.layers[1].weight.setZero();
  net.layers[0].bias << -1, 2, 0.5, -3;
  net.layers[1].bias << 0.25, -0.75;
  Tape tape;
  const Var out = forward(bind(tape, net, false), tape.constant(Matrix::Random(3, 2)));
  EXPECT_EQ(out.value().col(0), net.layers[1].bias);
}

TEST(Forward, IdentityLayerPassesThrough) {
  Network net;
  net.layers.push_back({Matrix::Identity(3, 3), Matrix::Zero(3, 1), Activation::identity});
  Tape tape;
  const Matrix z0 = Matrix::Random(3, 4);
  EXPECT_EQ(forward(bind(tape, net, false), tape.constant(z0)).value(), z0);
}

TEST(Forward, InputDimensionChecked) {
  Rng rng{1};
  const Network net = init_mixture_network(4, {8}, 1, 2, rng);
  Tape tape;
  EXPECT_THROW(forward(bind(tape, net, false), tape.constant(Matrix::Zero(3, 1))), std::invalid_argument);
}

TEST(Forward, FirstLayerGradientMatchesFiniteDifferences) {
  Rng rng{5};
  const Network net = init_mixture_network(3, {6, 5}, 2, 2, rng);
  const Matrix z0 = Matrix::Random(3, 4);
  const ad::GraphFn fn = [&](Tape& tape, std::span<const Var> v) {
    BoundNetwork b = bind(tape, net, false);
    b.params[0] = v[0];
    return ad::sum(ad::sin(forward(b, tape.constant(z0))));
  };
  const auto r = ad::check_gradient("A1", fn, {net.layers[0].weight});
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(Forward, BatchedEqualsColumnwise) {
  Rng rng{5};
  const Network net = init_mixture_network(3, {6, 5}, 2, 2, rng);
  const Matrix z0 = Matrix::Random(3, 4);
  Tape tape;
  const BoundNetwork b = bind(tape, net, false);
  const Matrix batched = forward(b, tape.constant(z0)).value();
  for (Index k = 0; k < 4; ++k) {
    EXPECT_TRUE(batched.col(k).isApprox(forward(b, tape.constant(z0.col(k))).value(), 1e-14));
  }
}

Matrix col(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

TEST(MakeMixture, SingleComponentSlicing) {
  Tape tape;
  const auto m = make_mixture(tape.constant(col({1, 2, 3, 4})), 1, 2);
  ASSERT_EQ(m.size(), 1);
  EXPECT_EQ(m.components[0].mean.value(), col({1, 2}));
  EXPECT_EQ(m.components[0].scale.value(), col({3, 4}));
}

TEST(MakeMixture, AlternatingBlocks) {
  Tape tape;
  const auto m = make_mixture(tape.constant(col({0, 1, 5, 2})), 2, 1);
  ASSERT_EQ(m.size(), 2);
  EXPECT_EQ(m.components[0].mean.scalar(), 0.0);
  EXPECT_EQ(m.components[0].scale.scalar(), 1.0);
  EXPECT_EQ(m.components[1].mean.scalar(), 5.0);
  EXPECT_EQ(m.components[1].scale.scalar(), 2.0);
}

TEST(MakeMixture, LengthMismatchThrows) {
  Tape tape;
  EXPECT_THROW(make_mixture(tape.constant(col({0, 1, 5})), 2, 1), std::invalid_argument);
}

TEST(MakeMixture, DensityGradientReachesEveryLayer) {
  Rng rng{17};
  const Network net = init_mixture_network(3, {16, 16}, 3, 3, rng);
  Tape tape;
  const BoundNetwork b = bind(tape, net, true);
  const auto m = make_mixture(forward(b, tape.constant(Matrix::Random(3, 6))), 3, 3);
  const auto grads = ad::backward(ad::sum(dist::log_density(m, tape.constant(Matrix::Random(3, 6)))));
  const auto g = parameter_gradients(grads, b);
  const auto names = net.parameter_names();
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_GT(g[i].cwiseAbs().maxCoeff(), 0.0) << names[i];
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Network net;
  net.layers.push_back({Matrix::Constant(1, 1, 0.5), Matrix::Zero(1, 1), Activation::identity});
  AdamState s = make_adam(net, {0.01});
  adam_step(s, net, {Matrix::Constant(1, 1, 3.0), Matrix::Constant(1, 1, -0.2)});
  EXPECT_NEAR(net.layers[0].weight(0, 0), 0.5 - 0.01, 1e-9);
  EXPECT_NEAR(net.layers[0].bias(0, 0), 0.01, 1e-9);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  Network net;
  net.layers.push_back({Matrix::Constant(2, 2, 0.5), Matrix::Zero(2, 1), Activation::identity});
  AdamState s = make_adam(net);
  const Network before = net;
  adam_step(s, net, {Matrix::Zero(2, 2), Matrix::Zero(2, 1)});
  EXPECT_EQ(net.layers[0].weight, before.layers[0].weight);
  EXPECT_EQ(net.layers[0].bias, before.layers[0].bias);

  adam_step(s, net, {Matrix::Ones(2, 2), Matrix::Ones(2, 1)});
  const Matrix m1 = s.m[0];
  const Matrix v1 = s.v[0];
  adam_step(s, net, {Matrix::Zero(2, 2), Matrix::Zero(2, 1)});
  EXPECT_TRUE(s.m[0].isApprox(0.9 * m1));
  EXPECT_TRUE(s.v[0].isApprox(0.999 * v1));
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  Network net;
  Matrix theta0(3, 1);
  theta0 << 0.6, -0.48, 0.64;  // unit norm
  net.layers.push_back({theta0, Matrix::Zero(0, 1), Activation::identity});
  AdamState s = make_adam(net, {0.1});
  for (int i = 0; i < 200; ++i) {
    const Matrix g = 2.0 * net.layers[0].weight;
    adam_step(s, net, {g, Matrix::Zero(0, 1)});
  }
  EXPECT_LT(net.layers[0].weight.norm(), 1e-2);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Rng rng{2};
  Network net = init_mixture_network(2, {3}, 1, 1, rng);
  AdamState s = make_adam(net);
  std::vector<Matrix> g;
  for (const Matrix* p : net.parameters()) g.push_back(Matrix::Zero(p->rows(), p->cols()));
  g[2](0, 1) = std::nan("");
  try {
    adam_step(s, net, g);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "A2");
  }
  EXPECT_EQ(s.step, 0);
}

TEST(Adam, ShapeMismatchThrows) {
  Rng rng{2};
  Network net = init_mixture_network(2, {3}, 1, 1, rng);
  AdamState s = make_adam(net);
  EXPECT_THROW(adam_step(s, net, {Matrix::Zero(1, 1)}), std::invalid_argument);
}

TEST(ClipGlobalNorm, RescalesOnlyAboveThreshold) {
  std::vector<Matrix> g{Matrix::Constant(2, 2, 3.0), Matrix::Constant(1, 1, 4.0)};
  const double n = clip_global_norm(g, 10.0);
  EXPECT_NEAR(n, std::sqrt(4 * 9.0 + 16.0), 1e-12);
  EXPECT_EQ(g[0](0, 0), 3.0);
  std::vector<Matrix> big{Matrix::Constant(1, 1, 30.0), Matrix::Constant(1, 1, 40.0)};
  EXPECT_EQ(clip_global_norm(big, 10.0), 50.0);
  EXPECT_NEAR(big[0](0, 0), 6.0, 1e-12);
  EXPECT_NEAR(big[1](0, 0), 8.0, 1e-12);
}

TEST(Checkpoint, Base64RoundTripIsBitExact) {
  const std::vector<double> xs{0.0, -0.0, 1.0 / 3.0, 1e-310, std::numeric_limits<double>::max(),
                               -std::numeric_limits<double>::infinity()};
  for (std::size_t n = 0; n <= xs.size(); ++n) {
    const auto back = decode_doubles(encode_doubles(xs.data(), n));
    ASSERT_EQ(back.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(xs[i]));
    }
  }
}

TEST(Checkpoint, KnownLittleEndianEncoding) {
  const double one = 1.0;  // 0x3FF0000000000000
  EXPECT_EQ(encode_doubles(&one, 1), "AAAAAAAA8D8=");
}

TEST(Checkpoint, FileRoundTripIsBitExact) {
  Rng rng{31};
  Checkpoint c;
  c.state_dim = 4;
  c.obs_dim = 4;
  c.transition_components = 2;
  c.proposal_components = 3;
  c.transition = init_mixture_network(4, {8, 16}, 2, 4, rng);
  c.proposal = init_mixture_network(8, {8, 16}, 3, 4, rng);
  c.metadata = {{"seed", 31}};
  const auto path = std::filesystem::temp_directory_path() / "statemix_checkpoint_test.json";
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(parameter_hash(*back.transition), parameter_hash(*c.transition));
  EXPECT_EQ(parameter_hash(*back.proposal), parameter_hash(*c.proposal));
  EXPECT_EQ(back.proposal->dims(), c.proposal->dims());
  EXPECT_EQ(back.proposal_components, 3);
  EXPECT_EQ(back.metadata.at("seed"), 31);
  for (std::size_t l = 0; l < c.proposal->layers.size(); ++l) {
    EXPECT_EQ(back.proposal->layers[l].activation, c.proposal->layers[l].activation);
  }
}

TEST(Checkpoint, RejectsUnknownVersion) {
  Checkpoint c;
  auto j = checkpoint_to_json(c);
  j["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(j), std::runtime_error);
}

}  // namespace
}  // namespace statemix::nn
