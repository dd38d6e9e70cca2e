#include <gtest/gtest.h>

#include "test_util.hpp"

namespace l2gp {
namespace {

using testing::randn;
using testing::same_values;

TEST(BuildModel, ParameterCountsFollowShapes) {
  ModelSpec spec;
  spec.input_dim = 10;
  spec.hidden = {64, 64};
  spec.n_classes = 2;
  const DualHeadModel m = build_model(spec);
  EXPECT_EQ(m.W.count(), std::size_t{10 * 64 + 64 + 64 * 64 + 64 + 2 * (64 + 64) + 2 * 10});
  EXPECT_EQ(m.H1.count(), std::size_t{64 * 2 + 2});
  EXPECT_EQ(m.H2.count(), std::size_t{64 * 2 + 2});
  spec.input_bn = false;
  EXPECT_EQ(build_model(spec).W.count(), std::size_t{10 * 64 + 64 + 64 * 64 + 64 + 2 * (64 + 64)});
}

TEST(BuildModel, SeededAndNonDegenerate) {
  const ModelSpec spec = testing::tiny_spec(4);
  const DualHeadModel a = build_model(spec), b = build_model(spec);
  EXPECT_TRUE(testing::same_parameters(a, b));
  EXPECT_FALSE(a.H1[0].value() == a.H2[0].value());
  EXPECT_FALSE(same_values(a.W, build_model(testing::tiny_spec(5)).W));
}

TEST(BuildModel, InitializationBoundsAndBnDefaults) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  const double bound = 1.0 / std::sqrt(4.0);
  for (double v : m.W.at("fc0.weight").value().data()) EXPECT_LE(std::fabs(v), bound);
  for (double v : m.W.at("bn0.gamma").value().data()) EXPECT_EQ(v, 1.0);
  for (double v : m.W.at("bn0.beta").value().data()) EXPECT_EQ(v, 0.0);
  for (const auto& s : m.bn) EXPECT_EQ(s, BnStatistics::identity(s.mean.cols()));
}

TEST(BuildModel, PartitionIsDisjoint) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  std::set<const Node*> nodes;
  std::size_t total = 0;
  for (const ParamSet* s : {&m.W, &m.H1, &m.H2}) {
    for (const auto& v : s->vars()) {
      nodes.insert(v.node());
      ++total;
    }
  }
  EXPECT_EQ(nodes.size(), total);
}

TEST(Features, SubstitutionIdentityAndZeroPerturbation) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  Rng rng(1);
  const Tensor x = randn({6, 4}, rng);
  const Tensor plain = features(m, x, m.W, BnContext::train_frozen()).value();
  EXPECT_EQ(features(m, x, m.W.clone(), BnContext::train_frozen()).value(), plain);
  std::vector<Var> g;
  for (const auto& w : m.W.vars()) g.push_back(constant(randn(w.shape(), rng)));
  EXPECT_EQ(features(m, x, perturb(m.W, g, 0.0, false), BnContext::train_frozen()).value(), plain);
}

TEST(Features, SideEffectFree) {
  DualHeadModel m = build_model(testing::tiny_spec());
  const DualHeadModel before = m.clone();
  Rng rng(2);
  const Tensor x = randn({6, 4}, rng);
  std::vector<Var> g;
  for (const auto& w : m.W.vars()) g.push_back(constant(randn(w.shape(), rng)));
  features(m, x, perturb(m.W, g, 0.3, false), BnContext::train_frozen());
  features(m, x, m.W, BnContext::eval_source());
  EXPECT_TRUE(testing::same_parameters(m, before));
  EXPECT_EQ(m.bn, before.bn);
}

TEST(Features, StructuralMismatchIsRejected) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  const DualHeadModel other = build_model([] {
    ModelSpec s = testing::tiny_spec();
    s.hidden = {3};
    return s;
  }());
  EXPECT_THROW(features(m, Tensor({4, 4}), other.W, BnContext::train_frozen()), Error);
  EXPECT_THROW(features(m, Tensor({4, 7}), m.W, BnContext::train_frozen()), Error);
}

TEST(Features, DirectionalDerivativeMatchesFiniteDifference) {
  const DualHeadModel m = build_model(testing::tiny_spec(8));
  Rng rng(3);
  const Tensor x = randn({6, 4}, rng);
  std::vector<Var> g;
  for (const auto& w : m.W.vars()) g.push_back(constant(randn(w.shape(), rng, 0.1)));
  const Tensor wsum = randn({6, 4}, rng);
  auto s_at = [&](const Var& c) {
    ParamSet moved;
    for (std::size_t i = 0; i < m.W.size(); ++i) moved.add(m.W.name(i), add(m.W[i], mul(g[i], expand(c, g[i].shape()))));
    return sum_all(mul(features(m, x, moved, BnContext::train_frozen()), constant(wsum)));
  };
  Var c = parameter(Tensor::scalar(0.0));
  const double analytic = backward(s_at(c), {c})[0].value().item();
  const double h = 1e-5;
  const double numeric = (s_at(constant(Tensor::scalar(h))).value().item() -
                          s_at(constant(Tensor::scalar(-h))).value().item()) /
                         (2 * h);
  EXPECT_LT(relative_error(analytic, numeric), 1e-6);
}

TEST(Predict, ZeroFeaturesZeroBias) {
  DualHeadModel m = build_model(testing::tiny_spec());
  m.H1[1].assign(Tensor({1, 2}, 0.0));
  EXPECT_EQ(predict(m, 1, constant(Tensor({3, 4}, 0.0))).value(), Tensor({3, 2}, 0.0));
}

TEST(Predict, HandSizedHead) {
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden = {2};
  DualHeadModel m = build_model(spec);
  m.H2[0].assign(Tensor::matrix({{1, 2}, {3, 4}}));
  m.H2[1].assign(Tensor::row({0.5, -0.5}));
  // [1, 1] W + b = [4.5, 5.5]; [2, 0] W + b = [2.5, 3.5]
  EXPECT_EQ(predict(m, 2, constant(Tensor::matrix({{1, 1}, {2, 0}}))).value(),
            Tensor::matrix({{4.5, 5.5}, {2.5, 3.5}}));
  EXPECT_FALSE(predict(m, 1, constant(Tensor::matrix({{1, 1}}))).value() ==
               predict(m, 2, constant(Tensor::matrix({{1, 1}}))).value());
}

TEST(Predict, InvalidHeadIsContractError) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  EXPECT_THROW(predict(m, 3, constant(Tensor({2, 4}))), ContractError);
  EXPECT_THROW(predict(m, 0, constant(Tensor({2, 4}))), ContractError);
}

TEST(Perturb, ZeroStepAndZeroGradient) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  Rng rng(4);
  std::vector<Var> g, zeros;
  for (const auto& w : m.W.vars()) {
    g.push_back(constant(randn(w.shape(), rng)));
    zeros.push_back(constant(Tensor(w.shape(), 0.0)));
  }
  EXPECT_TRUE(same_values(perturb(m.W, g, 0.0, false), m.W));
  EXPECT_TRUE(same_values(perturb(m.W, zeros, 2.0, true), m.W));
}

TEST(Perturb, MissingEntryIsContractError) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  std::vector<Var> g(m.W.vars().begin(), m.W.vars().end() - 1);
  EXPECT_THROW(perturb(m.W, g, 1.0, false), ContractError);
}

TEST(Perturb, FirstOrderIsPureIdentityChain) {
  // With a constant direction, d s(W+)/dW equals d s/dW+ evaluated at W+.
  const DualHeadModel m = build_model(testing::tiny_spec(6));
  Rng rng(5);
  const Tensor x = randn({6, 4}, rng);
  std::vector<Var> g;
  for (const auto& w : m.W.vars()) g.push_back(constant(randn(w.shape(), rng, 0.1)));
  const Tensor wsum = randn({6, 4}, rng);
  const ParamSet wp = perturb(m.W, g, 0.7, false);
  auto s = [&](const ParamSet& w) { return sum_all(mul(features(m, x, w, BnContext::train_frozen()), constant(wsum))); };
  const auto through = backward(s(wp), m.W.vars());
  ParamSet leaves;
  for (std::size_t i = 0; i < wp.size(); ++i) leaves.add(wp.name(i), parameter(wp[i].value()));
  const auto direct = backward(s(leaves), leaves.vars());
  for (std::size_t i = 0; i < through.size(); ++i) EXPECT_EQ(through[i].value(), direct[i].value());
}

TEST(Checkpoint, RoundTripIsByteStable) {
  DualHeadModel m = build_model(testing::tiny_spec(7));
  m.bn[1].mean[0] = 0.1234567890123456789;
  m.bn[0].var[2] = 4.9406564584124654e-324;
  const std::string text = checkpoint_to_string(m);
  const DualHeadModel back = checkpoint_from_string(text);
  EXPECT_TRUE(testing::same_parameters(m, back));
  EXPECT_EQ(back.bn, m.bn);
  EXPECT_EQ(back.W.names(), m.W.names());
  EXPECT_EQ(back.H2.names(), m.H2.names());
  EXPECT_EQ(checkpoint_to_string(back), text);

  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(m, dir / "m.ckpt");
  EXPECT_EQ(checkpoint_to_string(load_checkpoint(dir / "m.ckpt")), text);
}

TEST(Checkpoint, MalformedInputReportsLine) {
  const std::string text = checkpoint_to_string(build_model(testing::tiny_spec()));
  std::string broken = text.substr(0, text.size() / 2);
  EXPECT_THROW(checkpoint_from_string(broken), ParseError);
  std::string bad = text;
  const auto pos = bad.find("tensor W fc0.bias");
  bad.replace(pos, 6, "tensro");
  try {
    checkpoint_from_string(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line(), 1u);
  }
}

}  // namespace
}  // namespace l2gp
