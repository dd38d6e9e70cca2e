#include <gtest/gtest.h>

#include "test_util.hpp"

namespace l2gp {
namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyObjectGivesDefaults) {
  const ExperimentConfig c = parse_config("{}");
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.epochs, 30);
  EXPECT_EQ(c.train.lr_drop_epoch, 24);
  EXPECT_FALSE(c.train.extend_graph);
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(c.variants, std::vector<Variant>{Variant::kL2gp});
  EXPECT_EQ(c.sweep.alpha.size(), 6u);
}

TEST(Config, CanonicalFormRoundTrips) {
  const std::string text = R"({
    "variants": ["ERM", "L2GP", "C"],
    "seeds": [4, 9],
    "train": {"alpha": 0.25, "lr_plus": 3, "extend_graph": true, "epochs": 5, "lr_drop_epoch": 4},
    "model": {"hidden": [16, 8], "input_bn": false},
    "data": {"d_core": 6, "shortcut_margin": 1.5, "n_train": 300},
    "shift": {"correlation": -0.5, "scale": [1,1,1,1,1,1,1,2], "seed": 12},
    "eval": {"modes": ["ttbn"], "heads": [2], "warmup_batches": 3},
    "sweep": {"lr_plus": [0.1, 1], "alpha": [10]}
  })";
  const ExperimentConfig c = parse_config(text);
  EXPECT_EQ(c.train.alpha, 0.25);
  EXPECT_TRUE(c.train.extend_graph);
  EXPECT_FALSE(c.input_bn);
  EXPECT_EQ(c.data.dim(), 8u);
  ASSERT_TRUE(c.shift.scale.has_value());
  EXPECT_FALSE(c.shift.offset.has_value());
  EXPECT_EQ(c.eval.modes, std::vector<EvalMode>{EvalMode::kTtbn});

  const std::string canonical = config_to_json(c).dump(2);
  const ExperimentConfig back = parse_config(canonical);
  EXPECT_EQ(config_to_json(back).dump(2), canonical);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, HashTracksContent) {
  ExperimentConfig a = parse_config("{}");
  ExperimentConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.train.alpha = 2.0;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, UnknownFieldsNameTheirPath) {
  EXPECT_NE(message_of(R"({"trian": {}})").find("trian: unknown field"), std::string::npos);
  EXPECT_NE(message_of(R"({"train": {"lr_pluss": 1}})").find("train.lr_pluss"), std::string::npos);
  EXPECT_NE(message_of(R"({"eval": {"mode": []}})").find("eval.mode"), std::string::npos);
}

TEST(Config, TypeErrorsNameTheirPath) {
  EXPECT_NE(message_of(R"({"train": {"alpha": "big"}})").find("train.alpha: expected a number"), std::string::npos);
  EXPECT_NE(message_of(R"({"train": {"batch_size": 3.5}})").find("train.batch_size"), std::string::npos);
  EXPECT_NE(message_of(R"({"seeds": [-1]})").find("seeds"), std::string::npos);
  EXPECT_NE(message_of(R"({"train": {"extend_graph": 1}})").find("expected true or false"), std::string::npos);
  EXPECT_NE(message_of(R"({"model": []})").find("model: expected an object"), std::string::npos);
  EXPECT_NE(message_of("[1, 2]").find("expected an object"), std::string::npos);
}

TEST(Config, InvalidValuesAreRejected) {
  for (const char* text : {
           R"({"variants": []})",
           R"({"variants": ["L2GP", "L2GP"]})",
           R"({"variants": ["Z"]})",
           R"({"seeds": []})",
           R"({"seeds": [1, 1]})",
           R"({"train": {"alpha": -1}})",
           R"({"train": {"batch_size": 1}})",
           R"({"train": {"epochs": 5, "lr_drop_epoch": 5}})",
           R"({"model": {"hidden": [0]}})",
           R"({"data": {"n_classes": 3}})",
           R"({"shift": {"correlation": 2}})",
           R"({"shift": {"scale": [1, 2]}})",
           R"({"eval": {"heads": [3]}})",
           R"({"eval": {"modes": ["adaptive"]}})",
           R"({"eval": {"momentum": 0}})",
           R"({"sweep": {"alpha": []}})",
           R"({"sweep": {"lr_plus": [-1]}})",
       }) {
    EXPECT_THROW(parse_config(text), ConfigError) << text;
  }
}

TEST(Config, MalformedJsonAndMissingFile) {
  EXPECT_THROW(parse_config("{\"train\": "), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/l2gp.json"), ConfigError);
}

TEST(Config, DerivedSettings) {
  const ExperimentConfig c = parse_config(R"({"train": {"alpha": 4}, "data": {"d_core": 5}})");
  const ModelSpec m = c.model_spec(7);
  EXPECT_EQ(m.input_dim, 7u);
  EXPECT_EQ(m.seed, 7u);
  const TrainConfig t = c.train_config(Variant::kAblationB, 3);
  EXPECT_EQ(t.variant, Variant::kAblationB);
  EXPECT_EQ(t.seed, 3u);
  EXPECT_EQ(t.alpha, 4.0);
}

}  // namespace
}  // namespace l2gp
