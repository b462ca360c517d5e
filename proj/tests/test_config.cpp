#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tvae/config.hpp"
#include "tvae/errors.hpp"

using namespace tvae;
namespace fs = std::filesystem;

TEST(Config, DefaultsFollowTrainingSetup) {
  RunConfig c;
  EXPECT_EQ(c.count("emb"), 200u);
  EXPECT_EQ(c.count("hidden"), 200u);
  EXPECT_EQ(c.count("label_emb"), 8u);
  EXPECT_DOUBLE_EQ(c.real("dropout"), 0.2);
  EXPECT_DOUBLE_EQ(c.real("lr"), 1e-3);
  EXPECT_EQ(c.count("epochs"), 48u);
  EXPECT_EQ(c.count("batch"), 32u);
  EXPECT_FALSE(c.optional_real("kl_weight"));
  EXPECT_FALSE(c.is_set("emb"));
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
  EXPECT_THROW(c.set("epochs", "many"), ConfigError);
  EXPECT_THROW(c.set("lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("bow", "maybe"), ConfigError);
  EXPECT_THROW(c.apply_override("epochs"), ConfigError);
  EXPECT_THROW(c.set("weights", "1,x"), ConfigError);
}

TEST(Config, FileThenOverridePrecedence) {
  auto path = fs::temp_directory_path() / "tvae_config_test.cfg";
  std::ofstream(path) << "# comment\nepochs = 3\nlatent=4\n\nbow=true\nweights=2,0.5\n";
  RunConfig c;
  c.load_file(path);
  c.apply_override("epochs=5");
  EXPECT_EQ(c.count("epochs"), 5u);
  EXPECT_EQ(c.count("latent"), 4u);
  EXPECT_TRUE(c.flag("bow"));
  EXPECT_EQ(c.real_list("weights"), (std::vector<double>{2.0, 0.5}));
  EXPECT_TRUE(c.is_set("latent"));
  std::ofstream(path) << "epochs=3\nbogus=1\n";
  EXPECT_THROW(c.load_file(path), ConfigError);
  EXPECT_THROW(c.load_file(fs::temp_directory_path() / "tvae_missing.cfg"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  RunConfig c;
  c.set("latent", "7");
  c.set("kl_weight", "0.25");
  auto path = fs::temp_directory_path() / "tvae_config_dump.cfg";
  std::ofstream(path) << c.dump();
  RunConfig d;
  d.load_file(path);
  EXPECT_EQ(d.dump(), c.dump());
  EXPECT_EQ(d.optional_real("kl_weight"), 0.25);
}

TEST(Config, ModelAndTrainConfigs) {
  RunConfig c;
  c.set("mode", "cvae");
  c.set("topic", "marginal");
  c.set("topics", "5");
  auto m = c.model_config(50, 3);
  EXPECT_TRUE(m.conditional);
  EXPECT_EQ(m.classes, 3u);
  EXPECT_EQ(m.topic, TopicMode::marginal);
  EXPECT_EQ(m.topics, 5u);
  c.set("mode", "gan");
  EXPECT_THROW(c.model_config(50, 3), ConfigError);
  c.set("topic", "sometimes");
  c.set("mode", "vae");
  EXPECT_THROW(c.model_config(50, 3), ConfigError);

  RunConfig t;
  t.set("seed", "4");
  EXPECT_EQ(t.train_config().seed, derive_seed(4, "train"));
  t.set("epochs", "0");
  EXPECT_THROW(t.train_config(), ConfigError);
}
