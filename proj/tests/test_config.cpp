#include <filesystem>

#include <gtest/gtest.h>

#include "pinnevo/config.hpp"
#include "tmpdir.hpp"

using namespace pinnevo;

namespace {

Json minimal(const char* problem = "kdv", const char* alg = "xnes-nag") {
  return Json{{"problem", problem}, {"algorithm", alg}};
}

}  // namespace

TEST(Config, DefaultsMatchTables) {
  const ExperimentConfig c = load_config_json(minimal("convection-diffusion", "cma-es"));
  EXPECT_EQ(c.optimizer.cma.pop_size, 80);
  EXPECT_EQ(c.optimizer.cma.sigma0, 0.05);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(c.budget.wall_seconds, 60.0);
  EXPECT_FALSE(c.budget.has_evals());
  EXPECT_EQ(param_count(c.spec), 250);
  EXPECT_EQ(c.truth.kind, TruthKind::Analytic);
  const ExperimentConfig k = load_config_json(minimal());
  EXPECT_EQ(k.truth.kind, TruthKind::Simulate);
  EXPECT_EQ(k.optimizer.xnes.momentum, 0.9);
  EXPECT_EQ(k.collocation.nx, 77);
}

TEST(Config, OverridesApply) {
  const ExperimentConfig c = load_config_json(
      minimal(), {parse_override("budget.max_evaluations=5000"), parse_override("seeds=[7]"),
                  parse_override("optimizer.momentum=0"), parse_override("truth.nx=256")});
  EXPECT_EQ(c.budget.max_evaluations, 5000);
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{7});
  EXPECT_EQ(c.optimizer.xnes.momentum, 0.0);
  EXPECT_EQ(c.truth.solver.nx, 256);
  const ExperimentConfig s = load_config_json(minimal("projectile", "sgd"), {parse_override("optimizer.lr=0.5")});
  EXPECT_EQ(s.optimizer.sgd.lr, 0.5);
  const ExperimentConfig w = load_config_json(minimal(), {parse_override("collocation.mode=random")});
  EXPECT_EQ(w.collocation.mode, SamplingMode::Random);
}

TEST(Config, HashTracksResolvedContent) {
  const auto a = load_config_json(minimal());
  const auto b = load_config_json(minimal());
  const auto c = load_config_json(minimal(), {parse_override("seeds=[1]")});
  EXPECT_EQ(a.config_hash, b.config_hash);
  EXPECT_NE(a.config_hash, c.config_hash);
  // Spelling out a default does not change the hash.
  Json explicit_doc = minimal();
  explicit_doc["log_cadence"] = 1000;
  EXPECT_EQ(load_config_json(explicit_doc).config_hash, a.config_hash);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(load_config_json(Json::array()), ConfigError);
  EXPECT_THROW(load_config_json(Json{{"problem", "kdv"}}), ConfigError);
  EXPECT_THROW(load_config_json(minimal("heat")), ConfigError);
  EXPECT_THROW(load_config_json(minimal("kdv", "adam")), ConfigError);
  Json unknown = minimal();
  unknown["bugdet"] = Json::object();
  EXPECT_THROW(load_config_json(unknown), ConfigError);
  Json nested = minimal();
  nested["budget"] = {{"seconds", 3}};
  EXPECT_THROW(load_config_json(nested), ConfigError);
  Json wrong_type = minimal();
  wrong_type["log_cadence"] = "often";
  EXPECT_THROW(load_config_json(wrong_type), ConfigError);
  EXPECT_THROW(load_config_json(minimal(), {parse_override("optimizer.lr=-1")}), ConfigError);
  EXPECT_THROW(load_config_json(minimal(), {parse_override("budget.wall_seconds=0")}), ConfigError);
  EXPECT_THROW(parse_override("novalue"), ConfigError);
  EXPECT_THROW(parse_override("=3"), ConfigError);
  Json net = minimal();
  net["network"] = {{"input_dim", 1}, {"hidden", {4}}, {"heads", {{{"hidden", Json::array()}, {"output_dim", 1}}}}};
  EXPECT_THROW(load_config_json(net), ConfigError);  // KdV takes (x, t)
}

TEST(Config, NetworkIsReplacedNotMerged) {
  Json doc = minimal();
  doc["network"] = {{"input_dim", 2}, {"hidden", {4}}, {"heads", {{{"hidden", Json::array()}, {"output_dim", 1}}}}};
  const ExperimentConfig c = load_config_json(doc);
  EXPECT_EQ(c.spec.hidden, (std::vector<int>{4}));
  EXPECT_EQ(param_count(c.spec), 2 * 4 + 4 + 4);
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir = std::filesystem::path(__FILE__).parent_path().parent_path() / "configs";
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    Json resolved;
    const ExperimentConfig c = load_config(e.path(), {}, &resolved);
    EXPECT_EQ(std::string(to_string(c.problem)) + ".json", e.path().filename().string());
    // Shipped configs spell out the defaults.
    EXPECT_EQ(resolved, Json::parse(io::read_file(e.path())));
    ++n;
  }
  EXPECT_EQ(n, 5u);
}

TEST(Config, MissingOrMalformedFile) {
  test::TempDir dir;
  EXPECT_THROW(load_config(dir.path() / "none.json"), ConfigError);
  io::write_atomic(dir.path() / "bad.json", "{\"problem\": ");
  EXPECT_THROW(load_config(dir.path() / "bad.json"), ConfigError);
}
