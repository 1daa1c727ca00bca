#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mcp/config.hpp"
#include "support/suites.hpp"

using namespace mcp;
namespace fs = std::filesystem;

TEST_SUITE("config") {
  TEST_CASE("key value parsing") {
    const auto kv = parse_key_values("# header\nalpha = 2.5\n\n  mode=mcp++  # trailing\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"alpha", "2.5"});
    CHECK(kv[1] == std::pair<std::string, std::string>{"mode", "mcp++"});
    CHECK_THROWS_AS(parse_key_values("alpha = 1\nalpha = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("alpha\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values(" = 3\n"), ConfigError);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("alpah", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("alpha", "one"), ConfigError);
    CHECK_THROWS_AS(cfg.set("cache_entropy", "-3"), ConfigError);
    CHECK_THROWS_AS(cfg.set("use_align_cache", "maybe"), ConfigError);
    CHECK_THROWS_AS(cfg.set("mode", "tda"), ConfigError);
    CHECK_THROWS_AS(cfg.set("normalization", "zscore"), ConfigError);
    CHECK_THROWS_AS(cfg.set("inference_views", "all"), ConfigError);
    cfg.set("tau", "0");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("defaults") {
    const RunConfig cfg;
    CHECK(cfg.mode == Mode::kMcp);
    CHECK(cfg.hp.tau == 0.01);
    CHECK(cfg.hp.beta == 5.5);
    CHECK(cfg.hp.w == 0.8);
    CHECK(cfg.hp.lambda == 0.5);
    CHECK(cfg.hp.gamma == 0.2);
    CHECK(cfg.hp.rho == 0.1);
    CHECK(cfg.hp.lr == 1e-4);
    CHECK(cfg.hp.p_mask == 0.03);
    CHECK(cfg.hp.m_entropy == 10);
    CHECK(cfg.hp.m_align == 10);
    CHECK(cfg.hp.m_negative == 3);
    CHECK_NOTHROW(cfg.validate());
  }

  TEST_CASE("bundled default file lists every key at its default") {
    const RunConfig cfg = RunConfig::from_file(suites::fixture("default.conf"));
    CHECK(cfg.to_key_values() == RunConfig{}.to_key_values());
    CHECK(read_key_values(suites::fixture("default.conf")).size() == RunConfig{}.to_key_values().size());
  }

  TEST_CASE("canonical listing round trips") {
    RunConfig a;
    a.set("mode", "mcp++");
    a.set("alpha", "1.25");
    a.set("w", "0.4");
    a.set("use_negative_cache", "false");
    a.set("persist_residuals", "true");
    a.set("inference_views", "confident");
    a.set("lr", "3e-5");
    RunConfig b;
    b.apply(a.to_key_values());
    CHECK(b.to_key_values() == a.to_key_values());
    CHECK(b.mode == Mode::kMcpPlusPlus);
    CHECK(b.hp.lr == 3e-5);
    CHECK_FALSE(b.caches.negative);
    CHECK(b.inference_views == InferenceViews::kConfident);
  }

  TEST_CASE("relative paths resolve against the config file") {
    const fs::path dir = fs::temp_directory_path() / "mcp_config_tests" / "sub";
    fs::create_directories(dir);
    const fs::path file = dir / "run.conf";
    {
      std::ofstream out(file);
      out << "stream = data/x.mcpe\nout = /abs/prefix\nalpha = 3\n";
    }
    const RunConfig cfg = RunConfig::from_file(file.string());
    CHECK(fs::path(cfg.stream) == (dir / "data/x.mcpe").lexically_normal());
    CHECK(cfg.out == "/abs/prefix");
    CHECK(cfg.hp.alpha == 3.0);
    CHECK_THROWS_AS(RunConfig::from_file((dir / "nope.conf").string()), ConfigError);
  }
}
