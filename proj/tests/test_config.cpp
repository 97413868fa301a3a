#include <gtest/gtest.h>

#include <sstream>

#include "ielkit/config.hpp"

using namespace ielkit;

namespace {

RunConfig parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  parse_config_text(in, c, "t.ini");
  return c;
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyFileKeepsDefaults) {
  EXPECT_EQ(config_echo(parse("")), config_echo(RunConfig{}));
  EXPECT_EQ(config_echo(parse("# only a comment\n\n; another\n")), config_echo(RunConfig{}));
}

TEST(Config, SectionsAndFlatKeysAgree) {
  const RunConfig a = parse("[iel]\ndepth = 5\ntau=0.2\n[train]\nmff=false\n");
  const RunConfig b = parse("iel.depth=5\niel.tau=0.2\ntrain.mff=off\n");
  EXPECT_EQ(a.iel.depth, 5);
  EXPECT_DOUBLE_EQ(a.iel.tau, 0.2);
  EXPECT_FALSE(a.bench.seg.mff);
  EXPECT_EQ(config_echo(a), config_echo(b));
}

TEST(Config, ListsAndStyles) {
  const RunConfig c = parse("[run]\ndepths=0, 3,7\n[train]\nchannels=4,8,16\n[style.target]\ngamma=1.4\n");
  EXPECT_EQ(c.depths, (std::vector<int>{0, 3, 7}));
  EXPECT_EQ(c.bench.channels, (std::vector<std::size_t>{4, 8, 16}));
  EXPECT_DOUBLE_EQ(c.bench.test_style.gamma, 1.4);
}

TEST(Config, MalformedLineNamesTheLine) {
  const std::string e = error_of("[iel]\ndepth==5\n");
  EXPECT_NE(e.find("t.ini:2"), std::string::npos) << e;
}

TEST(Config, UnknownKeyNamesTheLine) {
  const std::string e = error_of("\n\n[iel]\ndeepth=5\n");
  EXPECT_NE(e.find("t.ini:4"), std::string::npos) << e;
  EXPECT_NE(e.find("iel.deepth"), std::string::npos) << e;
}

TEST(Config, BadValuesRejected) {
  EXPECT_FALSE(error_of("iel.depth=five\n").empty());
  EXPECT_FALSE(error_of("train.mff=maybe\n").empty());
  EXPECT_FALSE(error_of("iel.boundary=mirror\n").empty());
  EXPECT_FALSE(error_of("run.depths=\n").empty());
}

TEST(Config, ValidateCatchesRanges) {
  RunConfig c = parse("iel.depth=65\n");
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse("iel.tau=0.6\n");
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse("scene.size=12\n");
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse("scene.size=12\ntrain.channels=4,4\n");
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, EchoRoundTrips) {
  const RunConfig c = parse("iel.depth=7\nrun.seed=42\nstyle.generated.hue_rotation=0.3\n");
  std::ostringstream text;
  for (const auto& [k, v] : config_echo(c)) text << k << '=' << v << '\n';
  EXPECT_EQ(config_echo(parse(text.str())), config_echo(c));
}

TEST(Config, MissingFileIsConfigError) { EXPECT_THROW(parse_config("/nonexistent/ielkit.ini"), ConfigError); }

TEST(Config, MissingDataPathIsDataError) {
  RunConfig c;
  c.source_dir = "/nonexistent/corpus";
  EXPECT_THROW(c.check_paths(), DataError);
}
