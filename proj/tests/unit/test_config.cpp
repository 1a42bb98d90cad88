#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "celeganser/commands.hpp"
#include "celeganser/config.hpp"
#include "celeganser/error.hpp"

namespace {

using namespace celeganser;
using config::RunConfig;
namespace fs = std::filesystem;

const std::map<std::string, std::string> kDefaults = {
    {"epochs", "30"}, {"lr0", "0.0005"}, {"name", ""}, {"flag", "no"}};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(RunConfig, DefaultsAndTypedGetters) {
  const RunConfig c(kDefaults, {});
  EXPECT_EQ(c.get_int("epochs"), 30);
  EXPECT_DOUBLE_EQ(c.get_double("lr0"), 0.0005);
  EXPECT_FALSE(c.get_bool("flag"));
  EXPECT_FALSE(c.is_set("name"));
}

TEST(RunConfig, FlagsOverrideWithEitherSpelling) {
  const RunConfig c(kDefaults, {"epochs=3", "--name=a=b", "flag=true"});
  EXPECT_EQ(c.get_u64("epochs"), 3u);
  EXPECT_EQ(c.get("name"), "a=b");
  EXPECT_TRUE(c.get_bool("flag"));
}

TEST(RunConfig, UnknownKeysAndMalformedValuesRejected) {
  EXPECT_EQ(code_of([] { RunConfig(kDefaults, {"epoch=3"}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { RunConfig(kDefaults, {"epochs"}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { RunConfig(kDefaults, {"epochs=3x"}).get_int("epochs"); }),
            ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { RunConfig(kDefaults, {"flag=maybe"}).get_bool("flag"); }),
            ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { RunConfig(kDefaults, {}).get("missing"); }), ErrorCode::kConfig);
}

TEST(RunConfig, FileThenFlags) {
  const fs::path file = fs::temp_directory_path() / "celeganser_config_test.txt";
  {
    std::ofstream out(file);
    out << "# comment\nepochs=12\nname=from_file\n";
  }
  const RunConfig c(kDefaults, {"name=cli", "config=" + file.string()});
  EXPECT_EQ(c.get_int("epochs"), 12);
  EXPECT_EQ(c.get("name"), "cli");
  fs::remove(file);
  EXPECT_EQ(code_of([&] { RunConfig(kDefaults, {"config=" + file.string()}); }),
            ErrorCode::kConfig);
}

TEST(RunConfig, EchoLinesSorted) {
  const RunConfig c(kDefaults, {"epochs=2"});
  const auto lines = c.echo_lines();
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "epochs=2");
  EXPECT_EQ(lines[3], "name=");
}

TEST(Commands, DefaultsExistForEveryCommand) {
  for (const char* cmd : {"synth", "train", "eval", "infer", "straighten", "maskstudy", "gradcheck"})
    EXPECT_FALSE(commands::defaults_for(cmd).empty()) << cmd;
  EXPECT_EQ(code_of([] { commands::defaults_for("fly"); }), ErrorCode::kConfig);
}

TEST(Commands, GenParamsFollowKeys) {
  const RunConfig c(commands::defaults_for("synth"), {"canvas=200", "gen.margin=3"});
  const synth::GenParams p = commands::gen_params_from(c);
  EXPECT_EQ(p.canvas_height, 200);
  EXPECT_EQ(p.canvas_width, 200);
  EXPECT_DOUBLE_EQ(p.margin, 3.0);
}

}  // namespace
