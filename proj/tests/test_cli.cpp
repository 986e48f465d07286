#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pinet/mesh.hpp"
#include "test_support.hpp"

using namespace pinet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

// Runs the CLI with stderr folded into stdout.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string(PINET_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) o.output.append(buf.data(), n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = s.str();
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string gen_config(const fs::path& mesh) {
  nlohmann::json j = {{"classes", {{{"name", "thing"}, {"mesh", mesh.string()}, {"count", 12}, {"cloud_points", 50}}}},
                      {"resolution", {80, 60}},
                      {"kind", "both"}};
  return j.dump();
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("train --help").code, 0);
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("gradcheck --no-such-flag").code, 1);
  EXPECT_EQ(cli("train --data x.jsonl").code, 1);  // --out is required
}

TEST(Cli, GradcheckPasses) {
  const auto o = cli("gradcheck --loss l3 --trials 100 --seed 7");
  EXPECT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("max relative error"), std::string::npos) << o.output;
  EXPECT_EQ(cli("gradcheck --loss l9").code, 1);
}

TEST(Cli, TrainMissingManifestNamesPath) {
  test_util::TempDir dir("cli_missing");
  const auto missing = dir / "nowhere" / "manifest.jsonl";
  const auto o = cli("train --data " + missing.string() + " --out " + (dir / "out").string());
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find(missing.string()), std::string::npos) << o.output;
}

TEST(Cli, ConfigErrorsExitOne) {
  test_util::TempDir dir("cli_cfg");
  write_obj(test_util::test_object(), dir / "obj.obj");
  write_text(dir / "gen.json", gen_config(dir / "obj.obj"));
  ASSERT_EQ(cli("gen-data --config " + (dir / "gen.json").string() + " --out " + (dir / "ds").string()).code, 0);
  const std::string data = " --data " + (dir / "ds" / "manifest.jsonl").string();

  write_text(dir / "alpha.json", R"({"train": {"loss": "l3", "alpha": 1.0}})");
  EXPECT_EQ(cli("train --config " + (dir / "alpha.json").string() + data + " --out " + (dir / "t").string()).code, 1);
  write_text(dir / "typo.json", R"({"train": {"epoch": 3}})");
  EXPECT_EQ(cli("train --config " + (dir / "typo.json").string() + data + " --out " + (dir / "t").string()).code, 1);
  write_text(dir / "broken.json", "{");
  EXPECT_EQ(cli("train --config " + (dir / "broken.json").string() + data + " --out " + (dir / "t").string()).code, 1);
  EXPECT_EQ(cli("train" + data + " --set train.loss=l5 --out " + (dir / "t").string()).code, 1);
  EXPECT_EQ(cli("eval" + data + " --model " + (dir / "gen.json").string() + " --out " + (dir / "e").string()).code, 1);
  EXPECT_EQ(cli("render-preview --mesh " + (dir / "obj.obj").string() + " --pose 0,0,1 --out " + (dir / "r").string())
                .code,
            1);
}

TEST(Cli, PipelineDeterministicAndSelfContained) {
  test_util::TempDir dir("cli_pipe");
  write_obj(test_util::test_object(), dir / "obj.obj");
  write_text(dir / "gen.json", gen_config(dir / "obj.obj"));
  for (const char* run : {"a", "b"}) {
    const fs::path out = dir / run;
    ASSERT_EQ(cli("gen-data --config " + (dir / "gen.json").string() + " --seed 1 --out " + (out / "data").string()).code,
              0);
    const std::string data = " --data " + (out / "data" / "manifest.jsonl").string();
    ASSERT_EQ(cli("train" + data + " --set train.epochs=2 train.batch_size=4 net.hidden=16 --seed 3 --out " +
                  (out / "train").string())
                  .code,
              0);
    const std::string model = " --model " + (out / "train" / "model.ckpt").string();
    ASSERT_EQ(cli("eval" + data + model + " --out " + (out / "eval").string()).code, 0);
    ASSERT_EQ(cli("occlude" + data + model + " --radii 0,2,4 --seed 5 --out " + (out / "occ").string()).code, 0);
    ASSERT_EQ(cli("render-preview --mesh " + (dir / "obj.obj").string() + " --kind shaded --seed 2 --out " +
                  (out / "preview").string())
                  .code,
              0);
  }
  for (const char* sub : {"data", "train", "eval", "occ", "preview"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / sub / "run.json")) << sub;
  }
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, content] : a) {
    ASSERT_TRUE(b.count(name)) << name;
    // Metadata records the --data and --out paths, which differ between the two trees.
    if (name.ends_with("run.json")) continue;
    EXPECT_EQ(content, b.at(name)) << name;
  }
  EXPECT_EQ(cli("gen-data --config " + (dir / "gen.json").string() + " --seed 2 --out " + (dir / "c").string()).code,
            0);
  EXPECT_NE(tree(dir / "c").at("manifest.jsonl"), a.at("data/manifest.jsonl"));
  // Nothing was written beside the output directories.
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
  EXPECT_EQ(entries, 5u);  // obj.obj, gen.json, a, b, c
}
