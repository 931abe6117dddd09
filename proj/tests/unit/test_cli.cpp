#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vetta/cli/commands.hpp"
#include "vetta/tree/io.hpp"

using namespace vetta;
using namespace vetta::cli;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vetta_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "vetta");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  auto* out = std::cout.rdbuf(nullptr);
  auto* err = std::cerr.rdbuf(nullptr);
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(out);
  std::cerr.rdbuf(err);
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("sample configs parse") {
  const fs::path dir = fs::path(VETTA_SOURCE_DIR) / "tools" / "configs";
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    CAPTURE(e.path().string());
    const auto c = load_run_config(e.path());
    CHECK(c.schedule.steps > 0);
    if (e.path().filename() == "tree2d_vae.json") {
      CHECK(c.tree.variational);
      CHECK(c.tree.kl_weight == 1e-6);
    }
    ++n;
  }
  CHECK(n == 4);
}

TEST_CASE("config validation") {
  const fs::path base = fs::temp_directory_path();
  CHECK_THROWS_AS(parse_run_config(json{{"mode", "tree"}, {"dataset", "x"}, {"colour", 1}}, base), UsageError);
  CHECK_THROWS_AS(parse_run_config(json{{"mode", "forest"}, {"dataset", "x"}}, base), UsageError);
  CHECK_THROWS_AS(parse_run_config(json{{"mode", "tree"}}, base), UsageError);
  CHECK_THROWS_AS(parse_run_config(json{{"mode", "vessel"}, {"variant", "vae"}, {"synthetic_vessels", 3}}, base),
                  UsageError);
  CHECK_THROWS(parse_run_config(json{{"mode", "tree"}, {"dataset", "x"}, {"model", {{"dims", 4}}}}, base));

  const auto c = parse_run_config(json{{"mode", "tree"}, {"dataset", "x"}, {"seed", 5}}, base);
  CHECK(c.seed == 5);
  CHECK(c.schedule.seed == 5);
  CHECK(c.schedule.steps == 20000);
  CHECK(c.schedule.batch == 32);
  CHECK(!c.tree.variational);

  ::setenv("VETTA_SEED", "99", 1);
  CHECK(parse_run_config(json{{"mode", "tree"}, {"dataset", "x"}, {"seed", 5}}, base).seed == 99);
  ::setenv("VETTA_SEED", "nine", 1);
  CHECK_THROWS_AS(parse_run_config(json{{"mode", "tree"}, {"dataset", "x"}}, base), UsageError);
  ::unsetenv("VETTA_SEED");
}

TEST_CASE("gen-data is deterministic and refuses to overwrite") {
  const fs::path dir = scratch("gen");
  CHECK(run({"gen-data", "--out", (dir / "a").string(), "--count", "3", "--seed", "9"}) == kExitOk);
  CHECK(run({"gen-data", "--out", (dir / "b").string(), "--count", "3", "--seed", "9"}) == kExitOk);
  for (const char* f : {"manifest.json", "tree_00000.json", "tree_00002.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  const auto manifest = json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["count"] == 3);
  CHECK(manifest["files"].size() == 3);
  CHECK(load_dataset(dir / "a").size() == 3);
  CHECK(run({"gen-data", "--out", (dir / "a").string(), "--count", "3"}) == kExitConfig);
  CHECK(run({"gen-data", "--out", (dir / "a").string(), "--count", "3", "--force"}) == kExitOk);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(run({"no-such-command"}) == kExitConfig);
  CHECK(run({"gen-data"}) == kExitConfig);
  CHECK(run({"gen-data", "--out", (dir / "d").string(), "--dims", "5"}) == kExitConfig);
  CHECK(run({"train-tree", "--config", (dir / "missing.json").string(), "--out", (dir / "r").string()}) ==
        kExitConfig);
  CHECK(run({"eval", "--dataset", (dir / "d").string(), "--out", (dir / "e").string()}) == kExitConfig);
  CHECK(run({"reconstruct", "--ckpt", (dir / "none.vtac").string(), "--input", "x.json", "--out", "y.json"}) ==
        kExitFailure);
  fs::remove_all(dir);
}
