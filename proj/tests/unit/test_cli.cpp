#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(DAEPINN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("exit statuses") {
  const fs::path root = fs::temp_directory_path() / "daepinn_cli_test";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string out = (root / "g3.txt").string();
  CHECK(run("tableau --scheme gauss --stages 3 --out " + out) == 0);
  CHECK(fs::exists(out));
  CHECK(run("tableau --scheme rk4 --stages 3 --out " + out) == 1);
  CHECK(run("train --set training.bogus=1") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("simulate --ckpt " + (root / "missing.json").string() + " --ic 0") == 1);

  const std::string cfg = (root / "bad.ini").string();
  std::system(("printf '[training]\\nK = x\\n' > " + cfg).c_str());
  CHECK(run("datagen --config " + cfg + " --out " + (root / "d").string()) == 2);
  CHECK_FALSE(fs::exists(root / "d"));

  CHECK(run("oracle --set model.name='\"linear\"' --set training.ic_lo='[-1.0]' --set training.ic_hi='[1.0]'"
            " --ic 1.0 --t-end 0.1 --out " + (root / "o").string()) == 0);
  CHECK(fs::exists(root / "o" / "trajectory.csv"));
  CHECK(fs::exists(root / "o" / "manifest.ini"));
  fs::remove_all(root);
}
