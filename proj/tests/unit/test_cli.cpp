#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CPR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kTiny = std::string(CPR_SOURCE_DIR) + "/configs/tiny.conf";

}  // namespace

TEST_CASE("e2e on the tiny config writes a six-row report") {
  const fs::path dir = testutil::scratch_dir("cli_e2e");
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(run("e2e --config " + kTiny + " --out " + dir.string(), dir / "log.txt") == 0);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::minutes(1));
  const std::string csv = testutil::read_file(dir / "report.csv");
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 7);
  for (const char* f : {"graph.tsv", "priors.tsv", "pairs.jsonl", "params.txt", "pools_cal.jsonl", "pools_test.jsonl",
                        "calibration.csv", "thresholds.json", "predictions.jsonl", "report.json", "report.txt"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
}

TEST_CASE("exit codes follow the error category") {
  const fs::path dir = testutil::scratch_dir("cli_errors");
  REQUIRE(run("synth --config " + kTiny + " --out " + dir.string(), dir / "synth.log") == 0);

  testutil::write_file(dir / "empty_cal.jsonl", "");
  CHECK(run("calibrate --config " + kTiny + " --out " + dir.string() + " --set cal=" + (dir / "empty_cal.jsonl").string(),
            dir / "cal.log") == 3);
  CHECK(testutil::read_file(dir / "cal.log").find("empty") != std::string::npos);

  CHECK(run("collect --config " + kTiny + " --out " + dir.string() + " --set graph=/nonexistent/graph.tsv",
            dir / "missing.log") == 2);
  CHECK(run("collect --config /nonexistent/run.conf", dir / "noconf.log") == 2);
  CHECK(run("collect --config " + kTiny + " --set no.such.key=1", dir / "badkey.log") == 3);
  CHECK(run("e2e --no-such-flag", dir / "badflag.log") == 3);
  CHECK(run("retrieve --config " + kTiny + " --out " + dir.string() + " --split bogus", dir / "split.log") == 3);
}
