// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(IMC_SOURCE_DIR) / "fixtures";

struct Run {
  int rc;
  std::string out;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("imc_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run imc(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt";
  const std::string cmd = std::string("\"") + IMC_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string model(const std::string& name) {
  return "--model " + (kFixtures / (name + ".imcm")).string() + " --dataset " + (kFixtures / (name + ".imcd")).string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("bad arguments exit 2") {
  CHECK(imc("").rc == 2);
  CHECK(imc("infer --dataset x").rc == 2);
  CHECK(imc("infer " + model("dot20") + " --runtime bogus").rc == 2);
  CHECK(imc("infer " + model("dot20") + " --runtime tiled:0").rc == 2);
  CHECK(imc("infer --model /nonexistent.imcm --dataset /nonexistent.imcd").rc == 2);
  CHECK(imc("infer " + model("dot20") + " --sample 100000").rc == 2);
  CHECK(imc("infer " + model("dot20") + " --schedule sometimes").rc == 2);
  CHECK(imc("infer --model " + (kFixtures / "dot20.imcm").string() + " --dataset " +
            (kFixtures / "mnist_mini.imcd").string())
            .rc == 2);
}

TEST_CASE("infer on continuous power matches the reference") {
  const fs::path j = scratch() / "infer.json";
  const Run r = imc("infer " + model("mnist_mini") + " --runtime naive --schedule continuous --json " + j.string());
  REQUIRE(r.rc == 0);
  const auto doc = load_json(j);
  CHECK(doc["matches_reference"] == true);
  CHECK(doc["runtime"] == "naive");
  CHECK(doc["stats"]["reboots"] == 0);
  CHECK(r.out.find("matches_reference=true") != std::string::npos);
}

TEST_CASE("infer output is deterministic") {
  const fs::path a = scratch() / "a.json", b = scratch() / "b.json";
  const std::string args = "infer " + model("har_mini") + " --runtime sonic --schedule random:7:300:900 --json ";
  REQUIRE(imc(args + a.string()).rc == 0);
  REQUIRE(imc(args + b.string()).rc == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(load_json(a)["stats"]["reboots"].get<int>() > 0);
  CHECK(load_json(a)["matches_reference"] == true);
}

TEST_CASE("non-termination exits 3") {
  const Run r = imc("infer " + model("dot20") + " --runtime tiled:12 --schedule fixed:600");
  CHECK(r.rc == 3);
  CHECK(r.out.find("NonTermination") != std::string::npos);
}

TEST_CASE("crash sweep exit codes") {
  const fs::path j = scratch() / "sweep.json";
  CHECK(imc("crashsweep " + model("dot20") + " --runtime sonic --seeds 20 --exhaustive-stride 0 --json " + j.string())
            .rc == 0);
  CHECK(load_json(j)["runs"] == 21);  // plus the continuous run
  CHECK(imc("crashsweep " + model("dot20") + " --runtime sonic-nonatomic --seeds 40 --exhaustive-stride 1").rc == 4);
}

TEST_CASE("impj ratios") {
  const fs::path j = scratch() / "impj.json";
  REQUIRE(imc("impj --steps 10 --json " + j.string()).rc == 0);
  const auto q = load_json(j)["ratios"];
  CHECK(q["ideal_over_baseline"].get<double>() == doctest::Approx(19.84).epsilon(1e-3));
  CHECK(q["tails_result_over_baseline"].get<double>() == doctest::Approx(482.0).epsilon(1e-3));
  CHECK(q["tails_over_naive"].get<double>() == doctest::Approx(4.60).epsilon(1e-3));
  CHECK(q["ideal_result_over_tails"].get<double>() == doctest::Approx(2.196).epsilon(1e-3));
}

TEST_CASE("calibrate finds the largest affordable tile") {
  const fs::path j = scratch() / "calib.json";
  REQUIRE(imc("calibrate --elements 70 --json " + j.string()).rc == 0);
  const auto doc = load_json(j);
  CHECK(doc["tile"] == 64);
  CHECK(doc["reboots"] == 2);
  CHECK(imc("calibrate --initial-tile 0").rc == 2);
}

TEST_CASE("compress with a singleton grid") {
  const fs::path grid = scratch() / "grid.json", csv = scratch() / "frontier.csv", j = scratch() / "compress.json";
  const fs::path roomy = scratch() / "options.json";
  std::ofstream(grid) << R"({"layers": {}})";
  std::ofstream(roomy) << R"({"memory_bound_bytes": 65536, "threads": 1})";
  const std::string base = "compress --base " + (kFixtures / "genesis_base.json").string() + " --dataset " +
                           (kFixtures / "genesis_data.imcd").string() + " --grid " + grid.string();
  // The uncompressed base does not fit the fixture bound.
  CHECK(imc(base + " --options " + (kFixtures / "genesis_options.json").string()).rc == 2);
  const Run r = imc(base + " --options " + roomy.string() + " --csv " + csv.string() + " --json " + j.string());
  REQUIRE(r.rc == 0);
  CHECK(load_json(j)["configs"] == 1);
  const std::string table = slurp(csv);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
}

TEST_CASE("report compares runtimes") {
  const fs::path j = scratch() / "report.json";
  const std::string args = "report " + model("dense_conv") + " --schedule random:3:2000:4000 --json " + j.string();
  REQUIRE(imc(args + " --runtimes tiled:8,sonic,tails").rc == 0);
  const auto runs = load_json(j)["runs"];
  REQUIRE(runs.size() == 3);
  for (const auto& run : runs) CHECK(run["matches_reference"] == true);

  // Naive restarts from scratch and cannot finish within one on-period.
  CHECK(imc(args).rc == 3);
  const auto all = load_json(j)["runs"];
  REQUIRE(all.size() == 4);
  CHECK(all[0].contains("non_termination"));
  CHECK(all[3]["matches_reference"] == true);
}
