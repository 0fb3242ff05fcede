#include <catch2/catch.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace {

struct CommandResult {
  int exit_code;
  std::string output;
};

std::string binary_path() {
  const char* env = std::getenv("SPARSE_ORACLE_BIN");
  REQUIRE(env != nullptr);
  return env;
}

CommandResult run_command(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + binary_path() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  std::array<char, 4096> buffer;
  std::size_t got;
  while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    output.append(buffer.data(), got);
  }
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}

constexpr const char* kGoldenTinyRun =
    "# sparse_oracle 0.1.0\n"
    "# seed=1\n"
    "# config_hash=67dbe20a64a2792c\n"
    "scenario_id,method,m,n,p,beta_exponent,sigma_mode,alpha,replicates,seed,"
    "MP,FDR,Power,MP_se,FDR_se,Power_se\n"
    "single-m8-p0.1-known,oracle,8,8,0.1,,known,0.05,3,16925507362915932982,"
    "0.1904761905,0.3333333333,0,0.04761904762,0.3333333333,0\n"
    "single-m8-p0.1-known,BH,8,8,0.1,,known,0.05,3,16925507362915932982,"
    "0.1904761905,0.3333333333,0,0.04761904762,0.3333333333,0\n";

constexpr const char* kTinyArgs =
    "simulate --sweep single --m 8 --p 0.1 --replicates 3 --seed 1 "
    "--sigma-mode known --methods oracle,BH";

}  // namespace

TEST_CASE("tiny seeded run matches the golden CSV byte for byte", "[cli]") {
  const auto result = run_command(kTinyArgs);
  CHECK(result.exit_code == 0);
  CHECK(result.output == kGoldenTinyRun);
}

TEST_CASE("reruns with the same seed are byte-identical", "[cli]") {
  const auto first = run_command(kTinyArgs);
  const auto second = run_command(kTinyArgs);
  CHECK(first.exit_code == 0);
  CHECK(first.output == second.output);

  const auto reseeded = run_command(
      "simulate --sweep single --m 8 --p 0.1 --replicates 3 --seed 2 "
      "--sigma-mode known --methods oracle,BH");
  CHECK(reseeded.output != first.output);
}

TEST_CASE("output file matches stdout output", "[cli]") {
  const std::string path = "/tmp/sparse_oracle_cli_test.csv";
  const auto to_file = run_command(std::string(kTinyArgs) + " --out " + path);
  CHECK(to_file.exit_code == 0);
  FILE* f = fopen(path.c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string content;
  std::array<char, 4096> buffer;
  std::size_t got;
  while ((got = fread(buffer.data(), 1, buffer.size(), f)) > 0) content.append(buffer.data(), got);
  fclose(f);
  std::remove(path.c_str());
  CHECK(content == kGoldenTinyRun);
}

TEST_CASE("config files drive the run and bad keys are named", "[cli]") {
  const std::string path = "/tmp/sparse_oracle_cli_test.cfg";
  {
    FILE* f = fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    fputs("sweep=single\nm_total=8\np=0.1\nreplicates=3\nseed=1\n"
          "sigma_mode=known\nmethods=oracle,BH\n", f);
    fclose(f);
  }
  const auto from_config = run_command("simulate --config " + path);
  CHECK(from_config.exit_code == 0);
  CHECK(from_config.output == kGoldenTinyRun);

  {
    FILE* f = fopen(path.c_str(), "a");
    fputs("walrus=1\n", f);
    fclose(f);
  }
  const auto bad = run_command("simulate --config " + path);
  CHECK(bad.exit_code == 3);
  CHECK(bad.output.find("walrus") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("failure paths exit nonzero with named preconditions", "[cli]") {
  SECTION("power-of-two violation") {
    const auto r = run_command("simulate --sweep single --m 100 --replicates 2");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("power of two") != std::string::npos);
  }

  SECTION("bfdr level above 1 - p has no solution") {
    const auto r = run_command("threshold --rule bfdr --p 0.1 --n 100 --alpha 0.95");
    CHECK(r.exit_code == 4);
    CHECK(r.output.find("no solution") != std::string::npos);
  }

  SECTION("unknown verify suite is a usage error") {
    const auto r = run_command("verify --suite bogus");
    CHECK(r.exit_code == 2);
  }

  SECTION("unknown subcommand is a usage error") {
    const auto r = run_command("frobnicate");
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("worker cap environment variable is validated", "[cli]") {
  const auto bad = run_command("simulate --sweep single --m 8 --replicates 2", "SPARSE_ORACLE_THREADS=abc ");
  CHECK(bad.exit_code == 3);
  CHECK(bad.output.find("SPARSE_ORACLE_THREADS") != std::string::npos);

  const auto capped = run_command("simulate --sweep single --m 8 --replicates 2 --seed 1 "
                                  "--sigma-mode known --methods oracle",
                                  "SPARSE_ORACLE_THREADS=2 ");
  CHECK(capped.exit_code == 0);
}

TEST_CASE("hundred-replicate run finishes quickly", "[cli]") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_command(
      "simulate --sweep single --m 256 --p 0.05 --replicates 100 --seed 3 --sigma-mode known");
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0);
  CHECK(r.exit_code == 0);
  CHECK(elapsed.count() < 60);
}

TEST_CASE("threshold printer", "[cli]") {
  SECTION("bonferroni quantile") {
    const auto r = run_command("threshold --rule bonferroni --alpha 0.05 --m 1000");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("4.055626981") != std::string::npos);
  }

  SECTION("prior loaded from a file") {
    const std::string path = "/tmp/sparse_oracle_prior_test.cfg";
    FILE* f = fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    fputs("kind=two_point\nmu_minus=-0.5\nmu_plus=0.5\nw_minus=0.5\n", f);
    fclose(f);
    const auto r = run_command(
        "threshold --rule oracle --p 0.01 --n 200 --prior " + path);
    std::remove(path.c_str());
    CHECK(r.exit_code == 0);
    // pinned root of the two-point classifier equation
    CHECK(r.output.find("-0.302882670") != std::string::npos);
    // a two-point prior has no density at zero, so no leading-order line
    CHECK(r.output.find("unavailable") != std::string::npos);

    const auto missing = run_command("threshold --rule oracle --prior /nonexistent.cfg");
    CHECK(missing.exit_code == 3);
  }

  SECTION("symmetric prior with equal losses prints a = -b") {
    const auto r = run_command("threshold --rule oracle --p 0.05 --n 256 --tau2 0.9");
    CHECK(r.exit_code == 0);
    const auto a_pos = r.output.find("a = -");
    REQUIRE(a_pos != std::string::npos);
    const auto a_value = r.output.substr(a_pos + 5, 12);
    CHECK(r.output.find("b = " + a_value) != std::string::npos);
  }
}
