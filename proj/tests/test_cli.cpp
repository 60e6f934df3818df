#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef BIASAUDIT_CLI_PATH
#error "BIASAUDIT_CLI_PATH must point at the built CLI binary"
#endif

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  auto err_path = std::filesystem::temp_directory_path() /
                  ("biasaudit_cli_err_" + std::to_string(counter++) + ".txt");
  const std::string command =
      std::string(BIASAUDIT_CLI_PATH) + " " + args + " 2>" + err_path.string();
  CliResult result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buffer[4096];
  std::size_t bytes = 0;
  while ((bytes = fread(buffer, 1, sizeof(buffer), pipe)) > 0) {
    result.out.append(buffer, bytes);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.err = slurp(err_path);
  std::filesystem::remove(err_path);
  return result;
}

std::size_t line_count(const std::string& text) {
  std::size_t lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

std::filesystem::path temp_prefix(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("cli stats reproduces the political baseline test") {
  auto result = run_cli("stats --a 2.43,0.57,600 --b -1.53,1.67,600");
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("Cohen's d = 3.17") != std::string::npos);
  CHECK(result.out.find("p < .001") != std::string::npos);

  double t = 0, df = 0, p = 0, d = 0;
  REQUIRE(std::sscanf(result.out.c_str() + result.out.find("t="),
                      "t=%lf df=%lf p=%lg d=%lf", &t, &df, &p, &d) == 4);
  CHECK(t == Catch::Approx(54.86).margin(0.5));
  CHECK(df == Catch::Approx(738.36).margin(3.0));
  CHECK(d == Catch::Approx(3.17).margin(0.01));
  CHECK(p < 0.001);
}

TEST_CASE("cli stats reproduces the gender baseline test") {
  auto result = run_cli("stats --a -1.06,1.59,500 --b -2.58,0.49,500");
  CHECK(result.exit_code == 0);
  double t = 0, df = 0, p = 0, d = 0;
  REQUIRE(std::sscanf(result.out.c_str() + result.out.find("t="),
                      "t=%lf df=%lf p=%lg d=%lf", &t, &df, &p, &d) == 4);
  CHECK(t == Catch::Approx(20.47).margin(0.3));
  CHECK(df == Catch::Approx(595.01).margin(4.0));
  CHECK(d == Catch::Approx(1.29).margin(0.01));
}

TEST_CASE("cli stats computes intergroup bias from means") {
  auto result = run_cli("stats --bias=-1.53,2.43,0.90,-0.54");
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("b_in=+2.4300") != std::string::npos);
  CHECK(result.out.find("b_out=-2.9700") != std::string::npos);
  CHECK(result.out.find("delta_conditional=1.4400") != std::string::npos);
}

TEST_CASE("cli validate accepts exported bundled batteries") {
  auto battery_path = temp_prefix("biasaudit_cli_battery.json");
  auto exported = run_cli("export battery political --out " + battery_path.string());
  REQUIRE(exported.exit_code == 0);
  auto result = run_cli("validate " + battery_path.string());
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("OK") != std::string::npos);
  CHECK(result.out.find("12 statements") != std::string::npos);
  std::filesystem::remove(battery_path);
}

TEST_CASE("cli validate rejects bad batteries with one diagnostic line") {
  auto bad_path = temp_prefix("biasaudit_cli_bad_battery.json");
  {
    std::ofstream out(bad_path);
    out << R"({
      "name": "bad",
      "system_prompt": "strongly disagree, disagree, slightly disagree, slightly agree, agree, strongly agree",
      "groups": [{"tag": "A"}, {"tag": "B"}, {"tag": "C"}],
      "statements": [{"id": "s1", "group": "A", "text": "X."}]
    })";
  }
  auto result = run_cli("validate " + bad_path.string());
  CHECK(result.exit_code != 0);
  CHECK(result.out.empty());
  CHECK(line_count(result.err) == 1);
  CHECK(result.err.find("exactly two groups required") != std::string::npos);
  std::filesystem::remove(bad_path);
}

TEST_CASE("cli run is byte-deterministic and report rebuilds match") {
  const auto prefix_a = temp_prefix("biasaudit_cli_run_a");
  const auto prefix_b = temp_prefix("biasaudit_cli_run_b");
  const std::string common =
      "run --battery political --provider mock:political_reference "
      "--conditions baseline,I_Rep --n 5 --seed 7 --format structured --out ";
  auto first = run_cli(common + prefix_a.string());
  REQUIRE(first.exit_code == 0);
  auto second = run_cli(common + prefix_b.string());
  REQUIRE(second.exit_code == 0);

  const auto report_a = slurp(prefix_a.string() + ".report.json");
  const auto report_b = slurp(prefix_b.string() + ".report.json");
  CHECK_FALSE(report_a.empty());
  CHECK(report_a == report_b);
  CHECK(first.out == second.out);

  // Rebuilding the report from saved results reproduces it byte for byte.
  auto rebuilt = run_cli("report " + prefix_a.string() +
                         ".results.jsonl --format structured");
  CHECK(rebuilt.exit_code == 0);
  CHECK(rebuilt.out == report_a);

  for (const auto* suffix : {".results.jsonl", ".report.json"}) {
    std::filesystem::remove(prefix_a.string() + suffix);
    std::filesystem::remove(prefix_b.string() + suffix);
  }
}

TEST_CASE("cli run records a cassette that replays identically") {
  const auto prefix_rec = temp_prefix("biasaudit_cli_rec");
  const auto prefix_rep = temp_prefix("biasaudit_cli_rep");
  const auto cassette = temp_prefix("biasaudit_cli_tape.jsonl");

  auto recorded = run_cli(
      "run --battery gender --provider mock:gender_reference --conditions baseline,I_man "
      "--n 4 --seed 11 --format structured --record " + cassette.string() +
      " --out " + prefix_rec.string());
  REQUIRE(recorded.exit_code == 0);

  auto replayed = run_cli(
      "run --battery gender --provider replay:" + cassette.string() +
      " --conditions baseline,I_man --n 4 --seed 11 --format structured --out " +
      prefix_rep.string());
  REQUIRE(replayed.exit_code == 0);

  CHECK(slurp(prefix_rec.string() + ".report.json") ==
        slurp(prefix_rep.string() + ".report.json"));

  for (const auto* suffix : {".results.jsonl", ".report.json"}) {
    std::filesystem::remove(prefix_rec.string() + suffix);
    std::filesystem::remove(prefix_rep.string() + suffix);
  }
  std::filesystem::remove(cassette);
}

TEST_CASE("cli error paths exit nonzero with a single diagnostic line") {
  auto no_seed = run_cli("run --battery political --provider mock:political_reference");
  CHECK(no_seed.exit_code != 0);
  CHECK(line_count(no_seed.err) == 1);
  CHECK(no_seed.err.find("--seed is required") != std::string::npos);

  auto bad_flag = run_cli("run --battery political --provider mock:x --frobnicate");
  CHECK(bad_flag.exit_code != 0);
  CHECK(line_count(bad_flag.err) == 1);

  auto bad_provider = run_cli(
      "run --battery political --provider carrier-pigeon --seed 1");
  CHECK(bad_provider.exit_code != 0);
  CHECK(line_count(bad_provider.err) == 1);
  CHECK(bad_provider.err.find("provider must be") != std::string::npos);

  auto record_replay = run_cli(
      "run --battery political --provider replay:/tmp/nonexistent.jsonl --record "
      "/tmp/x.jsonl --seed 1");
  CHECK(record_replay.exit_code != 0);
  CHECK(line_count(record_replay.err) == 1);
  CHECK(record_replay.err.find("--record is only valid") != std::string::npos);

  auto missing_battery = run_cli("run --battery nope --provider mock:x --seed 1");
  CHECK(missing_battery.exit_code != 0);
  CHECK(line_count(missing_battery.err) == 1);
}

TEST_CASE("cli export prints bundled assets") {
  auto battery = run_cli("export battery gender");
  CHECK(battery.exit_code == 0);
  CHECK(battery.out.find("\"name\": \"gender\"") != std::string::npos);

  auto profile = run_cli("export profile political_reference");
  CHECK(profile.exit_code == 0);
  CHECK(profile.out.find("\"overrides\"") != std::string::npos);

  auto unknown = run_cli("export battery nope");
  CHECK(unknown.exit_code != 0);
  CHECK(line_count(unknown.err) == 1);
}
