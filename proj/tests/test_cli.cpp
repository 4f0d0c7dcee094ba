#include <gtest/gtest.h>

#include <fstream>

#include "support/test_support.hpp"

using nlohmann::json;

namespace {

std::string conf() { return nltest::source_path("fixtures/pipeline_10.conf").string(); }

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, HelpAndVersion) {
  auto r = nltest::run_cli("--help");
  EXPECT_EQ(r.exit_code, 0);
  for (const char* sub : {"ingest", "select", "explain", "simscore", "adacs", "puzzles", "judge", "efficiency", "report",
                          "serve-eval", "estimate-cost"}) {
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(nltest::run_cli("--version").exit_code, 0);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(nltest::run_cli("").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("frobnicate").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("explain").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("explain -c /no/such/file.conf").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("explain -c " + conf() + " --no-such-flag").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("explain -c " + conf() + " --mode sideways").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("explain -c " + conf() + " --methods Summary,Bogus").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("efficiency -c " + conf() + " --methods ''").exit_code, 1);
  EXPECT_EQ(nltest::run_cli("report").exit_code, 1);
}

TEST(Cli, BadConfigTextIsUsageError) {
  nltest::TempDir dir;
  std::ofstream(dir / "bad.conf") << "unknown_key = 1\n";
  auto r = nltest::run_cli("ingest -c " + quoted(dir / "bad.conf"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("unknown_key"), std::string::npos);
}

TEST(Cli, IngestAndSelect) {
  auto ingest = nltest::run_cli("ingest -c " + conf());
  EXPECT_EQ(ingest.exit_code, 0) << ingest.output;
  EXPECT_NE(ingest.output.find("10"), std::string::npos);

  auto sel = nltest::run_cli("select -c " + conf() + " --strategy top-n --k 3");
  EXPECT_EQ(sel.exit_code, 0) << sel.output;
  std::size_t id_lines = 0;
  std::istringstream in(sel.output);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0])) && line.find('\t') != std::string::npos) {
      ++id_lines;
    }
  }
  EXPECT_EQ(id_lines, 3u);
  EXPECT_NE(sel.output.find("layer"), std::string::npos);
}

TEST(Cli, EfficiencyAndCost) {
  nltest::TempDir dir;
  auto eff = nltest::run_cli("efficiency -c " + conf() + " --output-dir " + quoted(dir.path()));
  EXPECT_EQ(eff.exit_code, 0) << eff.output;
  EXPECT_NE(eff.output.find("Highlight"), std::string::npos);
  auto j = json::parse(nltest::read_file(dir / "efficiency.json"));
  EXPECT_EQ(j["rows"].size(), 5u);

  auto cost = nltest::run_cli("estimate-cost -c " + conf() + " --neurons 1000");
  EXPECT_EQ(cost.exit_code, 0) << cost.output;
  EXPECT_NE(cost.output.find("total"), std::string::npos);
}

TEST(Cli, ReplayStagesAndReport) {
  nltest::TempDir dir;
  const std::string common = " -c " + conf() + " --output-dir " + quoted(dir.path());
  for (const char* stage : {"explain", "simscore", "adacs", "puzzles", "judge"}) {
    auto r = nltest::run_cli(std::string(stage) + common);
    EXPECT_EQ(r.exit_code, 0) << stage << "\n" << r.output;
    EXPECT_TRUE(std::filesystem::exists(dir / ("manifest." + std::string(stage) + ".json"))) << stage;
  }
  auto rep = nltest::run_cli("report " + quoted(dir / "scores.jsonl") + " -o " + quoted(dir / "report"));
  EXPECT_EQ(rep.exit_code, 0) << rep.output;
  EXPECT_TRUE(std::filesystem::exists(dir / "report.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_NE(nltest::read_file(dir / "report.txt").find("Rank summary"), std::string::npos);
}

TEST(Cli, PartialAndFatalExitCodes) {
  nltest::TempDir dir;
  std::ifstream in(nltest::source_path("fixtures/cassettes/pipeline_10.jsonl"));
  std::ofstream out(dir / "cassette.jsonl");
  bool dropped = false;
  for (std::string line; std::getline(in, line);) {
    if (!dropped && json::parse(line)["request_summary"]["model"] == "synthetic-explainer") {
      dropped = true;
      continue;
    }
    out << line << '\n';
  }
  out.close();
  const std::string base = "explain -c " + conf() + " --cassette " + quoted(dir / "cassette.jsonl");
  auto lenient = nltest::run_cli(base + " --output-dir " + quoted(dir / "lenient"));
  EXPECT_EQ(lenient.exit_code, 2) << lenient.output;
  auto strict = nltest::run_cli(base + " --strict --output-dir " + quoted(dir / "strict"));
  EXPECT_EQ(strict.exit_code, 3) << strict.output;
}

TEST(Cli, ReplayWithoutCassetteFailsClosed) {
  nltest::TempDir dir;
  auto r = nltest::run_cli("explain -c " + conf() + " --cassette " + quoted(dir / "none.jsonl") + " --output-dir " +
                           quoted(dir / "out"));
  EXPECT_NE(r.exit_code, 0);
}
