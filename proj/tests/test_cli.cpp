#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("divmin_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome run(const std::string& args, const std::string& tag) {
  const fs::path dir = scratch("io_" + tag);
  const std::string cmd = std::string(DIVMIN_BINARY) + " " + args + " > " + (dir / "out").string() + " 2> " +
                          (dir / "err").string();
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(dir / "out");
  o.err = slurp(dir / "err");
  return o;
}

std::string config(const std::string& name) { return std::string(DIVMIN_SOURCE_DIR) + "/configs/" + name; }

fs::path write_config(const std::string& tag, const nlohmann::json& doc) {
  const fs::path p = scratch("cfg_" + tag) / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

}  // namespace

TEST(Cli, ListShowsEightFamilies) {
  const auto o = run("list", "list");
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream in(o.out);
  std::string line;
  bool inside = false;
  int families = 0;
  while (std::getline(in, line)) {
    if (line.rfind("objective families:", 0) == 0) {
      inside = true;
      continue;
    }
    if (inside) {
      if (line.empty() || line[0] != ' ') break;
      ++families;
      EXPECT_NE(line.find("Eq. "), std::string::npos) << line;
    }
  }
  EXPECT_EQ(families, 8);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("frobnicate", "unknown").code, 2);
  EXPECT_EQ(run("", "none").code, 2);
  EXPECT_EQ(run("verify --seeds 0", "zero").code, 2);
  EXPECT_EQ(run("run", "missing").code, 2);
}

TEST(Cli, VerifyPasses) {
  const auto o = run("verify --seeds 2", "verify");
  ASSERT_EQ(o.code, 0) << o.err;
  const auto doc = nlohmann::json::parse(o.out);
  EXPECT_TRUE(doc.at("passed").get<bool>());
  EXPECT_EQ(doc.at("checks").size(), 17u);
}

TEST(Cli, InjectedFaultFailsAndNamesTheEquation) {
  const auto o = run("verify --seeds 2 --inject-fault map_equivalence", "fault");
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("FAIL Eq. map"), std::string::npos) << o.err;
}

TEST(Cli, VerifyIsDeterministicAcrossThreadCounts) {
  const auto a = run("verify --seeds 3 --threads 1", "t1");
  const auto b = run("verify --seeds 3 --threads 4", "t4");
  ASSERT_EQ(a.code, 0);
  auto ja = nlohmann::json::parse(a.out);
  auto jb = nlohmann::json::parse(b.out);
  EXPECT_EQ(ja.at("checks"), jb.at("checks"));
}

TEST(Cli, DryRunValidates) {
  const auto o = run("run " + config("bnn-toy.json") + " --dry-run", "dry");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("ok: elbo_bnn (Eq. elbo)"), std::string::npos);
}

TEST(Cli, BadConfigsExitTwo) {
  auto doc = nlohmann::json::parse(slurp(config("bnn-toy.json")));
  doc["mystery"] = true;
  EXPECT_EQ(run("run " + write_config("unknown_key", doc).string() + " --dry-run", "bad1").code, 2);

  doc = nlohmann::json::parse(slurp(config("bnn-toy.json")));
  doc.erase("seed");
  EXPECT_EQ(run("run " + write_config("no_seed", doc).string() + " --dry-run", "bad2").code, 2);

  doc = nlohmann::json::parse(slurp(config("bnn-toy.json")));
  doc["schema_version"] = 99;
  EXPECT_EQ(run("run " + write_config("schema", doc).string() + " --dry-run", "bad3").code, 2);

  EXPECT_EQ(run("run /nonexistent/config.json", "bad4").code, 2);
}

TEST(Cli, RunWritesArtifacts) {
  const fs::path out = scratch("run_artifacts");
  const auto o = run("run " + config("free-choice.json") + " --out " + out.string(), "run");
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"trace.csv", "report.json", "terms.svg"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report.at("family"), "kl_control");
  EXPECT_EQ(report.at("schema_version"), 1);
  const auto& x1 = report.at("marginals").at("x1");
  EXPECT_NEAR(x1.at(1).get<double>(), 0.75, 1e-3);
}

TEST(Cli, PointMassRunWritesScan) {
  const fs::path out = scratch("run_scan");
  const auto o = run("run " + config("bnn-map.json") + " --out " + out.string(), "scan");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(out / "scan.csv"));
}

TEST(Cli, ReportIsDeterministicApartFromTimestamp) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run("run " + config("vae-toy.json") + " --out " + a.string(), "det_a").code, 0);
  ASSERT_EQ(run("run " + config("vae-toy.json") + " --out " + b.string(), "det_b").code, 0);
  auto ra = nlohmann::json::parse(slurp(a / "report.json"));
  auto rb = nlohmann::json::parse(slurp(b / "report.json"));
  ra.erase("timestamp");
  rb.erase("timestamp");
  ra["config"].erase("output_dir");
  rb["config"].erase("output_dir");
  EXPECT_EQ(ra, rb);
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
}

TEST(Cli, GradcheckPasses) {
  const auto o = run("gradcheck " + config("chain-mdp-maxent.json"), "grad");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("worst coordinate:"), std::string::npos);
}
