#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>
#include <unistd.h>

#include "json.hpp"
#include "kpx/cli/app.hpp"
#include "kpx/scenario/dataset_io.hpp"
#include "kpx/scenario/generator.hpp"

namespace kpx::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / fmt_name(info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    unsetenv("KPX_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir);
    unsetenv("KPX_SEED");
  }
  static std::string fmt_name(const std::string& test) {
    return "kpx_cli_" + test + "_" + std::to_string(::getpid());
  }

  int kpx(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run(args, out, err);
  }
  std::string path(const std::string& rel) const { return (dir / rel).string(); }

  fs::path make_data(const std::string& name, std::size_t n, std::uint64_t seed, const std::string& mix = "uniform") {
    EXPECT_EQ(kpx({"gen-data", "--n", std::to_string(n), "--seed", std::to_string(seed), "--mix", mix, "--out",
                   path(name)}),
              0)
        << err.str();
    return dir / name / "dataset.jsonl";
  }

  fs::path make_model(const fs::path& data, const std::string& name) {
    EXPECT_EQ(kpx({"train", "--data", data.string(), "--out", path(name), "--epochs", "1", "--batch-size", "4",
                   "--quiet", "--set", "validation_fraction=0"}),
              0)
        << err.str();
    return dir / name / "model.kpxf";
  }

  static json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
  }

  fs::path dir;
  std::ostringstream out, err;
};

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(kpx({"--help"}), 0);
  EXPECT_NE(out.str().find("gen-data"), std::string::npos);
  EXPECT_EQ(kpx({"train", "--help"}), 0);
  EXPECT_NE(out.str().find("flags > --config file > $KPX_SEED"), std::string::npos);
  EXPECT_EQ(kpx({}), 2);
  EXPECT_EQ(kpx({"frobnicate"}), 2);
  EXPECT_EQ(kpx({"gen-data", "--n", "10"}), 2);  // missing --out
  EXPECT_EQ(kpx({"gen-data", "--n", "10", "--mix", "cross_walkway=0.5", "--out", path("x")}), 2);
  EXPECT_EQ(kpx({"gen-data", "--n", "0", "--out", path("x")}), 2);
}

TEST_F(CliTest, GenDataIsDeterministicAndWritesManifest) {
  const auto a = make_data("a", 100, 7);
  const auto b = make_data("b", 100, 7);
  EXPECT_EQ(file_digest(a), file_digest(b));
  EXPECT_NE(file_digest(a), file_digest(make_data("c", 100, 8)));

  const json m = read_json(dir / "a" / "manifest.json");
  EXPECT_EQ(m.at("command"), "gen-data");
  EXPECT_EQ(m.at("seed"), 7);
  EXPECT_EQ(m.at("outputs").at("dataset").at("sha256"), file_digest(a));
  EXPECT_TRUE(m.contains("wall_seconds"));
}

TEST_F(CliTest, SingleKindMixGivesAllPositive) {
  const auto data = scenario::read_dataset_file(make_data("w", 30, 1, "cross_walkway=1.0"));
  for (const auto& s : data.scenes) EXPECT_EQ(s.crossing_label, 1);
}

TEST_F(CliTest, DefaultMixMatchesPresetRatio) {
  ASSERT_EQ(kpx({"gen-data", "--n", "400", "--seed", "2", "--out", path("d")}), 0) << err.str();
  const auto data = scenario::read_dataset_file(dir / "d" / "dataset.jsonl");
  double pos = 0;
  for (const auto& s : data.scenes) pos += s.crossing_label;
  EXPECT_NEAR(pos / 400.0, scenario::KindMix::paper_balance().positive_fraction(), 0.05);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  setenv("KPX_SEED", "7", 1);
  ASSERT_EQ(kpx({"gen-data", "--n", "20", "--mix", "uniform", "--out", path("env")}), 0);
  unsetenv("KPX_SEED");
  const auto explicit_seed = make_data("flag", 20, 7);
  EXPECT_EQ(file_digest(dir / "env" / "dataset.jsonl"), file_digest(explicit_seed));

  setenv("KPX_SEED", "9", 1);
  const auto flagged = make_data("flag2", 20, 7);
  EXPECT_EQ(file_digest(flagged), file_digest(explicit_seed));
  setenv("KPX_SEED", "nine", 1);
  EXPECT_EQ(kpx({"gen-data", "--n", "20", "--out", path("bad")}), 2);
}

TEST_F(CliTest, UnwritableOutputIsAnIoError) {
  std::ofstream(dir / "file") << "x";
  EXPECT_EQ(kpx({"gen-data", "--n", "5", "--out", path("file/sub")}), 3);
  EXPECT_EQ(kpx({"train", "--data", path("missing.jsonl"), "--out", path("t")}), 3);
}

TEST_F(CliTest, TrainConfigPrecedence) {
  const auto data = make_data("data", 8, 1);
  std::ofstream(dir / "cfg.json") << R"({"epochs": 1, "batch_size": 4, "seed": 5, "validation_fraction": 0})";
  setenv("KPX_SEED", "3", 1);
  ASSERT_EQ(kpx({"train", "--data", data.string(), "--config", path("cfg.json"), "--out", path("r1"), "--quiet"}), 0)
      << err.str();
  EXPECT_EQ(read_json(dir / "r1" / "manifest.json").at("seed"), 5);  // file beats environment
  ASSERT_EQ(kpx({"train", "--data", data.string(), "--config", path("cfg.json"), "--out", path("r2"), "--seed", "6",
                 "--quiet"}),
            0);
  EXPECT_EQ(read_json(dir / "r2" / "manifest.json").at("seed"), 6);  // flag beats file
  std::ofstream(dir / "nos.json") << R"({"epochs": 1, "batch_size": 4, "validation_fraction": 0})";
  ASSERT_EQ(kpx({"train", "--data", data.string(), "--config", path("nos.json"), "--out", path("r3"), "--quiet"}), 0);
  EXPECT_EQ(read_json(dir / "r3" / "manifest.json").at("seed"), 3);  // environment beats default

  std::ofstream(dir / "bad.json") << R"({"epochs": 1, "learning_rate": 0.1})";
  EXPECT_EQ(kpx({"train", "--data", data.string(), "--config", path("bad.json"), "--out", path("r4")}), 2);
  EXPECT_EQ(kpx({"train", "--data", data.string(), "--out", path("r5"), "--set", "batch_size=1"}), 2);
}

TEST_F(CliTest, TrainEvalInferPlotPipeline) {
  const auto data = make_data("data", 8, 4);
  const auto ckpt = make_model(data, "run");
  const auto again = make_model(data, "run2");
  EXPECT_EQ(file_digest(ckpt), file_digest(again));
  EXPECT_TRUE(fs::exists(dir / "run" / "train_log.csv"));
  const json tm = read_json(dir / "run" / "manifest.json");
  EXPECT_EQ(tm.at("outputs").at("checkpoint").at("sha256"), file_digest(ckpt));
  EXPECT_EQ(tm.at("inputs").at("data").at("sha256"), file_digest(data));

  ASSERT_EQ(kpx({"eval", "--data", data.string(), "--ckpt", ckpt.string(), "--report", path("ev")}), 0) << err.str();
  ASSERT_EQ(kpx({"eval", "--data", data.string(), "--ckpt", ckpt.string(), "--report", path("ev2")}), 0);
  EXPECT_EQ(file_digest(dir / "ev" / "report.json"), file_digest(dir / "ev2" / "report.json"));
  const json report = read_json(dir / "ev" / "report.json");
  EXPECT_EQ(report.at("n_examples"), 8);
  EXPECT_GE(report.at("acc").get<double>(), 0.0);

  ASSERT_EQ(kpx({"infer", "--data", data.string(), "--ckpt", ckpt.string(), "--out", path("inf")}), 0);
  std::ifstream pred(dir / "inf" / "predictions.jsonl");
  std::vector<json> lines;
  for (std::string line; std::getline(pred, line);) lines.push_back(json::parse(line));
  ASSERT_EQ(lines.size(), 8u);
  for (const auto& l : lines) {
    EXPECT_GE(l.at("hypotheses").size(), 1u);
    EXPECT_LE(l.at("hypotheses").size(), 6u);
  }

  ASSERT_EQ(kpx({"plot", "--data", data.string(), "--ckpt", ckpt.string(), "--scene-index", "2", "--out", path("pl")}),
            0)
      << err.str();
  const fs::path svg = dir / "pl" / "scene_2.svg";
  boost::property_tree::ptree tree;
  ASSERT_NO_THROW(boost::property_tree::read_xml(svg.string(), tree));
  std::size_t hypothesis_paths = 0;
  for (const auto& [tag, node] : tree.get_child("svg")) {
    if (tag == "path" && node.get<std::string>("<xmlattr>.class", "") == "hypothesis") ++hypothesis_paths;
  }
  EXPECT_EQ(hypothesis_paths, lines[2].at("hypotheses").size());
  EXPECT_EQ(kpx({"plot", "--data", data.string(), "--ckpt", ckpt.string(), "--scene-index", "8", "--out", path("pl")}),
            2);
}

TEST_F(CliTest, IncompatibleArtifactsExitWithFour) {
  const auto data = make_data("data", 6, 4);
  const auto ckpt = make_model(data, "run");

  std::string bytes;
  {
    std::ifstream in(ckpt, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[8] ^= 0x5a;  // config digest
  std::ofstream(dir / "tampered.kpxf", std::ios::binary) << bytes;
  EXPECT_EQ(kpx({"eval", "--data", data.string(), "--ckpt", path("tampered.kpxf"), "--report", path("e")}), 4);
  bytes[8] ^= 0x5a;
  std::ofstream(dir / "truncated.kpxf", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_EQ(kpx({"eval", "--data", data.string(), "--ckpt", path("truncated.kpxf"), "--report", path("e")}), 3);

  std::ifstream in(data);
  std::string header, rest;
  std::getline(in, header);
  rest.assign(std::istreambuf_iterator<char>(in), {});
  json h = json::parse(header);
  h["version"] = 99;
  std::ofstream(dir / "v99.jsonl") << h.dump() << "\n" << rest;
  EXPECT_EQ(kpx({"eval", "--data", path("v99.jsonl"), "--ckpt", ckpt.string(), "--report", path("e")}), 4);
}

}  // namespace
}  // namespace kpx::cli
