#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mvqa/errors.hpp"
#include "mvqa/video_io.hpp"
#include "mvqa_tools/cli.hpp"
#include "test_support.hpp"

namespace mvqa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome mvqa(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json resolved_config(const std::string& err) {
  const std::string tag = "[mvqa] resolved config ";
  const auto at = err.find(tag);
  if (at == std::string::npos) return nullptr;
  const auto end = err.find('\n', at);
  return json::parse(err.substr(at + tag.size(), end - at - tag.size()));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mvqa-cli-" + std::to_string(std::random_device{}()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  // Small synthetic set for training and evaluation.
  std::string synth(const std::string& name, int count) {
    const auto r = mvqa({"gen-synth", "--out", path(name), "--count", std::to_string(count)});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name + "/manifest.csv");
  }

  fs::path dir_;
};

TEST_F(CliTest, GenSynthWritesClipsAndManifest) {
  const auto manifest = synth("a", 16);
  const auto entries = read_manifest(manifest);
  ASSERT_EQ(entries.size(), 16u);
  int files = 0;
  for (const auto& e : fs::directory_iterator(path("a"))) files += e.path().extension() == ".rvid";
  EXPECT_EQ(files, 16);
  double lo = 1e9, hi = -1e9;
  for (const auto& e : entries) {
    lo = std::min(lo, e.mos);
    hi = std::max(hi, e.mos);
    EXPECT_EQ(read_rvid(e.path).frames(), 8);
  }
  // Levels 0 and 1 map to scores 100 and 0.
  EXPECT_EQ(hi, 100.0);
  EXPECT_EQ(lo, 0.0);
}

TEST_F(CliTest, GenSynthIsDeterministicPerSeed) {
  for (const char* d : {"x", "y"}) {
    EXPECT_EQ(mvqa({"--seed", "5", "gen-synth", "--out", path(d), "--count", "4"}).code, 0);
  }
  EXPECT_EQ(slurp(path("x/manifest.csv")), slurp(path("y/manifest.csv")));
  for (int i = 0; i < 4; ++i) {
    const std::string f = "/synth-000" + std::to_string(i) + ".rvid";
    EXPECT_EQ(slurp(path("x") + f), slurp(path("y") + f));
  }
  EXPECT_EQ(mvqa({"--seed", "6", "gen-synth", "--out", path("z"), "--count", "4"}).code, 0);
  EXPECT_NE(slurp(path("x/synth-0001.rvid")), slurp(path("z/synth-0001.rvid")));
}

TEST_F(CliTest, ConfigPrecedenceFlagsOverFileOverDefaults) {
  const auto cfg = write_config("c.json", R"({"seed": 9, "train": {"steps": 5, "batch_size": 4}})");
  auto r = mvqa({"--config", cfg, "flops"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = resolved_config(r.err);
  EXPECT_EQ(j["seed"], 9);
  EXPECT_EQ(j["train"]["steps"], 5);
  EXPECT_EQ(j["train"]["batch_size"], 4);
  EXPECT_EQ(j["train"]["learning_rate"], 0.0025);

  r = mvqa({"--config", cfg, "--seed", "3", "flops"});
  j = resolved_config(r.err);
  EXPECT_EQ(j["seed"], 3);
  EXPECT_EQ(j["train"]["steps"], 5);
}

TEST_F(CliTest, UnknownConfigKeysAreRejected) {
  for (const char* text : {R"({"sed": 1})", R"({"train": {"step": 5}})", R"({"model": {"preset": "nano", "layers": 3}})"}) {
    const auto cfg = write_config("bad.json", text);
    const auto r = mvqa({"--config", cfg, "flops"});
    EXPECT_EQ(r.code, 2) << text;
    EXPECT_NE(r.err.find("ConfigError"), std::string::npos);
    EXPECT_NE(r.err.find("unknown config key"), std::string::npos) << r.err;
  }
  const auto typed = write_config("typed.json", R"({"train": {"steps": "many"}})");
  EXPECT_EQ(mvqa({"--config", typed, "flops"}).code, 2);
  EXPECT_EQ(mvqa({"--config", path("missing.json"), "flops"}).code, 2);
}

TEST_F(CliTest, BadPrecisionAndUnknownCommandFail) {
  EXPECT_NE(mvqa({"--precision", "f16", "flops"}).code, 0);
  EXPECT_NE(mvqa({"paint"}).code, 0);
  EXPECT_NE(mvqa({}).code, 0);
}

TEST_F(CliTest, SampleUsdsWritesProvenanceSidecar) {
  std::mt19937_64 rng(1);
  write_rvid(testing::random_video(rng, 3, 2, 300, 260), path("in.rvid"));
  const auto r = mvqa({"sample", "--input", path("in.rvid"), "--out", path("o/u.rvid"), "--sampler", "usds"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = read_rvid(path("o/u.rvid"));
  EXPECT_EQ(out.height(), 224);
  EXPECT_EQ(out.width(), 224);
  const auto side = json::parse(slurp(path("o/u.provenance.json")));
  EXPECT_EQ(side["semantic_fraction"].get<double>(), 0.25);
  EXPECT_EQ(side["semantic_pixels"].get<int>(), 224 * 224 / 4);
  ASSERT_EQ(side["provenance"].size(), 224u);
  // Bottom-right 16x16 patch of each 32x32 block is semantic.
  EXPECT_EQ(side["provenance"][0].get<std::string>()[0], 'F');
  EXPECT_EQ(side["provenance"][16].get<std::string>()[16], 'S');
}

TEST_F(CliTest, SampleFragmentsZeroOffsetIsIdentity) {
  std::mt19937_64 rng(2);
  const auto video = testing::random_video(rng, 3, 2, 224, 224);
  write_rvid(video, path("in.rvid"));
  const auto r = mvqa({"sample", "--input", path("in.rvid"), "--out", path("f.rvid"),
                       "--sampler", "fragments", "--zero-offsets"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_rvid(path("f.rvid")).data(), video.data());
}

TEST_F(CliTest, SampleResizeAndErrors) {
  std::mt19937_64 rng(3);
  write_rvid(testing::random_video(rng, 3, 1, 50, 70), path("in.rvid"));
  auto r = mvqa({"sample", "--input", path("in.rvid"), "--out", path("r.rvid"), "--sampler", "resize",
                 "--grid", "4", "--patch", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_rvid(path("r.rvid")).height(), 32);
  EXPECT_EQ(read_rvid(path("r.rvid")).width(), 32);
  r = mvqa({"sample", "--input", path("in.rvid"), "--out", path("q.rvid"), "--sampler", "zoom"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("zoom"), std::string::npos);
  r = mvqa({"sample", "--input", path("none.rvid"), "--out", path("q.rvid"), "--sampler", "crop"});
  EXPECT_EQ(r.code, 3);
}

TEST_F(CliTest, TrainWritesArtifactsDeterministically) {
  const auto manifest = synth("d", 8);
  const std::vector<std::string> common{"--seed", "4", "train", "--manifest", manifest,
                                        "--steps", "4", "--batch-size", "4", "--out"};
  auto a = common, b = common;
  a.push_back(path("ra"));
  b.push_back(path("rb"));
  const auto ra = mvqa(a);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(mvqa(b).code, 0);
  EXPECT_NE(ra.out.find("final train SROCC"), std::string::npos);

  const auto loss = slurp(path("ra/loss.csv"));
  EXPECT_EQ(loss, slurp(path("rb/loss.csv")));
  EXPECT_EQ(loss.rfind("step,loss,lr\n", 0), 0u);
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 5);
  const auto metrics = slurp(path("ra/metrics.csv"));
  EXPECT_EQ(metrics.rfind("epoch,train_srocc,train_plcc\n", 0), 0u);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  EXPECT_EQ(slurp(path("ra/model.mvqc")), slurp(path("rb/model.mvqc")));
  EXPECT_EQ(json::parse(slurp(path("ra/config.json")))["train"]["steps"], 4);
}

TEST_F(CliTest, TrainMissingManifestNamesPath) {
  const auto missing = path("nowhere/manifest.csv");
  const auto r = mvqa({"train", "--manifest", missing, "--out", path("r")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("ConfigError"), std::string::npos);
  EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST_F(CliTest, EvalReportsAndRejectsDegenerateInput) {
  const auto manifest = synth("e", 6);
  ASSERT_EQ(mvqa({"train", "--manifest", manifest, "--steps", "2", "--batch-size", "3",
                  "--out", path("run")})
                .code,
            0);
  const std::vector<std::string> args{"eval", "--manifest", manifest, "--checkpoint",
                                      path("run/model.mvqc"), "--json", path("report.json")};
  const auto first = mvqa(args);
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("SROCC"), std::string::npos);
  const auto report = json::parse(slurp(path("report.json")));
  EXPECT_EQ(report["n"], 6);
  EXPECT_EQ(mvqa(args).out, first.out);

  std::ofstream(path("one.csv")) << "clip_id,path,mos\nonly," << path("e/synth-0000.rvid") << ",50\n";
  const auto one = mvqa({"eval", "--manifest", path("one.csv"), "--checkpoint", path("run/model.mvqc")});
  EXPECT_EQ(one.code, 6);
  EXPECT_NE(one.err.find("DegenerateError"), std::string::npos);

  const auto mismatch = mvqa({"eval", "--manifest", manifest, "--checkpoint",
                              path("run/model.mvqc"), "--model", "tiny"});
  EXPECT_EQ(mismatch.code, 4);
  EXPECT_NE(mismatch.err.find("FormatError"), std::string::npos);
}

TEST_F(CliTest, BenchEmitsCsvPlotAndExponent) {
  const auto r = mvqa({"bench", "--out", path("b"), "--lengths", "256,512,1024", "--repeats", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("growth exponent"), std::string::npos);
  const auto csv = slurp(path("b/bench.csv"));
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "length,tokens,seconds,macs,flops");
  std::vector<double> flops;
  while (std::getline(lines, line)) flops.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  ASSERT_EQ(flops.size(), 3u);
  for (std::size_t i = 1; i < flops.size(); ++i) EXPECT_NEAR(flops[i] / flops[i - 1], 2.0, 0.1);
  const auto svg = slurp(path("b/bench.svg"));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 5, true);
  EXPECT_NE(mvqa({"bench", "--out", path("b"), "--lengths", "100"}).code, 0);
}

TEST_F(CliTest, FlopsForTiny) {
  const auto r = mvqa({"flops", "--model", "tiny"});
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out.substr(r.out.find('{')));
  EXPECT_EQ(j["tokens"], 6273);
  EXPECT_EQ(j["flops"].get<double>(), 2 * j["macs"].get<double>());
}

TEST_F(CliTest, GradCheckPassesOnNano) {
  const auto r = mvqa({"--precision", "f64", "grad-check", "--params", "8"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(GrowthExponentTest, RecoversPowerLaw) {
  const std::vector<double> L{1024, 2048, 4096, 8192};
  for (double k : {0.5, 1.0, 1.7}) {
    std::vector<double> t;
    for (double l : L) t.push_back(3e-6 * std::pow(l, k));
    EXPECT_NEAR(fit_growth_exponent(L, t), k, 1e-12);
  }
  EXPECT_THROW(fit_growth_exponent(std::vector<double>{8}, std::vector<double>{1}), DegenerateError);
}

TEST(SettingsTest, JsonRoundtrip) {
  Settings s;
  s.seed = 11;
  s.train.steps = 17;
  s.preset = "tiny";
  s.model = ModelConfig::tiny();
  Settings back;
  apply_json(back, to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_EQ(back.model, s.model);
}

}  // namespace
}  // namespace mvqa::cli
