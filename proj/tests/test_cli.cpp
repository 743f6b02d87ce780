#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "stunet/arch/config.hpp"
#include "stunet/harness/dataset_io.hpp"
#include "stunet/harness/metrics.hpp"
#include "stunet/harness/scenario.hpp"

using namespace stunet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string cfg(const std::string& name) { return std::string(STUNET_CONFIG_DIR) + "/" + name; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("stunet_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string path(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_F(CliTest, DescribeBase) {
  const Outcome r = run_cli({"describe", "--config", cfg("stunet_b.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("58.26"), std::string::npos);
  EXPECT_NE(r.out.find("0.51"), std::string::npos);
  EXPECT_NE(r.out.find("(32,64,128,256,512,512)"), std::string::npos) << r.out;
}

TEST_F(CliTest, DescribeSmallerPatchScalesFlops) {
  const Outcome big = run_cli({"describe", "--config", cfg("stunet_b.json")});
  const Outcome small = run_cli({"describe", "--config", cfg("stunet_b.json"), "--patch", "32,32,32", "--csv",
                                 path("small.csv")});
  ASSERT_EQ(big.code, 0);
  ASSERT_EQ(small.code, 0);
  auto field = [](const std::string& text, const std::string& key) {
    const size_t at = text.find("\n" + key);
    return std::stoll(text.substr(at + 1 + key.size()));
  };
  EXPECT_EQ(field(small.out, "flops"), field(big.out, "flops") / 64);
  EXPECT_EQ(field(big.out, "flops") % 64, 0);
  EXPECT_EQ(field(small.out, "params"), field(big.out, "params"));
  EXPECT_EQ(slurp(path("small.csv")).rfind("Model,", 0), 0u);
}

TEST_F(CliTest, DescribeRejectsInvalidConfig) {
  auto doc = to_json(presets::stunet_base());
  doc["depths"] = {2, 2, 2};
  std::ofstream(path("bad.json")) << doc.dump();
  EXPECT_EQ(run_cli({"describe", "--config", path("bad.json")}).code, 2);
  EXPECT_EQ(run_cli({"describe", "--config", path("absent.json")}).code, 4);
  EXPECT_EQ(run_cli({"describe"}).code, 2);
  EXPECT_EQ(run_cli({"describe", "--config", cfg("stunet_b.json"), "--patch", "100,128,128"}).code, 2);
}

TEST_F(CliTest, ScaleBaseToLarge) {
  ASSERT_EQ(run_cli({"scale", "--base", cfg("stunet_b.json"), "--depth", "2", "--width", "2", "-o", path("l.json")})
                .code,
            0);
  EXPECT_EQ(load_config(path("l.json")), presets::stunet_large());
  ASSERT_EQ(run_cli({"scale", "--base", cfg("stunet_b.json"), "--depth", "1", "--width", "1", "-o", path("b.json")})
                .code,
            0);
  EXPECT_EQ(load_config(path("b.json")), presets::stunet_base());
  EXPECT_EQ(run_cli({"scale", "--base", cfg("stunet_b.json"), "--depth", "0.25", "--width", "1", "-o",
                     path("x.json")})
                .code,
            2);
}

TEST_F(CliTest, Tables) {
  const Outcome r = run_cli({"tables", "--which", "table2"});
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("1457.33"), std::string::npos);
  EXPECT_EQ(run_cli({"tables", "--which", "table4"}).code, 2);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
}

TEST_F(CliTest, GenDataIsReproducible) {
  ASSERT_EQ(run_cli({"gen-data", "--fixture", "task_b", "-n", "2", "--seed", "5", "-o", path("d1")}).code, 0);
  ASSERT_EQ(run_cli({"gen-data", "--spec", std::string(STUNET_DATA_DIR) + "/fixtures/task_b.json", "-n", "2",
                     "--seed", "5", "-o", path("d2")})
                .code,
            0);
  for (const auto& c : {"case_000", "case_001"}) {
    EXPECT_EQ(slurp(path("d1") + "/" + c + "/volume.stuw"), slurp(path("d2") + "/" + c + "/volume.stuw"));
    EXPECT_EQ(slurp(path("d1") + "/" + c + "/meta.json"), slurp(path("d2") + "/" + c + "/meta.json"));
  }
  EXPECT_EQ(run_cli({"gen-data", "--fixture", "task_z", "-o", path("d3")}).code, 2);
}

TEST_F(CliTest, TrainTransferInferEval) {
  ASSERT_EQ(run_cli({"gen-data", "--fixture", "task_a", "-n", "1", "-o", path("a")}).code, 0);
  ASSERT_EQ(run_cli({"gen-data", "--fixture", "task_b", "-n", "1", "-o", path("b")}).code, 0);
  const Outcome pre = run_cli({"pretrain", "--config", cfg("toy_task_a.json"), "--data", path("a"), "-o",
                               path("a.stuw"), "--epochs", "1", "--iters", "1", "--batch", "1", "--patch",
                               "32,32,32", "--history", path("h.csv")});
  ASSERT_EQ(pre.code, 0) << pre.err;
  EXPECT_TRUE(fs::exists(path("h.csv")));

  const Outcome ft = run_cli({"finetune", "--config", cfg("toy_task_b.json"), "--from", path("a.stuw"), "--data",
                              path("b"), "-o", path("b.stuw"), "--epochs", "1", "--iters", "1", "--batch", "1",
                              "--patch", "32,32,32", "--val", path("b")});
  ASSERT_EQ(ft.code, 0) << ft.err;
  EXPECT_NE(ft.out.find("lr multipliers:"), std::string::npos);
  EXPECT_NE(ft.out.find("x1.0"), std::string::npos);
  EXPECT_NE(ft.out.find("x0.1"), std::string::npos);
  EXPECT_NE(ft.out.find("val_dsc"), std::string::npos);

  // weights of task B do not fit the task A config
  EXPECT_EQ(run_cli({"infer", "--config", cfg("toy_task_a.json"), "--weights", path("b.stuw"), "--data", path("a"),
                     "-o", path("p")})
                .code,
            2);

  const Outcome inf = run_cli({"infer", "--config", cfg("toy_task_b.json"), "--weights", path("b.stuw"), "--data",
                               path("b"), "-o", path("p"), "--patch", "32,32,32"});
  ASSERT_EQ(inf.code, 0) << inf.err;
  ASSERT_TRUE(fs::exists(path("p") + "/case_000.stuw"));

  const Outcome ev = run_cli({"eval", "--pred", path("p"), "--data", path("b"), "--merge", "2,3->2", "-o",
                              path("m.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto doc = nlohmann::json::parse(slurp(path("m.json")));
  const Volume v = load_case(path("b") + "/case_000");
  const MergeSpec spec = parse_merge_spec("2,3->2");
  const LabelMap p = merge_labels(load_label_map(path("p") + "/case_000.stuw"), spec);
  const LabelMap g = merge_labels(v.labels, spec);
  const double expected = (dsc(p, g, 1) + dsc(p, g, 2)) / 2.0;
  EXPECT_NEAR(doc.at("mean_dsc").get<double>(), expected, 1e-12);
  EXPECT_EQ(doc.at("cases").at(0).at("dsc").size(), 2u);

  std::ofstream(path("bad.stuw")) << "garbage";
  EXPECT_EQ(run_cli({"finetune", "--config", cfg("toy_task_b.json"), "--from", path("bad.stuw"), "--data",
                     path("b"), "-o", path("c.stuw")})
                .code,
            4);
  EXPECT_EQ(run_cli({"eval", "--pred", path("p"), "--data", path("b"), "--merge", "2,3"}).code, 2);
}
