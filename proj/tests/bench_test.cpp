#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "uda/bench.hpp"
#include "uda/errors.hpp"

namespace uda {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

class BenchDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("uda_bench_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TrainConfig quick(TransferLossKind method, std::size_t epochs) {
  TrainConfig c = TrainConfig::defaults_for(method);
  c.epochs = epochs;
  c.source_batch = 16;
  c.target_batch = 16;
  c.lr = 0.01;
  c.hidden = {16};
  c.bottleneck = 8;
  c.discriminator_hidden = {8};
  return c;
}

TEST(PairSpec, Parsing) {
  const PairSpec moons = parse_pair_spec("moons:rot=45,noise=0.2,n=30");
  EXPECT_EQ(moons.kind, PairSpec::Kind::kMoons);
  EXPECT_EQ(moons.rotation_deg, 45.0);
  EXPECT_EQ(moons.noise, 0.2);
  EXPECT_EQ(moons.per_class, 30u);
  const PairSpec gauss = parse_pair_spec("gauss:classes=4,dim=3,shift=1.5");
  EXPECT_EQ(gauss.kind, PairSpec::Kind::kGauss);
  EXPECT_EQ(gauss.classes, 4u);
  EXPECT_EQ(gauss.dim, 3u);
  EXPECT_EQ(gauss.translation, 1.5);
  EXPECT_EQ(gauss.rotation_deg, 0.0);
  const PairSpec csv = parse_pair_spec("csv:src=a.csv,tgt=b.csv");
  EXPECT_EQ(csv.source_csv, fs::path("a.csv"));
  EXPECT_FALSE(csv.source_test_csv.has_value());
  EXPECT_THROW(parse_pair_spec("spirals"), ValidationError);
  EXPECT_THROW(parse_pair_spec("moons:rot=abc"), ValidationError);
  EXPECT_THROW(parse_pair_spec("gauss:colour=1"), ValidationError);
  EXPECT_THROW(parse_pair_spec("csv:src=a.csv"), ValidationError);
}

TEST(JsonLines, KeyOrderAndRoundTrip) {
  EpochRecord r{3, 0.5, 0.25, 1.0, 0.75, 0.5, std::nullopt};
  EXPECT_EQ(to_json_line(r),
            R"({"epoch":3,"cls_loss":0.5,"transfer_loss":0.25,"lambda":1.0,"src_test_acc":0.75,"tgt_test_acc":0.5})");
  r.cls_loss = 0.1 + 0.2;
  r.disc_grad_norm = 1e-7;
  EXPECT_EQ(parse_json_line(to_json_line(r)), r);
  EXPECT_THROW(parse_json_line("{\"epoch\":1}"), ParseError);
}

TEST_F(BenchDir, RunWritesOneLinePerEpochReproducibly) {
  ExperimentSpec spec{quick(TransferLossKind::kNone, 5), parse_pair_spec("gauss:n=20"), dir_ / "a",
                      "metrics", dir_ / "model.ckpt"};
  const fs::path first = run(spec);
  const std::string text = slurp(first);
  EXPECT_EQ(count_lines(text), 5u);
  for (const EpochRecord& r : read_metrics(first)) {
    EXPECT_EQ(r.transfer_loss, 0.0);
    EXPECT_FALSE(r.disc_grad_norm.has_value());
  }
  EXPECT_TRUE(fs::exists(dir_ / "model.ckpt"));

  spec.out_dir = dir_ / "b";
  EXPECT_EQ(slurp(run(spec)), text);
  spec.config.seed = 1;
  spec.out_dir = dir_ / "c";
  EXPECT_NE(slurp(run(spec)), text);
}

TEST_F(BenchDir, AdversarialRunLogsDiscriminatorGradient) {
  const ExperimentSpec spec{quick(TransferLossKind::kCdanE, 2), parse_pair_spec("moons:n=20"), dir_};
  for (const EpochRecord& r : read_metrics(run(spec))) {
    ASSERT_TRUE(r.disc_grad_norm.has_value());
    EXPECT_GE(*r.disc_grad_norm, 0.0);
  }
}

TEST_F(BenchDir, CsvPairRun) {
  const DomainPair p = make_pair(parse_pair_spec("gauss:n=10"), 2);
  save_csv(p.source, dir_ / "s.csv");
  save_csv(p.target, dir_ / "t.csv");
  const PairSpec spec = parse_pair_spec("csv:src=" + (dir_ / "s.csv").string() + ",tgt=" +
                                        (dir_ / "t.csv").string());
  const DomainPair q = make_pair(spec, 0);
  EXPECT_EQ(q.source.features, p.source.features);
  EXPECT_EQ(q.source_test.features, p.source.features);
  EXPECT_EQ(q.target.labels, p.target.labels);
}

TEST(Summary, SampleStandardDeviation) {
  const SummaryCell c = summarize({1, 2, 3}, {0.5, 0.6, 0.7});
  EXPECT_NEAR(c.mean, 0.6, 1e-15);
  EXPECT_NEAR(c.std, 0.1, 1e-15);
  EXPECT_EQ(summarize({4}, {0.9}).std, 0.0);
}

TEST(Summary, CsvRendering) {
  SummaryTable t;
  t.methods = {"none"};
  t.pairs = {"gauss:shift=1"};
  t.cells = {{summarize({1, 2}, {0.5, 0.75})}};
  const std::string csv = render_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,pair,mean_acc,std_acc,seeds");
  EXPECT_NE(csv.find("none,\"gauss:shift=1\",0.625,"), std::string::npos) << csv;
  EXPECT_NE(csv.find(",1;2\n"), std::string::npos) << csv;
  EXPECT_NE(render_text(t).find("62.5 ± 17.7"), std::string::npos) << render_text(t);
}

TEST_F(BenchDir, BenchmarkTableMatchesFilesAndIgnoresParallelism) {
  BenchmarkPlan plan;
  plan.configs = {quick(TransferLossKind::kNone, 6), quick(TransferLossKind::kCoral, 6)};
  plan.pairs = {parse_pair_spec("gauss:shift=0,n=30")};
  plan.seeds = {1, 2, 3};
  plan.out_dir = dir_ / "serial";
  plan.jobs = 1;
  const SummaryTable serial = benchmark(plan);
  ASSERT_EQ(serial.cells.size(), 2u);
  ASSERT_EQ(serial.cells[0].size(), 1u);
  EXPECT_FALSE(serial.any_failed());
  EXPECT_EQ(serial.cells[0][0].seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(summarize_from_files(plan), serial);
  EXPECT_TRUE(fs::exists(plan.out_dir / "summary.csv"));
  EXPECT_TRUE(fs::exists(plan.out_dir / "summary.txt"));
  EXPECT_TRUE(fs::exists(run_metrics_path(plan.out_dir, TransferLossKind::kCoral, plan.pairs[0], 2)));

  plan.out_dir = dir_ / "parallel";
  plan.jobs = 4;
  EXPECT_EQ(benchmark(plan), serial);
  EXPECT_EQ(slurp(dir_ / "parallel" / "summary.csv"), slurp(dir_ / "serial" / "summary.csv"));

  // Without a shift there is nothing to adapt: CORAL stays within noise of the baseline.
  const SummaryCell& none = serial.cells[0][0];
  const SummaryCell& coral = serial.cells[1][0];
  const double pooled = std::sqrt((none.std * none.std + coral.std * coral.std) / 2.0);
  EXPECT_LE(std::abs(none.mean - coral.mean), 2.0 * pooled);
}

TEST_F(BenchDir, FailedRunIsRecordedNotFatal) {
  BenchmarkPlan plan;
  plan.configs = {quick(TransferLossKind::kNone, 1)};
  plan.pairs = {parse_pair_spec("csv:src=" + (dir_ / "missing.csv").string() + ",tgt=x.csv")};
  plan.seeds = {1};
  plan.out_dir = dir_;
  const SummaryTable t = benchmark(plan);
  EXPECT_TRUE(t.any_failed());
  EXPECT_FALSE(t.cells[0][0].error.empty());
}

TEST(Gradcheck, AllChecksPass) {
  const GradcheckReport report = gradcheck(0, 3);
  EXPECT_TRUE(report.passed()) << report.render();
  EXPECT_GE(report.results.size(), 10u);
}

TEST(Gradcheck, SignFlippedCoralIsCaught) {
  GradcheckOptions opts;
  opts.coral = [](const Matrix& s, const Matrix& t) {
    GradPair r = coral_loss(s, t);
    for (Matrix& g : r.grads) g *= -1.0;
    return r;
  };
  const GradcheckReport report = gradcheck(0, 2, opts);
  EXPECT_FALSE(report.passed());
  bool coral_failed = false;
  for (const auto& r : report.results) {
    if (r.name.find("coral") != std::string::npos && !r.passed) coral_failed = true;
    if (r.name.find("coral") == std::string::npos) EXPECT_TRUE(r.passed) << r.name;
  }
  EXPECT_TRUE(coral_failed);
  EXPECT_NE(report.render().find("FAIL  coral"), std::string::npos) << report.render();
}

TEST(Gradcheck, ZeroTrialsRejected) {
  EXPECT_THROW(gradcheck(0, 0), ValidationError);
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + UDA_BENCH_EXE + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(BenchDir, CliExitCodes) {
  EXPECT_EQ(cli("gradcheck --trials 2"), 0);
  EXPECT_EQ(cli("gradcheck --trials 0"), 1);
  EXPECT_EQ(cli("run --method dann --out " + dir_.string()), 1);
  EXPECT_EQ(cli("run --method coral --pair gauss:n=10 --epochs 0 --out " + dir_.string()), 1);
  EXPECT_EQ(cli("--no-such-flag"), 1);
  EXPECT_EQ(cli("run --method coral --pair gauss:n=10 --epochs 2 --source-batch 8 --target-batch 8 --out " +
                dir_.string()),
            0);
  EXPECT_EQ(count_lines(slurp(dir_ / "metrics.jsonl")), 2u);
  EXPECT_EQ(cli("run --method none --pair csv:src=/nonexistent.csv,tgt=/nonexistent.csv --out " +
                dir_.string()),
            2);
  EXPECT_EQ(cli("gen-data --pair moons:n=5 --out " + (dir_ / "gen").string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "target.csv"));
}

}  // namespace
}  // namespace uda
