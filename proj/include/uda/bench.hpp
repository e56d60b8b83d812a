#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uda/data.hpp"
#include "uda/losses.hpp"
#include "uda/training.hpp"

namespace uda {

/// Where a source/target pair comes from. Textual form (see parse_pair_spec):
///   moons[:rot=DEG,noise=S,n=PER_CLASS]
///   gauss[:classes=K,dim=D,shift=T,rot=DEG,scale=S,n=PER_CLASS]
///   csv:src=PATH,tgt=PATH[,test=PATH]
struct PairSpec {
  enum class Kind { kMoons, kGauss, kCsv };
  Kind kind = Kind::kMoons;
  std::string label;  // the text it was parsed from

  // moons
  double rotation_deg = 30.0;
  double noise = 0.1;
  std::size_t per_class = 200;
  // gauss
  std::size_t classes = 3;
  std::size_t dim = 2;
  double translation = 2.0;  // along the first coordinate
  double scale = 1.0;
  // csv
  std::filesystem::path source_csv;
  std::filesystem::path target_csv;
  std::optional<std::filesystem::path> source_test_csv;
};

PairSpec parse_pair_spec(const std::string& text);

/// Materializes a pair; synthetic generators are seeded with `seed`.
DomainPair make_pair(const PairSpec& spec, std::uint64_t seed);

/// File-name-safe form of a label.
std::string sanitize_label(const std::string& label);

struct ExperimentSpec {
  TrainConfig config;
  PairSpec pair;
  std::filesystem::path out_dir;
  std::string run_name = "metrics";
  std::optional<std::filesystem::path> checkpoint;
};

/// One JSON object per line, keys in the order epoch, cls_loss, transfer_loss,
/// lambda, src_test_acc, tgt_test_acc[, disc_grad_norm].
std::string to_json_line(const EpochRecord& record);
EpochRecord parse_json_line(const std::string& line);
std::vector<EpochRecord> read_metrics(const std::filesystem::path& path);

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Trains one experiment and writes <out_dir>/<run_name>.jsonl atomically.
std::filesystem::path run(const ExperimentSpec& spec);

struct SummaryCell {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n − 1); 0 for a single seed
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  bool failed = false;
  std::string error;

  bool operator==(const SummaryCell&) const = default;
};

/// Rows are methods, columns domain pairs; cells summarize final-epoch target
/// accuracy over seeds.
struct SummaryTable {
  std::vector<std::string> methods;
  std::vector<std::string> pairs;
  std::vector<std::vector<SummaryCell>> cells;  // [method][pair]

  bool any_failed() const noexcept;
  bool operator==(const SummaryTable&) const = default;
};

SummaryCell summarize(std::vector<std::uint64_t> seeds, std::vector<double> values);

/// Header `method,pair,mean_acc,std_acc,seeds`; seeds joined by ';'.
std::string render_csv(const SummaryTable& table);
/// Aligned plain text, one row per method, "mean ± std" (percent) per pair.
std::string render_text(const SummaryTable& table);

struct BenchmarkPlan {
  std::vector<TrainConfig> configs;  // one per method; seed is overridden
  std::vector<PairSpec> pairs;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
};

/// Per-run metrics file: <out_dir>/runs/<method>__<pair>__seed<k>.jsonl
std::filesystem::path run_metrics_path(const std::filesystem::path& out_dir, TransferLossKind method,
                                       const PairSpec& pair, std::uint64_t seed);

/// Runs every (method, pair, seed) combination on a bounded worker pool,
/// writes per-run metrics plus summary.csv and summary.txt under out_dir.
SummaryTable benchmark(const BenchmarkPlan& plan);

/// Rebuilds the table from the per-run metrics files benchmark() wrote.
SummaryTable summarize_from_files(const BenchmarkPlan& plan);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradcheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  std::string worst;  // location of the worst entry
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckResult> results;
  double tolerance = 1e-5;
  bool passed() const noexcept;
  std::string render() const;
};

struct GradcheckOptions {
  double tolerance = 1e-5;
  double step = 1e-4;
  /// The CORAL implementation under test; replaceable for mutation tests.
  std::function<GradPair(const Matrix&, const Matrix&)> coral = coral_loss;
};

/// Compares every analytic gradient against central differences on `trials`
/// random instances each. trials must be >= 1.
GradcheckReport gradcheck(std::uint64_t seed, std::size_t trials,
                          const GradcheckOptions& options = {});

}  // namespace uda
