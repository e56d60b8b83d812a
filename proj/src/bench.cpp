#include "uda/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "uda/errors.hpp"
#include "uda/numeric.hpp"
#include "uda/rng.hpp"

namespace uda {

namespace {

using OrderedJson = nlohmann::ordered_json;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || !std::isfinite(v)) {
    throw ValidationError("pair spec: '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  if (v < 0.0 || v != std::floor(v)) {
    throw ValidationError("pair spec: '" + key + "' expects a non-negative integer, got '" +
                          value + "'");
  }
  return static_cast<std::size_t>(v);
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PairSpec parse_pair_spec(const std::string& text) {
  PairSpec spec;
  spec.label = text;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string params = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "moons") {
    spec.kind = PairSpec::Kind::kMoons;
  } else if (kind == "gauss") {
    spec.kind = PairSpec::Kind::kGauss;
    spec.rotation_deg = 0.0;
  } else if (kind == "csv") {
    spec.kind = PairSpec::Kind::kCsv;
  } else {
    throw ValidationError("unknown pair kind '" + kind + "' (expected moons, gauss or csv)");
  }
  for (const std::string& item : split(params, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("pair spec: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (spec.kind == PairSpec::Kind::kCsv) {
      if (key == "src") spec.source_csv = value;
      else if (key == "tgt") spec.target_csv = value;
      else if (key == "test") spec.source_test_csv = value;
      else throw ValidationError("pair spec: unknown csv key '" + key + "'");
    } else if (key == "rot") {
      spec.rotation_deg = parse_double(key, value);
    } else if (key == "n") {
      spec.per_class = parse_count(key, value);
    } else if (spec.kind == PairSpec::Kind::kMoons && key == "noise") {
      spec.noise = parse_double(key, value);
    } else if (spec.kind == PairSpec::Kind::kGauss && key == "classes") {
      spec.classes = parse_count(key, value);
    } else if (spec.kind == PairSpec::Kind::kGauss && key == "dim") {
      spec.dim = parse_count(key, value);
    } else if (spec.kind == PairSpec::Kind::kGauss && key == "shift") {
      spec.translation = parse_double(key, value);
    } else if (spec.kind == PairSpec::Kind::kGauss && key == "scale") {
      spec.scale = parse_double(key, value);
    } else {
      throw ValidationError("pair spec: unknown key '" + key + "' for " + kind);
    }
  }
  if (spec.kind == PairSpec::Kind::kCsv && (spec.source_csv.empty() || spec.target_csv.empty())) {
    throw ValidationError("pair spec: csv pairs need src=PATH and tgt=PATH");
  }
  return spec;
}

DomainPair make_pair(const PairSpec& spec, std::uint64_t seed) {
  constexpr double deg = std::numbers::pi / 180.0;
  switch (spec.kind) {
    case PairSpec::Kind::kMoons:
      return gen_two_moons_shift(spec.per_class, spec.noise, spec.rotation_deg * deg, seed);
    case PairSpec::Kind::kGauss: {
      ShiftSpec shift;
      shift.rotation = spec.rotation_deg * deg;
      shift.scale = spec.scale;
      shift.translation.assign(spec.dim, 0.0);
      shift.translation[0] = spec.translation;
      return gen_gaussian_shift(spec.classes, spec.per_class, spec.dim, shift, seed);
    }
    case PairSpec::Kind::kCsv: {
      DomainPair pair;
      pair.source = load_csv(spec.source_csv, true);
      pair.target = load_csv(spec.target_csv, true);
      if (!pair.source.labeled()) {
        throw ValidationError(spec.source_csv.string() + ": source CSV needs a label column");
      }
      if (!pair.target.labeled()) {
        throw ValidationError(spec.target_csv.string() +
                              ": target CSV needs a label column for evaluation");
      }
      pair.source_test = spec.source_test_csv ? load_csv(*spec.source_test_csv, true) : pair.source;
      const std::size_t classes = std::max(
          {pair.source.num_classes, pair.target.num_classes, pair.source_test.num_classes});
      pair.source.num_classes = pair.target.num_classes = pair.source_test.num_classes = classes;
      return pair;
    }
  }
  throw ValidationError("unknown pair kind");
}

std::string sanitize_label(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

std::string to_json_line(const EpochRecord& r) {
  OrderedJson j;
  j["epoch"] = r.epoch;
  j["cls_loss"] = r.cls_loss;
  j["transfer_loss"] = r.transfer_loss;
  j["lambda"] = r.lambda;
  j["src_test_acc"] = r.src_test_acc;
  j["tgt_test_acc"] = r.tgt_test_acc;
  if (r.disc_grad_norm) j["disc_grad_norm"] = *r.disc_grad_norm;
  return j.dump();
}

EpochRecord parse_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.cls_loss = j.at("cls_loss").get<double>();
    r.transfer_loss = j.at("transfer_loss").get<double>();
    r.lambda = j.at("lambda").get<double>();
    r.src_test_acc = j.at("src_test_acc").get<double>();
    r.tgt_test_acc = j.at("tgt_test_acc").get<double>();
    if (j.contains("disc_grad_norm")) r.disc_grad_norm = j.at("disc_grad_norm").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics line: ") + e.what());
  }
}

std::vector<EpochRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metrics file " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_json_line(line));
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open " + tmp.string() + " for writing");
    file << contents;
    file.flush();
    if (!file) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string metrics_text(const std::vector<EpochRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json_line(r);
    out += '\n';
  }
  return out;
}

}  // namespace

std::filesystem::path run(const ExperimentSpec& spec) {
  spec.config.validate();
  const DomainPair pair = make_pair(spec.pair, spec.config.seed);
  ModelParams final_params;
  const auto records = fit(spec.config, pair, &final_params);
  const auto path = spec.out_dir / (spec.run_name + ".jsonl");
  write_file_atomic(path, metrics_text(records));
  if (spec.checkpoint) save_checkpoint(final_params, *spec.checkpoint);
  return path;
}

bool SummaryTable::any_failed() const noexcept {
  for (const auto& row : cells)
    for (const auto& c : row)
      if (c.failed) return true;
  return false;
}

SummaryCell summarize(std::vector<std::uint64_t> seeds, std::vector<double> values) {
  SummaryCell cell;
  cell.seeds = std::move(seeds);
  cell.values = std::move(values);
  if (cell.values.empty()) {
    cell.failed = true;
    cell.error = "no values";
    return cell;
  }
  double total = 0.0;
  for (double v : cell.values) total += v;
  const double n = static_cast<double>(cell.values.size());
  cell.mean = total / n;
  if (cell.values.size() > 1) {
    double ss = 0.0;
    for (double v : cell.values) ss += (v - cell.mean) * (v - cell.mean);
    cell.std = std::sqrt(ss / (n - 1.0));
  }
  return cell;
}

std::string render_csv(const SummaryTable& table) {
  std::string out = "method,pair,mean_acc,std_acc,seeds\n";
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    for (std::size_t p = 0; p < table.pairs.size(); ++p) {
      const auto& c = table.cells[m][p];
      std::string seeds;
      for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(c.seeds[i]);
      out += table.methods[m] + ',' + '"' + table.pairs[p] + '"' + ',';
      out += c.failed ? "failed,failed," : format_g17(c.mean) + ',' + format_g17(c.std) + ',';
      out += seeds + '\n';
    }
  }
  return out;
}

std::string render_text(const SummaryTable& table) {
  std::size_t method_w = 6;
  for (const auto& m : table.methods) method_w = std::max(method_w, m.size());
  std::vector<std::string> header{""};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    std::vector<std::string> row{table.methods[m]};
    for (std::size_t p = 0; p < table.pairs.size(); ++p) {
      const auto& c = table.cells[m][p];
      char buf[64];
      if (c.failed) {
        std::snprintf(buf, sizeof buf, "failed");
      } else {
        std::snprintf(buf, sizeof buf, "%.1f ± %.1f", 100.0 * c.mean, 100.0 * c.std);
      }
      row.emplace_back(buf);
    }
    rows.push_back(std::move(row));
  }
  header.insert(header.end(), table.pairs.begin(), table.pairs.end());
  // Display width: "±" is two bytes in UTF-8 but one column.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s)
      if ((ch & 0xC0) != 0x80) ++w;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  widths[0] = method_w;
  for (std::size_t col = 1; col < header.size(); ++col) {
    widths[col] = width(header[col]);
    for (const auto& r : rows) widths[col] = std::max(widths[col], width(r[col]));
  }
  auto emit = [&](const std::vector<std::string>& r) {
    std::string line;
    for (std::size_t col = 0; col < r.size(); ++col) {
      if (col) line += "  ";
      line += r[col];
      if (col + 1 < r.size()) line += std::string(widths[col] - width(r[col]), ' ');
    }
    return line + '\n';
  };
  std::string out = emit(header);
  for (const auto& r : rows) out += emit(r);
  return out;
}

std::filesystem::path run_metrics_path(const std::filesystem::path& out_dir, TransferLossKind method,
                                       const PairSpec& pair, std::uint64_t seed) {
  return out_dir / "runs" /
         (std::string(to_string(method)) + "__" + sanitize_label(pair.label) + "__seed" +
          std::to_string(seed) + ".jsonl");
}

namespace {

void validate_plan(const BenchmarkPlan& plan) {
  if (plan.configs.empty()) throw ValidationError("benchmark: at least one method required");
  if (plan.pairs.empty()) throw ValidationError("benchmark: at least one pair required");
  if (plan.seeds.empty()) throw ValidationError("benchmark: at least one seed required");
  for (const auto& c : plan.configs) c.validate();
}

SummaryTable empty_table(const BenchmarkPlan& plan) {
  SummaryTable table;
  for (const auto& c : plan.configs) table.methods.emplace_back(to_string(c.method));
  for (const auto& p : plan.pairs) table.pairs.push_back(p.label);
  table.cells.assign(plan.configs.size(), std::vector<SummaryCell>(plan.pairs.size()));
  return table;
}

}  // namespace

SummaryTable benchmark(const BenchmarkPlan& plan) {
  validate_plan(plan);
  struct Task {
    std::size_t method;
    std::size_t pair;
    std::size_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < plan.configs.size(); ++m)
    for (std::size_t p = 0; p < plan.pairs.size(); ++p)
      for (std::size_t s = 0; s < plan.seeds.size(); ++s) tasks.push_back({m, p, s});

  const std::size_t n_seeds = plan.seeds.size();
  std::vector<double> finals(tasks.size(), 0.0);
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const Task& task = tasks[t];
      try {
        TrainConfig config = plan.configs[task.method];
        config.seed = plan.seeds[task.seed];
        const PairSpec& pair = plan.pairs[task.pair];
        const DomainPair data = make_pair(pair, config.seed);
        const auto records = fit(config, data);
        write_file_atomic(run_metrics_path(plan.out_dir, config.method, pair, config.seed),
                          metrics_text(records));
        finals[t] = records.back().tgt_test_acc;
      } catch (const std::exception& e) {
        errors[t] = e.what();
        if (errors[t].empty()) errors[t] = "unknown error";
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(plan.jobs, 1, tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  SummaryTable table = empty_table(plan);
  for (std::size_t m = 0; m < plan.configs.size(); ++m) {
    for (std::size_t p = 0; p < plan.pairs.size(); ++p) {
      std::vector<double> values;
      std::string error;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::size_t t = (m * plan.pairs.size() + p) * n_seeds + s;
        if (errors[t].empty()) {
          values.push_back(finals[t]);
        } else if (error.empty()) {
          error = "seed " + std::to_string(plan.seeds[s]) + ": " + errors[t];
        }
      }
      SummaryCell cell = summarize(plan.seeds, std::move(values));
      if (!error.empty()) {
        cell.failed = true;
        cell.error = error;
      }
      table.cells[m][p] = std::move(cell);
    }
  }
  write_file_atomic(plan.out_dir / "summary.csv", render_csv(table));
  write_file_atomic(plan.out_dir / "summary.txt", render_text(table));
  return table;
}

SummaryTable summarize_from_files(const BenchmarkPlan& plan) {
  validate_plan(plan);
  SummaryTable table = empty_table(plan);
  for (std::size_t m = 0; m < plan.configs.size(); ++m) {
    for (std::size_t p = 0; p < plan.pairs.size(); ++p) {
      std::vector<double> values;
      std::string error;
      for (std::uint64_t seed : plan.seeds) {
        try {
          const auto records =
              read_metrics(run_metrics_path(plan.out_dir, plan.configs[m].method, plan.pairs[p], seed));
          if (records.empty()) throw Error("empty metrics file");
          values.push_back(records.back().tgt_test_acc);
        } catch (const std::exception& e) {
          if (error.empty()) error = "seed " + std::to_string(seed) + ": " + e.what();
        }
      }
      SummaryCell cell = summarize(plan.seeds, std::move(values));
      if (!error.empty()) {
        cell.failed = true;
        cell.error = error;
      }
      table.cells[m][p] = std::move(cell);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

bool GradcheckReport::passed() const noexcept {
  return std::ranges::all_of(results, [](const auto& r) { return r.passed; });
}

std::string GradcheckReport::render() const {
  std::ostringstream out;
  std::size_t name_w = 4;
  for (const auto& r : results) name_w = std::max(name_w, r.name.size());
  for (const auto& r : results) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", r.max_error);
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << std::string(name_w - r.name.size(), ' ')
        << "  instances=" << r.instances << "  max_rel_err=" << buf;
    if (!r.passed) out << "  worst: " << r.worst;
    out << '\n';
  }
  char tol[32];
  std::snprintf(tol, sizeof tol, "%.0e", tolerance);
  out << (passed() ? "gradcheck PASS" : "gradcheck FAIL") << " (tolerance " << tol << ")\n";
  return out.str();
}

namespace {

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

std::size_t random_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

class CheckAccumulator {
 public:
  CheckAccumulator(std::string name, double tolerance) : tolerance_(tolerance) {
    result_.name = std::move(name);
  }

  void compare(const Matrix& analytic, const Matrix& numeric, const std::string& where) {
    const auto d = compare_gradients(analytic, numeric);
    if (d.max_relative_error > result_.max_error || result_.worst.empty()) {
      result_.max_error = d.max_relative_error;
      std::ostringstream os;
      os.precision(6);
      os << "instance " << result_.instances << ", " << where << " entry (" << d.worst_row << ","
         << d.worst_col << "): analytic=" << d.analytic << " numeric=" << d.numeric
         << " rel_err=" << d.max_relative_error;
      result_.worst = os.str();
    }
  }

  void next_instance() { ++result_.instances; }

  GradcheckResult finish() {
    result_.passed = result_.max_error < tolerance_ && std::isfinite(result_.max_error);
    return result_;
  }

 private:
  double tolerance_;
  GradcheckResult result_;
};

using PairLoss = std::function<GradPair(const Matrix&, const Matrix&)>;

// Both-argument gradient check of a two-batch loss.
void check_pair_loss(CheckAccumulator& acc, const PairLoss& loss, const Matrix& a, const Matrix& b,
                     double h) {
  const GradPair analytic = loss(a, b);
  const Matrix num_a = fd_gradient([&](const Matrix& x) { return loss(x, b).value; }, a, h);
  const Matrix num_b = fd_gradient([&](const Matrix& x) { return loss(a, x).value; }, b, h);
  acc.compare(analytic.grads.at(0), num_a, "grad[source]");
  acc.compare(analytic.grads.at(1), num_b, "grad[target]");
}

struct ModelInstance {
  TrainConfig config;
  ModelParams params;
  Matrix xs;
  std::vector<std::size_t> ys;
  Matrix xt;
};

// Random small model and batch pair, resampled until every rectifier input is
// at least `margin` from its kink so central differences stay on one side.
ModelInstance random_model_instance(TransferLossKind method, std::optional<FeatureTap> tap,
                                    Rng& rng) {
  constexpr std::size_t input_dim = 3;
  constexpr std::size_t classes = 3;
  constexpr std::size_t batch = 6;
  constexpr double margin = 2e-2;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    ModelInstance inst;
    inst.config.method = method;
    inst.config.tap = tap;
    inst.config.hidden = {5};
    inst.config.bottleneck = 4;
    inst.config.discriminator_hidden = {6};
    inst.params = init_params(model_shape(inst.config, input_dim, classes), rng.next_u64());
    auto randomize = [&](std::vector<DenseLayer>& layers) {
      for (auto& l : layers) {
        for (double& v : l.weight.data()) v = rng.uniform(-0.8, 0.8);
        for (double& v : l.bias.data()) v = rng.uniform(-0.3, 0.3);
      }
    };
    randomize(inst.params.classifier.mlp().layers());
    if (inst.params.discriminator) randomize(inst.params.discriminator->mlp().layers());
    inst.xs = random_normal(batch, input_dim, rng);
    inst.xt = random_normal(batch, input_dim, rng);
    inst.xt *= 1.5;
    for (std::size_t i = 0; i < batch; ++i) inst.ys.push_back(rng.below(classes));

    const auto fs = inst.params.classifier.forward(inst.xs);
    const auto ft = inst.params.classifier.forward(inst.xt);
    double closest = std::min(min_abs_hidden_pre_activation(fs.cache),
                              min_abs_hidden_pre_activation(ft.cache));
    if (inst.params.discriminator) {
      const auto& d = *inst.params.discriminator;
      closest = std::min(closest, min_abs_hidden_pre_activation(
                                      d.forward(multilinear_map(fs.features, fs.predictions)).cache));
      closest = std::min(closest, min_abs_hidden_pre_activation(
                                      d.forward(multilinear_map(ft.features, ft.predictions)).cache));
    }
    if (closest >= margin) return inst;
  }
  throw Error("gradcheck: could not sample a model instance away from rectifier kinks");
}

void check_model(CheckAccumulator& acc, const ModelInstance& inst, double lambda, double h) {
  const BatchGradients analytic =
      batch_gradients(inst.config, inst.params, inst.xs, inst.ys, inst.xt, lambda);
  const FrozenWeights frozen{analytic.trace.weights_source, analytic.trace.weights_target};
  const FrozenWeights* frozen_ptr = inst.config.method == TransferLossKind::kCdanE ? &frozen : nullptr;

  const auto& layers = inst.params.classifier.mlp().layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      const Matrix& base = which == 0 ? layers[l].weight : layers[l].bias;
      const Matrix numeric = fd_gradient(
          [&](const Matrix& m) {
            ModelParams p = inst.params;
            auto& layer = p.classifier.mlp().layers()[l];
            (which == 0 ? layer.weight : layer.bias) = m;
            return batch_objectives(inst.config, p, inst.xs, inst.ys, inst.xt, lambda, frozen_ptr)
                .classifier;
          },
          base, h);
      const Matrix& an = which == 0 ? analytic.classifier[l].weight : analytic.classifier[l].bias;
      acc.compare(an, numeric,
                  "classifier layer " + std::to_string(l) + (which == 0 ? " weight" : " bias"));
    }
  }
  if (!inst.params.discriminator) return;
  const auto& dlayers = inst.params.discriminator->mlp().layers();
  for (std::size_t l = 0; l < dlayers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      const Matrix& base = which == 0 ? dlayers[l].weight : dlayers[l].bias;
      const Matrix numeric = fd_gradient(
          [&](const Matrix& m) {
            ModelParams p = inst.params;
            auto& layer = p.discriminator->mlp().layers()[l];
            (which == 0 ? layer.weight : layer.bias) = m;
            return batch_objectives(inst.config, p, inst.xs, inst.ys, inst.xt, lambda, frozen_ptr)
                .discriminator;
          },
          base, h);
      const auto& dg = *analytic.discriminator;
      acc.compare(which == 0 ? dg[l].weight : dg[l].bias, numeric,
                  "discriminator layer " + std::to_string(l) + (which == 0 ? " weight" : " bias"));
    }
  }
}

}  // namespace

GradcheckReport gradcheck(std::uint64_t seed, std::size_t trials, const GradcheckOptions& options) {
  if (trials == 0) throw ValidationError("gradcheck: trials must be >= 1");
  GradcheckReport report;
  report.tolerance = options.tolerance;
  const double h = options.step;
  const Rng root(seed);
  std::uint64_t stream = 0;

  auto run_check = [&](const std::string& name, const std::function<void(CheckAccumulator&, Rng&)>& body) {
    CheckAccumulator acc(name, options.tolerance);
    Rng rng = root.split(stream++);
    for (std::size_t t = 0; t < trials; ++t) {
      body(acc, rng);
      acc.next_instance();
    }
    report.results.push_back(acc.finish());
  };

  run_check("cross_entropy", [&](CheckAccumulator& acc, Rng& rng) {
    const std::size_t n = random_between(rng, 1, 6);
    const std::size_t c = random_between(rng, 2, 5);
    // Mixed with uniform so every entry is >= 0.5 / c; the central-difference
    // truncation error grows like h² / p².
    Matrix probs = softmax_rows(random_normal(n, c, rng)) * 0.5;
    probs += Matrix(n, c, 0.5 / static_cast<double>(c));
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.below(c));
    const auto analytic = cross_entropy(probs, labels);
    acc.compare(analytic.grads[0],
                fd_gradient([&](const Matrix& p) { return cross_entropy(p, labels).value; }, probs, h),
                "grad[probs]");
  });

  run_check("softmax_cross_entropy", [&](CheckAccumulator& acc, Rng& rng) {
    const std::size_t n = random_between(rng, 1, 6);
    const std::size_t c = random_between(rng, 2, 5);
    const Matrix logits = random_normal(n, c, rng) * 2.0;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.below(c));
    const Matrix probs = softmax_rows(logits);
    const Matrix analytic = softmax_backward(probs, cross_entropy(probs, labels).grads[0]);
    acc.compare(analytic,
                fd_gradient([&](const Matrix& z) { return cross_entropy(softmax_rows(z), labels).value; },
                            logits, h),
                "grad[logits]");
  });

  run_check("coral", [&](CheckAccumulator& acc, Rng& rng) {
    const std::size_t d = random_between(rng, 1, 5);
    const Matrix s = random_normal(random_between(rng, 2, 8), d, rng);
    const Matrix t = random_normal(random_between(rng, 2, 8), d, rng) * 1.7;
    check_pair_loss(acc, options.coral, s, t, h);
  });

  run_check("mmd", [&](CheckAccumulator& acc, Rng& rng) {
    const std::size_t d = random_between(rng, 1, 5);
    const Matrix s = random_normal(random_between(rng, 1, 8), d, rng);
    Matrix t = random_normal(random_between(rng, 1, 8), d, rng);
    t += Matrix(t.rows(), d, 0.5);
    check_pair_loss(acc, mmd_linear, s, t, h);
  });

  run_check("mmd_squared", [&](CheckAccumulator& acc, Rng& rng) {
    const std::size_t d = random_between(rng, 1, 5);
    const Matrix s = random_normal(random_between(rng, 1, 8), d, rng);
    const Matrix t = random_normal(random_between(rng, 1, 8), d, rng);
    check_pair_loss(acc, mmd_squared, s, t, h);
  });

  for (const bool entropy_weighted : {false, true}) {
    run_check(entropy_weighted ? "adversarial_cdan_e" : "adversarial_cdan",
              [&](CheckAccumulator& acc, Rng& rng) {
                const std::size_t ns = random_between(rng, 1, 6);
                const std::size_t nt = random_between(rng, 1, 6);
                Matrix ds(ns, 1);
                Matrix dt(nt, 1);
                for (double& v : ds.data()) v = rng.uniform(0.1, 0.9);
                for (double& v : dt.data()) v = rng.uniform(0.1, 0.9);
                std::vector<double> ws(ns, 1.0);
                std::vector<double> wt(nt, 1.0);
                if (entropy_weighted) {
                  ws = entropy_weights(softmax_rows(random_normal(ns, 4, rng) * 2.0));
                  wt = entropy_weights(softmax_rows(random_normal(nt, 4, rng) * 2.0));
                }
                check_pair_loss(
                    acc,
                    [&](const Matrix& a, const Matrix& b) { return adversarial_loss(a, b, ws, wt); },
                    ds, dt, h);
              });
  }

  run_check("multilinear_map", [&](CheckAccumulator& acc, Rng& rng) {
    const std::size_t n = random_between(rng, 1, 5);
    const Matrix f = random_normal(n, random_between(rng, 1, 4), rng);
    const Matrix g = softmax_rows(random_normal(n, random_between(rng, 2, 4), rng));
    const Matrix probe = random_normal(n, f.cols() * g.cols(), rng);
    auto objective = [&](const Matrix& a, const Matrix& b) {
      return sum(hadamard(multilinear_map(a, b), probe));
    };
    const auto analytic = multilinear_map_backward(f, g, probe);
    acc.compare(analytic.f, fd_gradient([&](const Matrix& a) { return objective(a, g); }, f, h),
                "grad[f]");
    acc.compare(analytic.g, fd_gradient([&](const Matrix& b) { return objective(f, b); }, g, h),
                "grad[g]");
  });

  struct ModelCase {
    const char* name;
    TransferLossKind method;
    std::optional<FeatureTap> tap;
  };
  const ModelCase cases[] = {
      {"model_none", TransferLossKind::kNone, std::nullopt},
      {"model_coral_logits", TransferLossKind::kCoral, FeatureTap::kLogits},
      {"model_coral_bottleneck", TransferLossKind::kCoral, FeatureTap::kBottleneck},
      {"model_mmd_squared", TransferLossKind::kMmd, FeatureTap::kBottleneck},
      {"model_cdan", TransferLossKind::kCdan, std::nullopt},
      {"model_cdan_e", TransferLossKind::kCdanE, std::nullopt},
  };
  for (const auto& mc : cases) {
    run_check(mc.name, [&](CheckAccumulator& acc, Rng& rng) {
      const ModelInstance inst = random_model_instance(mc.method, mc.tap, rng);
      check_model(acc, inst, 0.7, h);
    });
  }
  return report;
}

}  // namespace uda
