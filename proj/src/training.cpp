#include "uda/training.hpp"

#include <algorithm>
#include <cmath>

#include "uda/errors.hpp"
#include "uda/numeric.hpp"

namespace uda {

std::string_view to_string(FeatureTap tap) noexcept {
  return tap == FeatureTap::kBottleneck ? "bottleneck" : "logits";
}

FeatureTap parse_feature_tap(std::string_view text) {
  if (text == "bottleneck") return FeatureTap::kBottleneck;
  if (text == "logits") return FeatureTap::kLogits;
  throw ValidationError("unknown tap '" + std::string(text) + "' (expected bottleneck or logits)");
}

std::string_view to_string(LrSchedule::Kind kind) noexcept {
  return kind == LrSchedule::Kind::kFixed ? "fixed" : "inverse-decay";
}

LrSchedule::Kind parse_lr_schedule_kind(std::string_view text) {
  if (text == "fixed") return LrSchedule::Kind::kFixed;
  if (text == "inverse-decay") return LrSchedule::Kind::kInverseDecay;
  throw ValidationError("unknown lr schedule '" + std::string(text) +
                        "' (expected fixed or inverse-decay)");
}

double lr_value(const LrSchedule& schedule, std::size_t epoch, double base_lr) {
  if (schedule.kind == LrSchedule::Kind::kFixed) return base_lr;
  return base_lr / (1.0 + schedule.gamma * static_cast<double>(epoch));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("invalid config: " + msg); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight decay must be >= 0");
  if (!(lambda_schedule.base >= 0.0)) fail("lambda must be >= 0");
  if (!(reversal >= 0.0)) fail("reversal coefficient must be >= 0");
  if (!(lr_schedule.gamma >= 0.0)) fail("lr decay gamma must be >= 0");
  if (source_batch < 2 || target_batch < 2) fail("batch sizes must be >= 2");
  if (bottleneck == 0) fail("bottleneck width must be >= 1");
  for (std::size_t h : hidden)
    if (h == 0) fail("hidden widths must be >= 1");
  for (std::size_t h : discriminator_hidden)
    if (h == 0) fail("discriminator hidden widths must be >= 1");
}

TrainConfig TrainConfig::defaults_for(TransferLossKind method) {
  TrainConfig c;
  c.method = method;
  switch (method) {
    case TransferLossKind::kNone:
      break;
    case TransferLossKind::kCoral:
      c.lambda_schedule = {LambdaSchedule::Kind::kInverseEpoch, 1.0};
      break;
    case TransferLossKind::kMmd:
      c.lr_schedule = {LrSchedule::Kind::kInverseDecay, 1.0};
      break;
    case TransferLossKind::kCdan:
    case TransferLossKind::kCdanE:
      c.source_batch = 10;
      c.target_batch = 10;
      break;
  }
  return c;
}

FeatureTap effective_tap(const TrainConfig& config) noexcept {
  if (config.tap) return *config.tap;
  return config.method == TransferLossKind::kCoral ? FeatureTap::kLogits : FeatureTap::kBottleneck;
}

ModelShape model_shape(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes) {
  ModelShape shape;
  shape.classifier.input_dim = input_dim;
  shape.classifier.hidden = config.hidden;
  shape.classifier.hidden.push_back(config.bottleneck);
  shape.classifier.output_dim = num_classes;
  if (is_adversarial(config.method)) shape.discriminator_hidden = config.discriminator_hidden;
  return shape;
}

void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum,
              double weight_decay) {
  require_same_shape(param, grad, "sgd_step (param vs grad)");
  require_same_shape(param, velocity, "sgd_step (param vs velocity)");
  auto p = param.data();
  auto g = grad.data();
  auto v = velocity.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double effective = g[k] + weight_decay * p[k];
    v[k] = momentum * v[k] + effective;
    p[k] -= lr * v[k];
  }
}

namespace {

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(l.bias.rows(), l.bias.cols())});
  }
  return out;
}

void accumulate(std::vector<DenseLayer>& into, const std::vector<DenseLayer>& grads) {
  for (std::size_t l = 0; l < into.size(); ++l) {
    into[l].weight += grads[l].weight;
    into[l].bias += grads[l].bias;
  }
}

void apply_sgd(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grads,
               std::vector<DenseLayer>& velocity, double lr, const TrainConfig& c) {
  for (std::size_t l = 0; l < params.size(); ++l) {
    sgd_step(params[l].weight, grads[l].weight, velocity[l].weight, lr, c.momentum, c.weight_decay);
    sgd_step(params[l].bias, grads[l].bias, velocity[l].bias, lr, c.momentum, c.weight_decay);
  }
}

double grads_norm(const std::vector<DenseLayer>& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += frobenius_norm_sq(g.weight) + frobenius_norm_sq(g.bias);
  return std::sqrt(s);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed).split(stream).seed();
}

constexpr std::uint64_t kInitStream = 200;
constexpr std::uint64_t kSourceBatchStream = 100;
constexpr std::uint64_t kTargetBatchStream = 101;

}  // namespace

Trainer::Trainer(TrainConfig config, std::size_t input_dim, std::size_t num_classes)
    : Trainer(config, init_params(model_shape(config, input_dim, num_classes),
                                  stream_seed(config.seed, kInitStream))) {}

Trainer::Trainer(TrainConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  if (is_adversarial(config_.method) != params_.discriminator.has_value()) {
    throw ValidationError(std::string("Trainer: method ") + std::string(to_string(config_.method)) +
                          (params_.discriminator ? " takes no discriminator"
                                                 : " requires a discriminator"));
  }
  classifier_velocity_ = zeros_like(params_.classifier.mlp().layers());
  if (params_.discriminator) discriminator_velocity_ = zeros_like(params_.discriminator->mlp().layers());
}

namespace {

struct TapPair {
  const Matrix& source;
  const Matrix& target;
};

TapPair select_tap(FeatureTap tap, const ClassifierNet::Forward& fs,
                   const ClassifierNet::Forward& ft) {
  if (tap == FeatureTap::kLogits) return {fs.logits, ft.logits};
  return {fs.features, ft.features};
}

double adversarial_term_source(double d) {
  return -std::log(std::clamp(d, kLogEpsilon, 1.0 - kLogEpsilon));
}

double adversarial_term_target(double d) {
  return -std::log(1.0 - std::clamp(d, kLogEpsilon, 1.0 - kLogEpsilon));
}

}  // namespace

BatchGradients batch_gradients(const TrainConfig& config, const ModelParams& params,
                               const Matrix& xs, std::span<const std::size_t> ys,
                               const Matrix& xt, double lambda) {
  const ClassifierNet& net = params.classifier;
  const TransferLossKind method = config.method;
  BatchGradients out;

  const auto fs = net.forward(xs);
  const GradPair ce = cross_entropy(fs.predictions, ys);
  out.cls_loss = ce.value;
  Matrix grad_logits_s = softmax_backward(fs.predictions, ce.grads[0]);
  std::optional<Matrix> grad_feat_s;
  std::optional<Matrix> grad_feat_t;
  std::optional<Matrix> grad_logits_t;

  if (method == TransferLossKind::kNone) {
    out.classifier = net.backward(fs, nullptr, grad_logits_s);
    out.trace.cls_loss = out.cls_loss;
    out.trace.total_loss = out.cls_loss;
    return out;
  }

  const auto ft = net.forward(xt);
  if (method == TransferLossKind::kCoral || method == TransferLossKind::kMmd) {
    const FeatureTap tap = effective_tap(config);
    const auto [tap_s, tap_t] = select_tap(tap, fs, ft);
    const GradPair r = method == TransferLossKind::kCoral ? coral_loss(tap_s, tap_t)
                                                          : mmd_squared(tap_s, tap_t);
    out.transfer_loss = r.value;
    if (lambda > 0.0) {
      if (tap == FeatureTap::kLogits) {
        grad_logits_s += r.grads[0] * lambda;
        grad_logits_t = r.grads[1] * lambda;
      } else {
        grad_feat_s = r.grads[0] * lambda;
        grad_feat_t = r.grads[1] * lambda;
      }
    }
  } else {
    const DiscriminatorNet& disc = *params.discriminator;
    const Matrix hs = multilinear_map(fs.features, fs.predictions);
    const Matrix ht = multilinear_map(ft.features, ft.predictions);
    const auto ds = disc.forward(hs);
    const auto dt = disc.forward(ht);
    std::vector<double> ws(hs.rows(), 1.0);
    std::vector<double> wt(ht.rows(), 1.0);
    if (method == TransferLossKind::kCdanE) {
      ws = entropy_weights(fs.predictions);
      wt = entropy_weights(ft.predictions);
    }
    const GradPair r = adversarial_loss(ds.probabilities, dt.probabilities, ws, wt);
    out.transfer_loss = r.value;
    for (double d : ds.probabilities.data()) out.trace.adv_terms_source.push_back(adversarial_term_source(d));
    for (double d : dt.probabilities.data()) out.trace.adv_terms_target.push_back(adversarial_term_target(d));

    // The discriminator descends λ·adv; the classifier receives the reversed
    // gradient through f ⊗ g.
    auto back_s = disc.backward(ds, r.grads[0]);
    const auto back_t = disc.backward(dt, r.grads[1]);
    accumulate(back_s.grads, back_t.grads);
    out.disc_grad_norm = grads_norm(back_s.grads);
    for (auto& g : back_s.grads) {
      g.weight *= lambda;
      g.bias *= lambda;
    }
    out.discriminator = std::move(back_s.grads);
    if (lambda > 0.0) {
      const ReversalCoefficient coeff{config.reversal};
      const auto ml_s = multilinear_map_backward(fs.features, fs.predictions,
                                                 reverse_gradient(back_s.grad_input * lambda, coeff));
      const auto ml_t = multilinear_map_backward(ft.features, ft.predictions,
                                                 reverse_gradient(back_t.grad_input * lambda, coeff));
      grad_feat_s = ml_s.f;
      grad_feat_t = ml_t.f;
      grad_logits_s += softmax_backward(fs.predictions, ml_s.g);
      grad_logits_t = softmax_backward(ft.predictions, ml_t.g);
    }
    out.trace.weights_source = std::move(ws);
    out.trace.weights_target = std::move(wt);
  }

  out.classifier = net.backward(fs, grad_feat_s ? &*grad_feat_s : nullptr, grad_logits_s);
  if (grad_feat_t || grad_logits_t) {
    const Matrix zero_logits(ft.logits.rows(), ft.logits.cols());
    accumulate(out.classifier, net.backward(ft, grad_feat_t ? &*grad_feat_t : nullptr,
                                            grad_logits_t ? *grad_logits_t : zero_logits));
  }
  out.trace.cls_loss = out.cls_loss;
  out.trace.transfer_loss = out.transfer_loss;
  out.trace.total_loss = total_loss(out.cls_loss, out.transfer_loss, lambda);
  return out;
}

BatchObjectives batch_objectives(const TrainConfig& config, const ModelParams& params,
                                 const Matrix& xs, std::span<const std::size_t> ys,
                                 const Matrix& xt, double lambda, const FrozenWeights* frozen) {
  const ClassifierNet& net = params.classifier;
  const auto fs = net.forward(xs);
  const double cls = cross_entropy(fs.predictions, ys).value;
  BatchObjectives out{cls, 0.0};
  const TransferLossKind method = config.method;
  if (method == TransferLossKind::kNone) return out;

  const auto ft = net.forward(xt);
  if (method == TransferLossKind::kCoral || method == TransferLossKind::kMmd) {
    const auto [tap_s, tap_t] = select_tap(effective_tap(config), fs, ft);
    const double transfer = method == TransferLossKind::kCoral ? coral_loss(tap_s, tap_t).value
                                                               : mmd_squared(tap_s, tap_t).value;
    out.classifier = total_loss(cls, transfer, lambda);
    return out;
  }

  const DiscriminatorNet& disc = *params.discriminator;
  const auto ds = disc.forward(multilinear_map(fs.features, fs.predictions));
  const auto dt = disc.forward(multilinear_map(ft.features, ft.predictions));
  std::vector<double> ws(xs.rows(), 1.0);
  std::vector<double> wt(xt.rows(), 1.0);
  if (method == TransferLossKind::kCdanE) {
    if (frozen) {
      ws = frozen->source;
      wt = frozen->target;
    } else {
      ws = entropy_weights(fs.predictions);
      wt = entropy_weights(ft.predictions);
    }
  }
  const double adv = adversarial_loss(ds.probabilities, dt.probabilities, ws, wt).value;
  out.classifier = cls - config.reversal * lambda * adv;
  out.discriminator = lambda * adv;
  return out;
}

EpochRecord Trainer::train_epoch(const FeatureDataset& source, UnlabeledView target,
                                 std::size_t epoch, std::vector<BatchTrace>* trace) {
  if (!source.labeled()) throw ValidationError("train_epoch: source dataset must be labeled");
  ClassifierNet& net = params_.classifier;
  if (source.dim() != net.input_dim() || target.dim() != net.input_dim()) {
    throw DimensionError("train_epoch: data dimensions (" + std::to_string(source.dim()) + ", " +
                         std::to_string(target.dim()) + ") do not match model input " +
                         std::to_string(net.input_dim()));
  }
  const double lambda = lambda_value(config_.lambda_schedule, epoch);
  const double lr = lr_value(config_.lr_schedule, epoch - 1, config_.lr);

  const auto source_batches =
      batch_iter(source, config_.source_batch, stream_seed(config_.seed, kSourceBatchStream), epoch);
  const auto target_batches =
      batch_iter(target, config_.target_batch, stream_seed(config_.seed, kTargetBatchStream), epoch);
  const std::size_t steps = std::min(source_batches.size(), target_batches.size());
  if (steps == 0) throw DegenerateBatchError("train_epoch: no complete batch pair in this epoch");

  EpochRecord record;
  record.epoch = epoch;
  record.lambda = lambda;
  double cls_sum = 0.0;
  double transfer_sum = 0.0;
  double disc_norm_sum = 0.0;

  for (std::size_t step = 0; step < steps; ++step) {
    const Matrix xs = gather_rows(source.features, source_batches[step]);
    std::vector<std::size_t> ys;
    ys.reserve(source_batches[step].size());
    for (std::size_t idx : source_batches[step]) ys.push_back((*source.labels)[idx]);
    const Matrix xt = config_.method == TransferLossKind::kNone
                          ? Matrix()
                          : gather_rows(target.features(), target_batches[step]);

    BatchGradients g = batch_gradients(config_, params_, xs, ys, xt, lambda);
    apply_sgd(net.mlp().layers(), g.classifier, classifier_velocity_, lr, config_);
    if (g.discriminator) {
      apply_sgd(params_.discriminator->mlp().layers(), *g.discriminator, discriminator_velocity_,
                lr, config_);
    }
    cls_sum += g.cls_loss;
    transfer_sum += g.transfer_loss;
    disc_norm_sum += g.disc_grad_norm;
    if (trace) trace->push_back(std::move(g.trace));
  }

  const double n = static_cast<double>(steps);
  record.cls_loss = cls_sum / n;
  record.transfer_loss = transfer_sum / n;
  if (is_adversarial(config_.method)) record.disc_grad_norm = disc_norm_sum / n;
  return record;
}

double evaluate(const ClassifierNet& model, const FeatureDataset& dataset) {
  if (!dataset.labeled()) throw ValidationError("evaluate: dataset '" + dataset.name + "' has no labels");
  if (dataset.size() == 0) throw ValidationError("evaluate: dataset '" + dataset.name + "' is empty");
  const Matrix logits = model.forward(dataset.features).logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    if (best == (*dataset.labels)[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

std::vector<EpochRecord> fit(const TrainConfig& config, const DomainPair& pair,
                             ModelParams* final_params, const EpochCallback& on_epoch) {
  pair.source.validate();
  pair.target.validate();
  pair.source_test.validate();
  if (pair.source.dim() != pair.target.dim() || pair.source.dim() != pair.source_test.dim()) {
    throw DimensionError("fit: source and target feature dimensions differ (" +
                         std::to_string(pair.source.dim()) + " vs " +
                         std::to_string(pair.target.dim()) + ")");
  }
  Trainer trainer(config, pair.source.dim(), pair.source.num_classes);
  const UnlabeledView target(pair.target);
  std::vector<EpochRecord> records;
  records.reserve(config.epochs);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec = trainer.train_epoch(pair.source, target, epoch);
    rec.src_test_acc = evaluate(trainer.params().classifier, pair.source_test);
    rec.tgt_test_acc = evaluate(trainer.params().classifier, pair.target);
    if (on_epoch) on_epoch(rec);
    records.push_back(rec);
  }
  if (final_params) *final_params = trainer.params();
  return records;
}

}  // namespace uda
