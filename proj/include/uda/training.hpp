#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "uda/data.hpp"
#include "uda/losses.hpp"
#include "uda/models.hpp"

namespace uda {

/// Which activation the CORAL / MMD term reads.
enum class FeatureTap { kBottleneck, kLogits };

std::string_view to_string(FeatureTap tap) noexcept;
FeatureTap parse_feature_tap(std::string_view text);

struct LrSchedule {
  enum class Kind { kFixed, kInverseDecay };
  Kind kind = Kind::kFixed;
  double gamma = 1.0;
};

std::string_view to_string(LrSchedule::Kind kind) noexcept;
LrSchedule::Kind parse_lr_schedule_kind(std::string_view text);

/// fixed -> base_lr; inverse-decay -> base_lr / (1 + gamma * epoch). Epochs
/// here are 0-based: the first epoch trains at base_lr.
double lr_value(const LrSchedule& schedule, std::size_t epoch, double base_lr);

struct TrainConfig {
  TransferLossKind method = TransferLossKind::kNone;
  std::size_t epochs = 100;
  std::size_t source_batch = 128;
  std::size_t target_batch = 128;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LambdaSchedule lambda_schedule{LambdaSchedule::Kind::kConstant, 1.0};
  LrSchedule lr_schedule{};
  std::uint64_t seed = 0;
  /// Unset means the method default: logits for CORAL, bottleneck for MMD.
  std::optional<FeatureTap> tap;
  /// Gradient-reversal coefficient between f ⊗ g and the discriminator.
  double reversal = 1.0;

  std::vector<std::size_t> hidden{64};
  std::size_t bottleneck = 32;
  std::vector<std::size_t> discriminator_hidden{64};

  /// Throws ValidationError on out-of-range hyperparameters.
  void validate() const;

  /// Per-method defaults: batch 128, fixed lr 1e-3, momentum 0.9, weight decay
  /// 5e-4 for CORAL (λ = 1/epoch) and MMD (decaying lr); 100 epochs with
  /// batches of 10 and constant λ = 1 for CDAN / CDAN+E.
  static TrainConfig defaults_for(TransferLossKind method);
};

FeatureTap effective_tap(const TrainConfig& config) noexcept;

/// Model architecture implied by a config and data dimensions.
ModelShape model_shape(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes);

struct EpochRecord {
  std::size_t epoch = 0;
  double cls_loss = 0.0;
  double transfer_loss = 0.0;
  double lambda = 0.0;
  double src_test_acc = 0.0;
  double tgt_test_acc = 0.0;
  /// Mean Frobenius norm of the discriminator parameter gradient of the
  /// (unscaled) adversarial loss; adversarial methods only.
  std::optional<double> disc_grad_norm;

  bool operator==(const EpochRecord&) const = default;
};

/// g' = grad + weight_decay·param; v ← momentum·v + g'; param ← param − lr·v.
void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum,
              double weight_decay);

/// Per-batch diagnostics from train_epoch.
struct BatchTrace {
  double cls_loss = 0.0;
  double transfer_loss = 0.0;
  double total_loss = 0.0;
  /// Adversarial methods: unweighted per-example terms −log D(h_s) and
  /// −log(1 − D(h_t)), and the weights applied to them.
  std::vector<double> adv_terms_source;
  std::vector<double> adv_terms_target;
  std::vector<double> weights_source;
  std::vector<double> weights_target;
};

/// Gradients of one paired batch.
struct BatchGradients {
  double cls_loss = 0.0;
  double transfer_loss = 0.0;
  std::vector<DenseLayer> classifier;
  /// Discriminator gradient of λ·adversarial loss (adversarial methods only).
  std::optional<std::vector<DenseLayer>> discriminator;
  /// Norm of the unscaled adversarial gradient w.r.t. discriminator parameters.
  double disc_grad_norm = 0.0;
  BatchTrace trace;
};

/// Analytic gradients for one source/target batch pair at weight λ. The
/// classifier gradient is that of classifier objective below; the
/// discriminator gradient that of the discriminator objective.
BatchGradients batch_gradients(const TrainConfig& config, const ModelParams& params,
                               const Matrix& xs, std::span<const std::size_t> ys,
                               const Matrix& xt, double lambda);

/// Frozen entropy weights for the adversarial term (stop-gradient constants).
struct FrozenWeights {
  std::vector<double> source;
  std::vector<double> target;
};

/// Scalar objectives followed by each player for one batch pair:
///   classifier:    cls + λ·transfer           (none / coral / mmd²)
///                  cls − reversal·λ·adv       (cdan / cdan_e)
///   discriminator: λ·adv
/// `frozen` pins the CDAN+E weights; when null they are recomputed from the
/// current predictions.
struct BatchObjectives {
  double classifier = 0.0;
  double discriminator = 0.0;
};

BatchObjectives batch_objectives(const TrainConfig& config, const ModelParams& params,
                                 const Matrix& xs, std::span<const std::size_t> ys,
                                 const Matrix& xt, double lambda,
                                 const FrozenWeights* frozen = nullptr);

/// Owns a model and its optimizer state for one training run.
class Trainer {
 public:
  /// Initializes parameters from config.seed.
  Trainer(TrainConfig config, std::size_t input_dim, std::size_t num_classes);
  Trainer(TrainConfig config, ModelParams params);

  /// One pass over min(#source batches, #target batches) paired batches.
  /// Accuracy fields of the returned record are left at 0; see fit().
  /// Target data arrives label-free by type.
  EpochRecord train_epoch(const FeatureDataset& source, UnlabeledView target, std::size_t epoch,
                          std::vector<BatchTrace>* trace = nullptr);

  const TrainConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }

 private:
  TrainConfig config_;
  ModelParams params_;
  std::vector<DenseLayer> classifier_velocity_;
  std::vector<DenseLayer> discriminator_velocity_;
};

/// Fraction of rows whose argmax prediction (lowest index on ties) equals the
/// label. Requires a non-empty labeled dataset.
double evaluate(const ClassifierNet& model, const FeatureDataset& dataset);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run: config.epochs calls to train_epoch, each followed by
/// evaluation on pair.source_test and the (hidden-label) target.
std::vector<EpochRecord> fit(const TrainConfig& config, const DomainPair& pair,
                             ModelParams* final_params = nullptr,
                             const EpochCallback& on_epoch = {});

}  // namespace uda
