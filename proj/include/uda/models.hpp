#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "uda/matrix.hpp"
#include "uda/rng.hpp"

namespace uda {

/// Fully connected layer: y = x·weight + bias, weight is (in x out), bias (1 x out).
struct DenseLayer {
  Matrix weight;
  Matrix bias;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
  bool operator==(const DenseLayer&) const = default;
};

/// Layer widths of a dense stack: input → hidden... → output.
struct NetShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
};

/// Initialization: hidden layers U(−1/√fan_in, 1/√fan_in), the output (head)
/// layer N(0, head_stddev), every bias zero.
struct InitScheme {
  double head_stddev = 0.005;
};

std::vector<DenseLayer> init_layers(const NetShape& shape, Rng& rng, const InitScheme& scheme = {});

/// Dense stack with rectifier activations after every layer but the last.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;          // input to layer i
    std::vector<Matrix> pre_activations; // x·W + b of layer i
  };

  struct Backward {
    std::vector<DenseLayer> grads;
    Matrix grad_input;
  };

  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Returns the last layer's pre-activation (no output nonlinearity).
  Matrix forward(const Matrix& x, Cache& cache) const;

  /// grad_last_hidden, when given, is added to the gradient arriving at the
  /// input of the final layer (the last hidden activation, or x itself for a
  /// single-layer stack).
  Backward backward(const Cache& cache, const Matrix& grad_output,
                    const Matrix* grad_last_hidden = nullptr) const;

  std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers_.back().out_dim(); }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  bool operator==(const Mlp&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Smallest |pre-activation| over all hidden units in a cache; distance to the
/// nearest rectifier kink.
double min_abs_hidden_pre_activation(const Mlp::Cache& cache);

/// Classifier G: feature extractor F (rectified hidden layers, the last one
/// being the bottleneck) followed by a linear logits head.
class ClassifierNet {
 public:
  struct Forward {
    Matrix features;     // f: last hidden activation (x when there is no hidden layer)
    Matrix logits;
    Matrix predictions;  // g = softmax(logits)
    Mlp::Cache cache;
  };

  ClassifierNet() = default;
  ClassifierNet(std::vector<DenseLayer> layers, std::size_t num_classes);

  static ClassifierNet init(const NetShape& shape, Rng& rng, const InitScheme& scheme = {});

  Forward forward(const Matrix& x) const;

  /// Parameter gradients given dL/df (optional) and dL/dlogits.
  std::vector<DenseLayer> backward(const Forward& fwd, const Matrix* grad_features,
                                   const Matrix& grad_logits) const;

  std::size_t input_dim() const noexcept { return mlp_.input_dim(); }
  std::size_t feature_dim() const noexcept { return mlp_.layers().back().in_dim(); }
  std::size_t num_classes() const noexcept { return num_classes_; }

  Mlp& mlp() noexcept { return mlp_; }
  const Mlp& mlp() const noexcept { return mlp_; }
  bool operator==(const ClassifierNet&) const = default;

 private:
  Mlp mlp_;
  std::size_t num_classes_ = 0;
};

/// Domain discriminator D with a single sigmoid output (source = 1).
class DiscriminatorNet {
 public:
  struct Forward {
    Matrix probabilities;  // n x 1
    Mlp::Cache cache;
  };

  DiscriminatorNet() = default;
  explicit DiscriminatorNet(std::vector<DenseLayer> layers);

  static DiscriminatorNet init(const NetShape& shape, Rng& rng, const InitScheme& scheme = {});

  Forward forward(const Matrix& h) const;

  /// Parameter gradients and dL/dh given dL/dprobabilities.
  Mlp::Backward backward(const Forward& fwd, const Matrix& grad_probabilities) const;

  std::size_t input_dim() const noexcept { return mlp_.input_dim(); }
  Mlp& mlp() noexcept { return mlp_; }
  const Mlp& mlp() const noexcept { return mlp_; }
  bool operator==(const DiscriminatorNet&) const = default;

 private:
  Mlp mlp_;
};

double sigmoid(double z) noexcept;

/// Gradient reversal coupling between features and the discriminator.
/// Forward is the identity; backward multiplies by −lambda.
struct ReversalCoefficient {
  double lambda = 1.0;
};

Matrix reverse_gradient(const Matrix& grad, ReversalCoefficient coeff);

/// Classifier plus (for adversarial methods) discriminator.
struct ModelParams {
  ClassifierNet classifier;
  std::optional<DiscriminatorNet> discriminator;
  bool operator==(const ModelParams&) const = default;
};

/// Architecture of a full model. The discriminator, when present, reads the
/// multilinear map f ⊗ g, so its input width is feature_dim × num_classes.
struct ModelShape {
  NetShape classifier;
  std::optional<std::vector<std::size_t>> discriminator_hidden;
};

/// Deterministic in `seed`; the classifier and discriminator draw from
/// separate streams, so adding a discriminator never perturbs the classifier.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed, const InitScheme& scheme = {});

/// Text checkpoint, format "uda-checkpoint 1". Values use 17 significant
/// digits so a save/load cycle is exact.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace uda
