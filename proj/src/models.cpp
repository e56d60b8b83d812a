#include "uda/models.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "uda/errors.hpp"
#include "uda/numeric.hpp"

namespace uda {

std::vector<DenseLayer> init_layers(const NetShape& shape, Rng& rng, const InitScheme& scheme) {
  if (shape.input_dim == 0 || shape.output_dim == 0) {
    throw ValidationError("init_layers: input and output dimensions must be positive");
  }
  std::vector<std::size_t> widths{shape.input_dim};
  widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
  widths.push_back(shape.output_dim);

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l + 1] == 0) throw ValidationError("init_layers: zero-width hidden layer");
    DenseLayer layer{Matrix(widths[l], widths[l + 1]), Matrix(1, widths[l + 1])};
    const bool head = l + 2 == widths.size();
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (double& w : layer.weight.data()) {
      w = head ? rng.normal(0.0, scheme.head_stddev) : rng.uniform(-bound, bound);
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("Mlp: at least one layer required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim()) {
      throw DimensionError("Mlp: layer " + std::to_string(l) + " bias " +
                           layer.bias.shape_string() + " does not match weight " +
                           layer.weight.shape_string());
    }
    if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim()) {
      throw DimensionError("Mlp: layer " + std::to_string(l - 1) + " output width " +
                           std::to_string(layers_[l - 1].out_dim()) + " does not chain into layer " +
                           std::to_string(l) + " input width " + std::to_string(layer.in_dim()));
    }
  }
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
  if (x.cols() != input_dim()) {
    throw DimensionError("forward: input " + x.shape_string() + " but network expects " +
                         std::to_string(input_dim()) + " features");
  }
  cache.inputs.clear();
  cache.pre_activations.clear();
  Matrix activation = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = matmul(activation, layers_[l].weight);
    add_row_vector(z, layers_[l].bias);
    cache.inputs.push_back(std::move(activation));
    if (l + 1 < layers_.size()) {
      activation = z;
      for (double& v : activation.data()) v = v > 0.0 ? v : 0.0;
    }
    cache.pre_activations.push_back(std::move(z));
  }
  return cache.pre_activations.back();
}

Mlp::Backward Mlp::backward(const Cache& cache, const Matrix& grad_output,
                            const Matrix* grad_last_hidden) const {
  if (cache.inputs.size() != layers_.size()) {
    throw ValidationError("Mlp::backward: cache does not belong to this network");
  }
  Backward out;
  out.grads.resize(layers_.size());
  Matrix delta = grad_output;  // gradient w.r.t. pre-activation of layer l
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Matrix& input = cache.inputs[l];
    require_same_shape(delta, cache.pre_activations[l], "Mlp::backward");
    out.grads[l].weight = matmul_tn(input, delta);
    out.grads[l].bias = column_sums(delta);
    Matrix grad_input = matmul_nt(delta, layers_[l].weight);
    if (l + 1 == layers_.size() && grad_last_hidden != nullptr) grad_input += *grad_last_hidden;
    if (l == 0) {
      out.grad_input = std::move(grad_input);
      break;
    }
    const Matrix& z = cache.pre_activations[l - 1];
    auto g = grad_input.data();
    auto zd = z.data();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!(zd[k] > 0.0)) g[k] = 0.0;
    }
    delta = std::move(grad_input);
  }
  return out;
}

double min_abs_hidden_pre_activation(const Mlp::Cache& cache) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < cache.pre_activations.size(); ++l)
    for (double v : cache.pre_activations[l].data()) m = std::min(m, std::abs(v));
  return m;
}

ClassifierNet::ClassifierNet(std::vector<DenseLayer> layers, std::size_t num_classes)
    : mlp_(std::move(layers)), num_classes_(num_classes) {
  if (mlp_.output_dim() != num_classes_) {
    throw DimensionError("ClassifierNet: head width " + std::to_string(mlp_.output_dim()) +
                         " does not match " + std::to_string(num_classes_) + " classes");
  }
}

ClassifierNet ClassifierNet::init(const NetShape& shape, Rng& rng, const InitScheme& scheme) {
  return ClassifierNet(init_layers(shape, rng, scheme), shape.output_dim);
}

ClassifierNet::Forward ClassifierNet::forward(const Matrix& x) const {
  Forward out;
  out.logits = mlp_.forward(x, out.cache);
  const Matrix& head_input = out.cache.inputs.back();
  out.features = head_input;
  out.predictions = softmax_rows(out.logits);
  return out;
}

std::vector<DenseLayer> ClassifierNet::backward(const Forward& fwd, const Matrix* grad_features,
                                                const Matrix& grad_logits) const {
  return mlp_.backward(fwd.cache, grad_logits, grad_features).grads;
}

DiscriminatorNet::DiscriminatorNet(std::vector<DenseLayer> layers) : mlp_(std::move(layers)) {
  if (mlp_.output_dim() != 1) {
    throw DimensionError("DiscriminatorNet: output width must be 1, got " +
                         std::to_string(mlp_.output_dim()));
  }
}

DiscriminatorNet DiscriminatorNet::init(const NetShape& shape, Rng& rng, const InitScheme& scheme) {
  return DiscriminatorNet(init_layers(shape, rng, scheme));
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

DiscriminatorNet::Forward DiscriminatorNet::forward(const Matrix& h) const {
  Forward out;
  out.probabilities = mlp_.forward(h, out.cache);
  for (double& v : out.probabilities.data()) v = sigmoid(v);
  return out;
}

Mlp::Backward DiscriminatorNet::backward(const Forward& fwd, const Matrix& grad_probabilities) const {
  require_same_shape(fwd.probabilities, grad_probabilities, "DiscriminatorNet::backward");
  Matrix grad_logit = grad_probabilities;
  auto g = grad_logit.data();
  auto p = fwd.probabilities.data();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= p[k] * (1.0 - p[k]);
  return mlp_.backward(fwd.cache, grad_logit);
}

Matrix reverse_gradient(const Matrix& grad, ReversalCoefficient coeff) {
  return grad * (-coeff.lambda);
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed, const InitScheme& scheme) {
  const Rng root(seed);
  Rng classifier_rng = root.split(0);
  ModelParams params;
  params.classifier = ClassifierNet::init(shape.classifier, classifier_rng, scheme);
  if (shape.discriminator_hidden) {
    Rng disc_rng = root.split(1);
    const NetShape disc_shape{params.classifier.feature_dim() * params.classifier.num_classes(),
                              *shape.discriminator_hidden, 1};
    params.discriminator = DiscriminatorNet::init(disc_shape, disc_rng, scheme);
  }
  return params;
}

namespace {

constexpr const char* kCheckpointMagic = "uda-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

void write_layers(std::ostream& out, const std::vector<DenseLayer>& layers) {
  for (const auto& layer : layers) {
    out << "layer " << layer.in_dim() << ' ' << layer.out_dim() << '\n';
    write_matrix(out, layer.weight);
    write_matrix(out, layer.bias);
  }
}

void expect_token(std::istream& in, const std::string& expected) {
  std::string token;
  if (!(in >> token) || token != expected) {
    throw ParseError("checkpoint: expected '" + expected + "', found '" + token + "'");
  }
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw ParseError(std::string("checkpoint: could not read ") + what);
  return v;
}

Matrix read_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = read_value<double>(in, "matrix value");
  return m;
}

std::vector<DenseLayer> read_layers(std::istream& in, std::size_t count) {
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < count; ++l) {
    expect_token(in, "layer");
    const auto rows = read_value<std::size_t>(in, "layer input width");
    const auto cols = read_value<std::size_t>(in, "layer output width");
    DenseLayer layer;
    layer.weight = read_matrix(in, rows, cols);
    layer.bias = read_matrix(in, 1, cols);
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  const auto& cl = params.classifier.mlp().layers();
  out << "classifier " << cl.size() << ' ' << params.classifier.num_classes() << '\n';
  write_layers(out, cl);
  if (params.discriminator) {
    const auto& dl = params.discriminator->mlp().layers();
    out << "discriminator " << dl.size() << '\n';
    write_layers(out, dl);
  } else {
    out << "discriminator 0\n";
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open " + tmp.string() + " for writing");
    file << out.str();
    if (!file) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  expect_token(in, kCheckpointMagic);
  const int version = read_value<int>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelParams params;
  expect_token(in, "classifier");
  const auto n_layers = read_value<std::size_t>(in, "classifier layer count");
  const auto n_classes = read_value<std::size_t>(in, "class count");
  params.classifier = ClassifierNet(read_layers(in, n_layers), n_classes);
  expect_token(in, "discriminator");
  const auto d_layers = read_value<std::size_t>(in, "discriminator layer count");
  if (d_layers > 0) params.discriminator = DiscriminatorNet(read_layers(in, d_layers));
  return params;
}

}  // namespace uda
