#include "segnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "segnn/checkpoint.hpp"
#include "segnn/errors.hpp"
#include "segnn/random.hpp"

namespace segnn {

SparseMatrix normalize_adjacency(std::size_t n, std::span<const Edge> edges) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const Edge& e : edges) {
    if (e.source >= n || e.target >= n) {
      throw InvalidArgument("normalize_adjacency: edge endpoint out of range");
    }
    if (e.source == e.target) continue;
    pairs.emplace(e.source, e.target);
    pairs.emplace(e.target, e.source);
  }
  std::vector<double> degree(n, 1.0);
  for (const auto& [u, v] : pairs) degree[u] += 1.0;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
  std::vector<Triplet> triplets;
  triplets.reserve(pairs.size() + n);
  for (std::uint32_t i = 0; i < n; ++i) triplets.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
  for (const auto& [u, v] : pairs) triplets.push_back({u, v, inv_sqrt[u] * inv_sqrt[v]});
  return SparseMatrix::from_triplets(n, n, std::move(triplets));
}

SparseMatrix normalize_adjacency(const CommGraph& g) {
  return normalize_adjacency(g.graph.node_count(), g.graph.edges());
}

GraphSample make_sample(const CommGraph& g, Matrix features) {
  if (static_cast<std::size_t>(features.rows()) != g.graph.node_count()) {
    throw ShapeError("make_sample: " + std::to_string(g.graph.node_count()) +
                     " nodes but features " + shape_string(features));
  }
  GraphSample s;
  s.question_id = g.question_id;
  s.adjacency = normalize_adjacency(g);
  set_features(s, std::move(features));
  s.label = g.unresolved ? 1.0 : 0.0;
  return s;
}

void set_features(GraphSample& s, Matrix features) {
  if (static_cast<std::size_t>(features.rows()) != s.adjacency.rows()) {
    throw ShapeError("set_features: " + std::to_string(s.adjacency.rows()) +
                     " nodes but features " + shape_string(features));
  }
  const auto nonzero = (features.array() != 0.0).count();
  s.sparse_features = SparseMatrix();
  s.propagated = Matrix();
  if (static_cast<double>(nonzero) <= kSparseFeatureDensity * static_cast<double>(features.size())) {
    s.sparse_features = SparseMatrix::from_dense(features);
  } else {
    s.propagated = s.adjacency.multiply(features);
  }
  s.features = std::move(features);
}

GraphBatch make_batch(std::span<const GraphSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("make_batch: empty batch");
  GraphBatch b;
  std::vector<const SparseMatrix*> blocks;
  std::vector<const SparseMatrix*> sparse;
  bool all_sparse = true;
  Eigen::Index rows = 0;
  const Eigen::Index cols = samples[indices[0]].features.cols();
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw InvalidArgument("make_batch: sample index out of range");
    const GraphSample& s = samples[i];
    if (s.features.cols() != cols) {
      throw ShapeError("make_batch: mixed feature widths " + shape_string(s.features) + " and " +
                       std::to_string(cols) + " columns");
    }
    blocks.push_back(&s.adjacency);
    sparse.push_back(&s.sparse_features);
    all_sparse = all_sparse && s.sparse_features.rows() == static_cast<std::size_t>(s.features.rows());
    rows += s.features.rows();
  }
  b.adjacency = SparseMatrix::block_diagonal(blocks);
  if (all_sparse) {
    b.sparse_features = SparseMatrix::vstack(sparse);
  } else {
    b.propagated.resize(rows, cols);
  }
  b.features.resize(rows, cols);
  b.segment.reserve(static_cast<std::size_t>(rows));
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const GraphSample& s = samples[indices[k]];
    b.features.middleRows(at, s.features.rows()) = s.features;
    if (!all_sparse) {
      b.propagated.middleRows(at, s.features.rows()) =
          s.propagated.size() == s.features.size() ? s.propagated
                                                   : s.adjacency.multiply(s.features);
    }
    at += s.features.rows();
    b.segment.insert(b.segment.end(), static_cast<std::size_t>(s.features.rows()),
                     static_cast<std::uint32_t>(k));
    b.labels.push_back(s.label);
  }
  b.graph_count = indices.size();
  return b;
}

std::string_view to_string(Architecture a) { return a == Architecture::Gcn ? "gcn" : "ggnn"; }

Architecture parse_architecture(std::string_view text) {
  if (text == "gcn") return Architecture::Gcn;
  if (text == "ggnn") return Architecture::Ggnn;
  throw InvalidArgument("unknown architecture '" + std::string(text) + "' (expected gcn or ggnn)");
}

ModelConfig ModelConfig::gcn(std::size_t input_dim, FeatureMode mode) {
  ModelConfig c;
  c.architecture = Architecture::Gcn;
  c.feature_mode = mode;
  c.input_dim = input_dim;
  c.widths = {32, 32, 32};
  return c;
}

ModelConfig ModelConfig::ggnn(std::size_t input_dim, FeatureMode mode) {
  ModelConfig c;
  c.architecture = Architecture::Ggnn;
  c.feature_mode = mode;
  c.input_dim = input_dim;
  c.widths = {256, 256};
  c.activation = Activation::Prelu;
  c.batch_norm = true;
  c.residual = true;
  c.jumping_knowledge = true;
  c.pooling = Pooling::Sum;
  return c;
}

ModelConfig ModelConfig::preset(Architecture a, std::size_t input_dim, FeatureMode mode) {
  return a == Architecture::Gcn ? gcn(input_dim, mode) : ggnn(input_dim, mode);
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw InvalidArgument("model input dimension must be positive");
  if (widths.empty()) throw InvalidArgument("model needs at least one layer");
  for (auto w : widths) {
    if (w == 0) throw InvalidArgument("layer widths must be positive");
  }
  if (bn_momentum < 0 || bn_momentum > 1) throw InvalidArgument("bn_momentum outside [0, 1]");
  if (bn_eps <= 0) throw InvalidArgument("bn_eps must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"architecture", to_string(c.architecture)},
      {"feature_mode", to_string(c.feature_mode)},
      {"input_dim", c.input_dim},
      {"widths", c.widths},
      {"activation", c.activation == Activation::Relu ? "relu" : "prelu"},
      {"batch_norm", c.batch_norm},
      {"residual", c.residual},
      {"jumping_knowledge", c.jumping_knowledge},
      {"pooling", c.pooling == Pooling::Mean ? "mean" : "sum"},
      {"bn_momentum", c.bn_momentum},
      {"bn_eps", c.bn_eps},
      {"prelu_init", c.prelu_init},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  try {
    const auto arch = parse_architecture(j.at("architecture").get<std::string>());
    const auto mode = parse_feature_mode(j.value("feature_mode", std::string("text+type")));
    c = ModelConfig::preset(arch, j.value("input_dim", std::size_t{0}), mode);
    if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<std::size_t>>();
    if (j.contains("activation")) {
      const auto act = j.at("activation").get<std::string>();
      if (act == "relu") {
        c.activation = Activation::Relu;
      } else if (act == "prelu") {
        c.activation = Activation::Prelu;
      } else {
        throw InvalidArgument("unknown activation '" + act + "'");
      }
    }
    if (j.contains("pooling")) {
      const auto pool = j.at("pooling").get<std::string>();
      if (pool == "mean") {
        c.pooling = Pooling::Mean;
      } else if (pool == "sum") {
        c.pooling = Pooling::Sum;
      } else {
        throw InvalidArgument("unknown pooling '" + pool + "'");
      }
    }
    c.batch_norm = j.value("batch_norm", c.batch_norm);
    c.residual = j.value("residual", c.residual);
    c.jumping_knowledge = j.value("jumping_knowledge", c.jumping_knowledge);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.bn_eps = j.value("bn_eps", c.bn_eps);
    c.prelu_init = j.value("prelu_init", c.prelu_init);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model config: ") + e.what());
  }
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read model config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  return j.get<ModelConfig>();
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

namespace {

Var conv_impl(Tape& tape, ConvLayer& layer, const SparseMatrix& adj, Var h, bool training,
              LayerInput input, Activation activation, bool use_bn, bool residual,
              double momentum, double eps) {
  Var w = tape.parameter(layer.weight);
  const Eigen::Index in = layer.weight.value.rows();
  const Eigen::Index out = layer.weight.value.cols();
  if (h.cols() != in) {
    throw ShapeError("conv layer " + layer.weight.name + ": input " + shape_string(h.value()) +
                     " against weight " + shape_string(layer.weight.value));
  }
  if (static_cast<std::size_t>(h.rows()) != adj.rows()) {
    throw ShapeError("conv layer: " + std::to_string(adj.rows()) + " x " +
                     std::to_string(adj.cols()) + " adjacency with input " +
                     shape_string(h.value()));
  }
  Var z;
  if (input.sparse != nullptr) {
    z = spmm(adj, spmm(*input.sparse, w));
  } else if (input.propagated != nullptr) {
    z = matmul(tape.constant(*input.propagated), w);
  } else if (in > out) {
    z = spmm(adj, matmul(h, w));
  } else {
    z = matmul(spmm(adj, h), w);
  }
  z = add_bias_row(z, tape.parameter(layer.bias));
  if (use_bn) {
    Var gamma = tape.parameter(layer.gamma);
    Var beta = tape.parameter(layer.beta);
    if (training) {
      Matrix mean;
      Matrix var;
      z = batch_norm(z, gamma, beta, eps, &mean, &var);
      const double n = static_cast<double>(z.rows());
      // Running variance tracks the unbiased estimate.
      if (n > 1) var *= n / (n - 1);
      layer.running_mean.value = (1 - momentum) * layer.running_mean.value + momentum * mean;
      layer.running_var.value = (1 - momentum) * layer.running_var.value + momentum * var;
    } else {
      z = batch_norm_frozen(z, layer.running_mean.value, layer.running_var.value, gamma, beta,
                            eps);
    }
  }
  z = activation == Activation::Relu ? relu(z) : prelu(z, tape.parameter(layer.slope));
  if (residual && in == out) z = add(z, h);
  return z;
}

ConvLayer make_layer(const std::string& prefix, std::size_t in, std::size_t out,
                     double prelu_init, std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(out);
  ConvLayer l;
  l.weight = Parameter(prefix + ".weight", glorot_uniform(in, out, seed));
  l.bias = Parameter(prefix + ".bias", Matrix::Zero(1, k));
  l.gamma = Parameter(prefix + ".bn_gamma", Matrix::Ones(1, k));
  l.beta = Parameter(prefix + ".bn_beta", Matrix::Zero(1, k));
  l.running_mean = Parameter(prefix + ".bn_running_mean", Matrix::Zero(1, k), false);
  l.running_var = Parameter(prefix + ".bn_running_var", Matrix::Ones(1, k), false);
  l.slope = Parameter(prefix + ".prelu_slope", Matrix::Constant(1, 1, prelu_init));
  return l;
}

}  // namespace

Var conv_layer(Tape& tape, const ModelConfig& c, ConvLayer& layer, const SparseMatrix& adj, Var h,
               bool training, LayerInput input) {
  return conv_impl(tape, layer, adj, h, training, input, c.activation, c.batch_norm,
                   c.residual, c.bn_momentum, c.bn_eps);
}

Var genconv_layer(Tape& tape, ConvLayer& layer, const SparseMatrix& adj, Var h, bool training,
                  double momentum, double eps) {
  return conv_impl(tape, layer, adj, h, training, {}, Activation::Prelu, true, true,
                   momentum, eps);
}

GraphModel::GraphModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::size_t in = config_.input_dim;
  std::size_t head_in = 0;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i);
    layers_.push_back(make_layer(prefix, in, config_.widths[i], config_.prelu_init,
                                 derive_seed(seed, "init/" + prefix)));
    in = config_.widths[i];
    head_in += in;
  }
  if (!config_.jumping_knowledge) head_in = in;
  head_w_ = Parameter("head.weight", glorot_uniform(head_in, 1, derive_seed(seed, "init/head")));
  head_b_ = Parameter("head.bias", Matrix::Zero(1, 1));
}

Var GraphModel::readout(Tape& tape, const GraphBatch& batch, bool training) {
  if (batch.features.cols() != static_cast<Eigen::Index>(config_.input_dim)) {
    throw ShapeError("model expects " + std::to_string(config_.input_dim) +
                     " feature columns, batch has " + shape_string(batch.features));
  }
  std::vector<Var> outputs;
  Var h = tape.constant(batch.features);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerInput input;
    if (i == 0 && batch.sparse_features.rows() == static_cast<std::size_t>(batch.features.rows()) &&
        batch.features.rows() > 0) {
      input.sparse = &batch.sparse_features;
    } else if (i == 0 && batch.propagated.size() == batch.features.size()) {
      input.propagated = &batch.propagated;
    }
    h = conv_layer(tape, config_, layers_[i], batch.adjacency, h, training, input);
    outputs.push_back(h);
  }
  Var node_repr = config_.jumping_knowledge ? concat_cols(outputs) : h;
  return config_.pooling == Pooling::Mean
             ? segment_mean(node_repr, batch.segment, batch.graph_count)
             : segment_sum(node_repr, batch.segment, batch.graph_count);
}

Var GraphModel::forward(Tape& tape, const GraphBatch& batch, bool training) {
  Var pooled = readout(tape, batch, training);
  return add_bias_row(matmul(pooled, tape.parameter(head_w_)), tape.parameter(head_b_));
}

Matrix GraphModel::pooled(const GraphBatch& batch) {
  Tape tape;
  return readout(tape, batch, false).value();
}

std::vector<double> GraphModel::predict_proba(std::span<const GraphSample> samples,
                                              std::size_t batch_size) {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return predict_proba(samples, all, batch_size);
}

std::vector<double> GraphModel::predict_proba(std::span<const GraphSample> samples,
                                              std::span<const std::size_t> indices,
                                              std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("predict_proba: batch size must be positive");
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    Tape tape;
    const Var logits =
        forward(tape, make_batch(samples, indices.subspan(start, end - start)), false);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      out.push_back(1.0 / (1.0 + std::exp(-logits.value()(r, 0))));
    }
  }
  return out;
}

std::vector<Parameter*> GraphModel::parameters() {
  std::vector<Parameter*> p;
  for (auto& l : layers_) {
    p.push_back(&l.weight);
    p.push_back(&l.bias);
    if (config_.batch_norm) {
      p.push_back(&l.gamma);
      p.push_back(&l.beta);
      p.push_back(&l.running_mean);
      p.push_back(&l.running_var);
    }
    if (config_.activation == Activation::Prelu) p.push_back(&l.slope);
  }
  p.push_back(&head_w_);
  p.push_back(&head_b_);
  return p;
}

std::vector<const Parameter*> GraphModel::parameters() const {
  auto mutable_params = const_cast<GraphModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

nlohmann::json GraphModel::checkpoint_header() const {
  return nlohmann::json{{"kind", "graph-model"}, {"config", config_}};
}

void GraphModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nlohmann::json header = checkpoint_header();
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) header[k] = v;
  }
  const auto params = parameters();
  save_checkpoint(path, header, params);
}

GraphModel GraphModel::load(const std::filesystem::path& path) {
  const CheckpointData data = load_checkpoint(path);
  if (data.header.value("kind", std::string()) != "graph-model") {
    throw FormatError(path.string() + ": not a graph model checkpoint");
  }
  GraphModel model(data.header.at("config").get<ModelConfig>(), 0);
  auto params = model.parameters();
  restore_parameters(data, params);
  return model;
}

}  // namespace segnn
