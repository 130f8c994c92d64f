#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segnn/autodiff.hpp"
#include "segnn/features.hpp"
#include "segnn/graph.hpp"
#include "segnn/tensor.hpp"

namespace segnn {

// D^-1/2 (A + I) D^-1/2 over the symmetrised edge set. Parallel edges
// between the same pair count once.
SparseMatrix normalize_adjacency(std::size_t node_count, std::span<const Edge> edges);
SparseMatrix normalize_adjacency(const CommGraph& g);

// One graph ready for the models.
struct GraphSample {
  std::int64_t question_id = 0;
  SparseMatrix adjacency;  // normalised
  Matrix features;
  // First-layer input cache. Mostly-zero features are kept as CSR and
  // propagated inside the layer; otherwise adjacency * features is stored.
  SparseMatrix sparse_features;
  Matrix propagated;
  double label = 0.0;  // 1 = unresolved
};

// Fraction of nonzero entries below which features are stored sparse.
inline constexpr double kSparseFeatureDensity = 0.25;

GraphSample make_sample(const CommGraph& g, Matrix features);
// Replaces the features of a sample and refreshes the first-layer cache.
void set_features(GraphSample& s, Matrix features);

// Several graphs as one block-diagonal graph. segment[i] is the position of
// node i's graph within the batch.
struct GraphBatch {
  SparseMatrix adjacency;
  Matrix features;
  SparseMatrix sparse_features;  // set when every sample is sparse
  Matrix propagated;             // set otherwise
  std::vector<std::uint32_t> segment;
  std::size_t graph_count = 0;
  std::vector<double> labels;
};

GraphBatch make_batch(std::span<const GraphSample> samples, std::span<const std::size_t> indices);

enum class Architecture { Gcn, Ggnn };
std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view text);

enum class Activation { Relu, Prelu };
enum class Pooling { Mean, Sum };

struct ModelConfig {
  Architecture architecture = Architecture::Gcn;
  FeatureMode feature_mode = FeatureMode::TextPlusType;
  std::size_t input_dim = 0;
  std::vector<std::size_t> widths;
  Activation activation = Activation::Relu;
  bool batch_norm = false;
  bool residual = false;          // skip connection when widths match
  bool jumping_knowledge = false;  // readout over the concat of every layer
  Pooling pooling = Pooling::Mean;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double prelu_init = 0.25;

  // Three 32-wide graph convolutions, ReLU, average pooling.
  static ModelConfig gcn(std::size_t input_dim, FeatureMode mode = FeatureMode::TextPlusType);
  // Two 256-wide GeneralConv layers (linear, batch norm, PReLU, skip),
  // concatenated per-layer embeddings, sum pooling.
  static ModelConfig ggnn(std::size_t input_dim, FeatureMode mode = FeatureMode::TextPlusType);
  static ModelConfig preset(Architecture a, std::size_t input_dim, FeatureMode mode);

  // Throws InvalidArgument when a width or the input dimension is zero.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
ModelConfig load_model_config(const std::filesystem::path& path);

struct ConvLayer {
  Parameter weight;
  Parameter bias;
  Parameter gamma;
  Parameter beta;
  Parameter running_mean;  // buffer
  Parameter running_var;   // buffer
  Parameter slope;
};

// Input to a first layer: either A X precomputed or X in CSR form.
struct LayerInput {
  const Matrix* propagated = nullptr;
  const SparseMatrix* sparse = nullptr;
};

// H' = act(BN(A H W + b)) (+ H). BN and the skip follow the layer's config.
// In training mode the running statistics of `layer` are updated.
Var conv_layer(Tape& tape, const ModelConfig& config, ConvLayer& layer, const SparseMatrix& adj,
               Var h, bool training, LayerInput input = {});

// GeneralConv: linear transform, batch norm, PReLU, residual skip.
Var genconv_layer(Tape& tape, ConvLayer& layer, const SparseMatrix& adj, Var h, bool training,
                  double momentum = 0.1, double eps = 1e-5);

// Graph-level binary classifier; one logit per graph, positive = unresolved.
class GraphModel {
 public:
  GraphModel() = default;
  GraphModel(ModelConfig config, std::uint64_t seed);

  // Logits (graph_count x 1). Training mode uses batch statistics and
  // updates the running ones; evaluation mode uses the frozen statistics.
  Var forward(Tape& tape, const GraphBatch& batch, bool training);

  // Pooled graph embeddings before the head (graph_count x head input).
  Matrix pooled(const GraphBatch& batch);

  std::vector<double> predict_proba(std::span<const GraphSample> samples,
                                    std::size_t batch_size = 256);
  std::vector<double> predict_proba(std::span<const GraphSample> samples,
                                    std::span<const std::size_t> indices,
                                    std::size_t batch_size = 256);

  // Declaration order: per layer weight and bias, then gamma, beta and the
  // running statistics when batch norm is on, then the PReLU slope; finally
  // the head weight and bias.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  const ModelConfig& config() const { return config_; }
  std::vector<ConvLayer>& layers() { return layers_; }
  Parameter& head_weight() { return head_w_; }
  Parameter& head_bias() { return head_b_; }

  nlohmann::json checkpoint_header() const;
  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static GraphModel load(const std::filesystem::path& path);

 private:
  Var readout(Tape& tape, const GraphBatch& batch, bool training);

  ModelConfig config_;
  std::vector<ConvLayer> layers_;
  Parameter head_w_;
  Parameter head_b_;
};

// Uniform Glorot initialisation.
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

}  // namespace segnn
