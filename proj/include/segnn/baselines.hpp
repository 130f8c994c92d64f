#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "segnn/tensor.hpp"

namespace segnn {

// Content-only baselines. Inputs are question-text embeddings (one row per
// sample) and 0/1 labels with 1 = unresolved; they never see graph structure.

struct LogRegOptions {
  double l2 = 1e-4;  // penalty (l2 / 2) * |w|^2, bias unpenalised
  double learning_rate = 0.05;
  std::size_t max_iterations = 3000;
  double tolerance = 1e-7;  // stop when every gradient component is below this
};

struct LogRegModel {
  Matrix weights;  // d x 1
  double bias = 0.0;
  std::size_t iterations = 0;

  std::vector<double> predict_proba(const Matrix& x) const;
};

// Full-batch Adam on the regularised mean cross-entropy, starting from zero.
// Throws SingleClassError unless both classes are present.
LogRegModel train_logreg(const Matrix& x, std::span<const double> y,
                         const LogRegOptions& options = {});

struct ContrastiveTriple {
  std::size_t i = 0;  // sample indices into the dataset
  std::size_t j = 0;
  int s = 0;          // 1 = same class, 0 = cross class
  int anchor_class = 0;
};

struct PairSet {
  std::vector<std::size_t> shots[2];  // m sample indices per class
  std::vector<ContrastiveTriple> triples;
};

// For each class c: m shots drawn without replacement, every unordered pair
// of them as a positive, and as many distinct cross-class pairs (a class-c
// shot with a shot of the other class) drawn without replacement. Class 0
// triples come first. Throws InvalidArgument for m < 2 or a class with
// fewer than m samples.
PairSet construct_pairs(std::span<const double> y, std::size_t m, std::uint64_t seed);
PairSet construct_pairs(std::span<const double> y, std::span<const std::size_t> candidates,
                        std::size_t m, std::uint64_t seed);

struct FewShotConfig {
  std::size_t shots = 5;
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double learning_rate = 1e-5;
  std::uint64_t seed = 0;
  bool freeze_projection = false;  // keep P = I
  LogRegOptions head;
};

struct FewShotModel {
  Matrix projection;  // d x d, applied as x P
  LogRegModel head;
  PairSet pairs;
  std::size_t triples_consumed = 0;

  Matrix project(const Matrix& x) const { return x * projection; }
  std::vector<double> predict_proba(const Matrix& x) const;
};

// Mean of (s - cos(x_i P, x_j P))^2 over the given triples.
double contrastive_loss(const Matrix& x, const Matrix& projection,
                        std::span<const ContrastiveTriple> triples);

// Stage 1 fits P (initialised to the identity) on the contrastive loss over
// the triples; stage 2 trains the logistic head on the projected shots.
FewShotModel fewshot_train(const Matrix& x, std::span<const double> y,
                           const FewShotConfig& config);
FewShotModel fewshot_train(const Matrix& x, std::span<const double> y,
                           std::span<const std::size_t> candidates, const FewShotConfig& config);

// Always predicts the training majority; probability is the training share
// of unresolved questions. Ties go to unresolved.
struct MajorityModel {
  double positive_share = 0.0;
  double probability() const { return positive_share; }
  bool prediction() const { return positive_share >= 0.5; }
};

MajorityModel train_majority(std::span<const double> y);

}  // namespace segnn
