#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "segnn/gnn.hpp"

namespace segnn {

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  FeatureMode feature_mode = FeatureMode::TextPlusType;
  Architecture architecture = Architecture::Gcn;
  std::string optimizer = "adam";

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean over training graphs
  double train_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
};

// Columns: epoch, loss, train_accuracy.
void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training of `model` on samples[indices]: seeded reshuffle every
// epoch, the last partial batch kept, mean binary cross-entropy, Adam.
// Throws SingleClassError when the selected samples hold one class only.
TrainLog train_model(GraphModel& model, std::span<const GraphSample> samples,
                     std::span<const std::size_t> indices, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

struct TrainResult {
  GraphModel model;
  TrainLog log;
};

// Builds the preset model for config.architecture (initialised from the
// "init" stream of config.seed) and trains it on every sample.
TrainResult train(std::span<const GraphSample> samples, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});
TrainResult train(std::span<const GraphSample> samples, std::span<const std::size_t> indices,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch = {});

}  // namespace segnn
