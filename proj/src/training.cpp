#include "segnn/training.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

#include "segnn/errors.hpp"
#include "segnn/optim.hpp"
#include "segnn/random.hpp"

namespace segnn {

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
  if (optimizer != "adam") {
    throw InvalidArgument("unsupported optimizer '" + optimizer + "' (only adam)");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"seed", c.seed},
                     {"feature_mode", to_string(c.feature_mode)},
                     {"architecture", to_string(c.architecture)},
                     {"optimizer", c.optimizer}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("feature_mode")) {
      c.feature_mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
    }
    if (j.contains("architecture")) {
      c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    }
    c.optimizer = j.value("optimizer", c.optimizer);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("train config: ") + e.what());
  }
  c.validate();
}

void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,loss,train_accuracy\n";
  out.precision(10);
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.train_accuracy << '\n';
  }
}

TrainLog train_model(GraphModel& model, std::span<const GraphSample> samples,
                     std::span<const std::size_t> indices, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  std::size_t positives = 0;
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw InvalidArgument("training index out of range");
    positives += samples[i].label > 0.5 ? 1 : 0;
  }
  if (positives == 0 || positives == indices.size()) {
    throw SingleClassError("training set holds a single class (" +
                           std::to_string(indices.size()) + " graphs, " +
                           std::to_string(positives) + " unresolved)");
  }
  const auto start = std::chrono::steady_clock::now();
  TrainLog log;
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  AdamState state;
  const AdamOptions adam{.learning_rate = config.learning_rate};
  std::vector<std::size_t> order(indices.begin(), indices.end());
  auto params = model.parameters();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const std::span<const std::size_t> batch_idx(order.data() + b, end - b);
      const GraphBatch batch = make_batch(samples, batch_idx);
      Tape tape;
      const Var logits = model.forward(tape, batch, true);
      const Var loss = bce_loss(logits, batch.labels);
      zero_grad(params);
      tape.backward(loss);
      adam_step(params, state, adam);
      loss_sum += loss.value()(0, 0) * static_cast<double>(batch_idx.size());
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const bool predicted = logits.value()(r, 0) >= 0.0;
        correct += predicted == (batch.labels[static_cast<std::size_t>(r)] > 0.5) ? 1 : 0;
      }
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                    static_cast<double>(correct) / static_cast<double>(order.size())};
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

TrainResult train(std::span<const GraphSample> samples, std::span<const std::size_t> indices,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch) {
  TrainResult result{GraphModel(model_config, derive_seed(config.seed, "init")), {}};
  result.log = train_model(result.model, samples, indices, config, on_epoch);
  return result;
}

TrainResult train(std::span<const GraphSample> samples, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (samples.empty()) throw InvalidArgument("no training graphs");
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto dim = static_cast<std::size_t>(samples[0].features.cols());
  return train(samples, all, config,
               ModelConfig::preset(config.architecture, dim, config.feature_mode), on_epoch);
}

}  // namespace segnn
