#include "segnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "segnn/autodiff.hpp"
#include "segnn/errors.hpp"
#include "segnn/optim.hpp"
#include "segnn/random.hpp"

namespace segnn {

namespace {

void check_labels(const Matrix& x, std::span<const double> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw ShapeError("baseline: " + shape_string(x) + " features for " +
                     std::to_string(y.size()) + " labels");
  }
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw InvalidArgument("labels must be 0 or 1");
  }
}

std::vector<double> sigmoid_scores(const Matrix& x, const Matrix& w, double b) {
  const Eigen::VectorXd z = (x * w).col(0).array() + b;
  std::vector<double> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-z(i)));
  return out;
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

}  // namespace

std::vector<double> LogRegModel::predict_proba(const Matrix& x) const {
  if (x.cols() != weights.rows()) {
    throw ShapeError("logreg: input " + shape_string(x) + " against weights " +
                     shape_string(weights));
  }
  return sigmoid_scores(x, weights, bias);
}

LogRegModel train_logreg(const Matrix& x, std::span<const double> y, const LogRegOptions& options) {
  check_labels(x, y);
  const double positives = std::accumulate(y.begin(), y.end(), 0.0);
  if (positives == 0.0 || positives == static_cast<double>(y.size())) {
    throw SingleClassError("logistic regression needs both classes, got " +
                           std::to_string(y.size()) + " samples with " +
                           std::to_string(static_cast<std::size_t>(positives)) + " unresolved");
  }
  Parameter w("logreg.weight", Matrix::Zero(x.cols(), 1));
  Parameter b("logreg.bias", Matrix::Zero(1, 1));
  std::vector<Parameter*> params{&w, &b};
  AdamState state;
  const AdamOptions adam{.learning_rate = options.learning_rate};
  LogRegModel model;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    Tape tape;
    Var wv = tape.parameter(w);
    Var logits = add_bias_row(matmul(tape.constant(x), wv), tape.parameter(b));
    Var loss = add(bce_loss(logits, y), scale(squared_norm(wv), 0.5 * options.l2));
    zero_grad(params);
    tape.backward(loss);
    model.iterations = it + 1;
    const double g = std::max(w.grad.cwiseAbs().maxCoeff(), std::abs(b.grad(0, 0)));
    if (g < options.tolerance) break;
    adam_step(params, state, adam);
  }
  model.weights = w.value;
  model.bias = b.value(0, 0);
  return model;
}

PairSet construct_pairs(std::span<const double> y, std::size_t m, std::uint64_t seed) {
  std::vector<std::size_t> all(y.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return construct_pairs(y, all, m, seed);
}

PairSet construct_pairs(std::span<const double> y, std::span<const std::size_t> candidates,
                        std::size_t m, std::uint64_t seed) {
  if (m < 2) throw InvalidArgument("few-shot needs at least 2 shots per class, got " + std::to_string(m));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i : candidates) {
    if (i >= y.size()) throw InvalidArgument("construct_pairs: candidate index out of range");
    by_class[y[i] > 0.5 ? 1 : 0].push_back(i);
  }
  PairSet out;
  Rng shot_rng(derive_seed(seed, "pairs/shots"));
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < m) {
      throw InvalidArgument("class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " samples, " +
                            std::to_string(m) + " shots requested");
    }
    shot_rng.shuffle(by_class[c]);
    out.shots[c].assign(by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(m));
  }
  Rng negative_rng(derive_seed(seed, "pairs/negatives"));
  for (int c = 0; c < 2; ++c) {
    const auto& own = out.shots[c];
    const auto& other = out.shots[1 - c];
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a + 1; b < m; ++b) out.triples.push_back({own[a], own[b], 1, c});
    }
    const std::size_t positives = m * (m - 1) / 2;
    // m^2 cross pairs always cover the m(m-1)/2 negatives needed.
    std::vector<std::pair<std::size_t, std::size_t>> cross;
    for (std::size_t a : own) {
      for (std::size_t b : other) cross.emplace_back(a, b);
    }
    negative_rng.shuffle(cross);
    for (std::size_t k = 0; k < positives; ++k) {
      out.triples.push_back({cross[k].first, cross[k].second, 0, c});
    }
  }
  return out;
}

double contrastive_loss(const Matrix& x, const Matrix& projection,
                        std::span<const ContrastiveTriple> triples) {
  if (triples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : triples) {
    const Eigen::RowVectorXd a = x.row(static_cast<Eigen::Index>(t.i)) * projection;
    const Eigen::RowVectorXd b = x.row(static_cast<Eigen::Index>(t.j)) * projection;
    const double na = a.norm();
    const double nb = b.norm();
    const double cos = na > 0 && nb > 0 ? a.dot(b) / (na * nb) : 0.0;
    total += (t.s - cos) * (t.s - cos);
  }
  return total / static_cast<double>(triples.size());
}

std::vector<double> FewShotModel::predict_proba(const Matrix& x) const {
  return head.predict_proba(project(x));
}

FewShotModel fewshot_train(const Matrix& x, std::span<const double> y, const FewShotConfig& config) {
  std::vector<std::size_t> all(y.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fewshot_train(x, y, all, config);
}

FewShotModel fewshot_train(const Matrix& x, std::span<const double> y,
                           std::span<const std::size_t> candidates, const FewShotConfig& config) {
  check_labels(x, y);
  if (config.batch_size == 0) throw InvalidArgument("few-shot batch size must be positive");
  FewShotModel model;
  model.pairs = construct_pairs(y, candidates, config.shots, config.seed);
  Parameter p("fewshot.projection", Matrix::Identity(x.cols(), x.cols()));
  std::vector<Parameter*> params{&p};
  if (!config.freeze_projection) {
    AdamState state;
    const AdamOptions adam{.learning_rate = config.learning_rate};
    Rng rng(derive_seed(config.seed, "fewshot/shuffle"));
    std::vector<ContrastiveTriple> order = model.pairs.triples;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        std::vector<double> target;
        for (std::size_t k = start; k < end; ++k) {
          left.push_back(order[k].i);
          right.push_back(order[k].j);
          target.push_back(order[k].s);
        }
        Tape tape;
        Var pv = tape.parameter(p);
        Var a = matmul(tape.constant(gather_rows(x, left)), pv);
        Var b = matmul(tape.constant(gather_rows(x, right)), pv);
        Var loss = mse_loss(row_cosine(a, b), target);
        zero_grad(params);
        tape.backward(loss);
        adam_step(params, state, adam);
        model.triples_consumed += end - start;
      }
    }
  }
  model.projection = p.value;
  std::vector<std::size_t> shot_rows(model.pairs.shots[0]);
  shot_rows.insert(shot_rows.end(), model.pairs.shots[1].begin(), model.pairs.shots[1].end());
  std::vector<double> shot_labels;
  for (std::size_t i : shot_rows) shot_labels.push_back(y[i]);
  model.head = train_logreg(model.project(gather_rows(x, shot_rows)), shot_labels, config.head);
  return model;
}

MajorityModel train_majority(std::span<const double> y) {
  if (y.empty()) throw InvalidArgument("majority baseline needs training labels");
  const double positives = std::accumulate(y.begin(), y.end(), 0.0);
  return MajorityModel{positives / static_cast<double>(y.size())};
}

}  // namespace segnn
