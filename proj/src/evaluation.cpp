#include "segnn/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "segnn/errors.hpp"
#include "segnn/random.hpp"

namespace segnn {

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// Runs task(i) for i in [0, n) on up to `jobs` threads. The first failure in
// index order is rethrown after all workers finish.
template <typename Task>
void parallel_for(std::size_t n, std::size_t jobs, Task task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<int> to_ints(std::span<const double> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (double v : labels) out.push_back(v > 0.5 ? 1 : 0);
  return out;
}

}  // namespace

// ---- folds ----

std::vector<std::size_t> FoldAssignment::test_indices(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == f) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::train_indices(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != f) out.push_back(i);
  }
  return out;
}

FoldAssignment stratified_kfold(std::span<const double> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k-fold needs k >= 2, got " + std::to_string(k));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] > 0.5 ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < k) {
      throw InvalidArgument("class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " samples, fewer than k = " +
                            std::to_string(k));
    }
  }
  FoldAssignment out{k, seed, std::vector<std::size_t>(labels.size(), 0)};
  Rng rng(derive_seed(seed, "folds"));
  std::size_t slot = 0;
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t i : members) out.fold[i] = slot++ % k;
  }
  return out;
}

std::vector<std::size_t> stratified_subsample(std::span<const double> labels, std::size_t n,
                                              std::uint64_t seed) {
  if (n >= labels.size()) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] > 0.5 ? 1 : 0].push_back(i);
  // Largest-remainder allocation of n between the classes.
  const double share = static_cast<double>(by_class[1].size()) / static_cast<double>(labels.size());
  auto take_pos = static_cast<std::size_t>(std::llround(share * static_cast<double>(n)));
  take_pos = std::min(take_pos, by_class[1].size());
  const std::size_t take_neg = std::min(n - take_pos, by_class[0].size());
  Rng rng(derive_seed(seed, "subsample"));
  std::vector<std::size_t> out;
  const std::size_t take[2] = {take_neg, take_pos};
  for (int c = 0; c < 2; ++c) {
    rng.shuffle(by_class[c]);
    out.insert(out.end(), by_class[c].begin(),
               by_class[c].begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- metrics ----

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw InvalidArgument("compute_metrics: no predictions");
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("compute_metrics: " + std::to_string(predictions.size()) +
                          " predictions for " + std::to_string(labels.size()) + " labels");
  }
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++m.tp;
    else if (p) ++m.fp;
    else if (y) ++m.fn;
    else ++m.tn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
  m.recall_undefined = m.tp + m.fn == 0;
  m.precision_undefined = m.tp + m.fp == 0;
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.precision =
      m.precision_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  m.f1_undefined = m.precision + m.recall == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

double metric_value(const Metrics& m, std::string_view name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "recall") return m.recall;
  if (name == "precision") return m.precision;
  if (name == "f1") return m.f1;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

MetricsReport aggregate_folds(std::vector<Metrics> folds) {
  MetricsReport r;
  for (auto name : kMetricNames) {
    std::vector<double> values;
    for (const auto& f : folds) values.push_back(metric_value(f, name));
    r.aggregate.emplace(std::string(name), summarize(values));
  }
  r.folds = std::move(folds);
  return r;
}

// ---- methods ----

std::vector<double> Dataset::labels() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

Matrix Dataset::question_embeddings() const {
  Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(text_dim));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) =
        samples[i].features.row(0).leftCols(static_cast<Eigen::Index>(text_dim));
  }
  return x;
}

Dataset make_dataset(std::string community, std::span<const CommGraph> graphs,
                     const EmbeddingProvider& provider, std::size_t jobs) {
  Dataset d;
  d.community = std::move(community);
  d.text_dim = provider.dim();
  d.samples.resize(graphs.size());
  parallel_for(graphs.size(), jobs, [&](std::size_t i) {
    d.samples[i] =
        make_sample(graphs[i], build_features(graphs[i], FeatureMode::TextPlusType, provider));
  });
  return d;
}

std::vector<GraphSample> feature_view(const Dataset& data, FeatureMode mode) {
  std::vector<GraphSample> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    GraphSample v;
    v.question_id = s.question_id;
    v.adjacency = s.adjacency;
    set_features(v, select_mode_columns(s.features, mode));
    v.label = s.label;
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

Matrix rows_of(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

std::vector<double> labels_of(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<double> out;
  for (std::size_t i : rows) out.push_back(data.samples[i].label);
  return out;
}

class GnnMethod final : public Method {
 public:
  GnnMethod(Architecture arch, FeatureMode mode, TrainConfig train)
      : arch_(arch), mode_(mode), train_(std::move(train)) {}

  std::string name() const override {
    return std::string(to_string(arch_)) + ":" + std::string(to_string(mode_));
  }

  std::vector<double> fit_predict(const Dataset& data, std::span<const std::size_t> train,
                                  std::span<const std::size_t> test,
                                  std::uint64_t seed) const override {
    std::vector<GraphSample> view;
    std::span<const GraphSample> samples = data.samples;
    if (mode_ != FeatureMode::TextPlusType) {
      view = feature_view(data, mode_);
      samples = view;
    }
    TrainConfig config = train_;
    config.seed = seed;
    config.architecture = arch_;
    config.feature_mode = mode_;
    const auto dim = feature_dim(mode_, data.text_dim);
    TrainResult result = segnn::train(samples, train, config, ModelConfig::preset(arch_, dim, mode_));
    return result.model.predict_proba(samples, test);
  }

 private:
  Architecture arch_;
  FeatureMode mode_;
  TrainConfig train_;
};

class LogRegMethod final : public Method {
 public:
  explicit LogRegMethod(LogRegOptions options) : options_(options) {}
  std::string name() const override { return "logreg"; }
  std::vector<double> fit_predict(const Dataset& data, std::span<const std::size_t> train,
                                  std::span<const std::size_t> test,
                                  std::uint64_t) const override {
    const Matrix x = data.question_embeddings();
    const LogRegModel model = train_logreg(rows_of(x, train), labels_of(data, train), options_);
    return model.predict_proba(rows_of(x, test));
  }

 private:
  LogRegOptions options_;
};

class FewShotMethod final : public Method {
 public:
  explicit FewShotMethod(FewShotConfig config) : config_(std::move(config)) {}
  std::string name() const override { return "fewshot:" + std::to_string(config_.shots); }
  std::vector<double> fit_predict(const Dataset& data, std::span<const std::size_t> train,
                                  std::span<const std::size_t> test,
                                  std::uint64_t seed) const override {
    const Matrix x = data.question_embeddings();
    FewShotConfig config = config_;
    config.seed = seed;
    const FewShotModel model = fewshot_train(x, data.labels(), train, config);
    return model.predict_proba(rows_of(x, test));
  }

 private:
  FewShotConfig config_;
};

class MajorityMethod final : public Method {
 public:
  std::string name() const override { return "majority"; }
  std::vector<double> fit_predict(const Dataset& data, std::span<const std::size_t> train,
                                  std::span<const std::size_t> test,
                                  std::uint64_t) const override {
    const MajorityModel m = train_majority(labels_of(data, train));
    return std::vector<double>(test.size(), m.prediction() ? std::max(m.probability(), 0.5)
                                                           : std::min(m.probability(), 0.5));
  }
};

}  // namespace

std::unique_ptr<Method> make_method(std::string_view name, const MethodOptions& options) {
  const auto colon = name.find(':');
  const std::string_view head = name.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? "" : name.substr(colon + 1);
  if (head == "gcn" || head == "ggnn") {
    const FeatureMode mode = arg.empty() ? FeatureMode::TextPlusType : parse_feature_mode(arg);
    return std::make_unique<GnnMethod>(parse_architecture(head), mode, options.train);
  }
  if (head == "logreg" && arg.empty()) return std::make_unique<LogRegMethod>(options.logreg);
  if (head == "majority" && arg.empty()) return std::make_unique<MajorityMethod>();
  if (head == "fewshot") {
    FewShotConfig config = options.fewshot;
    if (!arg.empty()) {
      try {
        config.shots = std::stoul(std::string(arg));
      } catch (const std::exception&) {
        throw InvalidArgument("bad shot count in method '" + std::string(name) + "'");
      }
    }
    config.head = options.logreg;
    return std::make_unique<FewShotMethod>(config);
  }
  throw InvalidArgument("unknown method '" + std::string(name) +
                        "' (expected gcn[:mode], ggnn[:mode], logreg, fewshot:<m> or majority)");
}

// ---- cross-validation ----

std::vector<CvResult> run_cv(std::span<const Method* const> methods, const Dataset& data,
                             std::size_t k, std::uint64_t seed, std::size_t jobs) {
  const std::vector<double> labels = data.labels();
  const FoldAssignment folds = stratified_kfold(labels, k, seed);
  const std::size_t tasks = methods.size() * k;
  std::vector<std::vector<double>> probabilities(tasks);
  parallel_for(tasks, jobs, [&](std::size_t task) {
    const std::size_t m = task / k;
    const std::size_t f = task % k;
    const auto train = folds.train_indices(f);
    const auto test = folds.test_indices(f);
    probabilities[task] = methods[m]->fit_predict(data, train, test,
                                                  derive_seed(seed, "fold/" + std::to_string(f)));
    if (probabilities[task].size() != test.size()) {
      throw Error("method " + methods[m]->name() + " returned " +
                  std::to_string(probabilities[task].size()) + " predictions for " +
                  std::to_string(test.size()) + " test graphs");
    }
  });
  std::vector<CvResult> results;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    CvResult r;
    r.method = methods[m]->name();
    r.predictions.resize(data.samples.size());
    std::vector<Metrics> fold_metrics;
    for (std::size_t f = 0; f < k; ++f) {
      const auto test = folds.test_indices(f);
      std::vector<int> predicted;
      std::vector<int> truth;
      for (std::size_t t = 0; t < test.size(); ++t) {
        const double p = probabilities[m * k + f][t];
        const std::size_t i = test[t];
        const int pred = p >= 0.5 ? 1 : 0;
        const int label = labels[i] > 0.5 ? 1 : 0;
        r.predictions[i] = Prediction{data.samples[i].question_id, p, pred, label, f};
        predicted.push_back(pred);
        truth.push_back(label);
      }
      fold_metrics.push_back(compute_metrics(predicted, truth));
    }
    r.report = aggregate_folds(std::move(fold_metrics));
    results.push_back(std::move(r));
  }
  return results;
}

// ---- 5x2cv ----

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw InvalidArgument("incomplete_beta: a and b must be positive");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  // Continued fraction (modified Lentz), on the side where it converges fast.
  auto cf = [](double a, double b, double x) {
    constexpr double tiny = 1e-300;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
      const double m2 = 2.0 * m;
      double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double delta = d * c;
      h *= delta;
      if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h;
  };
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * cf(a, b, x) / a;
  return 1.0 - std::exp(log_front) * cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

double student_t_cdf(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * student_t_two_sided_p(t, dof);
  return t > 0 ? 1.0 - tail : tail;
}

CvTestResult paired_t_5x2(const std::array<std::array<double, 2>, 5>& differences) {
  CvTestResult r;
  r.differences = differences;
  double variance_sum = 0.0;
  for (const auto& rep : differences) {
    const double mean = (rep[0] + rep[1]) / 2.0;
    variance_sum += (rep[0] - mean) * (rep[0] - mean) + (rep[1] - mean) * (rep[1] - mean);
  }
  const double numerator = differences[0][0];
  const double denominator = std::sqrt(variance_sum / 5.0);
  if (denominator == 0.0) {
    if (numerator == 0.0) {
      r.degenerate = true;
      r.t = 0.0;
      r.p_value = 1.0;
      r.significant = false;
      return r;
    }
    r.t = numerator > 0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
  } else {
    r.t = numerator / denominator;
  }
  r.p_value = student_t_two_sided_p(r.t, 5.0);
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

CvTestResult five_by_two_cv_test(const Method& a, const Method& b, const Dataset& data,
                                 std::uint64_t seed, std::size_t jobs) {
  const std::vector<double> labels = data.labels();
  const std::vector<int> truth = to_ints(labels);
  std::vector<FoldAssignment> reps;
  for (int i = 0; i < 5; ++i) {
    reps.push_back(stratified_kfold(labels, 2, derive_seed(seed, "5x2/rep" + std::to_string(i))));
  }
  std::array<std::array<double, 2>, 5> acc_a{};
  std::array<std::array<double, 2>, 5> acc_b{};
  parallel_for(20, jobs, [&](std::size_t task) {
    const std::size_t rep = task / 4;
    const std::size_t fold = (task / 2) % 2;
    const Method& method = task % 2 == 0 ? a : b;
    const auto train = reps[rep].train_indices(fold);
    const auto test = reps[rep].test_indices(fold);
    const std::uint64_t s =
        derive_seed(seed, "5x2/rep" + std::to_string(rep) + "/fold" + std::to_string(fold));
    const auto probs = method.fit_predict(data, train, test, s);
    std::vector<int> pred;
    std::vector<int> y;
    for (std::size_t t = 0; t < test.size(); ++t) {
      pred.push_back(probs[t] >= 0.5 ? 1 : 0);
      y.push_back(truth[test[t]]);
    }
    (task % 2 == 0 ? acc_a : acc_b)[rep][fold] = compute_metrics(pred, y).accuracy;
  });
  std::array<std::array<double, 2>, 5> diff{};
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 2; ++j) diff[i][j] = acc_a[i][j] - acc_b[i][j];
  }
  return paired_t_5x2(diff);
}

// ---- statistics ----

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Distribution describe(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("describe: empty sample");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  Distribution d;
  const double n = static_cast<double>(s.size());
  d.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s) ss += (v - d.mean) * (v - d.mean);
  d.stddev = s.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  d.min = s.front();
  d.max = s.back();
  d.median = quantile_sorted(s, 0.5);
  d.q1 = quantile_sorted(s, 0.25);
  d.q3 = quantile_sorted(s, 0.75);
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    if (j - i > best) {  // strict: the smallest value wins ties
      best = j - i;
      d.mode = s[i];
    }
    i = j;
  }
  return d;
}

const Distribution& GraphStatsTable::at(std::string_view quantity) const {
  for (const auto& [name, dist] : rows) {
    if (name == quantity) return dist;
  }
  throw InvalidArgument("no statistics row '" + std::string(quantity) + "'");
}

GraphStatsTable graph_statistics(std::span<const CommGraph> corpus) {
  if (corpus.empty()) throw InvalidArgument("graph_statistics: empty corpus");
  std::vector<double> cols[5];
  for (const auto& g : corpus) {
    cols[0].push_back(static_cast<double>(g.graph.node_count()));
    cols[1].push_back(static_cast<double>(g.graph.edge_count()));
    cols[2].push_back(static_cast<double>(g.count(NodeLabel::Answer)));
    cols[3].push_back(static_cast<double>(g.count(NodeLabel::Comment)));
    cols[4].push_back(static_cast<double>(g.count(NodeLabel::User)));
  }
  GraphStatsTable t;
  t.graph_count = corpus.size();
  const char* names[5] = {"nodes", "edges", "answers", "comments", "users"};
  for (int i = 0; i < 5; ++i) t.rows.emplace_back(names[i], describe(cols[i]));
  return t;
}

std::string format_stats_table(const GraphStatsTable& table) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-9s %9s %7s %7s %7s %7s %9s %7s %7s\n", "", "mean", "mode",
                "median", "q1", "q3", "std", "max", "min");
  out << line;
  for (const auto& [name, d] : table.rows) {
    std::snprintf(line, sizeof line, "%-9s %9.2f %7.0f %7.1f %7.1f %7.1f %9.2f %7.0f %7.0f\n",
                  name.c_str(), d.mean, d.mode, d.median, d.q1, d.q3, d.stddev, d.max, d.min);
    out << line;
  }
  out << "graphs: " << table.graph_count << '\n';
  return out.str();
}

nlohmann::json stats_json(const GraphStatsTable& table) {
  nlohmann::json j{{"graph_count", table.graph_count}};
  for (const auto& [name, d] : table.rows) {
    j["statistics"][name] = {{"mean", d.mean},   {"mode", d.mode}, {"median", d.median},
                             {"q1", d.q1},       {"q3", d.q3},     {"std", d.stddev},
                             {"max", d.max},     {"min", d.min}};
  }
  return j;
}

// ---- trend ----

std::vector<TrendPoint> resolved_trend(std::span<const QuestionOutcome> questions) {
  std::map<int, std::pair<std::size_t, std::size_t>> per_year;  // total, resolved
  for (const auto& q : questions) {
    auto& [total, resolved] = per_year[q.year];
    ++total;
    resolved += q.resolved ? 1 : 0;
  }
  std::vector<TrendPoint> out;
  for (const auto& [year, counts] : per_year) {
    out.push_back({year, counts.first,
                   static_cast<double>(counts.second) / static_cast<double>(counts.first)});
  }
  return out;
}

std::vector<QuestionOutcome> question_outcomes(const DumpRecords& records) {
  const PostIndex index(records.posts);
  std::vector<QuestionOutcome> out;
  for (const auto& p : records.posts) {
    if (p.post_type != PostType::Question) continue;
    out.push_back({p.creation_date.year(), resolved_label(p, index)});
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i + j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: unequal lengths");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double trend_spearman(std::span<const TrendPoint> series) {
  std::vector<double> years;
  std::vector<double> shares;
  for (const auto& p : series) {
    years.push_back(p.year);
    shares.push_back(p.pct_resolved);
  }
  return spearman(years, shares);
}

// ---- reports ----

void write_report_csv(std::span<const CvResult> results, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "method,metric,mean,dispersion\n";
  for (const auto& r : results) {
    for (auto name : kMetricNames) {
      const Summary& s = r.report.aggregate.find(name)->second;
      out << r.method << ',' << name << ',' << fixed(s.mean) << ',' << fixed(s.dispersion) << '\n';
    }
  }
}

nlohmann::json report_json(std::span<const CvResult> results, std::size_t k, std::uint64_t seed) {
  nlohmann::json j{{"k", k}, {"seed", seed}, {"positive_class", "unresolved"}};
  j["methods"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json m{{"method", r.method}};
    for (auto name : kMetricNames) {
      const Summary& s = r.report.aggregate.find(name)->second;
      m["metrics"][std::string(name)] = {{"mean", s.mean}, {"dispersion", s.dispersion}};
    }
    for (const auto& f : r.report.folds) {
      m["folds"].push_back({{"accuracy", f.accuracy},
                            {"recall", f.recall},
                            {"precision", f.precision},
                            {"f1", f.f1},
                            {"recall_undefined", f.recall_undefined},
                            {"precision_undefined", f.precision_undefined},
                            {"f1_undefined", f.f1_undefined},
                            {"tp", f.tp},
                            {"fp", f.fp},
                            {"tn", f.tn},
                            {"fn", f.fn}});
    }
    j["methods"].push_back(std::move(m));
  }
  return j;
}

void write_predictions_csv(std::span<const Prediction> predictions,
                           const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "question_id,probability,prediction,label\n";
  for (const auto& p : predictions) {
    out << p.question_id << ',' << fixed(p.probability, 8) << ',' << p.prediction << ','
        << p.label << '\n';
  }
}

void write_trend_csv(std::span<const TrendPoint> series, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "year,pct_resolved\n";
  for (const auto& p : series) out << p.year << ',' << fixed(p.pct_resolved) << '\n';
}

nlohmann::json cv_test_json(const CvTestResult& r, std::string_view a, std::string_view b,
                            std::uint64_t seed) {
  auto number = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  nlohmann::json diffs = nlohmann::json::array();
  for (const auto& rep : r.differences) diffs.push_back({rep[0], rep[1]});
  return {{"method_a", a},        {"method_b", b},
          {"seed", seed},         {"t", number(r.t)},
          {"p_value", r.p_value}, {"significant", r.significant},
          {"degenerate", r.degenerate}, {"threshold", kSignificanceLevel},
          {"degrees_of_freedom", 5}, {"differences", diffs}};
}

}  // namespace segnn
