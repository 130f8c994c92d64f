#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "segnn/baselines.hpp"
#include "segnn/gnn.hpp"
#include "segnn/ingest.hpp"
#include "segnn/training.hpp"

namespace segnn {

// ---- folds ----

struct FoldAssignment {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold;  // fold id per sample

  std::vector<std::size_t> test_indices(std::size_t f) const;
  std::vector<std::size_t> train_indices(std::size_t f) const;
};

// Seeded shuffle within each class, then round-robin over folds; the
// positive class continues the rotation where the negative class stopped so
// fold sizes differ by at most one. Throws InvalidArgument when a class has
// fewer than k members.
FoldAssignment stratified_kfold(std::span<const double> labels, std::size_t k, std::uint64_t seed);

// Indices of a class-stratified subsample of size n, sorted ascending.
std::vector<std::size_t> stratified_subsample(std::span<const double> labels, std::size_t n,
                                              std::uint64_t seed);

// ---- metrics ----

struct Metrics {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  bool recall_undefined = false;
  bool precision_undefined = false;
  bool f1_undefined = false;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Positive class = unresolved (1). Ratios with a zero denominator are 0 and
// flagged undefined. Throws InvalidArgument on empty or unequal inputs.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels);

inline constexpr std::array<std::string_view, 4> kMetricNames{"accuracy", "recall", "precision",
                                                              "f1"};
double metric_value(const Metrics& m, std::string_view name);

struct Summary {
  double mean = 0.0;
  double dispersion = 0.0;  // population standard deviation
};

Summary summarize(std::span<const double> values);

struct MetricsReport {
  std::vector<Metrics> folds;
  std::map<std::string, Summary, std::less<>> aggregate;
};

MetricsReport aggregate_folds(std::vector<Metrics> folds);

// ---- methods ----

// Graphs with text+type features; methods slice what they need.
struct Dataset {
  std::string community;
  std::size_t text_dim = 0;
  std::vector<GraphSample> samples;

  std::vector<double> labels() const;
  // Question-node text embeddings, one row per sample.
  Matrix question_embeddings() const;
};

// Features are built on up to `jobs` threads; the provider must allow
// concurrent lookups.
Dataset make_dataset(std::string community, std::span<const CommGraph> graphs,
                     const EmbeddingProvider& provider, std::size_t jobs = 1);

// A copy of the samples restricted to the columns of `mode`.
std::vector<GraphSample> feature_view(const Dataset& data, FeatureMode mode);

struct MethodOptions {
  TrainConfig train;         // epochs, batch size, learning rate for the GNNs
  FewShotConfig fewshot;     // shots are taken from the method name
  LogRegOptions logreg;
};

class Method {
 public:
  virtual ~Method() = default;
  virtual std::string name() const = 0;
  // Probability of "unresolved" for each test index after training on the
  // train indices. Must depend only on its arguments.
  virtual std::vector<double> fit_predict(const Dataset& data, std::span<const std::size_t> train,
                                          std::span<const std::size_t> test,
                                          std::uint64_t seed) const = 0;
};

// "gcn:<mode>", "ggnn:<mode>" (mode text+type, text or type; default
// text+type), "logreg", "fewshot:<m>", "majority".
std::unique_ptr<Method> make_method(std::string_view name, const MethodOptions& options = {});

// ---- cross-validation ----

struct Prediction {
  std::int64_t question_id = 0;
  double probability = 0.0;
  int prediction = 0;
  int label = 0;
  std::size_t fold = 0;
};

struct CvResult {
  std::string method;
  MetricsReport report;
  std::vector<Prediction> predictions;  // in sample order
};

// Every method sees the same folds and the same per-fold seed. Up to `jobs`
// (method, fold) tasks run concurrently; results do not depend on jobs.
std::vector<CvResult> run_cv(std::span<const Method* const> methods, const Dataset& data,
                             std::size_t k, std::uint64_t seed, std::size_t jobs = 1);

// ---- 5x2cv paired t-test ----

struct CvTestResult {
  double t = 0.0;
  double p_value = 1.0;
  bool significant = false;
  bool degenerate = false;
  std::array<std::array<double, 2>, 5> differences{};  // accuracy(A) - accuracy(B)
};

inline constexpr double kSignificanceLevel = 0.005;

// t = p_1^(1) / sqrt(mean_i s_i^2) with 5 degrees of freedom, two-sided p.
CvTestResult paired_t_5x2(const std::array<std::array<double, 2>, 5>& differences);

CvTestResult five_by_two_cv_test(const Method& a, const Method& b, const Dataset& data,
                                 std::uint64_t seed, std::size_t jobs = 1);

// Regularised incomplete beta I_x(a, b) and the Student t distribution.
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double dof);
double student_t_two_sided_p(double t, double dof);

// ---- corpus statistics ----

struct Distribution {
  double mean = 0.0;
  double mode = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for one value
  double max = 0.0;
  double min = 0.0;
};

// Type-7 quantile (linear interpolation) of sorted values.
double quantile_sorted(std::span<const double> sorted, double q);
Distribution describe(std::span<const double> values);

struct GraphStatsTable {
  std::size_t graph_count = 0;
  // nodes, edges, answers, comments, users
  std::vector<std::pair<std::string, Distribution>> rows;

  const Distribution& at(std::string_view quantity) const;
};

GraphStatsTable graph_statistics(std::span<const CommGraph> corpus);
std::string format_stats_table(const GraphStatsTable& table);
nlohmann::json stats_json(const GraphStatsTable& table);

// ---- resolution trend ----

struct QuestionOutcome {
  int year = 0;
  bool resolved = false;
};

struct TrendPoint {
  int year = 0;
  std::size_t questions = 0;
  double pct_resolved = 0.0;  // fraction in [0, 1]
};

// Ascending years; years without questions are absent.
std::vector<TrendPoint> resolved_trend(std::span<const QuestionOutcome> questions);
std::vector<QuestionOutcome> question_outcomes(const DumpRecords& records);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);
double trend_spearman(std::span<const TrendPoint> series);

// ---- reports ----

// Columns method, metric, mean, dispersion: four rows per method.
void write_report_csv(std::span<const CvResult> results, const std::filesystem::path& path);
nlohmann::json report_json(std::span<const CvResult> results, std::size_t k, std::uint64_t seed);
// Columns question_id, probability, prediction, label.
void write_predictions_csv(std::span<const Prediction> predictions,
                           const std::filesystem::path& path);
// Columns year, pct_resolved.
void write_trend_csv(std::span<const TrendPoint> series, const std::filesystem::path& path);
nlohmann::json cv_test_json(const CvTestResult& r, std::string_view a, std::string_view b,
                            std::uint64_t seed);

}  // namespace segnn
