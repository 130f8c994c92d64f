#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "helpers.hpp"
#include "segnn/errors.hpp"
#include "segnn/evaluation.hpp"
#include "segnn/features.hpp"

using namespace segnn;

namespace {

std::vector<double> labels_with(std::size_t n, std::size_t positives, std::uint64_t seed) {
  std::vector<double> y(n, 0.0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(positives), 1.0);
  Rng rng(seed);
  rng.shuffle(y);
  return y;
}

// Predicts a fixed probability for every test graph.
class ConstantMethod final : public Method {
 public:
  explicit ConstantMethod(double p) : p_(p) {}
  std::string name() const override { return "constant"; }
  std::vector<double> fit_predict(const Dataset&, std::span<const std::size_t>,
                                  std::span<const std::size_t> test,
                                  std::uint64_t) const override {
    return std::vector<double>(test.size(), p_);
  }

 private:
  double p_;
};

// Label-free dataset: one-node graphs carrying only labels and ids.
Dataset label_dataset(std::span<const double> y) {
  Dataset d;
  d.community = "toy";
  d.text_dim = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    GraphSample s;
    s.question_id = static_cast<std::int64_t>(100 + i);
    s.label = y[i];
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset toy_dataset(std::size_t questions, std::uint64_t seed) {
  const auto toy = segnn::test::toy_corpus(questions, seed);
  const HashingEmbedder emb(16);
  return make_dataset("toy", toy.graphs, emb);
}

double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  const double m = 1.0 - p;
  const double j = std::floor(n * p + m);
  const double g = n * p + m - j;
  const auto at = [&](double k) {
    const double c = std::clamp(k, 1.0, n);
    return v[static_cast<std::size_t>(c) - 1];
  };
  return (1.0 - g) * at(j) + g * at(j + 1);
}

}  // namespace

TEST_CASE("stratified folds worked example") {
  const std::vector<double> y{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  const auto f = stratified_kfold(y, 2, 1);
  CHECK(f.k == 2);
  for (std::size_t fold = 0; fold < 2; ++fold) {
    const auto test = f.test_indices(fold);
    CHECK(test.size() == 5);
    std::size_t pos = 0;
    for (std::size_t i : test) pos += y[i] == 1.0 ? 1 : 0;
    CHECK(pos == 2);
    const auto train = f.train_indices(fold);
    CHECK(train.size() == 5);
    for (std::size_t i : train) CHECK(f.fold[i] != fold);
  }
  CHECK(stratified_kfold(y, 2, 1).fold == f.fold);
  CHECK_THROWS_AS(stratified_kfold(y, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(stratified_kfold(y, 5, 1), InvalidArgument);
}

TEST_CASE("stratified folds stay within one of perfect stratification") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(rng.below(9));
    const std::size_t n = 2 * k + static_cast<std::size_t>(rng.below(300));
    const std::size_t pos = k + static_cast<std::size_t>(rng.below(n - 2 * k + 1));
    const auto y = labels_with(n, pos, rng.next());
    CAPTURE(n);
    CAPTURE(k);
    CAPTURE(pos);
    const auto f = stratified_kfold(y, k, rng.next());
    std::vector<std::size_t> per[2];
    for (int c = 0; c < 2; ++c) per[c].assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++per[y[i] > 0.5 ? 1 : 0][f.fold[i]];
    const double class_n[2] = {static_cast<double>(n - pos), static_cast<double>(pos)};
    std::size_t lo = n;
    std::size_t hi = 0;
    for (std::size_t fold = 0; fold < k; ++fold) {
      for (int c = 0; c < 2; ++c) {
        CHECK(std::abs(static_cast<double>(per[c][fold]) - class_n[c] / static_cast<double>(k)) <=
              1.0);
      }
      lo = std::min(lo, per[0][fold] + per[1][fold]);
      hi = std::max(hi, per[0][fold] + per[1][fold]);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("stratified subsample") {
  const auto y = labels_with(1000, 300, 3);
  const auto s = stratified_subsample(y, 200, 4);
  CHECK(s.size() == 200);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  std::size_t pos = 0;
  for (std::size_t i : s) pos += y[i] == 1.0 ? 1 : 0;
  CHECK(pos == 60);
  CHECK(stratified_subsample(y, 200, 4) == s);
  CHECK(stratified_subsample(y, 2000, 4).size() == 1000);
}

TEST_CASE("compute_metrics worked examples") {
  const std::vector<int> pred{1, 1, 0, 0, 1};
  const std::vector<int> truth{1, 0, 0, 1, 1};
  const auto m = compute_metrics(pred, truth);
  CHECK(m.tp == 2);
  CHECK(m.fp == 1);
  CHECK(m.tn == 1);
  CHECK(m.fn == 1);
  CHECK(m.accuracy == doctest::Approx(0.6));
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));

  const auto none = compute_metrics(std::vector<int>{0, 0}, std::vector<int>{0, 1});
  CHECK(none.precision_undefined);
  CHECK(none.precision == 0.0);
  CHECK_FALSE(none.recall_undefined);
  CHECK(none.recall == 0.0);
  CHECK(none.f1_undefined);
  CHECK(none.accuracy == doctest::Approx(0.5));

  const auto negatives = compute_metrics(std::vector<int>{0, 0}, std::vector<int>{0, 0});
  CHECK(negatives.recall_undefined);
  CHECK(negatives.accuracy == 1.0);

  CHECK_THROWS_AS(compute_metrics(std::vector<int>{}, std::vector<int>{}), InvalidArgument);
  CHECK_THROWS_AS(compute_metrics(std::vector<int>{1}, std::vector<int>{1, 0}), InvalidArgument);
  CHECK(metric_value(m, "f1") == m.f1);
  CHECK_THROWS_AS(metric_value(m, "auc"), InvalidArgument);
}

TEST_CASE("compute_metrics against brute force on random cases") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(40));
    std::vector<int> pred(n);
    std::vector<int> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform() < 0.5 ? 1 : 0;
      truth[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    double correct = 0, predicted_pos = 0, actual_pos = 0, hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      correct += pred[i] == truth[i];
      predicted_pos += pred[i];
      actual_pos += truth[i];
      hits += pred[i] * truth[i];
    }
    const double acc = correct / static_cast<double>(n);
    const double prec = predicted_pos > 0 ? hits / predicted_pos : 0.0;
    const double rec = actual_pos > 0 ? hits / actual_pos : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const auto m = compute_metrics(pred, truth);
    CHECK(std::abs(m.accuracy - acc) < 1e-12);
    CHECK(std::abs(m.precision - prec) < 1e-12);
    CHECK(std::abs(m.recall - rec) < 1e-12);
    CHECK(std::abs(m.f1 - f1) < 1e-12);
    CHECK(m.precision_undefined == (predicted_pos == 0));
    CHECK(m.recall_undefined == (actual_pos == 0));
    CHECK(m.tp + m.fp + m.tn + m.fn == n);
  }
}

TEST_CASE("summaries use the population standard deviation") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.dispersion == doctest::Approx(std::sqrt(1.25)));
  CHECK(summarize(std::vector<double>{}).mean == 0.0);

  Metrics a;
  a.accuracy = 0.5;
  Metrics b;
  b.accuracy = 1.0;
  const auto r = aggregate_folds({a, b});
  CHECK(r.folds.size() == 2);
  CHECK(r.aggregate.size() == 4);
  CHECK(r.aggregate.at("accuracy").mean == doctest::Approx(0.75));
  CHECK(r.aggregate.at("accuracy").dispersion == doctest::Approx(0.25));
}

TEST_CASE("run_cv with the majority baseline") {
  const auto y = labels_with(50, 15, 6);
  const Dataset d = label_dataset(y);
  const auto majority = make_method("majority");
  const Method* methods[] = {majority.get()};
  const auto results = run_cv(methods, d, 5, 7);
  REQUIRE(results.size() == 1);
  const auto& r = results[0];
  CHECK(r.method == "majority");
  CHECK(r.report.folds.size() == 5);
  CHECK(r.report.aggregate.at("accuracy").mean == doctest::Approx(0.7));
  CHECK(r.report.aggregate.at("accuracy").dispersion == doctest::Approx(0.0));
  CHECK(r.report.aggregate.at("recall").mean == 0.0);
  REQUIRE(r.predictions.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(r.predictions[i].question_id == static_cast<std::int64_t>(100 + i));
    CHECK(r.predictions[i].prediction == 0);
    CHECK(r.predictions[i].label == static_cast<int>(y[i]));
    CHECK(r.predictions[i].probability == doctest::Approx(0.3));
  }
}

TEST_CASE("constant model dispersion is bounded by stratification") {
  const auto y = labels_with(103, 41, 8);
  const Dataset d = label_dataset(y);
  const ConstantMethod always(0.9);
  const Method* methods[] = {&always};
  const auto r = run_cv(methods, d, 5, 9)[0];
  const double min_fold = std::floor(103.0 / 5.0);
  CHECK(r.report.aggregate.at("accuracy").mean == doctest::Approx(41.0 / 103.0).epsilon(0.02));
  CHECK(r.report.aggregate.at("accuracy").dispersion <= 2.0 / min_fold);
  CHECK(r.report.aggregate.at("recall").mean == 1.0);
}

TEST_CASE("run_cv is independent of the job count") {
  const Dataset d = toy_dataset(60, 10);
  const auto logreg = make_method("logreg");
  const auto majority = make_method("majority");
  const auto fewshot = make_method("fewshot:2");
  const Method* methods[] = {logreg.get(), majority.get(), fewshot.get()};
  const auto a = run_cv(methods, d, 3, 11, 1);
  const auto b = run_cv(methods, d, 3, 11, 4);
  REQUIRE(a.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(a[m].method == b[m].method);
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      CHECK(a[m].predictions[i].probability == b[m].predictions[i].probability);
      CHECK(a[m].predictions[i].fold == b[m].predictions[i].fold);
    }
  }
}

TEST_CASE("method names") {
  CHECK(make_method("gcn")->name() == "gcn:text+type");
  CHECK(make_method("ggnn:type")->name() == "ggnn:type");
  CHECK(make_method("fewshot:10")->name() == "fewshot:10");
  CHECK(make_method("logreg")->name() == "logreg");
  CHECK_THROWS_AS(make_method("svm"), InvalidArgument);
  CHECK_THROWS_AS(make_method("fewshot:x"), InvalidArgument);
  CHECK_THROWS_AS(make_method("logreg:3"), InvalidArgument);
  CHECK_THROWS_AS(make_method("gcn:pixels"), InvalidArgument);
}

TEST_CASE("dataset and feature views") {
  const Dataset d = toy_dataset(12, 12);
  CHECK(d.text_dim == 16);
  const Matrix q = d.question_embeddings();
  CHECK(q.rows() == 12);
  CHECK(q.cols() == 16);
  CHECK(q.row(3) == d.samples[3].features.row(0).leftCols(16));
  const auto types = feature_view(d, FeatureMode::TypeOnly);
  CHECK(types[0].features.cols() == 4);
  CHECK(types[0].features.row(0) == d.samples[0].features.row(0).rightCols(4));
  CHECK(feature_view(d, FeatureMode::TextOnly)[0].features.cols() == 16);
  const auto threaded = make_dataset("toy", segnn::test::toy_corpus(12, 12).graphs,
                                     HashingEmbedder(16), 3);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(threaded.samples[i].features == d.samples[i].features);
  }
}

TEST_CASE("5x2 paired t worked examples") {
  std::array<std::array<double, 2>, 5> diff{};
  auto r = paired_t_5x2(diff);
  CHECK(r.degenerate);
  CHECK(r.p_value == 1.0);
  CHECK_FALSE(r.significant);

  for (auto& rep : diff) rep = {0.1, 0.1};
  r = paired_t_5x2(diff);
  CHECK_FALSE(r.degenerate);
  CHECK(std::isinf(r.t));
  CHECK(r.p_value == 0.0);
  CHECK(r.significant);

  diff = {{{0.1, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}};
  r = paired_t_5x2(diff);
  // s_1^2 = 0.005, mean = 0.001, t = 0.1 / sqrt(0.001)
  CHECK(r.t == doctest::Approx(0.1 / std::sqrt(0.001)));
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 1.0);
}

TEST_CASE("5x2 statistic against an independent recomputation") {
  const boost::math::students_t dist(5.0);
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::array<double, 2>, 5> diff{};
    for (auto& rep : diff) {
      for (double& v : rep) v = 0.2 * (rng.uniform() - 0.5);
    }
    double s2 = 0.0;
    for (const auto& rep : diff) {
      const double mean = 0.5 * (rep[0] + rep[1]);
      s2 += std::pow(rep[0] - mean, 2) + std::pow(rep[1] - mean, 2);
    }
    const double t = diff[0][0] / std::sqrt(s2 / 5.0);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    const auto r = paired_t_5x2(diff);
    CHECK(std::abs(r.t - t) <= 1e-10 * std::max(1.0, std::abs(t)));
    CHECK(std::abs(r.p_value - p) <= 1e-10);
    CHECK(r.significant == (p < 0.005));

    auto swapped = diff;
    for (auto& rep : swapped) rep = {-rep[0], -rep[1]};
    const auto s = paired_t_5x2(swapped);
    CHECK(s.t == doctest::Approx(-r.t));
    CHECK(s.p_value == doctest::Approx(r.p_value));
  }
}

TEST_CASE("five_by_two_cv_test on real methods") {
  const Dataset d = toy_dataset(80, 14);
  const auto logreg = make_method("logreg");
  const auto majority = make_method("majority");
  const auto same = five_by_two_cv_test(*logreg, *logreg, d, 15);
  CHECK(same.degenerate);
  CHECK_FALSE(same.significant);
  CHECK(same.p_value == 1.0);

  const auto r = five_by_two_cv_test(*logreg, *majority, d, 15);
  const auto threaded = five_by_two_cv_test(*logreg, *majority, d, 15, 4);
  CHECK(r.differences == threaded.differences);
  const auto back = five_by_two_cv_test(*majority, *logreg, d, 15);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(back.differences[i][j] == -r.differences[i][j]);
  }
  CHECK(back.p_value == doctest::Approx(r.p_value));
  const auto again = paired_t_5x2(r.differences);
  CHECK(again.t == r.t);
}

TEST_CASE("student t against boost") {
  for (double dof : {1.0, 2.0, 5.0, 10.0, 30.0}) {
    const boost::math::students_t dist(dof);
    for (double t : {-40.0, -6.0, -2.5, -1.0, -0.1, 0.0, 0.3, 1.0, 2.0, 4.0, 12.0, 100.0}) {
      CAPTURE(dof);
      CAPTURE(t);
      CHECK(std::abs(student_t_cdf(t, dof) - boost::math::cdf(dist, t)) < 1e-12);
      const double two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
      CHECK(std::abs(student_t_two_sided_p(t, dof) - two_sided) < 1e-12);
    }
  }
  CHECK(student_t_cdf(std::numeric_limits<double>::infinity(), 5) == 1.0);
  CHECK(student_t_two_sided_p(std::numeric_limits<double>::infinity(), 5) == 0.0);
}

TEST_CASE("incomplete beta against boost") {
  for (double a : {0.5, 1.0, 2.5, 7.0}) {
    for (double b : {0.5, 1.0, 3.0}) {
      for (double x : {0.0, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0}) {
        CHECK(std::abs(incomplete_beta(a, b, x) - boost::math::ibeta(a, b, x)) < 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(incomplete_beta(0.0, 1.0, 0.5), InvalidArgument);
}

TEST_CASE("describe worked example") {
  const std::vector<double> v{2, 8, 4, 4, 10, 6};
  const auto d = describe(v);
  CHECK(d.mean == doctest::Approx(34.0 / 6.0));
  CHECK(d.mode == 4.0);
  CHECK(d.median == doctest::Approx(5.0));
  CHECK(d.q1 == doctest::Approx(4.0));
  CHECK(d.q3 == doctest::Approx(7.5));
  CHECK(d.min == 2.0);
  CHECK(d.max == 10.0);
  double ss = 0;
  for (double x : v) ss += (x - d.mean) * (x - d.mean);
  CHECK(d.stddev == doctest::Approx(std::sqrt(ss / 5.0)));
  CHECK(describe(std::vector<double>{3}).stddev == 0.0);
  CHECK(describe(std::vector<double>{5, 1, 5, 1}).mode == 1.0);
  CHECK_THROWS_AS(describe(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("quantiles against the type-7 definition") {
  Rng rng(16);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(30));
    std::vector<double> v(n);
    for (double& x : v) x = static_cast<double>(rng.below(20));
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0, 0.1}) {
      CHECK(quantile_sorted(sorted, q) == doctest::Approx(type7(v, q)).epsilon(1e-12));
    }
  }
}

TEST_CASE("graph statistics table") {
  const auto toy = segnn::test::toy_corpus(30, 17);
  const auto t = graph_statistics(toy.graphs);
  CHECK(t.graph_count == 30);
  REQUIRE(t.rows.size() == 5);
  std::vector<double> nodes;
  for (const auto& g : toy.graphs) nodes.push_back(static_cast<double>(g.graph.node_count()));
  CHECK(t.at("nodes").mean == doctest::Approx(describe(nodes).mean));
  CHECK_THROWS_AS(t.at("votes"), InvalidArgument);
  const auto text = format_stats_table(t);
  CHECK(text.find("nodes") != std::string::npos);
  CHECK(text.find("graphs: 30") != std::string::npos);
  const auto j = stats_json(t);
  CHECK(j["graph_count"] == 30);
  CHECK(j["statistics"]["edges"]["q3"].get<double>() == t.at("edges").q3);
  CHECK_THROWS_AS(graph_statistics(std::span<const CommGraph>{}), InvalidArgument);
}

TEST_CASE("resolved trend and spearman") {
  const std::vector<QuestionOutcome> q{{2015, true}, {2015, true}, {2016, true}, {2016, false},
                                       {2018, false}, {2018, false}, {2018, true}};
  const auto series = resolved_trend(q);
  REQUIRE(series.size() == 3);
  CHECK(series[0].year == 2015);
  CHECK(series[0].questions == 2);
  CHECK(series[0].pct_resolved == 1.0);
  CHECK(series[1].pct_resolved == 0.5);
  CHECK(series[2].year == 2018);
  CHECK(series[2].pct_resolved == doctest::Approx(1.0 / 3.0));
  CHECK(trend_spearman(series) == doctest::Approx(-1.0));

  const std::vector<double> x{1, 2, 3, 4};
  CHECK(spearman(x, std::vector<double>{10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman(x, std::vector<double>{1, 2, 2, 3}) == doctest::Approx(std::sqrt(0.9)));
  CHECK(std::isnan(spearman(x, std::vector<double>{1, 1, 1, 1})));
  CHECK(std::isnan(spearman(std::vector<double>{1}, std::vector<double>{1})));
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1}), InvalidArgument);
}

TEST_CASE("report formats") {
  segnn::test::TempDir dir;
  Metrics a;
  a.accuracy = 0.5;
  a.recall = 0.25;
  a.tp = 1;
  CvResult r;
  r.method = "ggnn:text+type";
  r.report = aggregate_folds({a, a});
  r.predictions.push_back({42, 0.125, 0, 1, 0});
  const std::vector<CvResult> results{r};
  write_report_csv(results, dir / "r.csv");
  CHECK(segnn::test::read_file(dir / "r.csv") ==
        "method,metric,mean,dispersion\n"
        "ggnn:text+type,accuracy,0.500000,0.000000\n"
        "ggnn:text+type,recall,0.250000,0.000000\n"
        "ggnn:text+type,precision,0.000000,0.000000\n"
        "ggnn:text+type,f1,0.000000,0.000000\n");
  write_predictions_csv(r.predictions, dir / "p.csv");
  CHECK(segnn::test::read_file(dir / "p.csv") ==
        "question_id,probability,prediction,label\n42,0.12500000,0,1\n");
  const std::vector<TrendPoint> series{{2019, 10, 0.5}};
  write_trend_csv(series, dir / "t.csv");
  CHECK(segnn::test::read_file(dir / "t.csv") == "year,pct_resolved\n2019,0.500000\n");

  const auto j = report_json(results, 2, 7);
  CHECK(j["k"] == 2);
  CHECK(j["methods"][0]["metrics"]["accuracy"]["mean"] == 0.5);
  CHECK(j["methods"][0]["folds"].size() == 2);
  CHECK(j["methods"][0]["folds"][0]["tp"] == 1);

  CvTestResult t;
  t.t = std::numeric_limits<double>::infinity();
  const auto cj = cv_test_json(t, "a", "b", 3);
  CHECK(cj["t"] == "inf");
  CHECK(cj["degrees_of_freedom"] == 5);
}
