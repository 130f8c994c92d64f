#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "segnn/checkpoint.hpp"
#include "segnn/errors.hpp"
#include "segnn/evaluation.hpp"
#include "segnn/gnn.hpp"
#include "segnn/optim.hpp"
#include "segnn/training.hpp"

using namespace segnn;
using segnn::test::random_matrix;

namespace {

constexpr std::size_t kTextDim = 12;

std::vector<GraphSample> toy_samples(std::size_t n, std::uint64_t seed,
                                     FeatureMode mode = FeatureMode::TextPlusType,
                                     std::size_t text_dim = kTextDim) {
  const auto toy = segnn::test::toy_corpus(n, seed);
  const HashingEmbedder emb(text_dim);
  std::vector<GraphSample> out;
  for (const auto& g : toy.graphs) out.push_back(make_sample(g, build_features(g, mode, emb)));
  return out;
}

double logit_of(GraphModel& m, const GraphSample& s) {
  const std::vector<GraphSample> one{s};
  const std::vector<std::size_t> idx{0};
  Tape tape;
  return m.forward(tape, make_batch(one, idx), false).value()(0, 0);
}

// Same graph with nodes renumbered by `perm` (new index of old node i).
GraphSample permuted(const GraphSample& s, const std::vector<std::uint32_t>& perm) {
  const Matrix a = s.adjacency.to_dense();
  const Eigen::Index n = a.rows();
  std::vector<Triplet> t;
  Matrix x(n, s.features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(perm[i]) = s.features.row(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (a(i, j) != 0.0) t.push_back({perm[i], perm[j], a(i, j)});
    }
  }
  GraphSample p;
  p.question_id = s.question_id;
  p.label = s.label;
  p.adjacency = SparseMatrix::from_triplets(static_cast<std::size_t>(n),
                                            static_cast<std::size_t>(n), std::move(t));
  set_features(p, std::move(x));
  return p;
}

GraphSample duplicated(const GraphSample& s) {
  std::vector<const SparseMatrix*> blocks{&s.adjacency, &s.adjacency};
  GraphSample d;
  d.label = s.label;
  d.adjacency = SparseMatrix::block_diagonal(blocks);
  Matrix x(2 * s.features.rows(), s.features.cols());
  x << s.features, s.features;
  set_features(d, std::move(x));
  return d;
}

void train_a_little(GraphModel& m, std::span<const GraphSample> samples, int steps) {
  auto params = m.parameters();
  AdamState state;
  AdamOptions o;
  o.learning_rate = 1e-2;
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int s = 0; s < steps; ++s) {
    const auto batch = make_batch(samples, idx);
    zero_grad(params);
    Tape tape;
    tape.backward(bce_loss(m.forward(tape, batch, true), batch.labels));
    adam_step(params, state, o);
  }
}

Matrix dense_normalized(const Matrix& a) {
  Matrix with_loops = a + Matrix::Identity(a.rows(), a.cols());
  Eigen::VectorXd inv = with_loops.rowwise().sum().array().rsqrt();
  return inv.asDiagonal() * with_loops * inv.asDiagonal();
}

}  // namespace

TEST_CASE("normalized adjacency examples") {
  const std::vector<Edge> one{{EdgeLabel::Posts, 0, 1}};
  const Matrix two = normalize_adjacency(2, one).to_dense();
  CHECK(two.isApprox(Matrix::Constant(2, 2, 0.5), 1e-15));

  const Matrix single = normalize_adjacency(1, {}).to_dense();
  CHECK(single.rows() == 1);
  CHECK(single(0, 0) == 1.0);

  const std::vector<Edge> path{{EdgeLabel::Posts, 0, 1}, {EdgeLabel::Answers, 2, 1}};
  const Matrix p = normalize_adjacency(3, path).to_dense();
  CHECK(p(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = a(1, 2) = a(2, 1) = 1;
  CHECK((p - dense_normalized(a)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalized adjacency of real graphs is symmetric and matches the dense oracle") {
  const auto toy = segnn::test::toy_corpus(30, 2, "pol");
  for (const auto& g : toy.graphs) {
    const Matrix p = normalize_adjacency(g).to_dense();
    CHECK((p - p.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Matrix a = Matrix::Zero(p.rows(), p.cols());
    for (const auto& e : g.graph.edges()) a(e.source, e.target) = a(e.target, e.source) = 1;
    CHECK((p - dense_normalized(a)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("batch assembly") {
  const auto samples = toy_samples(10, 1);
  const std::vector<std::size_t> idx{3, 0, 7};
  const auto b = make_batch(samples, idx);
  CHECK(b.graph_count == 3);
  CHECK(b.labels == std::vector<double>{samples[3].label, samples[0].label, samples[7].label});
  const auto n3 = samples[3].features.rows();
  CHECK(b.features.topRows(n3) == samples[3].features);
  CHECK(b.segment.front() == 0);
  CHECK(b.segment.back() == 2);
  CHECK(b.adjacency.rows() == static_cast<std::size_t>(b.features.rows()));

  auto mixed = samples;
  set_features(mixed[0], Matrix::Ones(mixed[0].features.rows(), 3));
  const std::vector<std::size_t> both{0, 1};
  CHECK_THROWS_AS(make_batch(mixed, both), ShapeError);
  CHECK_THROWS_AS(make_batch(samples, std::vector<std::size_t>{}), InvalidArgument);
}

TEST_CASE("sparse and dense first-layer inputs agree") {
  auto samples = toy_samples(12, 6, FeatureMode::TypeOnly);
  for (const auto& s : samples) REQUIRE(s.sparse_features.rows() > 0);
  const auto b = make_batch(samples, std::vector<std::size_t>{0, 1, 2});
  CHECK(b.sparse_features.rows() == static_cast<std::size_t>(b.features.rows()));
  std::vector<GraphSample> dense = samples;
  for (auto& s : dense) {
    s.sparse_features = SparseMatrix();
    s.propagated = s.adjacency.multiply(s.features);
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (auto arch : {Architecture::Gcn, Architecture::Ggnn}) {
    GraphModel m(ModelConfig::preset(arch, 4, FeatureMode::TypeOnly), 5);
    train_a_little(m, samples, 2);
    const auto a = m.predict_proba(samples, idx);
    const auto b = m.predict_proba(dense, idx);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("GCN with zero parameters predicts one half") {
  const auto samples = toy_samples(8, 2);
  GraphModel m(ModelConfig::gcn(kTextDim + 4), 1);
  for (auto* p : m.parameters()) p->value.setZero();
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (double p : m.predict_proba(samples, idx)) CHECK(p == 0.5);
}

TEST_CASE("GCN on a single node equals a three-layer MLP") {
  Rng rng(12);
  GraphSample s;
  s.adjacency = SparseMatrix::identity(1);
  set_features(s, random_matrix(1, 6, rng));
  GraphModel m(ModelConfig::gcn(6), 4);
  for (auto* p : m.parameters()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng);
  Matrix h = s.features;
  for (auto& l : m.layers()) {
    h = ((h * l.weight.value).rowwise() + l.bias.value.row(0)).cwiseMax(0.0);
  }
  const double expected = (h * m.head_weight().value)(0, 0) + m.head_bias().value(0, 0);
  CHECK(logit_of(m, s) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("node permutation invariance") {
  const auto samples = toy_samples(20, 3);
  Rng rng(99);
  for (auto arch : {Architecture::Gcn, Architecture::Ggnn}) {
    CAPTURE(to_string(arch));
    GraphModel m(ModelConfig::preset(arch, kTextDim + 4, FeatureMode::TextPlusType), 7);
    train_a_little(m, samples, 3);
    double worst = 0.0;
    for (const auto& s : samples) {
      std::vector<std::uint32_t> perm(static_cast<std::size_t>(s.features.rows()));
      std::iota(perm.begin(), perm.end(), 0u);
      rng.shuffle(perm);
      const auto p = permuted(s, perm);
      worst = std::max(worst, std::abs(logit_of(m, s) - logit_of(m, p)));
      // Training-mode forward uses batch statistics, also order-free.
      const std::vector<GraphSample> one{s}, other{p};
      const std::vector<std::size_t> idx{0};
      Tape t1, t2;
      const double a = m.forward(t1, make_batch(one, idx), true).value()(0, 0);
      const double b = m.forward(t2, make_batch(other, idx), true).value()(0, 0);
      worst = std::max(worst, std::abs(a - b));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("pooling under disjoint duplication") {
  const auto samples = toy_samples(10, 4);
  GraphModel ggnn(ModelConfig::ggnn(kTextDim + 4), 2);
  GraphModel gcn(ModelConfig::gcn(kTextDim + 4), 2);
  train_a_little(ggnn, samples, 2);
  for (const auto& s : samples) {
    const auto d = duplicated(s);
    const std::vector<GraphSample> one{s}, two{d};
    const std::vector<std::size_t> idx{0};
    const Matrix single = ggnn.pooled(make_batch(one, idx));
    const Matrix doubled = ggnn.pooled(make_batch(two, idx));
    CHECK((doubled - 2 * single).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(logit_of(gcn, s) - logit_of(gcn, d)) < 1e-9);
  }
}

TEST_CASE("type-only features give finite logits and ignore text") {
  const auto toy = segnn::test::toy_corpus(20, 8);
  GraphModel m(ModelConfig::ggnn(4, FeatureMode::TypeOnly), 3);
  const HashingEmbedder emb(kTextDim);
  for (const auto& g : toy.graphs) {
    const auto s = make_sample(g, build_features(g, FeatureMode::TypeOnly, emb));
    CHECK(std::isfinite(logit_of(m, s)));
    CommGraph swapped = g;
    PropertyGraph rebuilt;
    for (const auto& n : g.graph.nodes()) rebuilt.add_node(Node(n.label, n.id(), "other text"));
    for (const auto& e : g.graph.edges()) rebuilt.add_edge(e.label, e.source, e.target);
    swapped.graph = rebuilt;
    const auto t = make_sample(swapped, build_features(swapped, FeatureMode::TypeOnly, emb));
    CHECK(logit_of(m, s) == logit_of(m, t));
  }
}

TEST_CASE("GenConv layer examples") {
  Rng rng(21);
  const SparseMatrix adj = normalize_adjacency(
      3, std::vector<Edge>{{EdgeLabel::Posts, 0, 1}, {EdgeLabel::Posts, 2, 1}});
  const Matrix h = random_matrix(3, 4, rng);
  SUBCASE("zero weight, identity batch norm") {
    GraphModel m(ModelConfig::ggnn(4), 1);
    ConvLayer layer = m.layers()[0];  // 4 -> 256, no skip
    layer.weight.value.setZero();
    layer.bias.value = random_matrix(1, 256, rng);
    Tape tape;
    const Matrix out = genconv_layer(tape, layer, adj, tape.constant(h), false).value();
    const double a = layer.slope.value(0, 0);
    const double norm = 1.0 / std::sqrt(1.0 + 1e-5);
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index j = 0; j < 256; ++j) {
        const double z = layer.bias.value(0, j) * norm;
        CHECK(out(i, j) == doctest::Approx(z > 0 ? z : a * z).epsilon(1e-12));
      }
    }
  }
  SUBCASE("width-preserving layer with zero weight is the skip path") {
    ConvLayer layer;
    layer.weight = Parameter("w", Matrix::Zero(4, 4));
    layer.bias = Parameter("b", Matrix::Zero(1, 4));
    layer.gamma = Parameter("g", Matrix::Ones(1, 4));
    layer.beta = Parameter("be", Matrix::Zero(1, 4));
    layer.running_mean = Parameter("rm", Matrix::Zero(1, 4), false);
    layer.running_var = Parameter("rv", Matrix::Ones(1, 4), false);
    layer.slope = Parameter("s", Matrix::Constant(1, 1, 0.25));
    Tape tape;
    CHECK(genconv_layer(tape, layer, adj, tape.constant(h), false).value() == h);
    Tape train_tape;
    CHECK(genconv_layer(train_tape, layer, adj, train_tape.constant(h), true).value() == h);
  }
}

TEST_CASE("GenConv layer gradients match finite differences") {
  Rng rng(33);
  const SparseMatrix adj = normalize_adjacency(
      5, std::vector<Edge>{{EdgeLabel::Posts, 0, 1}, {EdgeLabel::Posts, 2, 1},
                           {EdgeLabel::Comments, 3, 0}, {EdgeLabel::Posts, 4, 3}});
  ConvLayer layer;
  layer.weight = Parameter("w", random_matrix(3, 3, rng));
  layer.bias = Parameter("b", random_matrix(1, 3, rng));
  layer.gamma = Parameter("g", random_matrix(1, 3, rng));
  layer.beta = Parameter("be", random_matrix(1, 3, rng));
  layer.running_mean = Parameter("rm", Matrix::Zero(1, 3), false);
  layer.running_var = Parameter("rv", Matrix::Ones(1, 3), false);
  layer.slope = Parameter("s", Matrix::Constant(1, 1, 0.25));
  Matrix h = random_matrix(5, 3, rng);
  const Matrix probe = random_matrix(5, 3, rng);

  auto evaluate = [&](bool training) {
    Tape tape;
    Var hv = tape.leaf(h);
    Var out = genconv_layer(tape, layer, adj, hv, training);
    return (out.value().array() * probe.array()).sum();
  };
  std::vector<Parameter*> params{&layer.weight, &layer.bias, &layer.gamma, &layer.beta,
                                 &layer.slope};
  for (bool training : {true, false}) {
    CAPTURE(training);
    for (auto* p : params) p->zero_grad();
    Tape tape;
    Var hv = tape.leaf(h);
    Var out = genconv_layer(tape, layer, adj, hv, training);
    tape.backward(sum_all(hadamard(out, tape.constant(probe))));
    const Matrix dh = hv.grad();
    const double step = 1e-5;
    auto check = [&](Matrix& value, const Matrix& analytic) {
      Matrix numeric(value.rows(), value.cols());
      for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double saved = value.data()[i];
        value.data()[i] = saved + step;
        const double up = evaluate(training);
        value.data()[i] = saved - step;
        const double down = evaluate(training);
        value.data()[i] = saved;
        numeric.data()[i] = (up - down) / (2 * step);
      }
      const double scale = std::max(analytic.norm(), numeric.norm());
      if (scale < 1e-8) {
        CHECK((analytic - numeric).norm() < 1e-8);  // bias cancelled by batch norm
      } else {
        CHECK((analytic - numeric).norm() / scale < 1e-4);
      }
    };
    check(h, dh);
    for (auto* p : params) {
      CAPTURE(p->name);
      const Matrix analytic = p->grad;
      check(p->value, analytic);
    }
  }
}

TEST_CASE("batch norm running statistics") {
  const auto samples = toy_samples(6, 5);
  GraphModel m(ModelConfig::ggnn(kTextDim + 4), 1);
  const Matrix before = m.layers()[0].running_var.value;
  train_a_little(m, samples, 1);
  CHECK(m.layers()[0].running_var.value != before);
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Matrix frozen = m.layers()[0].running_mean.value;
  const auto p1 = m.predict_proba(samples, idx);
  const auto p2 = m.predict_proba(samples, idx, 2);
  CHECK(p1 == p2);  // evaluation is per-node, independent of batching
  CHECK(m.layers()[0].running_mean.value == frozen);
}

TEST_CASE("model presets and parameters") {
  const auto gcn = ModelConfig::gcn(388);
  CHECK(gcn.widths == std::vector<std::size_t>{32, 32, 32});
  CHECK(gcn.pooling == Pooling::Mean);
  CHECK(gcn.activation == Activation::Relu);
  const auto ggnn = ModelConfig::ggnn(388);
  CHECK(ggnn.widths == std::vector<std::size_t>{256, 256});
  CHECK(ggnn.pooling == Pooling::Sum);
  CHECK(ggnn.jumping_knowledge);
  CHECK(ggnn.batch_norm);
  CHECK(ggnn.prelu_init == 0.25);

  GraphModel g(gcn, 1);
  const auto params = g.parameters();
  REQUIRE(params.size() == 8);
  CHECK(params[0]->name == "conv0.weight");
  CHECK(params[0]->value.rows() == 388);
  CHECK(params[6]->name == "head.weight");
  CHECK(params[6]->value.rows() == 32);

  GraphModel n(ggnn, 1);
  const auto np = n.parameters();
  REQUIRE(np.size() == 2 * 7 + 2);
  CHECK(np[4]->name == "conv0.bn_running_mean");
  CHECK_FALSE(np[4]->trainable);
  CHECK(np[6]->name == "conv0.prelu_slope");
  CHECK(np[14]->value.rows() == 512);

  ModelConfig bad = gcn;
  bad.widths = {32, 0};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad.widths.clear();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_architecture("gat"), InvalidArgument);
}

TEST_CASE("glorot initialisation is seeded and bounded") {
  const Matrix a = glorot_uniform(30, 20, 5);
  CHECK(a == glorot_uniform(30, 20, 5));
  CHECK(a != glorot_uniform(30, 20, 6));
  CHECK(a.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50.0));
}

TEST_CASE("model config JSON") {
  segnn::test::TempDir dir;
  ModelConfig c = ModelConfig::ggnn(20, FeatureMode::TextOnly);
  c.widths = {64, 64, 64};
  nlohmann::json j = c;
  segnn::test::write_file(dir / "m.json", j.dump());
  const auto back = load_model_config(dir / "m.json");
  CHECK(back.widths == c.widths);
  CHECK(back.feature_mode == FeatureMode::TextOnly);
  CHECK(back.pooling == Pooling::Sum);
  // Unspecified fields come from the architecture preset.
  const auto partial = nlohmann::json{{"architecture", "gcn"}}.get<ModelConfig>();
  CHECK(partial.widths == std::vector<std::size_t>{32, 32, 32});
  CHECK_THROWS_AS((nlohmann::json{{"architecture", "gcn"}, {"pooling", "max"}}.get<ModelConfig>()),
                  InvalidArgument);
}

TEST_CASE("checkpoint save and load reproduce predictions") {
  segnn::test::TempDir dir;
  const auto samples = toy_samples(10, 7);
  GraphModel m(ModelConfig::ggnn(kTextDim + 4), 9);
  train_a_little(m, samples, 2);
  m.save(dir / "m.ckpt", {{"seed", 9}, {"epoch", 2}});
  auto loaded = GraphModel::load(dir / "m.ckpt");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  CHECK(loaded.predict_proba(samples, idx) == m.predict_proba(samples, idx));
  CHECK(loaded.config().widths == m.config().widths);
  const auto data = load_checkpoint(dir / "m.ckpt");
  CHECK(data.header.at("kind") == "graph-model");
  CHECK(data.header.at("epoch") == 2);
}
