#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "segnn/errors.hpp"
#include "segnn/features.hpp"
#include "segnn/graph.hpp"

using namespace segnn;
using segnn::test::TempDir;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<EmbeddingRecord> some_records(std::size_t n, std::size_t d) {
  Rng rng(5);
  std::vector<EmbeddingRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r{"Question:" + std::to_string(i), std::vector<float>(d)};
    for (auto& x : r.values) x = static_cast<float>(rng.normal());
    out.push_back(std::move(r));
  }
  return out;
}

CommGraph question_and_user() {
  CommGraph g;
  g.question_id = 1;
  auto q = g.graph.add_node(Node(NodeLabel::Question, "1", "how to vote"));
  auto u = g.graph.add_node(Node(NodeLabel::User, "2", ""));
  g.graph.add_edge(EdgeLabel::Posts, u, q);
  return g;
}

// Provider that fails for one key with a generic error.
class FailingProvider final : public EmbeddingProvider {
 public:
  std::size_t dim() const override { return 3; }
  std::vector<double> embed(std::string_view key, std::string_view) const override {
    if (key == "User:2") throw Error("backend unavailable");
    return {1, 0, 0};
  }
};

}  // namespace

TEST_CASE("type one-hot codes") {
  CHECK(type_one_hot(NodeLabel::Question) == std::array<double, 4>{0, 0, 0, 1});
  CHECK(type_one_hot(NodeLabel::Answer) == std::array<double, 4>{0, 0, 1, 0});
  CHECK(type_one_hot(NodeLabel::Comment) == std::array<double, 4>{0, 1, 0, 0});
  CHECK(type_one_hot(NodeLabel::User) == std::array<double, 4>{1, 0, 0, 0});
  const auto a = type_one_hot(NodeLabel::Answer);
  const auto c = type_one_hot(NodeLabel::Comment);
  double dot = 0, sum_a = 0, sum_c = 0;
  for (int i = 0; i < 4; ++i) {
    dot += a[i] * c[i];
    sum_a += a[i];
    sum_c += c[i];
  }
  CHECK(dot == 0);
  CHECK(sum_a == 1);
  CHECK(sum_c == 1);
}

TEST_CASE("feature mode names and dimensions") {
  CHECK(feature_dim(FeatureMode::TextPlusType, 384) == 388);
  CHECK(feature_dim(FeatureMode::TextOnly, 384) == 384);
  CHECK(feature_dim(FeatureMode::TypeOnly, 384) == 4);
  CHECK(feature_dim(FeatureMode::TextPlusType, 7) ==
        feature_dim(FeatureMode::TextOnly, 7) + feature_dim(FeatureMode::TypeOnly, 7));
  for (auto m : {FeatureMode::TextPlusType, FeatureMode::TextOnly, FeatureMode::TypeOnly}) {
    CHECK(parse_feature_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_feature_mode("image"), InvalidArgument);
}

TEST_CASE("hash_embed") {
  const auto zero = hash_embed("", 384);
  CHECK(zero.size() == 384);
  CHECK(norm(zero) == 0.0);
  CHECK(norm(hash_embed(" \t\n ", 384)) == 0.0);

  for (const char* text : {"a", "Why do votes matter?", "x=1", "naïve café", "1 2 3 4 5 6"}) {
    CHECK(norm(hash_embed(text, 384)) == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(hash_embed("Some Text here", 64) == hash_embed("some text HERE", 64));
  CHECK(hash_embed("  padded text ", 128) == hash_embed("padded text", 128));
  CHECK(hash_embed("word order", 384) != hash_embed("order word", 384));
  CHECK(norm(hash_embed("anything", 1)) == doctest::Approx(1.0));
  const auto v = hash_embed("stack exchange", 16);
  const auto w = hash_embed("stack exchange", 16);
  CHECK(v == w);
  int nonzero = 0;
  for (double x : v) nonzero += x != 0.0;
  CHECK(nonzero >= 1);
  CHECK(nonzero <= 3);  // two unigrams and one bigram
}

TEST_CASE("hash_embed slot layout") {
  // 64-bit FNV-1a, murmur-style finaliser; bit 0 is the sign, the rest picks the slot.
  auto hash = [](const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
  };
  for (std::size_t dim : {7u, 16u, 384u}) {
    std::vector<double> expected(dim, 0.0);
    for (const std::string f : {"how", "to", "vote", "how to", "to vote"}) {
      const auto h = hash(f);
      expected[(h >> 1) % dim] += (h & 1) ? 1.0 : -1.0;
    }
    double n = 0.0;
    for (double x : expected) n += x * x;
    for (double& x : expected) x /= std::sqrt(n);
    const auto got = hash_embed("How to VOTE?", dim);
    for (std::size_t i = 0; i < dim; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-15));
  }
}

TEST_CASE("hashing embedder provider") {
  HashingEmbedder e(32);
  CHECK(e.dim() == 32);
  CHECK(e.embed("User:1", "hello world") == hash_embed("hello world", 32));
  CHECK_THROWS_AS(HashingEmbedder(0), InvalidArgument);
}

TEST_CASE("embedding file round-trip is bit-exact") {
  TempDir dir;
  const auto records = some_records(3, 384);
  write_embedding_file(dir / "e.seemb", 384, records);
  const auto p = load_precomputed(dir / "e.seemb");
  CHECK(p->dim() == 384);
  CHECK(p->size() == 3);
  for (const auto& r : records) {
    const float* raw = p->raw(r.key);
    REQUIRE(raw != nullptr);
    CHECK(std::equal(r.values.begin(), r.values.end(), raw));
    const auto widened = p->embed(r.key, "ignored");
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      CHECK(widened[i] == static_cast<double>(r.values[i]));
    }
  }
  CHECK_THROWS_AS(p->embed("Question:99", ""), MissingEmbedding);
  try {
    p->embed("Answer:7", "");
  } catch (const MissingEmbedding& e) {
    CHECK(e.key() == "Answer:7");
  }
}

TEST_CASE("embedding file layout") {
  TempDir dir;
  write_embedding_file(dir / "e.seemb", 2, std::vector<EmbeddingRecord>{{"U:1", {1.0f, -2.0f}}});
  const std::string bytes = segnn::test::read_file(dir / "e.seemb");
  REQUIRE(bytes.size() == 6 + 4 + 8 + 2 + 3 + 8);
  CHECK(bytes.substr(0, 6) == "SEEMB1");
  CHECK(static_cast<unsigned char>(bytes[6]) == 2);
  CHECK(static_cast<unsigned char>(bytes[10]) == 1);
  CHECK(static_cast<unsigned char>(bytes[18]) == 3);
  CHECK(bytes.substr(20, 3) == "U:1");
  float first;
  std::memcpy(&first, bytes.data() + 23, 4);
  CHECK(first == 1.0f);
}

TEST_CASE("embedding file errors") {
  TempDir dir;
  const auto records = some_records(2, 4);
  write_embedding_file(dir / "ok.seemb", 4, records);
  const std::string good = segnn::test::read_file(dir / "ok.seemb");

  segnn::test::write_file(dir / "magic.seemb", "SEEMB2" + good.substr(6));
  CHECK_THROWS_AS(load_precomputed(dir / "magic.seemb"), FormatError);

  segnn::test::write_file(dir / "short.seemb", good.substr(0, good.size() - 1));
  CHECK_THROWS_AS(load_precomputed(dir / "short.seemb"), TruncationError);

  segnn::test::write_file(dir / "header.seemb", good.substr(0, 9));
  CHECK_THROWS_AS(load_precomputed(dir / "header.seemb"), TruncationError);

  // Declared dimension 3 against records written with 4 components.
  std::string wrong_dim = good;
  wrong_dim[6] = 3;
  CHECK_THROWS_AS(load_precomputed(dir / "ok.seemb", 8), FormatError);
  segnn::test::write_file(dir / "dim.seemb", wrong_dim);
  CHECK_THROWS_AS(load_precomputed(dir / "dim.seemb"), FormatError);

  auto dup = records;
  dup[1].key = dup[0].key;
  CHECK_THROWS_AS(write_embedding_file(dir / "dup.seemb", 4, dup), DuplicateKeyError);
  // Hand-assemble a file with a repeated key.
  std::string twice = good.substr(0, 18);
  const std::string one = good.substr(18, 2 + records[0].key.size() + 16);
  twice += one + one;
  segnn::test::write_file(dir / "dup2.seemb", twice);
  CHECK_THROWS_AS(load_precomputed(dir / "dup2.seemb"), DuplicateKeyError);

  CHECK_THROWS_AS(write_embedding_file(dir / "shape.seemb", 5, records), ShapeError);
}

TEST_CASE("build_features") {
  const auto g = question_and_user();
  SUBCASE("type only") {
    const Matrix x = build_features(g, FeatureMode::TypeOnly, HashingEmbedder(384));
    Matrix expected(2, 4);
    expected << 0, 0, 0, 1, 1, 0, 0, 0;
    CHECK(x == expected);
  }
  SUBCASE("text plus type") {
    const Matrix x = build_features(g, FeatureMode::TextPlusType, HashingEmbedder(384));
    CHECK(x.cols() == 388);
    CHECK(x(0, 387) == 1.0);
    const auto e = hash_embed("how to vote", 384);
    for (int i = 0; i < 384; ++i) CHECK(x(0, i) == e[i]);
    CHECK(x.allFinite());
    CHECK(x.leftCols(384).cwiseAbs().maxCoeff() <= 1.0);
  }
  SUBCASE("text only with an empty user text") {
    const Matrix x = build_features(g, FeatureMode::TextOnly, HashingEmbedder(16));
    CHECK(x.cols() == 16);
    CHECK(x.row(1).isZero(0));
    CHECK(x.row(0).norm() == doctest::Approx(1.0));
  }
  SUBCASE("mode selection commutes") {
    const Matrix full = build_features(g, FeatureMode::TextPlusType, HashingEmbedder(8));
    CHECK(select_mode_columns(full, FeatureMode::TypeOnly) ==
          build_features(g, FeatureMode::TypeOnly, HashingEmbedder(8)));
    CHECK(select_mode_columns(full, FeatureMode::TextOnly) ==
          build_features(g, FeatureMode::TextOnly, HashingEmbedder(8)));
  }
  SUBCASE("provider failures carry the node key") {
    try {
      build_features(g, FeatureMode::TextOnly, FailingProvider());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("User:2") != std::string::npos);
    }
    TempDir dir;
    write_embedding_file(dir / "q.seemb", 2,
                         std::vector<EmbeddingRecord>{{"Question:1", {1.0f, 0.0f}}});
    CHECK_THROWS_AS(build_features(g, FeatureMode::TextOnly, *load_precomputed(dir / "q.seemb")),
                    MissingEmbedding);
  }
}

TEST_CASE("feature rows follow node order") {
  CommGraph a;
  auto q = a.graph.add_node(Node(NodeLabel::Question, "1", "question text"));
  auto c = a.graph.add_node(Node(NodeLabel::Comment, "5", "a comment"));
  auto u = a.graph.add_node(Node(NodeLabel::User, "2", "about me"));
  a.graph.add_edge(EdgeLabel::Posts, u, q);
  a.graph.add_edge(EdgeLabel::Posts, u, c);
  a.graph.add_edge(EdgeLabel::Comments, c, q);
  CommGraph b;  // same nodes, order reversed
  auto ub = b.graph.add_node(Node(NodeLabel::User, "2", "about me"));
  auto cb = b.graph.add_node(Node(NodeLabel::Comment, "5", "a comment"));
  auto qb = b.graph.add_node(Node(NodeLabel::Question, "1", "question text"));
  b.graph.add_edge(EdgeLabel::Posts, ub, qb);
  b.graph.add_edge(EdgeLabel::Posts, ub, cb);
  b.graph.add_edge(EdgeLabel::Comments, cb, qb);
  HashingEmbedder e(32);
  const Matrix xa = build_features(a, FeatureMode::TextPlusType, e);
  const Matrix xb = build_features(b, FeatureMode::TextPlusType, e);
  CHECK(xa.row(0) == xb.row(2));
  CHECK(xa.row(1) == xb.row(1));
  CHECK(xa.row(2) == xb.row(0));
}

TEST_CASE("precomputed provider round-trip over a corpus has no missing keys") {
  TempDir dir;
  const auto toy = segnn::test::toy_corpus(25, 4);
  HashingEmbedder hash(24);
  std::vector<EmbeddingRecord> records;
  std::set<std::string> seen;
  for (const auto& g : toy.graphs) {
    for (const auto& n : g.graph.nodes()) {
      if (!seen.insert(n.key()).second) continue;
      const auto v = hash.embed(n.key(), n.text());
      records.push_back({n.key(), std::vector<float>(v.begin(), v.end())});
    }
  }
  write_embedding_file(dir / "corpus.seemb", 24, records);
  const auto p = load_precomputed(dir / "corpus.seemb", 24);
  std::size_t missing = 0;
  for (const auto& g : toy.graphs) {
    for (const auto& n : g.graph.nodes()) missing += !p->contains(n.key());
    const Matrix x = build_features(g, FeatureMode::TextPlusType, *p);
    CHECK(x.rows() == static_cast<Eigen::Index>(g.graph.node_count()));
  }
  CHECK(missing == 0);
}
