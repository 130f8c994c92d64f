#include "segnn/features.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "segnn/errors.hpp"

namespace segnn {

namespace {

constexpr char kMagic[6] = {'S', 'E', 'E', 'M', 'B', '1'};

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // Final avalanche so that low bits depend on every byte.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

// Lowercased runs of ASCII alphanumerics; non-ASCII bytes count as word
// characters so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void add_feature(std::vector<double>& v, std::string_view feature) {
  const std::uint64_t h = fnv1a(feature);
  const std::size_t slot = static_cast<std::size_t>((h >> 1) % v.size());
  v[slot] += (h & 1) ? 1.0 : -1.0;
}

}  // namespace

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::TextPlusType: return "text+type";
    case FeatureMode::TextOnly: return "text";
    case FeatureMode::TypeOnly: return "type";
  }
  return "?";
}

FeatureMode parse_feature_mode(std::string_view text) {
  for (auto m : {FeatureMode::TextPlusType, FeatureMode::TextOnly, FeatureMode::TypeOnly}) {
    if (to_string(m) == text) return m;
  }
  throw InvalidArgument("unknown feature mode '" + std::string(text) +
                        "' (expected text+type, text or type)");
}

std::size_t feature_dim(FeatureMode mode, std::size_t text_dim) {
  switch (mode) {
    case FeatureMode::TextPlusType: return text_dim + kTypeDim;
    case FeatureMode::TextOnly: return text_dim;
    case FeatureMode::TypeOnly: return kTypeDim;
  }
  return 0;
}

std::array<double, kTypeDim> type_one_hot(NodeLabel label) {
  switch (label) {
    case NodeLabel::Question: return {0, 0, 0, 1};
    case NodeLabel::Answer: return {0, 0, 1, 0};
    case NodeLabel::Comment: return {0, 1, 0, 0};
    case NodeLabel::User: return {1, 0, 0, 0};
  }
  return {0, 0, 0, 0};
}

std::vector<double> hash_embed(std::string_view text, std::size_t dim) {
  if (dim == 0) throw InvalidArgument("hash_embed: dimension must be positive");
  std::vector<double> v(dim, 0.0);
  const auto tokens = tokenize(text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add_feature(v, tokens[i]);
    if (i + 1 < tokens.size()) add_feature(v, tokens[i] + " " + tokens[i + 1]);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    const double inv = 1.0 / std::sqrt(norm);
    for (double& x : v) x *= inv;
  }
  return v;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw InvalidArgument("HashingEmbedder: dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(std::string_view, std::string_view text) const {
  return hash_embed(text, dim_);
}

void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          std::span<const EmbeddingRecord> records) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(dim, 4);
  put(records.size(), 8);
  std::unordered_map<std::string_view, bool> seen;
  for (const auto& r : records) {
    if (r.values.size() != dim) {
      throw ShapeError("embedding for " + r.key + " has " + std::to_string(r.values.size()) +
                       " components, file dimension is " + std::to_string(dim));
    }
    if (r.key.size() > 0xFFFF) throw FormatError("embedding key longer than 65535 bytes");
    if (!seen.emplace(r.key, true).second) throw DuplicateKeyError("duplicate key " + r.key);
    put(r.key.size(), 2);
    out.insert(out.end(), r.key.begin(), r.key.end());
    for (float f : r.values) put(std::bit_cast<std::uint32_t>(f), 4);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::unique_ptr<PrecomputedEmbeddings> load_precomputed(const std::filesystem::path& path,
                                                        std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read embedding file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 6) != 0) {
    throw FormatError(path.string() + ": bad magic, not a SEEMB1 embedding file");
  }
  if (bytes.size() < 18) throw TruncationError(path.string() + ": header truncated");
  std::size_t pos = 6;
  auto get = [&](int n) {
    if (bytes.size() - pos < static_cast<std::size_t>(n)) {
      throw TruncationError(path.string() + ": record data ends early");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  };
  auto result = std::make_unique<PrecomputedEmbeddings>();
  result->dim_ = static_cast<std::size_t>(get(4));
  const std::uint64_t count = get(8);
  if (result->dim_ == 0) throw FormatError(path.string() + ": zero embedding dimension");
  if (expected_dim != 0 && expected_dim != result->dim_) {
    throw FormatError(path.string() + ": dimension " + std::to_string(result->dim_) +
                      " does not match the expected " + std::to_string(expected_dim));
  }
  // Each record needs at least 2 + 4d bytes; reject impossible counts early.
  if (count > (bytes.size() - pos) / (2 + 4 * result->dim_)) {
    throw TruncationError(path.string() + ": header declares " + std::to_string(count) +
                          " records of dimension " + std::to_string(result->dim_) +
                          " but the file is too short");
  }
  result->values_.resize(static_cast<std::size_t>(count) * result->dim_);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto key_len = static_cast<std::size_t>(get(2));
    if (bytes.size() - pos < key_len) throw TruncationError(path.string() + ": key truncated");
    std::string key(reinterpret_cast<const char*>(bytes.data() + pos), key_len);
    pos += key_len;
    float* row = result->values_.data() + r * result->dim_;
    for (std::size_t i = 0; i < result->dim_; ++i) {
      row[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
    }
    if (!result->index_.emplace(key, static_cast<std::size_t>(r)).second) {
      throw DuplicateKeyError(path.string() + ": duplicate key " + key);
    }
  }
  if (pos != bytes.size()) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size() - pos) +
                      " trailing bytes; dimension does not match the header");
  }
  return result;
}

std::vector<double> PrecomputedEmbeddings::embed(std::string_view key, std::string_view) const {
  const float* row = raw(key);
  if (row == nullptr) throw MissingEmbedding(std::string(key));
  return std::vector<double>(row, row + dim_);
}

bool PrecomputedEmbeddings::contains(std::string_view key) const {
  return index_.count(std::string(key)) > 0;
}

const float* PrecomputedEmbeddings::raw(std::string_view key) const {
  auto it = index_.find(std::string(key));
  return it == index_.end() ? nullptr : values_.data() + it->second * dim_;
}

std::vector<std::string> PrecomputedEmbeddings::keys() const {
  std::vector<std::string> out(index_.size());
  for (const auto& [key, row] : index_) out[row] = key;
  return out;
}

Matrix build_features(const CommGraph& g, FeatureMode mode, const EmbeddingProvider& provider) {
  const std::size_t d = provider.dim();
  const auto n = static_cast<Eigen::Index>(g.graph.node_count());
  const bool with_text = mode != FeatureMode::TypeOnly;
  const bool with_type = mode != FeatureMode::TextOnly;
  Matrix x = Matrix::Zero(n, static_cast<Eigen::Index>(feature_dim(mode, d)));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Node& node = g.graph.nodes()[static_cast<std::size_t>(i)];
    Eigen::Index col = 0;
    if (with_text) {
      std::vector<double> e;
      const std::string key = node.key();
      try {
        e = provider.embed(key, node.text());
      } catch (const MissingEmbedding&) {
        throw;
      } catch (const std::exception& ex) {
        throw Error("embedding node " + key + " of question " + std::to_string(g.question_id) +
                    ": " + ex.what());
      }
      if (e.size() != d) {
        throw ShapeError("provider returned " + std::to_string(e.size()) +
                         " components for " + key + ", expected " + std::to_string(d));
      }
      for (std::size_t c = 0; c < d; ++c) {
        if (!std::isfinite(e[c])) throw Error("non-finite embedding component for " + key);
        x(i, col++) = e[c];
      }
    }
    if (with_type) {
      const auto code = type_one_hot(node.label);
      for (double v : code) x(i, col++) = v;
    }
  }
  return x;
}

Matrix select_mode_columns(const Matrix& full, FeatureMode mode) {
  if (full.cols() < static_cast<Eigen::Index>(kTypeDim)) {
    throw ShapeError("select_mode_columns: text+type matrix " + shape_string(full) +
                     " is narrower than the type code");
  }
  const Eigen::Index text_dim = full.cols() - static_cast<Eigen::Index>(kTypeDim);
  switch (mode) {
    case FeatureMode::TextPlusType: return full;
    case FeatureMode::TextOnly: return full.leftCols(text_dim);
    case FeatureMode::TypeOnly: return full.rightCols(static_cast<Eigen::Index>(kTypeDim));
  }
  return full;
}

}  // namespace segnn
