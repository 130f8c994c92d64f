#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "segnn/graph.hpp"
#include "segnn/tensor.hpp"

namespace segnn {

enum class FeatureMode { TextPlusType, TextOnly, TypeOnly };

inline constexpr std::size_t kTypeDim = 4;
inline constexpr std::size_t kDefaultTextDim = 384;

// "text+type", "text", "type"
std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view text);
std::size_t feature_dim(FeatureMode mode, std::size_t text_dim);

// Question [0,0,0,1], Answer [0,0,1,0], Comment [0,1,0,0], User [1,0,0,0].
std::array<double, kTypeDim> type_one_hot(NodeLabel label);

// Signed feature hashing of lowercased word unigrams and bigrams, L2
// normalised. Blank text maps to the zero vector.
std::vector<double> hash_embed(std::string_view text, std::size_t dim);

// Text embedding source. Implementations must be deterministic and safe for
// concurrent const calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  // `key` is the node key "<Label>:<id>"; providers may use either argument.
  virtual std::vector<double> embed(std::string_view key, std::string_view text) const = 0;
};

class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dim = kDefaultTextDim);
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(std::string_view key, std::string_view text) const override;

 private:
  std::size_t dim_;
};

struct EmbeddingRecord {
  std::string key;
  std::vector<float> values;
};

// Embedding file: magic "SEEMB1", u32 LE d, u64 LE record count, then per
// record u16 LE key length, UTF-8 key, d x f32 LE. Keys are unique.
void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          std::span<const EmbeddingRecord> records);

// Lookup by node key. Vectors are widened from f32 on load.
class PrecomputedEmbeddings final : public EmbeddingProvider {
 public:
  std::size_t dim() const override { return dim_; }
  // Throws MissingEmbedding naming the key.
  std::vector<double> embed(std::string_view key, std::string_view text) const override;
  bool contains(std::string_view key) const;
  std::size_t size() const { return index_.size(); }
  std::vector<std::string> keys() const;
  const float* raw(std::string_view key) const;

 private:
  friend std::unique_ptr<PrecomputedEmbeddings> load_precomputed(const std::filesystem::path&,
                                                                 std::size_t);
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;  // key -> row
};

// Throws FormatError on bad magic, TruncationError when records do not fit
// the declared dimension/count, DuplicateKeyError on repeated keys, and
// FormatError when expected_dim is non-zero and differs from the header.
std::unique_ptr<PrecomputedEmbeddings> load_precomputed(const std::filesystem::path& path,
                                                        std::size_t expected_dim = 0);

// Row i is the feature vector of node i in graph order: the text embedding,
// the type code, or their concatenation. Provider failures are rethrown with
// the node key in the message (MissingEmbedding keeps its type).
Matrix build_features(const CommGraph& g, FeatureMode mode, const EmbeddingProvider& provider);

// Keeps the columns of a text+type matrix that belong to `mode`.
Matrix select_mode_columns(const Matrix& text_plus_type, FeatureMode mode);

}  // namespace segnn
