#include "segnn/graph_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "segnn/errors.hpp"

namespace segnn {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("graph record payload ends early");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize(const CommGraph& g) {
  Writer payload;
  payload.u8(kGraphFormatVersion);
  payload.u64(static_cast<std::uint64_t>(g.question_id));
  payload.u8(g.unresolved ? 1 : 0);
  payload.u32(static_cast<std::uint32_t>(g.graph.node_count()));
  for (const Node& n : g.graph.nodes()) {
    payload.u8(static_cast<std::uint8_t>(n.label));
    payload.u32(static_cast<std::uint32_t>(n.props.size()));
    for (const auto& [key, value] : n.props) {
      payload.str(key);
      payload.str(value);
    }
  }
  payload.u32(static_cast<std::uint32_t>(g.graph.edge_count()));
  for (const Edge& e : g.graph.edges()) {
    payload.u8(static_cast<std::uint8_t>(e.label));
    payload.u32(e.source);
    payload.u32(e.target);
  }

  const auto& body = payload.bytes();
  Writer framed;
  framed.u32(static_cast<std::uint32_t>(body.size()));
  auto& out = framed.bytes();
  out.insert(out.end(), body.begin(), body.end());
  framed.u32(crc_of(body));
  return std::move(out);
}

CommGraph deserialize_one(std::span<const std::uint8_t> bytes, std::size_t& consumed) {
  if (bytes.empty()) throw FormatError("empty graph record");
  if (bytes.size() < 4) throw TruncationError("graph record shorter than its length header");
  const std::uint32_t length = read_u32(bytes, 0);
  if (static_cast<std::uint64_t>(length) + 8 > bytes.size()) {
    throw TruncationError("graph record length " + std::to_string(length) + " exceeds the " +
                          std::to_string(bytes.size()) + " available bytes");
  }
  if (length == 0) throw FormatError("graph record with empty payload");
  const auto payload = bytes.subspan(4, length);
  const std::uint32_t stored_crc = read_u32(bytes, 4 + length);
  if (crc_of(payload) != stored_crc) throw ChecksumError("graph record CRC32 mismatch");
  consumed = 8 + static_cast<std::size_t>(length);

  Reader r(payload);
  const std::uint8_t version = r.u8();
  if (version != kGraphFormatVersion) {
    throw VersionError("graph record version " + std::to_string(version) + ", expected " +
                       std::to_string(kGraphFormatVersion));
  }
  CommGraph g;
  g.question_id = static_cast<std::int64_t>(r.u64());
  g.unresolved = r.u8() != 0;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Node node;
    const std::uint8_t label = r.u8();
    if (label > static_cast<std::uint8_t>(NodeLabel::User)) throw FormatError("bad node label");
    node.label = static_cast<NodeLabel>(label);
    const std::uint32_t props = r.u32();
    for (std::uint32_t p = 0; p < props; ++p) {
      std::string key = r.str();
      node.props[std::move(key)] = r.str();
    }
    g.graph.add_node(std::move(node));
  }
  const std::uint32_t m = r.u32();
  for (std::uint32_t i = 0; i < m; ++i) {
    const std::uint8_t label = r.u8();
    if (label > static_cast<std::uint8_t>(EdgeLabel::Comments)) throw FormatError("bad edge label");
    const std::uint32_t s = r.u32();
    const std::uint32_t t = r.u32();
    if (s >= n || t >= n) throw FormatError("edge endpoint out of range");
    g.graph.add_edge(static_cast<EdgeLabel>(label), s, t);
  }
  if (!r.done()) throw FormatError("trailing bytes in graph record payload");
  return g;
}

CommGraph deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  CommGraph g = deserialize_one(bytes, consumed);
  if (consumed != bytes.size()) throw FormatError("trailing bytes after graph record");
  return g;
}

void write_corpus(const std::filesystem::path& dir, const std::string& community,
                  std::span<const CommGraph> graphs, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "graphs.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write " + (dir / "graphs.bin").string());
  std::size_t unresolved = 0;
  for (const auto& g : graphs) {
    const auto bytes = serialize(g);
    bin.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    unresolved += g.unresolved;
  }
  nlohmann::json manifest = {
      {"community", community},
      {"graph_count", graphs.size()},
      {"label_counts", {{"unresolved", unresolved}, {"resolved", graphs.size() - unresolved}}},
      {"format_version", kGraphFormatVersion},
      {"seed", seed},
  };
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

LoadedCorpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw Error("missing corpus manifest " + (dir / "manifest.json").string());
  const auto manifest = nlohmann::json::parse(mf);
  LoadedCorpus corpus;
  corpus.manifest.community = manifest.at("community").get<std::string>();
  corpus.manifest.graph_count = manifest.at("graph_count").get<std::size_t>();
  corpus.manifest.unresolved = manifest.at("label_counts").at("unresolved").get<std::size_t>();
  corpus.manifest.resolved = manifest.at("label_counts").at("resolved").get<std::size_t>();
  corpus.manifest.format_version = manifest.at("format_version").get<int>();
  corpus.manifest.seed = manifest.value("seed", std::uint64_t{0});
  if (corpus.manifest.format_version != kGraphFormatVersion) {
    throw VersionError("corpus format version " +
                       std::to_string(corpus.manifest.format_version));
  }

  std::ifstream bin(dir / "graphs.bin", std::ios::binary);
  if (!bin) throw Error("missing corpus data " + (dir / "graphs.bin").string());
  const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(bin)),
                                       std::istreambuf_iterator<char>());
  std::span<const std::uint8_t> rest(data);
  corpus.graphs.reserve(corpus.manifest.graph_count);
  while (!rest.empty()) {
    std::size_t consumed = 0;
    corpus.graphs.push_back(deserialize_one(rest, consumed));
    rest = rest.subspan(consumed);
  }
  if (corpus.graphs.size() != corpus.manifest.graph_count) {
    throw FormatError("manifest lists " + std::to_string(corpus.manifest.graph_count) +
                      " graphs but graphs.bin holds " + std::to_string(corpus.graphs.size()));
  }
  return corpus;
}

}  // namespace segnn
