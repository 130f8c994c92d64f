#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "segnn/graph.hpp"

namespace segnn {

inline constexpr std::uint8_t kGraphFormatVersion = 1;

// One framed record: u32 LE payload length, payload, u32 LE CRC32 of the
// payload. The payload starts with the format version byte.
std::vector<std::uint8_t> serialize(const CommGraph& g);

// Parses one framed record. Throws FormatError on empty input,
// TruncationError when the length header overruns the buffer, ChecksumError
// on CRC mismatch and VersionError on an unknown version byte.
CommGraph deserialize(std::span<const std::uint8_t> bytes);

// Same as deserialize, reporting how many bytes the record occupied.
CommGraph deserialize_one(std::span<const std::uint8_t> bytes, std::size_t& consumed);

struct CorpusManifest {
  std::string community;
  std::size_t graph_count = 0;
  std::size_t unresolved = 0;
  std::size_t resolved = 0;
  int format_version = kGraphFormatVersion;
  std::uint64_t seed = 0;
};

// Writes <dir>/graphs.bin and <dir>/manifest.json.
void write_corpus(const std::filesystem::path& dir, const std::string& community,
                  std::span<const CommGraph> graphs, std::uint64_t seed = 0);

struct LoadedCorpus {
  CorpusManifest manifest;
  std::vector<CommGraph> graphs;
};

LoadedCorpus read_corpus(const std::filesystem::path& dir);

}  // namespace segnn
