#include "segnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "segnn/errors.hpp"

namespace segnn {

namespace {

constexpr char kMagic[6] = {'S', 'E', 'G', 'N', 'N', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

}  // namespace

std::vector<std::uint8_t> checkpoint_bytes(const nlohmann::json& header,
                                           std::span<const Parameter* const> params) {
  nlohmann::json full = header;
  full["parameters"] = nlohmann::json::array();
  for (const Parameter* p : params) {
    full["parameters"].push_back(
        {{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const std::string text = full.dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_f64(out, p->value.data()[i]);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const Parameter* const> params) {
  const auto bytes = checkpoint_bytes(header, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

CheckpointData parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0) {
    throw FormatError("not a SEGNN1 checkpoint");
  }
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) header_len |= static_cast<std::uint32_t>(bytes[6 + i]) << (8 * i);
  if (10 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw TruncationError("checkpoint header overruns the file");
  }
  CheckpointData data;
  data.header = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + header_len);
  std::size_t pos = 10 + header_len;
  for (const auto& entry : data.header.at("parameters")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    Matrix m(rows, cols);
    const auto count = static_cast<std::size_t>(rows * cols);
    if (bytes.size() - pos < count * 8) throw TruncationError("checkpoint data ends early");
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
      m.data()[i] = std::bit_cast<double>(bits);
      pos += 8;
    }
    data.blocks.emplace_back(entry.at("name").get<std::string>(), std::move(m));
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint data");
  return data;
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void restore_parameters(const CheckpointData& data, std::span<Parameter* const> params) {
  if (data.blocks.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(data.blocks.size()) +
                      " blocks, model declares " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& src = data.blocks[i];
    Parameter& dst = *params[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() ||
        src.value.cols() != dst.value.cols()) {
      throw FormatError("checkpoint block " + src.name + " " + shape_string(src.value) +
                        " does not match parameter " + dst.name + " " +
                        shape_string(dst.value));
    }
    dst.value = src.value;
  }
}

}  // namespace segnn
