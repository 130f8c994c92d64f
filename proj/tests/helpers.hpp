#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "segnn/graph.hpp"
#include "segnn/random.hpp"
#include "segnn/synthetic.hpp"
#include "segnn/tensor.hpp"

namespace segnn::test {

inline const std::filesystem::path kFixtures = SEGNN_FIXTURES;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("segnn-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Small synthetic community and its graphs.
struct ToyCorpus {
  SyntheticCommunity community;
  std::vector<CommGraph> graphs;
};

inline ToyCorpus toy_corpus(std::size_t questions, std::uint64_t seed,
                            const std::string& profile = "ds") {
  auto p = community_profile(profile);
  p.users = std::max<std::size_t>(20, questions * 3);
  p.questions = questions;
  ToyCorpus t;
  t.community = generate_community(p, seed);
  t.graphs = build_corpus(t.community.records).graphs;
  return t;
}

}  // namespace segnn::test
