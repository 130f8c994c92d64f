#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "segnn/ingest.hpp"

namespace segnn {

// Shape of a generated community. Question, answer, comment and user counts
// default to the sizes of the public Politics, Data Science and Computer
// Science sites; `questions` may be scaled down.
struct CommunityProfile {
  std::string name;
  int foundation_year = 2012;
  int last_year = 2023;
  std::size_t questions = 1000;
  std::size_t users = 3000;
  double answers_per_question = 2.0;  // among questions that get answers
  double comments_per_post = 2.0;
  double answered_bias = 1.0;   // logit offset for getting any answer
  double resolved_bias = 0.0;   // logit offset for acceptance given answers
  double yearly_decline = 0.1;  // acceptance logit lost per year since foundation
  double anonymous_share = 0.03;
  double about_me_share = 0.4;
  std::size_t other_posts = 5;  // tag wikis and similar, not part of any graph
};

CommunityProfile community_profile(std::string_view name);  // "pol", "ds", "cs"
std::vector<std::string> community_names();

// Per-question bookkeeping kept while generating, independent of the graph
// builder.
struct ExpectedGraph {
  std::int64_t question_id = 0;
  int year = 0;
  bool resolved = false;
  std::size_t answers = 0;
  std::size_t comments = 0;
  std::size_t users = 0;  // distinct authors, plus one if any author is anonymous
  std::size_t nodes() const { return 1 + answers + comments + users; }
  std::size_t edges() const { return 1 + 2 * answers + 2 * comments; }
};

struct SyntheticCommunity {
  CommunityProfile profile;
  DumpRecords records;
  CorpusSummary expected;
  std::vector<ExpectedGraph> graphs;  // ascending question id
};

SyntheticCommunity generate_community(const CommunityProfile& profile, std::uint64_t seed);

// Writes Posts.xml, Comments.xml and Users.xml in the dump's row format.
void write_dump_xml(const DumpRecords& records, const std::filesystem::path& dir);

std::string xml_escape(std::string_view text);

}  // namespace segnn
