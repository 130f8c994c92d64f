#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace segnn {

// Milliseconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t millis = 0;

  // Accepts the dump format "YYYY-MM-DDTHH:MM:SS[.fff][Z]".
  static std::optional<Timestamp> parse(std::string_view text);
  std::string to_string() const;
  int year() const;

  auto operator<=>(const Timestamp&) const = default;
};

enum class PostType { Question, Answer, Other };

struct PostRecord {
  std::int64_t id = 0;
  PostType post_type = PostType::Other;
  int post_type_id = 0;  // raw PostTypeId
  std::optional<std::int64_t> parent_id;
  std::optional<std::int64_t> accepted_answer_id;
  std::optional<std::int64_t> owner_user_id;
  std::optional<std::string> title;
  std::string body_html;
  Timestamp creation_date;
  std::vector<std::string> tags;

  bool operator==(const PostRecord&) const = default;
};

struct CommentRecord {
  std::int64_t id = 0;
  std::int64_t post_id = 0;
  std::optional<std::int64_t> user_id;
  std::string text;
  Timestamp creation_date;

  bool operator==(const CommentRecord&) const = default;
};

struct UserRecord {
  std::int64_t id = 0;
  std::optional<std::string> about_me_html;

  bool operator==(const UserRecord&) const = default;
};

// A row that could not be turned into a record; the row is skipped.
struct RowIssue {
  std::size_t offset = 0;
  std::string message;
};

template <typename Record>
struct ParseOutcome {
  std::vector<Record> records;
  std::vector<RowIssue> skipped;
};

ParseOutcome<PostRecord> parse_posts(std::istream& xml);
ParseOutcome<CommentRecord> parse_comments(std::istream& xml);
ParseOutcome<UserRecord> parse_users(std::istream& xml);

// Splits both tag encodings used by the dumps: "<a><b>" and "|a|b|".
std::vector<std::string> parse_tags(std::string_view raw);

// Plain text of an HTML fragment. Tags are dropped, entities decoded and
// whitespace runs collapsed to one space. Text inside <pre>/<code> is kept.
std::string strip_html(std::string_view html);

// Collapses whitespace runs to single spaces and trims both ends.
std::string collapse_whitespace(std::string_view text);

// Lookup of posts by id.
class PostIndex {
 public:
  PostIndex() = default;
  explicit PostIndex(std::span<const PostRecord> posts);
  const PostRecord* find(std::int64_t id) const;

 private:
  std::unordered_map<std::int64_t, const PostRecord*> by_id_;
};

// True iff the question's accepted answer exists and answers this question.
// Throws InvalidArgument if q is not a question.
bool resolved_label(const PostRecord& q, const PostIndex& posts);

struct DumpRecords {
  std::vector<PostRecord> posts;
  std::vector<CommentRecord> comments;
  std::vector<UserRecord> users;
  std::size_t skipped_posts = 0;
  std::size_t skipped_comments = 0;
  std::size_t skipped_users = 0;
  std::vector<RowIssue> issues;  // first few row issues across all files
};

struct CorpusSummary {
  std::size_t n_questions = 0;
  std::size_t n_answers = 0;
  std::size_t n_comments = 0;
  std::size_t n_users = 0;
  std::size_t n_resolved = 0;
  double pct_resolved = 0.0;  // fraction in [0, 1]
  int foundation_year = 0;
  std::size_t orphan_comments = 0;        // post_id not found among posts
  std::size_t dangling_accepted = 0;      // accepted id missing or foreign
};

CorpusSummary summarize_corpus(const DumpRecords& records);

// Reads Posts.xml, Comments.xml and Users.xml from an extracted dump directory.
DumpRecords ingest_directory(const std::filesystem::path& dir);

nlohmann::json ingestion_report(const DumpRecords& records, const CorpusSummary& summary);

// Record persistence between pipeline stages (one JSON object per line).
void write_records_jsonl(const DumpRecords& records, const std::filesystem::path& dir);
DumpRecords read_records_jsonl(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const PostRecord& p);
void from_json(const nlohmann::json& j, PostRecord& p);
void to_json(nlohmann::json& j, const CommentRecord& c);
void from_json(const nlohmann::json& j, CommentRecord& c);
void to_json(nlohmann::json& j, const UserRecord& u);
void from_json(const nlohmann::json& j, UserRecord& u);

}  // namespace segnn
