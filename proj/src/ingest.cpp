#include "segnn/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "segnn/errors.hpp"
#include "segnn/xml_rows.hpp"

namespace segnn {

namespace {

constexpr std::size_t kMaxReportedIssues = 20;

bool parse_int(std::string_view text, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
  return ec == std::errc() && ptr == text.data() + pos + len;
}

// Reads an optional integer attribute. A present but non-numeric value is an
// error reported through `problem`.
std::optional<std::int64_t> optional_int(const XmlRow& row, std::string_view name,
                                         std::string& problem) {
  const std::string* value = row.find(name);
  if (value == nullptr || value->empty()) return std::nullopt;
  std::int64_t parsed = 0;
  if (!parse_int(*value, parsed)) {
    problem = "attribute " + std::string(name) + " is not an integer";
    return std::nullopt;
  }
  return parsed;
}

bool required_int(const XmlRow& row, std::string_view name, std::int64_t& out,
                  std::string& problem) {
  const std::string* value = row.find(name);
  if (value == nullptr) {
    problem = "missing mandatory attribute " + std::string(name);
    return false;
  }
  if (!parse_int(*value, out)) {
    problem = "attribute " + std::string(name) + " is not an integer";
    return false;
  }
  return true;
}

bool required_timestamp(const XmlRow& row, Timestamp& out, std::string& problem) {
  const std::string* value = row.find("CreationDate");
  if (value == nullptr) {
    problem = "missing mandatory attribute CreationDate";
    return false;
  }
  auto parsed = Timestamp::parse(*value);
  if (!parsed) {
    problem = "malformed CreationDate '" + *value + "'";
    return false;
  }
  out = *parsed;
  return true;
}

template <typename Record, typename Convert>
ParseOutcome<Record> parse_rows(std::istream& xml, Convert convert) {
  ParseOutcome<Record> outcome;
  XmlRowReader reader(xml);
  XmlRow row;
  while (reader.next(row)) {
    std::string problem;
    Record record;
    if (convert(row, record, problem)) {
      outcome.records.push_back(std::move(record));
    } else {
      outcome.skipped.push_back({row.offset, problem});
    }
  }
  return outcome;
}

bool is_block_tag(std::string_view name) {
  static constexpr std::string_view kInline[] = {
      "a", "b", "i", "em", "strong", "code", "span", "sup", "sub", "strike", "s",
      "kbd", "u", "del", "ins", "abbr", "small", "big", "tt", "mark", "q", "cite"};
  return std::find(std::begin(kInline), std::end(kInline), name) == std::end(kInline);
}

bool decode_html_entity(std::string_view ref, std::string& out) {
  struct Named {
    std::string_view name;
    char32_t cp;
  };
  static constexpr Named kNamed[] = {
      {"amp", U'&'},      {"lt", U'<'},        {"gt", U'>'},        {"quot", U'"'},
      {"apos", U'\''},    {"nbsp", U' '},      {"hellip", U'…'}, {"mdash", U'—'},
      {"ndash", U'–'}, {"rsquo", U'’'}, {"lsquo", U'‘'}, {"ldquo", U'“'},
      {"rdquo", U'”'}, {"copy", U'©'}, {"times", U'×'}, {"middot", U'·'}};
  if (ref.size() >= 2 && ref[0] == '#') {
    const bool hex = ref[1] == 'x' || ref[1] == 'X';
    const std::string_view digits = ref.substr(hex ? 2 : 1);
    std::uint32_t cp = 0;
    auto [ptr, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() ||
        cp > 0x10FFFF) {
      return false;
    }
    append_utf8(out, cp == 0xA0 ? U' ' : static_cast<char32_t>(cp));
    return true;
  }
  for (const auto& named : kNamed) {
    if (named.name == ref) {
      append_utf8(out, named.cp);
      return true;
    }
  }
  return false;
}

}  // namespace

std::optional<Timestamp> Timestamp::parse(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, ms = 0;
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  if (!parse_fixed(text, 0, 4, y) || !parse_fixed(text, 5, 2, mo) ||
      !parse_fixed(text, 8, 2, d) || !parse_fixed(text, 11, 2, h) ||
      !parse_fixed(text, 14, 2, mi) || !parse_fixed(text, 17, 2, s)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (digits < 3) ms = ms * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int k = digits; k < 3; ++k) ms *= 10;
  }
  if (pos < text.size() && text[pos] == 'Z') ++pos;
  if (pos != text.size()) return std::nullopt;

  namespace chr = std::chrono;
  const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(mo)},
                                chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
  const auto when = chr::sys_days{ymd} + chr::hours{h} + chr::minutes{mi} + chr::seconds{s} +
                    chr::milliseconds{ms};
  return Timestamp{chr::duration_cast<chr::milliseconds>(when.time_since_epoch()).count()};
}

int Timestamp::year() const {
  using namespace std::chrono;
  const sys_days day_point = floor<days>(sys_time<milliseconds>{milliseconds{millis}});
  return static_cast<int>(year_month_day{day_point}.year());
}

std::string Timestamp::to_string() const {
  using namespace std::chrono;
  const sys_time<milliseconds> tp{milliseconds{millis}};
  const sys_days day_point = floor<days>(tp);
  const year_month_day ymd{day_point};
  const hh_mm_ss<milliseconds> tod{tp - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03d",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(tod.hours().count()),
                static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()),
                static_cast<int>(tod.subseconds().count()));
  return buf;
}

std::vector<std::string> parse_tags(std::string_view raw) {
  std::vector<std::string> tags;
  if (raw.empty()) return tags;
  if (raw.front() == '<') {
    std::size_t pos = 0;
    while ((pos = raw.find('<', pos)) != std::string_view::npos) {
      const std::size_t close = raw.find('>', pos);
      if (close == std::string_view::npos) break;
      if (close > pos + 1) tags.emplace_back(raw.substr(pos + 1, close - pos - 1));
      pos = close + 1;
    }
  } else {
    std::size_t start = 0;
    while (start <= raw.size()) {
      std::size_t bar = raw.find('|', start);
      if (bar == std::string_view::npos) bar = raw.size();
      if (bar > start) tags.emplace_back(raw.substr(start, bar - start));
      start = bar + 1;
    }
  }
  return tags;
}

ParseOutcome<PostRecord> parse_posts(std::istream& xml) {
  return parse_rows<PostRecord>(xml, [](const XmlRow& row, PostRecord& p, std::string& problem) {
    std::int64_t type_id = 0;
    if (!required_int(row, "Id", p.id, problem)) return false;
    if (!required_int(row, "PostTypeId", type_id, problem)) return false;
    if (!required_timestamp(row, p.creation_date, problem)) return false;
    p.post_type_id = static_cast<int>(type_id);
    p.post_type = type_id == 1   ? PostType::Question
                  : type_id == 2 ? PostType::Answer
                                 : PostType::Other;
    p.parent_id = optional_int(row, "ParentId", problem);
    p.accepted_answer_id = optional_int(row, "AcceptedAnswerId", problem);
    p.owner_user_id = optional_int(row, "OwnerUserId", problem);
    if (!problem.empty()) return false;
    if (p.post_type == PostType::Answer && !p.parent_id) {
      problem = "answer without ParentId";
      return false;
    }
    if (p.post_type == PostType::Question) p.parent_id.reset();
    if (p.post_type != PostType::Question) p.accepted_answer_id.reset();
    if (const std::string* title = row.find("Title")) p.title = *title;
    if (const std::string* body = row.find("Body")) p.body_html = *body;
    if (const std::string* tags = row.find("Tags")) p.tags = parse_tags(*tags);
    return true;
  });
}

ParseOutcome<CommentRecord> parse_comments(std::istream& xml) {
  return parse_rows<CommentRecord>(
      xml, [](const XmlRow& row, CommentRecord& c, std::string& problem) {
        if (!required_int(row, "Id", c.id, problem)) return false;
        if (!required_int(row, "PostId", c.post_id, problem)) return false;
        if (!required_timestamp(row, c.creation_date, problem)) return false;
        c.user_id = optional_int(row, "UserId", problem);
        if (!problem.empty()) return false;
        if (const std::string* text = row.find("Text")) c.text = *text;
        return true;
      });
}

ParseOutcome<UserRecord> parse_users(std::istream& xml) {
  return parse_rows<UserRecord>(xml, [](const XmlRow& row, UserRecord& u, std::string& problem) {
    if (!required_int(row, "Id", u.id, problem)) return false;
    if (const std::string* about = row.find("AboutMe")) u.about_me_html = *about;
    return true;
  });
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string strip_html(std::string_view html) {
  std::string text;
  text.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    const char c = html[i];
    if (c == '<' && i + 1 < html.size()) {
      const char n = html[i + 1];
      if (html.substr(i, 4) == "<!--") {
        const std::size_t end = html.find("-->", i + 4);
        i = end == std::string_view::npos ? html.size() : end + 3;
        continue;
      }
      const bool tag_like = std::isalpha(static_cast<unsigned char>(n)) || n == '/' ||
                            n == '!' || n == '?';
      const std::size_t close = tag_like ? html.find('>', i + 1) : std::string_view::npos;
      if (close != std::string_view::npos) {
        std::size_t name_start = i + 1 + (n == '/' ? 1 : 0);
        std::size_t name_end = name_start;
        while (name_end < close && std::isalnum(static_cast<unsigned char>(html[name_end]))) {
          ++name_end;
        }
        std::string name(html.substr(name_start, name_end - name_start));
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (is_block_tag(name)) text.push_back(' ');
        i = close + 1;
        continue;
      }
      // Unclosed tag: keep the bracket as text.
    }
    if (c == '&') {
      const std::size_t semi = html.find(';', i + 1);
      if (semi != std::string_view::npos && semi - i <= 10 &&
          decode_html_entity(html.substr(i + 1, semi - i - 1), text)) {
        i = semi + 1;
        continue;
      }
    }
    text.push_back(c);
    ++i;
  }
  return collapse_whitespace(text);
}

PostIndex::PostIndex(std::span<const PostRecord> posts) {
  by_id_.reserve(posts.size());
  for (const auto& p : posts) by_id_.emplace(p.id, &p);
}

const PostRecord* PostIndex::find(std::int64_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : it->second;
}

bool resolved_label(const PostRecord& q, const PostIndex& posts) {
  if (q.post_type != PostType::Question) {
    throw InvalidArgument("resolved_label: post " + std::to_string(q.id) +
                          " is not a question");
  }
  if (!q.accepted_answer_id) return false;
  const PostRecord* answer = posts.find(*q.accepted_answer_id);
  return answer != nullptr && answer->post_type == PostType::Answer &&
         answer->parent_id == q.id;
}

CorpusSummary summarize_corpus(const DumpRecords& records) {
  CorpusSummary s;
  const PostIndex index(records.posts);
  std::optional<Timestamp> earliest;
  for (const auto& p : records.posts) {
    if (!earliest || p.creation_date < *earliest) earliest = p.creation_date;
    if (p.post_type == PostType::Question) {
      ++s.n_questions;
      if (resolved_label(p, index)) {
        ++s.n_resolved;
      } else if (p.accepted_answer_id) {
        ++s.dangling_accepted;
      }
    } else if (p.post_type == PostType::Answer) {
      ++s.n_answers;
    }
  }
  s.n_comments = records.comments.size();
  s.n_users = records.users.size();
  for (const auto& c : records.comments) {
    if (index.find(c.post_id) == nullptr) ++s.orphan_comments;
  }
  s.pct_resolved = s.n_questions == 0
                       ? 0.0
                       : static_cast<double>(s.n_resolved) / static_cast<double>(s.n_questions);
  s.foundation_year = earliest ? earliest->year() : 0;
  return s;
}

DumpRecords ingest_directory(const std::filesystem::path& dir) {
  DumpRecords out;
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw Error("cannot open " + (dir / name).string());
    return in;
  };
  auto keep_issues = [&](const std::vector<RowIssue>& issues, const char* file) {
    for (const auto& issue : issues) {
      if (out.issues.size() >= kMaxReportedIssues) break;
      out.issues.push_back({issue.offset, std::string(file) + ": " + issue.message});
    }
  };
  {
    auto in = open("Posts.xml");
    auto parsed = parse_posts(in);
    out.posts = std::move(parsed.records);
    out.skipped_posts = parsed.skipped.size();
    keep_issues(parsed.skipped, "Posts.xml");
  }
  {
    auto in = open("Comments.xml");
    auto parsed = parse_comments(in);
    out.comments = std::move(parsed.records);
    out.skipped_comments = parsed.skipped.size();
    keep_issues(parsed.skipped, "Comments.xml");
  }
  {
    auto in = open("Users.xml");
    auto parsed = parse_users(in);
    out.users = std::move(parsed.records);
    out.skipped_users = parsed.skipped.size();
    keep_issues(parsed.skipped, "Users.xml");
  }
  return out;
}

nlohmann::json ingestion_report(const DumpRecords& records, const CorpusSummary& summary) {
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& issue : records.issues) {
    issues.push_back({{"offset", issue.offset}, {"message", issue.message}});
  }
  return {
      {"counts",
       {{"questions", summary.n_questions},
        {"answers", summary.n_answers},
        {"comments", summary.n_comments},
        {"users", summary.n_users},
        {"resolved", summary.n_resolved}}},
      {"pct_resolved", summary.pct_resolved},
      {"foundation_year", summary.foundation_year},
      {"orphan_comments", summary.orphan_comments},
      {"dangling_accepted_answers", summary.dangling_accepted},
      {"other_posts", records.posts.size() - summary.n_questions - summary.n_answers},
      {"skipped_rows",
       {{"posts", records.skipped_posts},
        {"comments", records.skipped_comments},
        {"users", records.skipped_users}}},
      {"row_issues", issues},
  };
}

namespace {

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& value) {
  auto it = j.find(key);
  if (it != j.end()) value = it->template get<T>();
}

template <typename Record>
void write_jsonl(const std::vector<Record>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

template <typename Record>
std::vector<Record> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<Record> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(nlohmann::json::parse(line).get<Record>());
  }
  return records;
}

}  // namespace

void to_json(nlohmann::json& j, const PostRecord& p) {
  j = {{"id", p.id}, {"type", p.post_type_id}, {"created", p.creation_date.millis},
       {"body", p.body_html}, {"tags", p.tags}};
  put_optional(j, "parent", p.parent_id);
  put_optional(j, "accepted", p.accepted_answer_id);
  put_optional(j, "owner", p.owner_user_id);
  put_optional(j, "title", p.title);
}

void from_json(const nlohmann::json& j, PostRecord& p) {
  p = PostRecord{};
  p.id = j.at("id").get<std::int64_t>();
  p.post_type_id = j.at("type").get<int>();
  p.post_type = p.post_type_id == 1   ? PostType::Question
                : p.post_type_id == 2 ? PostType::Answer
                                      : PostType::Other;
  p.creation_date.millis = j.at("created").get<std::int64_t>();
  p.body_html = j.at("body").get<std::string>();
  p.tags = j.at("tags").get<std::vector<std::string>>();
  get_optional(j, "parent", p.parent_id);
  get_optional(j, "accepted", p.accepted_answer_id);
  get_optional(j, "owner", p.owner_user_id);
  get_optional(j, "title", p.title);
}

void to_json(nlohmann::json& j, const CommentRecord& c) {
  j = {{"id", c.id}, {"post", c.post_id}, {"text", c.text}, {"created", c.creation_date.millis}};
  put_optional(j, "user", c.user_id);
}

void from_json(const nlohmann::json& j, CommentRecord& c) {
  c = CommentRecord{};
  c.id = j.at("id").get<std::int64_t>();
  c.post_id = j.at("post").get<std::int64_t>();
  c.text = j.at("text").get<std::string>();
  c.creation_date.millis = j.at("created").get<std::int64_t>();
  get_optional(j, "user", c.user_id);
}

void to_json(nlohmann::json& j, const UserRecord& u) {
  j = {{"id", u.id}};
  put_optional(j, "about", u.about_me_html);
}

void from_json(const nlohmann::json& j, UserRecord& u) {
  u = UserRecord{};
  u.id = j.at("id").get<std::int64_t>();
  get_optional(j, "about", u.about_me_html);
}

void write_records_jsonl(const DumpRecords& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(records.posts, dir / "posts.jsonl");
  write_jsonl(records.comments, dir / "comments.jsonl");
  write_jsonl(records.users, dir / "users.jsonl");
}

DumpRecords read_records_jsonl(const std::filesystem::path& dir) {
  DumpRecords records;
  records.posts = read_jsonl<PostRecord>(dir / "posts.jsonl");
  records.comments = read_jsonl<CommentRecord>(dir / "comments.jsonl");
  records.users = read_jsonl<UserRecord>(dir / "users.jsonl");
  return records;
}

}  // namespace segnn
