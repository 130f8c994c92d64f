#include "segnn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "segnn/errors.hpp"
#include "segnn/random.hpp"

namespace segnn {

namespace chr = std::chrono;

namespace {

constexpr std::array<std::string_view, 8> kClearWords{
    "example", "error", "traceback", "version", "tried", "minimal", "reproduce", "output"};
constexpr std::array<std::string_view, 8> kVagueWords{
    "opinion", "best", "anyone", "ideas", "general", "thoughts", "recommend", "possible"};
constexpr std::array<std::string_view, 8> kStrongAnswerWords{
    "solution", "works", "because", "documentation", "fixed", "explained", "verified", "steps"};
constexpr std::array<std::string_view, 8> kWeakAnswerWords{
    "maybe", "perhaps", "guess", "unsure", "might", "unclear", "possibly", "vaguely"};
constexpr std::array<std::string_view, 6> kThanksWords{"thanks", "worked", "perfect",
                                                       "accepted", "great", "helped"};
constexpr std::array<std::string_view, 6> kStillWords{"still", "failing", "same",
                                                      "problem", "unchanged", "update"};
constexpr std::array<std::string_view, 12> kSyllables{"ka", "lo", "mi",  "ne", "ru", "ta",
                                                      "shi", "vo", "pe", "dan", "el", "or"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t poisson(Rng& rng, double lambda) {
  if (lambda <= 0) return 0;
  if (lambda > 60) {
    return static_cast<std::uint64_t>(std::max(0.0, std::round(lambda + std::sqrt(lambda) * rng.normal())));
  }
  const double limit = std::exp(-lambda);
  double p = rng.uniform();
  std::uint64_t k = 0;
  while (p > limit) {
    p *= rng.uniform();
    ++k;
  }
  return k;
}

// Over-dispersed count with the given mean (exponential mixture of Poissons).
std::uint64_t heavy_count(Rng& rng, double mean) {
  return poisson(rng, -mean * std::log(1.0 - rng.uniform()));
}

class Words {
 public:
  explicit Words(std::string_view topic) {
    for (std::size_t i = 0; i < 600; ++i) {
      std::string w(topic.substr(0, 1));
      std::size_t v = i + 13;
      for (int s = 0; s < 3; ++s) {
        w += kSyllables[v % kSyllables.size()];
        v /= kSyllables.size();
      }
      vocab_.push_back(w);
    }
  }

  void append(std::string& text, Rng& rng, std::size_t count) const {
    for (std::size_t i = 0; i < count; ++i) {
      const double u = rng.uniform();
      const auto idx = static_cast<std::size_t>(u * u * static_cast<double>(vocab_.size()));
      add(text, vocab_[std::min(idx, vocab_.size() - 1)]);
    }
  }

  template <std::size_t N>
  static void pick(std::string& text, Rng& rng, const std::array<std::string_view, N>& set) {
    add(text, set[rng.below(N)]);
  }

  static void add(std::string& text, std::string_view word) {
    if (!text.empty()) text += ' ';
    text += word;
  }

 private:
  std::vector<std::string> vocab_;
};

Timestamp random_time_in_year(Rng& rng, int year) {
  const chr::sys_days start{chr::year{year} / chr::January / 1};
  const chr::sys_days end{chr::year{year + 1} / chr::January / 1};
  const auto span_ms = chr::duration_cast<chr::milliseconds>(end - start).count();
  const auto offset = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span_ms)));
  const auto base = chr::duration_cast<chr::milliseconds>(start.time_since_epoch()).count();
  // Whole seconds keep the dump text form short.
  return Timestamp{base + offset / 1000 * 1000};
}

Timestamp later(Rng& rng, Timestamp t, double mean_hours) {
  const double hours = -mean_hours * std::log(1.0 - rng.uniform());
  return Timestamp{t.millis + 1000 * static_cast<std::int64_t>(1 + hours * 3600.0)};
}

}  // namespace

std::vector<std::string> community_names() { return {"pol", "ds", "cs"}; }

CommunityProfile community_profile(std::string_view name) {
  CommunityProfile p;
  p.name = std::string(name);
  if (name == "pol") {
    p.foundation_year = 2012;
    p.questions = 11853;
    p.users = 31242;
    p.answers_per_question = 2.35;
    p.comments_per_post = 3.3;
    p.answered_bias = 2.2;
    p.resolved_bias = 1.0;
    p.yearly_decline = 0.12;
  } else if (name == "ds") {
    p.foundation_year = 2014;
    p.questions = 28768;
    p.users = 100582;
    p.answers_per_question = 1.55;
    p.comments_per_post = 0.85;
    p.answered_bias = 1.1;
    p.resolved_bias = 0.1;
    p.yearly_decline = 0.12;
  } else if (name == "cs") {
    p.foundation_year = 2008;
    p.questions = 39794;
    p.users = 113434;
    p.answers_per_question = 1.45;
    p.comments_per_post = 1.3;
    p.answered_bias = 1.6;
    p.resolved_bias = 0.75;
    p.yearly_decline = 0.08;
  } else {
    throw InvalidArgument("unknown community '" + std::string(name) + "' (expected pol, ds or cs)");
  }
  return p;
}

SyntheticCommunity generate_community(const CommunityProfile& profile, std::uint64_t seed) {
  if (profile.questions == 0 || profile.users == 0) {
    throw InvalidArgument("synthetic community needs questions and users");
  }
  if (profile.last_year < profile.foundation_year) {
    throw InvalidArgument("synthetic community: last year before foundation year");
  }
  SyntheticCommunity out;
  out.profile = profile;
  Rng rng(derive_seed(seed, "synthetic/" + profile.name));
  const Words words(profile.name);
  DumpRecords& rec = out.records;

  for (std::size_t u = 1; u <= profile.users; ++u) {
    UserRecord user;
    user.id = static_cast<std::int64_t>(u);
    if (rng.bernoulli(profile.about_me_share)) {
      std::string about;
      words.append(about, rng, 3 + rng.below(15));
      user.about_me_html = "<p>" + about + " &amp; more</p>";
    }
    rec.users.push_back(std::move(user));
  }
  auto random_user = [&]() -> std::optional<std::int64_t> {
    if (rng.bernoulli(profile.anonymous_share)) return std::nullopt;
    return static_cast<std::int64_t>(1 + rng.below(profile.users));
  };

  const int years = profile.last_year - profile.foundation_year + 1;
  std::vector<Timestamp> question_times;
  for (std::size_t q = 0; q < profile.questions; ++q) {
    const int year = q == 0 ? profile.foundation_year
                            : profile.foundation_year + static_cast<int>(rng.below(years));
    question_times.push_back(random_time_in_year(rng, year));
  }
  std::sort(question_times.begin(), question_times.end());

  std::int64_t next_post = 1;
  std::int64_t next_comment = 1;
  for (const Timestamp& asked : question_times) {
    ExpectedGraph expected;
    const int year = asked.year();
    expected.year = year;
    const double quality = rng.normal();

    PostRecord q;
    q.id = next_post++;
    q.post_type = PostType::Question;
    q.post_type_id = 1;
    q.owner_user_id = random_user();
    q.creation_date = asked;
    std::string title;
    words.append(title, rng, 4 + rng.below(6));
    q.title = title;
    std::string body;
    words.append(body, rng, 20 + rng.below(40));
    const std::size_t signals = 2 + rng.below(3);
    for (std::size_t s = 0; s < signals; ++s) {
      if (rng.bernoulli(sigmoid(0.8 * quality))) {
        Words::pick(body, rng, kClearWords);
      } else {
        Words::pick(body, rng, kVagueWords);
      }
    }
    q.body_html = "<p>" + body + "</p>";
    q.tags = {profile.name, "topic" + std::to_string(rng.below(20))};
    expected.question_id = q.id;

    const bool answered = rng.bernoulli(sigmoid(profile.answered_bias + quality));
    const double decline = profile.yearly_decline * (year - profile.foundation_year);
    const bool resolved =
        answered && rng.bernoulli(sigmoid(profile.resolved_bias + quality - decline));
    std::size_t n_answers = 0;
    if (answered) n_answers = 1 + heavy_count(rng, profile.answers_per_question - 1.0);
    const std::size_t accepted = resolved ? rng.below(n_answers) : n_answers;

    std::vector<PostRecord> answers;
    for (std::size_t a = 0; a < n_answers; ++a) {
      PostRecord ans;
      ans.id = next_post++;
      ans.post_type = PostType::Answer;
      ans.post_type_id = 2;
      ans.parent_id = q.id;
      ans.owner_user_id = random_user();
      ans.creation_date = later(rng, asked, 24);
      std::string text;
      words.append(text, rng, 15 + rng.below(35));
      const bool strong = rng.bernoulli(a == accepted ? 0.85 : 0.25);
      for (int s = 0; s < 3; ++s) {
        if (strong) {
          Words::pick(text, rng, kStrongAnswerWords);
        } else {
          Words::pick(text, rng, kWeakAnswerWords);
        }
      }
      ans.body_html = "<p>" + text + "</p><pre><code>x = " + std::to_string(a) + "</code></pre>";
      answers.push_back(std::move(ans));
    }
    if (resolved) q.accepted_answer_id = answers[accepted].id;

    std::vector<CommentRecord> comments;
    auto add_comment = [&](const PostRecord& target, std::optional<std::int64_t> author,
                           std::string text) {
      CommentRecord c;
      c.id = next_comment++;
      c.post_id = target.id;
      c.user_id = author;
      c.text = std::move(text);
      c.creation_date = later(rng, target.creation_date, 12);
      comments.push_back(std::move(c));
    };
    auto chatter = [&](const PostRecord& target) {
      const std::size_t n = heavy_count(rng, profile.comments_per_post);
      for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        words.append(text, rng, 5 + rng.below(12));
        add_comment(target, rng.bernoulli(0.25) ? target.owner_user_id : random_user(), text);
      }
    };
    chatter(q);
    for (const auto& a : answers) chatter(a);
    if (resolved && rng.bernoulli(0.6)) {
      std::string text;
      for (int s = 0; s < 3; ++s) Words::pick(text, rng, kThanksWords);
      add_comment(answers[accepted], q.owner_user_id, text);
    }
    if (!resolved && answered && rng.bernoulli(0.35)) {
      std::string text;
      for (int s = 0; s < 3; ++s) Words::pick(text, rng, kStillWords);
      add_comment(answers[rng.below(answers.size())], q.owner_user_id, text);
    }
    if (!resolved && rng.bernoulli(0.25)) {
      std::string text;
      for (int s = 0; s < 2; ++s) Words::pick(text, rng, kStillWords);
      words.append(text, rng, 4);
      add_comment(q, q.owner_user_id, text);
    }

    std::set<std::int64_t> authors;
    bool anonymous = false;
    auto note = [&](const std::optional<std::int64_t>& id) {
      if (id) {
        authors.insert(*id);
      } else {
        anonymous = true;
      }
    };
    note(q.owner_user_id);
    for (const auto& a : answers) note(a.owner_user_id);
    for (const auto& c : comments) note(c.user_id);
    expected.answers = answers.size();
    expected.comments = comments.size();
    expected.users = authors.size() + (anonymous ? 1 : 0);
    expected.resolved = resolved;

    out.expected.n_questions += 1;
    out.expected.n_answers += answers.size();
    out.expected.n_comments += comments.size();
    out.expected.n_resolved += resolved ? 1 : 0;
    rec.posts.push_back(std::move(q));
    for (auto& a : answers) rec.posts.push_back(std::move(a));
    for (auto& c : comments) rec.comments.push_back(std::move(c));
    out.graphs.push_back(expected);
  }

  for (std::size_t i = 0; i < profile.other_posts; ++i) {
    PostRecord wiki;
    wiki.id = next_post++;
    wiki.post_type = PostType::Other;
    wiki.post_type_id = 4 + static_cast<int>(i % 2);
    wiki.creation_date = random_time_in_year(rng, profile.last_year);
    wiki.body_html = "<p>tag wiki</p>";
    rec.posts.push_back(std::move(wiki));
  }

  out.expected.n_users = profile.users;
  out.expected.pct_resolved =
      static_cast<double>(out.expected.n_resolved) / static_cast<double>(out.expected.n_questions);
  out.expected.foundation_year = profile.foundation_year;
  return out;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#xA;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_dump_xml(const DumpRecords& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc | std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    f << "\xEF\xBB\xBF<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
    return f;
  };
  auto attr = [](std::ostream& o, const char* name, std::string_view value) {
    o << ' ' << name << "=\"" << xml_escape(value) << '"';
  };
  {
    auto f = open("Posts.xml");
    f << "<posts>\n";
    for (const auto& p : records.posts) {
      f << "  <row";
      attr(f, "Id", std::to_string(p.id));
      attr(f, "PostTypeId", std::to_string(p.post_type_id));
      if (p.parent_id) attr(f, "ParentId", std::to_string(*p.parent_id));
      if (p.accepted_answer_id) attr(f, "AcceptedAnswerId", std::to_string(*p.accepted_answer_id));
      attr(f, "CreationDate", p.creation_date.to_string());
      attr(f, "Score", "0");
      attr(f, "Body", p.body_html);
      if (p.owner_user_id) attr(f, "OwnerUserId", std::to_string(*p.owner_user_id));
      if (p.title) attr(f, "Title", *p.title);
      if (!p.tags.empty()) {
        std::string tags;
        for (const auto& t : p.tags) tags += "<" + t + ">";
        attr(f, "Tags", tags);
      }
      f << " />\n";
    }
    f << "</posts>\n";
  }
  {
    auto f = open("Comments.xml");
    f << "<comments>\n";
    for (const auto& c : records.comments) {
      f << "  <row";
      attr(f, "Id", std::to_string(c.id));
      attr(f, "PostId", std::to_string(c.post_id));
      attr(f, "Score", "0");
      attr(f, "Text", c.text);
      attr(f, "CreationDate", c.creation_date.to_string());
      if (c.user_id) attr(f, "UserId", std::to_string(*c.user_id));
      f << " />\n";
    }
    f << "</comments>\n";
  }
  {
    auto f = open("Users.xml");
    f << "<users>\n";
    for (const auto& u : records.users) {
      f << "  <row";
      attr(f, "Id", std::to_string(u.id));
      attr(f, "Reputation", "1");
      attr(f, "DisplayName", "user" + std::to_string(u.id));
      if (u.about_me_html) attr(f, "AboutMe", *u.about_me_html);
      f << " />\n";
    }
    f << "</users>\n";
  }
}

}  // namespace segnn
