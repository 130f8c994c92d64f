#include "segnn/graph.hpp"

#include <algorithm>
#include <set>

#include "segnn/errors.hpp"

namespace segnn {

namespace {

const std::string kEmpty;

std::string node_ref(const PropertyGraph& g, std::uint32_t i) {
  const Node& n = g.nodes()[i];
  return "node " + std::to_string(i) + " (" + std::string(to_string(n.label)) + ":" +
         (n.props.count("id") ? n.props.at("id") : std::string("?")) + ")";
}

bool legal_edge(EdgeLabel e, NodeLabel source, NodeLabel target) {
  switch (e) {
    case EdgeLabel::Posts:
      return source == NodeLabel::User &&
             (target == NodeLabel::Question || target == NodeLabel::Answer ||
              target == NodeLabel::Comment);
    case EdgeLabel::Answers:
      return source == NodeLabel::Answer && target == NodeLabel::Question;
    case EdgeLabel::Comments:
      return source == NodeLabel::Comment &&
             (target == NodeLabel::Question || target == NodeLabel::Answer);
  }
  return false;
}

}  // namespace

std::string_view to_string(NodeLabel label) {
  switch (label) {
    case NodeLabel::Question: return "Question";
    case NodeLabel::Answer: return "Answer";
    case NodeLabel::Comment: return "Comment";
    case NodeLabel::User: return "User";
  }
  return "?";
}

std::string_view to_string(EdgeLabel label) {
  switch (label) {
    case EdgeLabel::Posts: return "POSTS";
    case EdgeLabel::Answers: return "ANSWERS";
    case EdgeLabel::Comments: return "COMMENTS";
  }
  return "?";
}

std::optional<NodeLabel> parse_node_label(std::string_view text) {
  for (auto l : {NodeLabel::Question, NodeLabel::Answer, NodeLabel::Comment, NodeLabel::User}) {
    if (to_string(l) == text) return l;
  }
  return std::nullopt;
}

Node::Node(NodeLabel l, std::string id, std::string text) : label(l) {
  props.emplace("id", std::move(id));
  props.emplace("text", std::move(text));
}

const std::string& Node::id() const {
  auto it = props.find("id");
  return it == props.end() ? kEmpty : it->second;
}

const std::string& Node::text() const {
  auto it = props.find("text");
  return it == props.end() ? kEmpty : it->second;
}

std::string Node::key() const { return std::string(to_string(label)) + ":" + id(); }

std::uint32_t PropertyGraph::add_node(Node node) {
  auto key = std::make_pair(node.label, node.id());
  if (index_.count(key)) {
    throw InvalidArgument("duplicate node key " + node.key());
  }
  const auto ordinal = static_cast<std::uint32_t>(nodes_.size());
  index_.emplace(std::move(key), ordinal);
  nodes_.push_back(std::move(node));
  return ordinal;
}

void PropertyGraph::add_edge(EdgeLabel label, std::uint32_t source, std::uint32_t target) {
  if (source >= nodes_.size() || target >= nodes_.size()) {
    throw InvalidArgument("edge endpoint out of range (" + std::to_string(source) + ", " +
                          std::to_string(target) + ") with " + std::to_string(nodes_.size()) +
                          " nodes");
  }
  edges_.push_back({label, source, target});
}

std::optional<std::uint32_t> PropertyGraph::find(NodeLabel label, const std::string& id) const {
  auto it = index_.find({label, id});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CommGraph::count(NodeLabel label) const {
  return static_cast<std::size_t>(
      std::count_if(graph.nodes().begin(), graph.nodes().end(),
                    [label](const Node& n) { return n.label == label; }));
}

UserDirectory::UserDirectory(std::span<const UserRecord> users) {
  by_id_.reserve(users.size());
  for (const auto& u : users) by_id_.emplace(u.id, &u);
}

const UserRecord* UserDirectory::find(std::int64_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : it->second;
}

CommGraph build_comm_graph(const PostRecord& q, std::span<const PostRecord> answers,
                           std::span<const CommentRecord> comments, const UserDirectory& users,
                           BuildCounters* counters) {
  if (q.post_type != PostType::Question) {
    throw InvalidArgument("build_comm_graph: post " + std::to_string(q.id) +
                          " is not a question");
  }
  std::vector<const PostRecord*> sorted_answers;
  for (const auto& a : answers) {
    if (a.post_type != PostType::Answer || a.parent_id != q.id) {
      throw InvalidArgument("build_comm_graph: post " + std::to_string(a.id) +
                            " is not an answer to question " + std::to_string(q.id));
    }
    sorted_answers.push_back(&a);
  }
  std::sort(sorted_answers.begin(), sorted_answers.end(),
            [](auto* x, auto* y) { return x->id < y->id; });

  std::set<std::int64_t> post_ids{q.id};
  for (auto* a : sorted_answers) post_ids.insert(a->id);

  std::vector<const CommentRecord*> kept;
  for (const auto& c : comments) {
    if (post_ids.count(c.post_id)) {
      kept.push_back(&c);
    } else if (counters) {
      ++counters->excluded_comments;
    }
  }
  std::sort(kept.begin(), kept.end(), [](auto* x, auto* y) { return x->id < y->id; });

  // Authors of every post in the graph; nullopt marks a deleted/absent owner.
  std::set<std::int64_t> user_ids;
  bool needs_placeholder = false;
  auto note_owner = [&](const std::optional<std::int64_t>& owner) {
    if (owner) {
      user_ids.insert(*owner);
    } else {
      needs_placeholder = true;
    }
  };
  note_owner(q.owner_user_id);
  for (auto* a : sorted_answers) note_owner(a->owner_user_id);
  for (auto* c : kept) note_owner(c->user_id);

  CommGraph out;
  out.question_id = q.id;
  PropertyGraph& g = out.graph;

  std::string question_text = q.title.value_or("");
  const std::string body = strip_html(q.body_html);
  if (!body.empty()) question_text = question_text.empty() ? body : question_text + " " + body;
  const std::uint32_t question = g.add_node(
      Node(NodeLabel::Question, std::to_string(q.id), collapse_whitespace(question_text)));

  std::vector<std::uint32_t> answer_nodes;
  for (auto* a : sorted_answers) {
    answer_nodes.push_back(
        g.add_node(Node(NodeLabel::Answer, std::to_string(a->id), strip_html(a->body_html))));
  }
  std::vector<std::uint32_t> comment_nodes;
  for (auto* c : kept) {
    comment_nodes.push_back(
        g.add_node(Node(NodeLabel::Comment, std::to_string(c->id), collapse_whitespace(c->text))));
  }
  for (std::int64_t uid : user_ids) {
    const UserRecord* profile = users.find(uid);
    if (profile == nullptr && counters) ++counters->unknown_user_profiles;
    std::string about =
        profile && profile->about_me_html ? strip_html(*profile->about_me_html) : std::string();
    g.add_node(Node(NodeLabel::User, std::to_string(uid), std::move(about)));
  }
  std::optional<std::uint32_t> placeholder;
  if (needs_placeholder) {
    placeholder = g.add_node(Node(NodeLabel::User, "anon:" + std::to_string(q.id), ""));
    if (counters) ++counters->placeholder_users;
  }

  auto author = [&](const std::optional<std::int64_t>& owner) {
    return owner ? *g.find(NodeLabel::User, std::to_string(*owner)) : *placeholder;
  };

  g.add_edge(EdgeLabel::Posts, author(q.owner_user_id), question);
  for (std::size_t i = 0; i < sorted_answers.size(); ++i) {
    g.add_edge(EdgeLabel::Posts, author(sorted_answers[i]->owner_user_id), answer_nodes[i]);
    g.add_edge(EdgeLabel::Answers, answer_nodes[i], question);
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    g.add_edge(EdgeLabel::Posts, author(kept[i]->user_id), comment_nodes[i]);
    const std::uint32_t target =
        kept[i]->post_id == q.id
            ? question
            : *g.find(NodeLabel::Answer, std::to_string(kept[i]->post_id));
    g.add_edge(EdgeLabel::Comments, comment_nodes[i], target);
  }

  out.unresolved = true;
  if (q.accepted_answer_id) {
    for (auto* a : sorted_answers) {
      if (a->id == *q.accepted_answer_id) out.unresolved = false;
    }
  }
  return out;
}

CorpusBuild build_corpus(const DumpRecords& records) {
  CorpusBuild build;
  std::unordered_map<std::int64_t, std::vector<PostRecord>> answers_by_question;
  std::unordered_map<std::int64_t, std::int64_t> question_of_post;
  std::vector<const PostRecord*> questions;
  for (const auto& p : records.posts) {
    if (p.post_type == PostType::Question) {
      questions.push_back(&p);
      question_of_post[p.id] = p.id;
    }
  }
  for (const auto& p : records.posts) {
    if (p.post_type == PostType::Answer && question_of_post.count(*p.parent_id) &&
        question_of_post.at(*p.parent_id) == *p.parent_id) {
      answers_by_question[*p.parent_id].push_back(p);
    }
  }
  for (const auto& [qid, answers] : answers_by_question) {
    for (const auto& a : answers) question_of_post.emplace(a.id, qid);
  }
  std::unordered_map<std::int64_t, std::vector<CommentRecord>> comments_by_question;
  for (const auto& c : records.comments) {
    auto it = question_of_post.find(c.post_id);
    if (it == question_of_post.end()) {
      ++build.counters.orphan_comments;
      continue;
    }
    comments_by_question[it->second].push_back(c);
  }
  std::sort(questions.begin(), questions.end(), [](auto* a, auto* b) { return a->id < b->id; });

  const UserDirectory users(records.users);
  static const std::vector<PostRecord> kNoAnswers;
  static const std::vector<CommentRecord> kNoComments;
  build.graphs.reserve(questions.size());
  for (const PostRecord* q : questions) {
    auto a = answers_by_question.find(q->id);
    auto c = comments_by_question.find(q->id);
    build.graphs.push_back(build_comm_graph(
        *q, a == answers_by_question.end() ? kNoAnswers : a->second,
        c == comments_by_question.end() ? kNoComments : c->second, users, &build.counters));
  }
  return build;
}

std::vector<SchemaViolation> validate_schema(const CommGraph& cg) {
  std::vector<SchemaViolation> violations;
  const PropertyGraph& g = cg.graph;
  const auto n = static_cast<std::uint32_t>(g.node_count());

  std::set<std::pair<NodeLabel, std::string>> keys;
  std::size_t questions = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const Node& node = g.nodes()[i];
    const bool exact_props =
        node.props.size() == 2 && node.props.count("id") && node.props.count("text");
    if (!exact_props) {
      violations.push_back({"node-properties", node_ref(g, i) + " must carry exactly id and text"});
    }
    if (!keys.insert({node.label, node.id()}).second) {
      violations.push_back({"unique-node-key", node_ref(g, i)});
    }
    if (node.label == NodeLabel::Question) ++questions;
  }
  if (questions != 1) {
    violations.push_back({"single-question", std::to_string(questions) + " Question nodes"});
  }

  bool endpoints_ok = true;
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const Edge& edge = g.edges()[e];
    const std::string ref = "edge " + std::to_string(e) + " " + std::string(to_string(edge.label));
    if (edge.source >= n || edge.target >= n) {
      violations.push_back({"edge-endpoint", ref + " references a missing node"});
      endpoints_ok = false;
      continue;
    }
    const NodeLabel s = g.nodes()[edge.source].label;
    const NodeLabel t = g.nodes()[edge.target].label;
    if (!legal_edge(edge.label, s, t)) {
      violations.push_back({"edge-label-triple", ref + " " + std::string(to_string(s)) + "-" +
                                                     std::string(to_string(edge.label)) + "->" +
                                                     std::string(to_string(t)) +
                                                     " is not in the schema"});
    }
  }

  if (n < 2) violations.push_back({"min-nodes", std::to_string(n) + " nodes (need >= 2)"});
  if (g.edge_count() < 1) violations.push_back({"min-edges", "graph has no edges"});

  if (n > 0 && endpoints_ok) {
    // Weak connectivity via union-find over undirected edges.
    std::vector<std::uint32_t> parent(n);
    for (std::uint32_t i = 0; i < n; ++i) parent[i] = i;
    auto root = [&](std::uint32_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const Edge& e : g.edges()) parent[root(e.source)] = root(e.target);
    std::size_t components = 0;
    for (std::uint32_t i = 0; i < n; ++i) components += root(i) == i;
    if (components != 1) {
      violations.push_back({"weakly-connected", std::to_string(components) + " components"});
    }
  }
  return violations;
}

}  // namespace segnn
