#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "segnn/ingest.hpp"

namespace segnn {

enum class NodeLabel : std::uint8_t { Question = 0, Answer = 1, Comment = 2, User = 3 };
enum class EdgeLabel : std::uint8_t { Posts = 0, Answers = 1, Comments = 2 };

std::string_view to_string(NodeLabel label);
std::string_view to_string(EdgeLabel label);
std::optional<NodeLabel> parse_node_label(std::string_view text);

// A labelled node. Properties are the key-value map of the property graph
// model; a schema-valid node carries exactly "id" and "text".
struct Node {
  NodeLabel label = NodeLabel::Question;
  std::map<std::string, std::string> props;

  Node() = default;
  Node(NodeLabel l, std::string id, std::string text);

  const std::string& id() const;
  const std::string& text() const;
  // "<Label>:<id>", the key used by embedding files.
  std::string key() const;

  bool operator==(const Node&) const = default;
};

// Edges carry no properties, only a label and the ordered endpoint pair.
struct Edge {
  EdgeLabel label = EdgeLabel::Posts;
  std::uint32_t source = 0;
  std::uint32_t target = 0;

  bool operator==(const Edge&) const = default;
};

class PropertyGraph {
 public:
  // Throws InvalidArgument when a node with the same (label, id) exists.
  std::uint32_t add_node(Node node);
  // Throws InvalidArgument when an endpoint is out of range. Label rules are
  // checked by validate_schema, not here.
  void add_edge(EdgeLabel label, std::uint32_t source, std::uint32_t target);

  std::optional<std::uint32_t> find(NodeLabel label, const std::string& id) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  bool operator==(const PropertyGraph& other) const {
    return nodes_ == other.nodes_ && edges_ == other.edges_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::map<std::pair<NodeLabel, std::string>, std::uint32_t> index_;
};

// The communication graph of one question plus its target label.
struct CommGraph {
  std::int64_t question_id = 0;
  PropertyGraph graph;
  bool unresolved = true;

  std::size_t count(NodeLabel label) const;
  bool operator==(const CommGraph&) const = default;
};

class UserDirectory {
 public:
  UserDirectory() = default;
  explicit UserDirectory(std::span<const UserRecord> users);
  const UserRecord* find(std::int64_t id) const;

 private:
  std::unordered_map<std::int64_t, const UserRecord*> by_id_;
};

struct BuildCounters {
  std::size_t excluded_comments = 0;      // target post not in this graph
  std::size_t placeholder_users = 0;      // graphs that needed an anonymous asker node
  std::size_t orphan_comments = 0;        // corpus level: target post unknown
  std::size_t unknown_user_profiles = 0;  // user id without a Users.xml row
};

// Builds the communication graph around question q. `answers` must all have
// parent_id == q.id; comments whose target is neither q nor one of the answers
// are excluded and counted. Node order: question, answers by id, comments by
// id, users by id, then the placeholder user if one was needed.
CommGraph build_comm_graph(const PostRecord& q, std::span<const PostRecord> answers,
                           std::span<const CommentRecord> comments, const UserDirectory& users,
                           BuildCounters* counters = nullptr);

struct CorpusBuild {
  std::vector<CommGraph> graphs;  // ordered by question id
  BuildCounters counters;
};

CorpusBuild build_corpus(const DumpRecords& records);

struct SchemaViolation {
  std::string rule;
  std::string element;
};

// Never throws. Empty iff every node, edge and graph-level rule holds.
std::vector<SchemaViolation> validate_schema(const CommGraph& g);

}  // namespace segnn
