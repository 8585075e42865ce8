#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <tuple>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/dump.hpp"

namespace convrank {

// A post is a rooted tree: the root is the post itself (its title is the
// root message), nodes are comments. Children are ordered by
// (created_utc, id) so every traversal is deterministic.
struct PostTree {
  std::string post_id;
  std::string title;
  std::unordered_map<std::string, Comment> nodes;
  // Keyed by parent id; the root's children are keyed by post_id. Comments
  // attached directly to the post use the root key.
  std::unordered_map<std::string, std::vector<std::string>> children;

  std::size_t comment_count() const { return nodes.size(); }

  const Comment* find(const std::string& id) const {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
  }

  const std::vector<std::string>& children_of(const std::string& id) const {
    static const std::vector<std::string> empty;
    auto it = children.find(id);
    return it == children.end() ? empty : it->second;
  }

  // Root-first preorder walk over reachable comments.
  std::vector<const Comment*> preorder() const {
    std::vector<const Comment*> out;
    out.reserve(nodes.size());
    std::vector<const std::string*> stack;
    const auto& top = children_of(post_id);
    for (auto it = top.rbegin(); it != top.rend(); ++it) stack.push_back(&*it);
    while (!stack.empty()) {
      const std::string* id = stack.back();
      stack.pop_back();
      const Comment* c = find(*id);
      out.push_back(c);
      const auto& kids = children_of(*id);
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(&*it);
    }
    return out;
  }
};

struct BuildResult {
  std::vector<PostTree> trees;  // sorted by post_id
  std::uint64_t orphans = 0;    // comments dropped for unreachable ancestry
};

// Groups comments by post, wires parent/child edges, and drops any comment
// whose parent chain does not reach the root (missing ancestors take their
// whole subtree with them). Duplicate ids are a hard error.
inline BuildResult build_trees(const std::vector<Comment>& comments) {
  std::unordered_set<std::string> seen;
  seen.reserve(comments.size());
  for (const auto& c : comments) {
    if (!seen.insert(c.id).second) throw DataError("duplicate comment id '" + c.id + "'");
  }

  std::map<std::string, std::vector<const Comment*>> by_post;
  for (const auto& c : comments) by_post[c.post_id].push_back(&c);

  BuildResult result;
  result.trees.reserve(by_post.size());
  for (auto& [post_id, group] : by_post) {
    PostTree tree;
    tree.post_id = post_id;

    std::unordered_map<std::string, const Comment*> by_id;
    for (const Comment* c : group) {
      if (c->is_post_record()) {
        tree.title = c->body;
        continue;
      }
      by_id.emplace(c->id, c);
    }

    std::unordered_map<std::string, std::vector<const Comment*>> kids;
    for (auto& [id, c] : by_id) {
      const std::string& parent = c->parent_id ? *c->parent_id : tree.post_id;
      kids[parent].push_back(c);
    }
    for (auto& [parent, list] : kids) {
      std::sort(list.begin(), list.end(), [](const Comment* a, const Comment* b) {
        return std::tie(a->created_utc, a->id) < std::tie(b->created_utc, b->id);
      });
    }

    // BFS from the root keeps exactly the comments with a valid ancestor
    // chain; cycles and missing-parent subtrees never get visited.
    std::deque<std::string> queue;
    queue.push_back(tree.post_id);
    std::size_t reachable = 0;
    while (!queue.empty()) {
      std::string id = queue.front();
      queue.pop_front();
      auto kit = kids.find(id);
      if (kit == kids.end()) continue;
      // A child keyed under a non-root id only counts if that id is a real
      // comment in this post (BFS started from ids that are).
      auto& list = tree.children[id];
      for (const Comment* child : kit->second) {
        tree.nodes.emplace(child->id, *child);
        list.push_back(child->id);
        queue.push_back(child->id);
        ++reachable;
      }
    }
    result.orphans += by_id.size() - reachable;
    result.trees.push_back(std::move(tree));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Dataset statistics: four empirical CDFs, each a list of
// (threshold, fraction of units with value <= threshold) rows.
// ---------------------------------------------------------------------------

using CdfTable = std::vector<std::pair<std::int64_t, double>>;

struct DatasetStats {
  CdfTable comments_per_user;
  CdfTable comments_per_post;
  CdfTable replies_per_comment;  // root message included as a unit
  CdfTable comment_depth;        // root at depth 0, not itself a unit
};

namespace detail {

inline CdfTable cdf_of(std::vector<std::int64_t> values) {
  CdfTable table;
  if (values.empty()) return table;
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 == n || values[i + 1] != values[i])
      table.emplace_back(values[i], double(i + 1) / double(n));
  }
  return table;
}

}  // namespace detail

inline DatasetStats dataset_stats(const std::vector<PostTree>& trees) {
  std::map<std::string, std::int64_t> per_user;
  std::vector<std::int64_t> per_post, replies, depths;
  for (const auto& tree : trees) {
    per_post.push_back(std::int64_t(tree.comment_count()));
    replies.push_back(std::int64_t(tree.children_of(tree.post_id).size()));

    std::deque<std::pair<std::string, std::int64_t>> queue;
    for (const auto& id : tree.children_of(tree.post_id)) queue.emplace_back(id, 1);
    while (!queue.empty()) {
      auto [id, depth] = queue.front();
      queue.pop_front();
      depths.push_back(depth);
      replies.push_back(std::int64_t(tree.children_of(id).size()));
      const Comment* c = tree.find(id);
      if (c->author != kDeletedMarker) ++per_user[c->author];
      for (const auto& kid : tree.children_of(id)) queue.emplace_back(kid, depth + 1);
    }
  }

  DatasetStats stats;
  std::vector<std::int64_t> user_counts;
  user_counts.reserve(per_user.size());
  for (auto& [user, n] : per_user) user_counts.push_back(n);
  stats.comments_per_user = detail::cdf_of(std::move(user_counts));
  stats.comments_per_post = detail::cdf_of(std::move(per_post));
  stats.replies_per_comment = detail::cdf_of(std::move(replies));
  stats.comment_depth = detail::cdf_of(std::move(depths));
  return stats;
}

inline void write_cdf_tsv(std::ostream& out, const CdfTable& table) {
  out << "threshold\tcum_fraction\n";
  char buf[64];
  for (const auto& [threshold, fraction] : table) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.10g\n", static_cast<long long>(threshold), fraction);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Tree store file (kind 1).
// ---------------------------------------------------------------------------

struct TreeStore {
  std::vector<PostTree> trees;
  std::uint64_t orphans = 0;
  std::uint64_t skipped_lines = 0;
};

inline void save_trees(std::ostream& out, const TreeStore& store) {
  BinWriter w(out);
  w.header(FileKind::trees);
  w.u64(store.orphans);
  w.u64(store.skipped_lines);
  w.u64(store.trees.size());
  for (const auto& tree : store.trees) {
    w.str(tree.post_id);
    w.str(tree.title);
    auto order = tree.preorder();
    w.u64(order.size());
    for (const Comment* c : order) {
      w.str(c->id);
      w.u8(c->parent_id ? 1 : 0);
      if (c->parent_id) w.str(*c->parent_id);
      w.str(c->author);
      w.str(c->body);
      w.i64(c->created_utc);
      w.i64(c->score);
    }
  }
}

inline TreeStore load_trees(std::istream& in) {
  BinReader r(in);
  r.expect_header(FileKind::trees);
  TreeStore store;
  store.orphans = r.u64();
  store.skipped_lines = r.u64();
  std::uint64_t n_trees = r.u64();
  store.trees.reserve(n_trees);
  for (std::uint64_t t = 0; t < n_trees; ++t) {
    PostTree tree;
    tree.post_id = r.str();
    tree.title = r.str();
    std::uint64_t n_nodes = r.u64();
    std::vector<Comment> comments;
    comments.reserve(n_nodes);
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
      Comment c;
      c.id = r.str();
      if (r.u8()) c.parent_id = r.str();
      c.author = r.str();
      c.body = r.str();
      c.created_utc = r.i64();
      c.score = r.i64();
      c.post_id = tree.post_id;
      comments.push_back(std::move(c));
    }
    for (auto& c : comments) {
      const std::string& parent = c.parent_id ? *c.parent_id : tree.post_id;
      tree.children[parent].push_back(c.id);
      tree.nodes.emplace(c.id, std::move(c));
    }
    // Stored preorder preserves child order; re-sorting keeps the invariant
    // explicit for hand-built files.
    for (auto& [parent, list] : tree.children) {
      std::sort(list.begin(), list.end(), [&](const std::string& a, const std::string& b) {
        const Comment* ca = tree.find(a);
        const Comment* cb = tree.find(b);
        return std::tie(ca->created_utc, ca->id) < std::tie(cb->created_utc, cb->id);
      });
    }
    store.trees.push_back(std::move(tree));
  }
  return store;
}

}  // namespace convrank
