#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "convrank/common.hpp"
#include "convrank/text.hpp"

namespace convrank {

// The deleted-account marker Reddit substitutes for both usernames and
// bodies. Treated as missing everywhere.
inline constexpr const char* kDeletedMarker = "[deleted]";

struct Comment {
  std::string id;
  std::optional<std::string> parent_id;  // absent <=> top-level under the post
  std::string post_id;
  std::string author;
  std::string body;  // raw markdown
  std::int64_t created_utc = 0;
  std::int64_t score = 0;

  bool is_post_record() const { return id == post_id; }
};

enum class ParseMode { lenient, strict };

struct ParseResult {
  std::vector<Comment> comments;
  std::uint64_t skipped = 0;
  std::uint64_t lines = 0;
};

namespace detail {

inline std::string strip_thing_prefix(std::string_view s) {
  if (s.size() >= 3 && (s.substr(0, 3) == "t1_" || s.substr(0, 3) == "t3_"))
    return std::string(s.substr(3));
  return std::string(s);
}

inline std::int64_t json_int(const nlohmann::json& v, const char* field) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number()) return std::int64_t(v.get<double>());
  if (v.is_string()) {
    const std::string& s = v.get_ref<const std::string&>();
    std::size_t used = 0;
    std::int64_t n = std::stoll(s, &used);
    if (used != s.size()) throw DataError(std::string(field) + " is not an integer");
    return n;
  }
  throw DataError(std::string(field) + " is not an integer");
}

inline Comment parse_record(std::string_view line) {
  nlohmann::json j = nlohmann::json::parse(line);
  if (!j.is_object()) throw DataError("record is not an object");

  auto require_string = [&](const char* field) -> std::string {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string())
      throw DataError(std::string("missing or non-string field '") + field + "'");
    return it->get<std::string>();
  };

  Comment c;
  c.id = strip_thing_prefix(require_string("id"));
  if (c.id.empty()) throw DataError("empty id");
  c.post_id = strip_thing_prefix(require_string("link_id"));
  if (c.post_id.empty()) throw DataError("empty link_id");
  c.author = require_string("author");
  c.body = require_string("body");

  auto pit = j.find("parent_id");
  if (pit != j.end() && !pit->is_null()) {
    if (!pit->is_string()) throw DataError("non-string parent_id");
    std::string parent = strip_thing_prefix(pit->get<std::string>());
    if (parent == c.id) throw DataError("parent_id equals id");
    // A parent pointing at the post itself means top-level; normalize to
    // absent so one representation covers both encodings.
    if (parent != c.post_id) c.parent_id = std::move(parent);
  }

  auto cit = j.find("created_utc");
  if (cit == j.end()) throw DataError("missing created_utc");
  c.created_utc = json_int(*cit, "created_utc");
  auto sit = j.find("score");
  if (sit != j.end() && !sit->is_null()) c.score = json_int(*sit, "score");
  return c;
}

}  // namespace detail

// Line-delimited JSON records, one comment per line. Blank lines are ignored.
// Lenient mode skips and counts malformed lines; strict mode throws a
// ParseError carrying the 1-based line number of the first bad line.
inline ParseResult parse_dump(std::istream& in, ParseMode mode = ParseMode::lenient) {
  ParseResult result;
  std::string line;
  std::uint64_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = true;
    for (char ch : line)
      if (!detail::is_ascii_space(ch)) { blank = false; break; }
    if (blank) continue;
    ++result.lines;
    try {
      result.comments.push_back(detail::parse_record(line));
    } catch (const nlohmann::json::exception& e) {
      if (mode == ParseMode::strict) throw ParseError(line_number, e.what());
      ++result.skipped;
    } catch (const DataError& e) {
      if (mode == ParseMode::strict) throw ParseError(line_number, e.what());
      ++result.skipped;
    } catch (const std::exception& e) {
      if (mode == ParseMode::strict) throw ParseError(line_number, e.what());
      ++result.skipped;
    }
  }
  return result;
}

}  // namespace convrank
