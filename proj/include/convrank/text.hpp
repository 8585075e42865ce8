#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace convrank {

// Sentinel every normalized URL collapses to. '<' and '>' are split off as
// punctuation by the tokenizer, so no organic token can collide with it.
inline constexpr const char* kUrlToken = "<url>";

using TokenizedMessage = std::vector<std::string>;

namespace detail {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  // Multi-byte UTF-8 units count as word characters; only ASCII punctuation
  // splits.
  return std::isalnum(u) != 0 || u >= 0x80;
}

inline bool starts_with_url_scheme(std::string_view s) {
  auto ieq = [](std::string_view a, std::string_view prefix) {
    if (a.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(a[i])) != prefix[i]) return false;
    return true;
  };
  return ieq(s, "http://") || ieq(s, "https://") || ieq(s, "www.");
}

}  // namespace detail

// Markdown removal follows a fixed rule table rather than full CommonMark:
//   1. fence lines (```...) are dropped, fenced content is kept
//   2. backticks (inline code markers) are dropped
//   3. [text](target) and ![text](target) become "text target"
//   4. autolinks <http://...> lose the angle brackets
//   5. leading '>' quote markers are dropped per line
//   6. leading '#' header markers are dropped per line
//   7. emphasis: '*' and '~~' dropped anywhere, '_' dropped unless it sits
//      between two word characters (keeps snake_case intact)
//   8. backslash escapes: the backslash is dropped, the character kept
inline std::string strip_markdown(std::string_view body) {
  // Line-level pass: fences, quote markers, headers.
  std::string text;
  text.reserve(body.size());
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t eol = body.find('\n', pos);
    std::string_view line = body.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (line.substr(i, 3) == "```") {
      // drop the fence line itself
    } else {
      while (i < line.size() && line[i] == '>') {
        ++i;
        if (i < line.size() && line[i] == ' ') ++i;
      }
      std::size_t hashes = i;
      while (hashes < line.size() && line[hashes] == '#') ++hashes;
      if (hashes > i && (hashes == line.size() || line[hashes] == ' ')) {
        i = hashes;
        if (i < line.size() && line[i] == ' ') ++i;
      }
      text.append(line.substr(i));
    }
    if (eol == std::string_view::npos) break;
    text.push_back('\n');
    pos = eol + 1;
  }

  // Character-level pass: links, emphasis, code markers, escapes.
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 1 < text.size() && std::ispunct(static_cast<unsigned char>(text[i + 1]))) {
      out.push_back(text[i + 1]);
      ++i;
      continue;
    }
    if (c == '!' && i + 1 < text.size() && text[i + 1] == '[') continue;
    if (c == '[') {
      std::size_t close = text.find(']', i + 1);
      if (close != std::string::npos && close + 1 < text.size() && text[close + 1] == '(') {
        std::size_t paren = text.find(')', close + 2);
        if (paren != std::string::npos) {
          // inner text goes through the same pass; the target is emitted raw
          std::string inner = strip_markdown(text.substr(i + 1, close - i - 1));
          out.append(inner);
          out.push_back(' ');
          out.append(text, close + 2, paren - close - 2);
          i = paren;
          continue;
        }
      }
      continue;  // stray '[': drop the bracket, keep scanning its content
    }
    if (c == ']') continue;
    if (c == '<') {
      std::size_t close = text.find('>', i + 1);
      if (close != std::string::npos &&
          detail::starts_with_url_scheme(std::string_view(text).substr(i + 1, close - i - 1))) {
        out.append(text, i + 1, close - i - 1);
        i = close;
        continue;
      }
      out.push_back(c);
      continue;
    }
    if (c == '`' || c == '*') continue;
    if (c == '~' && i + 1 < text.size() && text[i + 1] == '~') {
      ++i;
      continue;
    }
    if (c == '_') {
      bool prev_word = i > 0 && detail::is_word_char(text[i - 1]);
      bool next_word = i + 1 < text.size() && detail::is_word_char(text[i + 1]);
      if (prev_word && next_word) out.push_back(c);
      continue;
    }
    out.push_back(c);
  }
  return out;
}

// Lowercased, whitespace-split, ASCII punctuation split into single-char
// tokens. A whitespace-delimited chunk that starts with a URL scheme becomes
// the kUrlToken sentinel wholesale, trailing punctuation included.
inline TokenizedMessage tokenize(std::string_view text) {
  TokenizedMessage tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_ascii_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j])) ++j;
    std::string_view chunk = text.substr(i, j - i);
    if (detail::starts_with_url_scheme(chunk)) {
      tokens.emplace_back(kUrlToken);
    } else {
      std::string word;
      for (char c : chunk) {
        if (detail::is_word_char(c)) {
          word.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        } else {
          if (!word.empty()) {
            tokens.push_back(std::move(word));
            word.clear();
          }
          tokens.emplace_back(1, c);
        }
      }
      if (!word.empty()) tokens.push_back(std::move(word));
    }
    i = j;
  }
  return tokens;
}

// All unigrams in order, then all adjacent bigrams in order. Bigram keys are
// space-joined; tokens can never contain an ASCII space, so the key spaces
// are unambiguous. The occurrence order here is the canonical summation
// order for bag embeddings.
inline std::vector<std::string> extract_ngrams(const TokenizedMessage& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size() * 2);
  for (const auto& t : tokens) out.push_back(t);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    std::string bi;
    bi.reserve(tokens[i].size() + tokens[i + 1].size() + 1);
    bi.append(tokens[i]);
    bi.push_back(' ');
    bi.append(tokens[i + 1]);
    out.push_back(std::move(bi));
  }
  return out;
}

inline bool is_bigram_key(std::string_view ngram) {
  return ngram.find(' ') != std::string_view::npos;
}

}  // namespace convrank
