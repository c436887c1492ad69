#pragma once

#include <charconv>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "twincl/augmentation.hpp"
#include "twincl/error.hpp"
#include "twincl/eval.hpp"

// Text formats (UTF-8, '\n' line ends):
//   paired corpus   src_ids<TAB>frat_ids
//   eval set        ids_a<TAB>ids_b<TAB>gold
//   predictions     predicted<TAB>gold
// Id fields are space-separated decimal token ids.

namespace twincl {

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline TokenIds parse_ids(std::string_view field, std::size_t line_no, const char* what,
                          std::size_t vocab_size) {
  TokenIds out;
  std::size_t pos = 0;
  while (pos < field.size()) {
    while (pos < field.size() && field[pos] == ' ') ++pos;
    if (pos >= field.size()) break;
    TokenId id = 0;
    const auto [end, ec] = std::from_chars(field.data() + pos, field.data() + field.size(), id);
    if (ec != std::errc{} || (end != field.data() + field.size() && *end != ' '))
      throw ParseError(line_no, std::string("malformed token id in ") + what + " field");
    if (vocab_size != 0 && id >= vocab_size)
      throw ParseError(line_no, "token id " + std::to_string(id) + " in " + what +
                                    " field is outside the vocabulary (size " +
                                    std::to_string(vocab_size) + ")");
    out.push_back(id);
    pos = static_cast<std::size_t>(end - field.data());
  }
  return out;
}

inline std::string join_ids(const TokenIds& ids) {
  std::string out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k > 0) out += ' ';
    out += std::to_string(ids[k]);
  }
  return out;
}

inline bool has_content(const TokenIds& ids) {
  for (TokenId t : ids)
    if (t != kPadId) return true;
  return false;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

// Sequences longer than max_len are truncated. vocab_size = 0 skips the
// vocabulary range check.
inline std::vector<TokenSentence> parse_corpus(std::istream& in, std::size_t max_len,
                                               bool require_fraternal, std::size_t vocab_size = 0) {
  std::vector<TokenSentence> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 2) throw ParseError(line_no, "expected 2 tab-separated fields");
    TokenSentence s{detail::parse_ids(fields[0], line_no, "source", vocab_size),
                    detail::parse_ids(fields[1], line_no, "fraternal", vocab_size)};
    if (!detail::has_content(s.tokens)) throw ParseError(line_no, "source sentence has no tokens");
    if (require_fraternal && s.fraternal.empty())
      throw ParseError(line_no, "fraternal field is empty");
    if (s.tokens.size() > max_len) s.tokens.resize(max_len);
    if (s.fraternal.size() > max_len) s.fraternal.resize(max_len);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string format_corpus(const std::vector<TokenSentence>& corpus) {
  std::string out;
  for (const auto& s : corpus)
    out += detail::join_ids(s.tokens) + '\t' + detail::join_ids(s.fraternal) + '\n';
  return out;
}

inline std::vector<StsPair> parse_eval(std::istream& in, std::size_t max_len,
                                       std::size_t vocab_size = 0) {
  std::vector<StsPair> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 3) throw ParseError(line_no, "expected 3 tab-separated fields");
    StsPair p{detail::parse_ids(fields[0], line_no, "first", vocab_size),
              detail::parse_ids(fields[1], line_no, "second", vocab_size), 0.0};
    if (!detail::has_content(p.tokens_a) || !detail::has_content(p.tokens_b))
      throw ParseError(line_no, "both sentences must be non-empty");
    const std::string gold(fields[2]);
    char* end = nullptr;
    p.gold = std::strtod(gold.c_str(), &end);
    if (gold.empty() || end != gold.c_str() + gold.size())
      throw ParseError(line_no, "malformed gold score");
    if (!(p.gold >= 0.0 && p.gold <= kMaxGold))
      throw ParseError(line_no, "gold score outside [0, 5]");
    if (p.tokens_a.size() > max_len) p.tokens_a.resize(max_len);
    if (p.tokens_b.size() > max_len) p.tokens_b.resize(max_len);
    out.push_back(std::move(p));
  }
  return out;
}

inline std::string format_eval(const std::vector<StsPair>& pairs) {
  std::string out;
  char gold[32];
  for (const auto& p : pairs) {
    std::snprintf(gold, sizeof gold, "%.2f", p.gold);
    out += detail::join_ids(p.tokens_a) + '\t' + detail::join_ids(p.tokens_b) + '\t' + gold + '\n';
  }
  return out;
}

inline std::string format_predictions(const std::vector<Prediction>& preds) {
  std::string out;
  char buf[80];
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\n", p.predicted, p.gold);
    out += buf;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace twincl
