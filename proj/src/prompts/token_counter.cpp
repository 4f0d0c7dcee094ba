#include "neuronlens/prompts/token_counter.hpp"

#include <array>
#include <limits>
#include <sstream>
#include <vector>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/jsonl.hpp"

namespace neuronlens::prompts {

namespace {

enum class CharClass { Space, Word, Other };

CharClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
    return CharClass::Space;
  }
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
      c >= 0x80) {
    return CharClass::Word;
  }
  return CharClass::Other;
}

bool is_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ws(unsigned char c) { return classify(c) == CharClass::Space; }

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// GPT-2 byte -> printable code point table.
const std::array<std::string, 256>& byte_alphabet() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    std::array<bool, 256> direct{};
    for (unsigned b = '!'; b <= '~'; ++b) direct[b] = true;
    for (unsigned b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (unsigned b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    unsigned extra = 0;
    for (unsigned b = 0; b < 256; ++b) {
      unsigned cp = direct[b] ? b : 256 + extra++;
      append_utf8(t[b], cp);
    }
    return t;
  }();
  return table;
}

// Splits text with the GPT-2 pre-tokenization pattern
//   's|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?[^\sLN]+|\s+(?!\S)|\s+
// where non-ASCII bytes count as letters.
std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> pieces;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < n) {
    if (text[i] == '\'') {
      bool matched = false;
      for (std::string_view c : {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"}) {
        if (text.substr(i, c.size()) == c) {
          pieces.push_back(text.substr(i, c.size()));
          i += c.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    std::size_t start = i;
    std::size_t j = i;
    if (text[j] == ' ' && j + 1 < n && !is_ws(at(j + 1))) ++j;
    if (j < n && is_letter(at(j))) {
      while (j < n && is_letter(at(j))) ++j;
    } else if (j < n && is_digit(at(j))) {
      while (j < n && is_digit(at(j))) ++j;
    } else if (j < n && !is_ws(at(j))) {
      while (j < n && !is_ws(at(j)) && !is_letter(at(j)) && !is_digit(at(j))) ++j;
    } else {
      // whitespace run; leave the last char for the next piece if a word follows
      j = start;
      while (j < n && is_ws(at(j))) ++j;
      if (j < n && j - start > 1) --j;
    }
    pieces.push_back(text.substr(start, j - start));
    i = j;
  }
  return pieces;
}

}  // namespace

std::size_t WhitespacePunctuationCounter::count(std::string_view text) const {
  std::size_t tokens = 0;
  CharClass prev = CharClass::Space;
  for (char ch : text) {
    CharClass c = classify(static_cast<unsigned char>(ch));
    if (c != CharClass::Space && c != prev) ++tokens;
    prev = c;
  }
  return tokens;
}

BpeTokenCounter BpeTokenCounter::from_merges_text(std::string_view merges) {
  BpeTokenCounter counter;
  std::istringstream in{std::string(merges)};
  std::string line;
  std::size_t rank = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 == line.size()) {
      throw InvalidArgument("malformed merges line: " + line);
    }
    counter.ranks_.emplace(std::make_pair(line.substr(0, sp), line.substr(sp + 1)), rank++);
  }
  return counter;
}

BpeTokenCounter BpeTokenCounter::from_merges_file(const std::filesystem::path& merges) {
  return from_merges_text(read_text_file(merges));
}

std::size_t BpeTokenCounter::count_piece(std::string_view piece) const {
  const auto& alphabet = byte_alphabet();
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (char c : piece) symbols.push_back(alphabet[static_cast<unsigned char>(c)]);

  while (symbols.size() > 1) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    std::pair<std::string, std::string> best_pair;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto it = ranks_.find({symbols[k], symbols[k + 1]});
      if (it != ranks_.end() && it->second < best) {
        best = it->second;
        best_pair = it->first;
      }
    }
    if (best == std::numeric_limits<std::size_t>::max()) break;
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) {
      if (k + 1 < symbols.size() && symbols[k] == best_pair.first &&
          symbols[k + 1] == best_pair.second) {
        merged.push_back(symbols[k] + symbols[k + 1]);
        ++k;
      } else {
        merged.push_back(std::move(symbols[k]));
      }
    }
    symbols = std::move(merged);
  }
  return symbols.size();
}

std::size_t BpeTokenCounter::count(std::string_view text) const {
  std::size_t total = 0;
  for (auto piece : pretokenize(text)) total += count_piece(piece);
  return total;
}

std::unique_ptr<TokenCounter> make_default_counter() {
  return std::make_unique<WhitespacePunctuationCounter>();
}

}  // namespace neuronlens::prompts
