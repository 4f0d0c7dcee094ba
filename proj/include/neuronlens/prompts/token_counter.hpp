#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

namespace neuronlens::prompts {

class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  [[nodiscard]] virtual std::size_t count(std::string_view text) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Default counter. One token per maximal run of word characters (ASCII
/// letters, digits, underscore, and any byte >= 0x80) and one per maximal run
/// of other non-whitespace characters. Whitespace is never counted.
///
/// count(a + b) == count(a) + count(b) unless a ends and b starts with the
/// same non-whitespace character class; then the two boundary runs merge and
/// the concatenation counts one fewer.
class WhitespacePunctuationCounter final : public TokenCounter {
 public:
  [[nodiscard]] std::size_t count(std::string_view text) const override;
  [[nodiscard]] std::string name() const override { return "whitespace-punctuation"; }
};

/// Byte-level BPE counter in the GPT-2 style, driven by a `merges.txt` file
/// (one "left right" pair per line, highest priority first, optional
/// "#version" header). Text is pre-split with the GPT-2 pattern, bytes are
/// mapped to the printable byte alphabet, then ranked merges are applied
/// until none applies; the count is the number of resulting symbols.
class BpeTokenCounter final : public TokenCounter {
 public:
  static BpeTokenCounter from_merges_file(const std::filesystem::path& merges);
  static BpeTokenCounter from_merges_text(std::string_view merges);

  [[nodiscard]] std::size_t count(std::string_view text) const override;
  [[nodiscard]] std::string name() const override { return "bpe"; }

 private:
  std::size_t count_piece(std::string_view piece) const;

  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
};

std::unique_ptr<TokenCounter> make_default_counter();

}  // namespace neuronlens::prompts
