#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace canary {

using TokenId = std::int32_t;

/// Character-level tokenizer. Three reserved ids (BOS, EOS, UNK) followed by
/// one id per alphabet character. decode(encode(s)) == s for any s over the
/// alphabet; characters outside it encode to UNK and decode to '?'.
class CharTokenizer {
public:
  /// Printable ASCII plus newline and tab.
  static std::string default_alphabet();

  explicit CharTokenizer(std::string alphabet = default_alphabet());

  TokenId bos() const { return 0; }
  TokenId eos() const { return 1; }
  TokenId unk() const { return 2; }
  TokenId vocab_size() const { return static_cast<TokenId>(3 + alphabet_.size()); }

  /// Ids that decode to text, i.e. everything except BOS/EOS/UNK. This is the
  /// candidate pool for token-space search and random separators.
  const std::vector<TokenId>& text_ids() const { return text_ids_; }

  const std::string& alphabet() const { return alphabet_; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(const std::vector<TokenId>& ids) const;
  std::string decode_token(TokenId id) const;

  bool operator==(const CharTokenizer& other) const { return alphabet_ == other.alphabet_; }

private:
  std::string alphabet_;
  std::vector<TokenId> char_to_id_;  // indexed by unsigned char
  std::vector<TokenId> text_ids_;
};

}  // namespace canary
