#include "promptcanary/tokenizer.hpp"

#include "promptcanary/errors.hpp"

namespace canary {

std::string CharTokenizer::default_alphabet() {
  std::string a;
  for (char c = 0x20; c < 0x7f; ++c) a += c;
  a += '\n';
  a += '\t';
  return a;
}

CharTokenizer::CharTokenizer(std::string alphabet) : alphabet_(std::move(alphabet)) {
  if (alphabet_.empty()) throw InvalidArgumentError("tokenizer alphabet is empty");
  char_to_id_.assign(256, unk());
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(alphabet_[i]);
    if (char_to_id_[c] != unk())
      throw InvalidArgumentError("tokenizer alphabet has a duplicate character");
    char_to_id_[c] = static_cast<TokenId>(3 + i);
  }
  text_ids_.reserve(alphabet_.size());
  for (std::size_t i = 0; i < alphabet_.size(); ++i)
    text_ids_.push_back(static_cast<TokenId>(3 + i));
}

std::vector<TokenId> CharTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(char_to_id_[c]);
  return ids;
}

std::string CharTokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) out += decode_token(id);
  return out;
}

std::string CharTokenizer::decode_token(TokenId id) const {
  if (id < 0 || id >= vocab_size())
    throw InvalidArgumentError("token id " + std::to_string(id) + " out of range");
  if (id == bos() || id == eos()) return "";
  if (id == unk()) return "?";
  return std::string(1, alphabet_[static_cast<std::size_t>(id - 3)]);
}

}  // namespace canary
