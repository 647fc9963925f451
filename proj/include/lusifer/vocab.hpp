// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lusifer/common.hpp"

namespace lusifer {

// Whitespace tokenizer over a closed synthetic vocabulary.
// Reserved ids are fixed and never produced by cipher mappings.
class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kMask = 1;
  static constexpr std::int32_t kBos = 2;
  static constexpr std::int32_t kEos = 3;
  static constexpr std::int32_t kUnk = 4;
  static constexpr int kReserved = 5;

  Vocab();

  std::int32_t add(const std::string& token);
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(std::int32_t id) const;
  std::int32_t id_of(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  static bool is_reserved(std::int32_t id) { return id >= 0 && id < kReserved; }

  // Whitespace split; unknown tokens map to <unk>.
  std::vector<std::int32_t> encode(const std::string& text) const;
  // <bos> + encode(text) + <eos>
  std::vector<std::int32_t> encode_wrapped(const std::string& text) const;
  std::string decode(const std::vector<std::int32_t>& ids, bool skip_reserved = true) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

// Bijective permutation over content-token ids; reserved ids are fixed.
// Content ids have no fixed points and no 2-cycles (involution-free).
struct CipherLanguage {
  std::string tag;
  std::vector<std::int32_t> map;  // size == vocab size

  std::int32_t apply_id(std::int32_t id) const;
  std::vector<std::int32_t> apply(const std::vector<std::int32_t>& seq) const;
  CipherLanguage inverse() const;
  // Checks bijectivity, fixed reserved ids, involution-freeness on content.
  void validate() const;
};

// Vocabulary plus the language inventory it was built with. The first tag is
// always the base language, which is the identity rendering (no cipher).
struct LanguageSet {
  Vocab vocab;
  std::vector<std::string> tags;
  std::vector<CipherLanguage> ciphers;  // aligned with tags[1..]

  const CipherLanguage* cipher_for(const std::string& tag) const;
  bool has_language(const std::string& tag) const;

  void save(const std::string& path) const;
  static LanguageSet load(const std::string& path);
};

}  // namespace lusifer
