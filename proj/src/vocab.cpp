// SPDX-License-Identifier: Apache-2.0
#include "lusifer/vocab.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace lusifer {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<mask>", "<bos>", "<eos>", "<unk>"}) add(t);
}

std::int32_t Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  std::int32_t id = static_cast<std::int32_t>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::int32_t Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> Vocab::encode(const std::string& text) const {
  std::vector<std::int32_t> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(id_of(tok));
  return out;
}

std::vector<std::int32_t> Vocab::encode_wrapped(const std::string& text) const {
  std::vector<std::int32_t> out;
  out.push_back(kBos);
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(id_of(tok));
  out.push_back(kEos);
  return out;
}

std::string Vocab::decode(const std::vector<std::int32_t>& ids, bool skip_reserved) const {
  std::string out;
  for (std::int32_t id : ids) {
    if (skip_reserved && is_reserved(id)) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::int32_t CipherLanguage::apply_id(std::int32_t id) const {
  if (id < 0 || id >= static_cast<std::int32_t>(map.size())) {
    throw DataError("cipher " + tag + ": unknown token id " + std::to_string(id));
  }
  return map[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> CipherLanguage::apply(const std::vector<std::int32_t>& seq) const {
  std::vector<std::int32_t> out;
  out.reserve(seq.size());
  for (std::int32_t id : seq) out.push_back(apply_id(id));
  return out;
}

CipherLanguage CipherLanguage::inverse() const {
  CipherLanguage inv;
  inv.tag = tag + "^-1";
  inv.map.assign(map.size(), -1);
  for (std::size_t i = 0; i < map.size(); ++i) {
    inv.map[static_cast<std::size_t>(map[i])] = static_cast<std::int32_t>(i);
  }
  return inv;
}

void CipherLanguage::validate() const {
  const std::int32_t v = static_cast<std::int32_t>(map.size());
  std::vector<std::uint8_t> seen(map.size(), 0);
  for (std::int32_t i = 0; i < v; ++i) {
    const std::int32_t m = map[static_cast<std::size_t>(i)];
    if (m < 0 || m >= v) throw DataError("cipher " + tag + ": mapping out of range");
    if (seen[static_cast<std::size_t>(m)]) throw DataError("cipher " + tag + ": not a bijection");
    seen[static_cast<std::size_t>(m)] = 1;
  }
  for (std::int32_t i = 0; i < Vocab::kReserved && i < v; ++i) {
    if (map[static_cast<std::size_t>(i)] != i) {
      throw DataError("cipher " + tag + ": reserved id " + std::to_string(i) + " not fixed");
    }
  }
  for (std::int32_t i = Vocab::kReserved; i < v; ++i) {
    const std::int32_t m = map[static_cast<std::size_t>(i)];
    if (m == i) throw DataError("cipher " + tag + ": fixed point at content id " + std::to_string(i));
    if (map[static_cast<std::size_t>(m)] == i) {
      throw DataError("cipher " + tag + ": 2-cycle at content id " + std::to_string(i));
    }
  }
}

const CipherLanguage* LanguageSet::cipher_for(const std::string& tag) const {
  for (const auto& c : ciphers) {
    if (c.tag == tag) return &c;
  }
  return nullptr;
}

bool LanguageSet::has_language(const std::string& tag) const {
  for (const auto& t : tags) {
    if (t == tag) return true;
  }
  return false;
}

void LanguageSet::save(const std::string& path) const {
  nlohmann::json j;
  j["tokens"] = vocab.tokens();
  j["languages"] = tags;
  nlohmann::json cj = nlohmann::json::object();
  for (const auto& c : ciphers) cj[c.tag] = c.map;
  j["ciphers"] = cj;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

LanguageSet LanguageSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed vocab file " + path + ": " + e.what());
  }
  LanguageSet ls;
  std::size_t reserved = 0;
  for (const auto& tok : j.at("tokens")) {
    std::string s = tok.get<std::string>();
    if (reserved < static_cast<std::size_t>(Vocab::kReserved)) {
      if (ls.vocab.token(static_cast<std::int32_t>(reserved)) != s) {
        throw DataError("vocab file " + path + ": reserved token mismatch at id " +
                        std::to_string(reserved));
      }
      ++reserved;
      continue;
    }
    ls.vocab.add(s);
  }
  ls.tags = j.at("languages").get<std::vector<std::string>>();
  for (const auto& [tag, m] : j.at("ciphers").items()) {
    CipherLanguage c;
    c.tag = tag;
    c.map = m.get<std::vector<std::int32_t>>();
    c.validate();
    ls.ciphers.push_back(std::move(c));
  }
  // keep cipher order aligned with the language tag order
  std::vector<CipherLanguage> ordered;
  for (std::size_t i = 1; i < ls.tags.size(); ++i) {
    const CipherLanguage* c = ls.cipher_for(ls.tags[i]);
    if (!c) throw DataError("vocab file " + path + ": missing cipher for " + ls.tags[i]);
    ordered.push_back(*c);
  }
  ls.ciphers = std::move(ordered);
  return ls;
}

}  // namespace lusifer
