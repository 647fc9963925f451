// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "lusifer/dataset.hpp"
#include "lusifer/testbed.hpp"

using namespace lusifer;
namespace fs = std::filesystem;

namespace {

TestbedSpec tiny_spec(std::uint64_t seed = 7) {
  TestbedSpec s;
  s.seed = seed;
  s.languages = 3;
  s.entities = 8;
  s.relations = 4;
  s.fillers = 3;
  s.facts = 24;
  s.stage0_sentences_per_lang = 40;
  s.stage1_sentences = 60;
  s.stage2_examples = 48;
  s.eval_sts_pairs = 16;
  s.eval_cls_train = 16;
  s.eval_cls_test = 16;
  s.eval_clustering = 16;
  s.eval_rerank_queries = 6;
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("templated corpus is deterministic and bounded") {
  Testbed tb(tiny_spec());
  Rng r1(99), r2(99);
  auto c1 = tb.build_corpus(50, r1);
  auto c2 = tb.build_corpus(50, r2);
  REQUIRE(c1.size() == 50);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].tokens == c2[i].tokens);
    CHECK(c1[i].semantic_id == c2[i].semantic_id);
  }
  Rng r3(1);
  CHECK(tb.build_corpus(0, r3).empty());
  const std::size_t max_len = 3 + static_cast<std::size_t>(tb.spec().max_extra_fillers);
  for (const auto& s : c1) {
    CHECK(s.tokens.size() >= 3);
    CHECK(s.tokens.size() <= max_len);
  }
}

TEST_CASE("fact inventory too large for vocabulary is rejected") {
  TestbedSpec s = tiny_spec();
  s.entities = 2;
  s.relations = 1;
  s.facts = 3;  // only 2*1*1 = 2 possible
  CHECK_THROWS_AS(Testbed{s}, DataError);
}

TEST_CASE("cipher application and inversion") {
  Testbed tb(tiny_spec());
  const auto& langs = tb.languages();
  REQUIRE(langs.ciphers.size() == 2);

  Rng rng(3);
  auto sent = tb.render(0, {0, 1, 0}, rng);

  SUBCASE("identity mapping leaves input unchanged") {
    CipherLanguage ident;
    ident.tag = "ident";
    ident.map.resize(static_cast<std::size_t>(tb.vocab().size()));
    for (std::size_t i = 0; i < ident.map.size(); ++i) ident.map[i] = static_cast<std::int32_t>(i);
    CHECK(ident.apply(sent) == sent);
  }

  SUBCASE("cipher then inverse is the identity; length and reserved ids preserved") {
    for (const auto& c : langs.ciphers) {
      auto wrapped = sent;
      wrapped.insert(wrapped.begin(), Vocab::kBos);
      wrapped.push_back(Vocab::kEos);
      auto ciphered = c.apply(wrapped);
      CHECK(ciphered.size() == wrapped.size());
      CHECK(ciphered.front() == Vocab::kBos);
      CHECK(ciphered.back() == Vocab::kEos);
      CHECK(c.inverse().apply(ciphered) == wrapped);
      CHECK(ciphered != wrapped);
    }
  }

  SUBCASE("distinct ciphers produce token-disjoint content") {
    auto a = langs.ciphers[0].apply(sent);
    auto b = langs.ciphers[1].apply(sent);
    std::set<std::int32_t> sa(a.begin(), a.end());
    for (std::int32_t id : b) CHECK(sa.count(id) == 0);
  }

  SUBCASE("validation rejects broken maps") {
    CipherLanguage bad = langs.ciphers[0];
    bad.map[static_cast<std::size_t>(Vocab::kBos)] = Vocab::kEos;
    bad.map[static_cast<std::size_t>(Vocab::kEos)] = Vocab::kBos;
    CHECK_THROWS_AS(bad.validate(), DataError);

    CipherLanguage dup = langs.ciphers[0];
    dup.map[static_cast<std::size_t>(Vocab::kReserved)] =
        dup.map[static_cast<std::size_t>(Vocab::kReserved) + 1];
    CHECK_THROWS_AS(dup.validate(), DataError);
  }

  SUBCASE("unknown id is rejected") {
    CHECK_THROWS_AS((void)langs.ciphers[0].apply_id(tb.vocab().size()), DataError);
  }

  SUBCASE("generated ciphers pass their own validation") {
    for (const auto& c : langs.ciphers) c.validate();
  }
}

TEST_CASE("even language count still yields involution-free ciphers") {
  TestbedSpec s = tiny_spec();
  s.languages = 2;  // block rotation alone would square to identity
  Testbed tb(s);
  for (const auto& c : tb.languages().ciphers) c.validate();
}

TEST_CASE("mask_tokens counts, determinism, and exclusions") {
  Testbed tb(tiny_spec());

  SUBCASE("ten content tokens at ratio 0.5 mask exactly five") {
    std::vector<std::int32_t> row;
    row.push_back(Vocab::kBos);
    for (int i = 0; i < 10; ++i) row.push_back(tb.entity_token(i % 4, 0));
    row.push_back(Vocab::kEos);
    auto batch = TokenBatch::from_rows({row});
    Rng rng(5);
    auto r = mask_tokens(batch, 0.5, rng);
    int masked = 0;
    for (int l = 0; l < r.masked.len; ++l) {
      if (r.masked.id(0, l) == Vocab::kMask) ++masked;
    }
    CHECK(masked == 5);
    CHECK(r.targets.ids == batch.ids);
  }

  SUBCASE("ratio zero leaves input unchanged") {
    Rng rng(5);
    auto corpus_rng = rng.fork("c");
    auto sents = tb.build_corpus(8, corpus_rng);
    std::vector<std::vector<std::int32_t>> rows;
    for (auto& s : sents) {
      auto r = s.tokens;
      r.insert(r.begin(), Vocab::kBos);
      r.push_back(Vocab::kEos);
      rows.push_back(r);
    }
    auto batch = TokenBatch::from_rows(rows);
    auto r = mask_tokens(batch, 0.0, rng);
    CHECK(r.masked.ids == batch.ids);
  }

  SUBCASE("padding, <bos> and <eos> are never masked across 1000 random batches") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<std::vector<std::int32_t>> rows;
      const int nrows = 1 + static_cast<int>(rng.below(4));
      for (int b = 0; b < nrows; ++b) {
        std::vector<std::int32_t> row{Vocab::kBos};
        const int n = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < n; ++i) {
          row.push_back(tb.entity_token(static_cast<int>(rng.below(8)), 0));
        }
        row.push_back(Vocab::kEos);
        rows.push_back(std::move(row));
      }
      auto batch = TokenBatch::from_rows(rows);
      auto r = mask_tokens(batch, rng.next_double(), rng);
      for (int b = 0; b < batch.batch; ++b) {
        for (int l = 0; l < batch.len; ++l) {
          const bool was_reserved = Vocab::is_reserved(batch.id(b, l));
          if (!batch.is_valid(b, l) || was_reserved) {
            CHECK(r.masked.id(b, l) == batch.id(b, l));
          }
        }
      }
    }
  }

  SUBCASE("deterministic given seed") {
    std::vector<std::int32_t> row{Vocab::kBos, 6, 7, 8, 9, 10, Vocab::kEos};
    auto batch = TokenBatch::from_rows({row, row, row});
    Rng a(42), b(42);
    CHECK(mask_tokens(batch, 0.5, a).masked.ids == mask_tokens(batch, 0.5, b).masked.ids);
  }
}

TEST_CASE("hard negative mining matches a repeated-argmax oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 10 + static_cast<int>(rng.below(20));
    const int d = 4;
    Tensor pool = Tensor::zeros({n, d});
    for (auto& x : pool.data) x = rng.normal();
    Tensor q = Tensor::zeros({d});
    for (auto& x : q.data) x = rng.normal();
    std::vector<std::uint8_t> eligible(static_cast<std::size_t>(n), 1);
    eligible[rng.below(static_cast<std::uint64_t>(n))] = 0;
    const int count = 1 + static_cast<int>(rng.below(5));

    auto got = mine_hard_negative_indices(pool, q, eligible, count);

    // oracle: repeatedly scan for the best remaining candidate
    auto cos = [&](int i) {
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < d; ++k) {
        dot += pool.at2(i, k) * q.at(k);
        na += pool.at2(i, k) * pool.at2(i, k);
        nb += q.at(k) * q.at(k);
      }
      return dot / std::sqrt(na * nb);
    };
    std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
    std::vector<int> expect;
    for (int c = 0; c < count; ++c) {
      int best = -1;
      for (int i = 0; i < n; ++i) {
        if (!eligible[static_cast<std::size_t>(i)] || used[static_cast<std::size_t>(i)]) continue;
        if (best < 0 || cos(i) > cos(best)) best = i;
      }
      used[static_cast<std::size_t>(best)] = 1;
      expect.push_back(best);
    }
    CHECK(got == expect);
  }
}

TEST_CASE("hard negative mining excludes the positive and validates pool size") {
  Vocab v;
  std::vector<std::string> texts = {"<unk> <unk>", "<unk>", "<unk> <unk> <unk>"};
  Tensor pool = Tensor::from({3, 2}, {1, 0, 1, 0.01, 1, 0.02});
  Tensor q = Tensor::from({2}, {1, 0});
  auto got = mine_hard_negatives(texts, pool, q, "<unk> <unk>", 2);
  REQUIRE(got.size() == 2);
  CHECK(got[0] != "<unk> <unk>");
  CHECK(got[1] != "<unk> <unk>");

  CHECK(mine_hard_negatives(texts, pool, q, "<unk>", 0).empty());
  CHECK_THROWS_AS((void)mine_hard_negatives(texts, pool, q, "<unk>", 3), DataError);
}

TEST_CASE("jsonl round trips") {
  TempDir tmp("lusifer_jsonl_test");
  fs::create_directories(tmp.path);
  const std::string path = (tmp.path / "x.jsonl").string();

  SUBCASE("contrastive records keep all seven negatives") {
    ContrastiveRecord r;
    r.query = "a b c";
    r.positive = "d e f";
    for (int i = 0; i < 7; ++i) r.negatives.push_back("neg " + std::to_string(i));
    r.lang = "base";
    write_contrastive_jsonl(path, {r, r});
    auto back = read_contrastive_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].negatives.size() == 7);
    CHECK(back[0].query == r.query);
    CHECK(back[1].negatives == r.negatives);
  }

  SUBCASE("empty file reads as empty dataset") {
    std::ofstream(path).close();
    CHECK(read_alignment_jsonl(path).empty());
  }

  SUBCASE("malformed line reports its line number") {
    std::ofstream out(path);
    out << R"({"text": "ok", "lang": "base"})" << "\n";
    out << "{not json}\n";
    out.close();
    try {
      read_alignment_jsonl(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SUBCASE("alignment and sts round trips") {
    write_alignment_jsonl(path, {{"t one", "base"}, {"t two", "cipher1"}});
    auto a = read_alignment_jsonl(path);
    REQUIRE(a.size() == 2);
    CHECK(a[1].lang == "cipher1");

    write_sts_jsonl(path, {{"x", "y", 0.5}});
    auto s = read_sts_jsonl(path);
    REQUIRE(s.size() == 1);
    CHECK(s[0].score == doctest::Approx(0.5));
  }
}

TEST_CASE("generated testbed is reproducible and complete") {
  TempDir d1("lusifer_testbed_a"), d2("lusifer_testbed_b");
  auto spec = tiny_spec(123);
  std::string stats = generate_testbed(spec, d1.path.string(), false);
  CHECK(stats.find("stage0") != std::string::npos);
  generate_testbed(spec, d2.path.string(), false);

  // identical bytes for every file
  std::vector<std::string> rels;
  for (const auto& e : fs::recursive_directory_iterator(d1.path)) {
    if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), d1.path).string());
  }
  CHECK(rels.size() >= 10);
  for (const auto& rel : rels) {
    CHECK(slurp((d1.path / rel).string()) == slurp((d2.path / rel).string()));
  }

  // refusing to overwrite without force
  CHECK_THROWS_AS(generate_testbed(spec, d1.path.string(), false), DataError);
  generate_testbed(spec, d1.path.string(), true);  // --force path

  // language tags and per-language counts
  auto recs = read_alignment_jsonl(stage0_path(d1.path.string()));
  std::set<std::string> tags;
  int base_count = 0;
  for (const auto& r : recs) {
    tags.insert(r.lang);
    if (r.lang == "base") ++base_count;
  }
  CHECK(tags.size() == 3);
  CHECK(base_count == spec.stage0_sentences_per_lang);

  // vocabulary round trip
  auto ls = LanguageSet::load(vocab_path(d1.path.string()));
  CHECK(ls.tags.size() == 3);
  for (const auto& c : ls.ciphers) c.validate();

  // stage-2 negatives all present and distinct from positives
  auto contrastive = read_contrastive_jsonl(stage2_path(d1.path.string()));
  CHECK(static_cast<int>(contrastive.size()) == spec.stage2_examples);
  for (const auto& r : contrastive) {
    CHECK(r.negatives.size() == static_cast<std::size_t>(spec.n_hard_negatives));
    CHECK(r.positive != r.query);
    for (const auto& n : r.negatives) CHECK(n != r.positive);
  }

  // two-language testbed gets exactly two tags
  TempDir d3("lusifer_testbed_c");
  auto spec2 = tiny_spec(5);
  spec2.languages = 2;
  generate_testbed(spec2, d3.path.string(), false);
  auto recs2 = read_alignment_jsonl(stage0_path(d3.path.string()));
  std::set<std::string> tags2;
  for (const auto& r : recs2) tags2.insert(r.lang);
  CHECK(tags2 == std::set<std::string>{"base", "cipher1"});
}
