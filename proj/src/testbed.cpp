// SPDX-License-Identifier: Apache-2.0
#include "lusifer/testbed.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace lusifer {

namespace fs = std::filesystem;

void TestbedSpec::validate() const {
  if (languages < 2) throw DataError("testbed needs at least 2 languages");
  if (entities < 2 || relations < 1 || fillers < 1) {
    throw DataError("testbed needs entities>=2, relations>=1, fillers>=1");
  }
  const long possible = static_cast<long>(entities) * (entities - 1) * relations;
  if (facts < 1 || facts > possible) {
    throw DataError("requested " + std::to_string(facts) + " facts but vocabulary supports only " +
                    std::to_string(possible));
  }
  if (stage2_examples > 0 && facts < 2 + n_hard_negatives) {
    throw DataError("too few facts to mine " + std::to_string(n_hard_negatives) +
                    " hard negatives");
  }
  if (code_switch_ratio < 0.0 || code_switch_ratio > 1.0) {
    throw DataError("code_switch_ratio must lie in [0,1]");
  }
}

namespace {

// Permutation over content ids: block j -> block (j+shift) mod n_blocks with
// a fresh slot permutation per source block. Retries until involution-free.
std::vector<std::int32_t> build_cipher_map(int vocab_size, int block, int n_blocks, int shift,
                                           std::uint64_t seed) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(seed, "cipher-attempt-" + std::to_string(attempt)));
    std::vector<std::int32_t> map(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < Vocab::kReserved; ++i) map[static_cast<std::size_t>(i)] = i;
    for (int j = 0; j < n_blocks; ++j) {
      std::vector<std::int32_t> slots(static_cast<std::size_t>(block));
      for (int i = 0; i < block; ++i) slots[static_cast<std::size_t>(i)] = i;
      rng.shuffle(slots);
      const int dst_block = (j + shift) % n_blocks;
      for (int i = 0; i < block; ++i) {
        map[static_cast<std::size_t>(Vocab::kReserved + j * block + i)] =
            Vocab::kReserved + dst_block * block + slots[static_cast<std::size_t>(i)];
      }
    }
    bool ok = true;
    for (int i = Vocab::kReserved; i < vocab_size && ok; ++i) {
      const std::int32_t m = map[static_cast<std::size_t>(i)];
      if (m == i || map[static_cast<std::size_t>(m)] == i) ok = false;
    }
    if (ok) return map;
  }
  throw DataError("could not build involution-free cipher");
}

}  // namespace

Testbed::Testbed(TestbedSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  content_block_ = spec_.entities * 2 + spec_.relations * 2 + spec_.fillers;

  // base block carries readable names; other blocks are opaque surface forms
  for (int i = 0; i < spec_.entities; ++i) {
    langs_.vocab.add("e" + std::to_string(i) + "a");
    langs_.vocab.add("e" + std::to_string(i) + "b");
  }
  for (int j = 0; j < spec_.relations; ++j) {
    langs_.vocab.add("r" + std::to_string(j) + "a");
    langs_.vocab.add("r" + std::to_string(j) + "b");
  }
  for (int k = 0; k < spec_.fillers; ++k) langs_.vocab.add("f" + std::to_string(k));
  for (int lang = 1; lang < spec_.languages; ++lang) {
    for (int i = 0; i < content_block_; ++i) {
      langs_.vocab.add("l" + std::to_string(lang) + "w" + std::to_string(i));
    }
  }

  langs_.tags.push_back("base");
  for (int lang = 1; lang < spec_.languages; ++lang) {
    CipherLanguage c;
    c.tag = "cipher" + std::to_string(lang);
    c.map = build_cipher_map(langs_.vocab.size(), content_block_, spec_.languages, lang,
                             derive_seed(spec_.seed, "cipher-" + std::to_string(lang)));
    c.validate();
    langs_.tags.push_back(c.tag);
    langs_.ciphers.push_back(std::move(c));
  }

  // deterministic fact inventory: distinct (subject, relation, object) triples
  std::vector<Fact> all;
  for (int s = 0; s < spec_.entities; ++s) {
    for (int o = 0; o < spec_.entities; ++o) {
      if (s == o) continue;
      for (int r = 0; r < spec_.relations; ++r) all.push_back({s, r, o});
    }
  }
  Rng rng(derive_seed(spec_.seed, "facts"));
  rng.shuffle(all);
  facts_.assign(all.begin(), all.begin() + spec_.facts);
}

std::int32_t Testbed::entity_token(int entity, int syn) const {
  return Vocab::kReserved + entity * 2 + syn;
}

std::int32_t Testbed::relation_token(int relation, int syn) const {
  return Vocab::kReserved + spec_.entities * 2 + relation * 2 + syn;
}

std::int32_t Testbed::filler_token(int f) const {
  return Vocab::kReserved + spec_.entities * 2 + spec_.relations * 2 + f;
}

std::vector<std::int32_t> Testbed::render_triple(int subject, int relation, int object,
                                                 const std::array<int, 3>& syn, Rng& rng) const {
  std::array<std::vector<std::int32_t>, 4> gaps;
  const int extra = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.max_extra_fillers) + 1));
  for (int i = 0; i < extra; ++i) {
    const int gap = static_cast<int>(rng.below(4));
    gaps[static_cast<std::size_t>(gap)].push_back(
        filler_token(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.fillers)))));
  }
  std::vector<std::int32_t> out;
  auto flush = [&](int g) {
    for (std::int32_t f : gaps[static_cast<std::size_t>(g)]) out.push_back(f);
  };
  flush(0);
  out.push_back(entity_token(subject, syn[0]));
  flush(1);
  out.push_back(relation_token(relation, syn[1]));
  flush(2);
  out.push_back(entity_token(object, syn[2]));
  flush(3);
  return out;
}

std::vector<std::int32_t> Testbed::render(int fact_idx, const std::array<int, 3>& syn,
                                          Rng& rng) const {
  const Fact& f = facts_[static_cast<std::size_t>(fact_idx)];
  return render_triple(f.subject, f.relation, f.object, syn, rng);
}

std::string Testbed::text_of(const std::vector<std::int32_t>& base_ids,
                             const std::string& lang) const {
  if (lang == langs_.tags.front()) return langs_.vocab.decode(base_ids, false);
  const CipherLanguage* c = langs_.cipher_for(lang);
  if (!c) throw DataError("unknown language tag: " + lang);
  return langs_.vocab.decode(c->apply(base_ids), false);
}

std::vector<CorpusSentence> Testbed::build_corpus(int n_sentences, Rng& rng) const {
  std::vector<CorpusSentence> out;
  out.reserve(static_cast<std::size_t>(n_sentences));
  for (int i = 0; i < n_sentences; ++i) {
    CorpusSentence s;
    s.semantic_id = i % spec_.facts;
    s.syn = {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2)),
             static_cast<int>(rng.below(2))};
    s.tokens = render(s.semantic_id, s.syn, rng);
    out.push_back(std::move(s));
  }
  return out;
}

std::string stage0_path(const std::string& d) { return d + "/stage0_mlm.jsonl"; }
std::string stage1_path(const std::string& d) { return d + "/stage1_align.jsonl"; }
std::string stage2_path(const std::string& d) { return d + "/stage2_contrastive.jsonl"; }
std::string vocab_path(const std::string& d) { return d + "/vocab.json"; }
std::string eval_dir(const std::string& d, const std::string& lang) {
  return d + "/eval/" + lang;
}

namespace {

struct PoolEntry {
  int fact = 0;
  std::string text;
};

std::array<int, 3> random_syn(Rng& rng) {
  return {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2)),
          static_cast<int>(rng.below(2))};
}

}  // namespace

std::string generate_testbed(const TestbedSpec& spec, const std::string& out_dir, bool force) {
  spec.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw DataError("output directory " + out_dir + " exists; pass --force to overwrite");
  }
  Testbed tb(spec);
  const auto& langs = tb.languages();
  fs::create_directories(out_dir);
  for (const auto& tag : langs.tags) fs::create_directories(eval_dir(out_dir, tag));
  langs.save(vocab_path(out_dir));

  std::ostringstream stats;
  Rng master(derive_seed(spec.seed, "testbed"));

  // ---- stage 0: per-language tagged sentences with code-switched tokens ----
  {
    std::vector<AlignmentRecord> recs;
    for (std::size_t li = 0; li < langs.tags.size(); ++li) {
      Rng rng = master.fork("stage0-" + langs.tags[li]);
      for (int i = 0; i < spec.stage0_sentences_per_lang; ++i) {
        const int fact = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.facts)));
        std::vector<std::int32_t> base = tb.render(fact, random_syn(rng), rng);
        std::vector<std::int32_t> rendered;
        rendered.reserve(base.size());
        for (std::int32_t id : base) {
          std::size_t tok_lang = li;
          if (langs.tags.size() > 1 && rng.next_double() < spec.code_switch_ratio) {
            std::size_t other = rng.below(langs.tags.size() - 1);
            tok_lang = other >= li ? other + 1 : other;
          }
          if (tok_lang == 0) {
            rendered.push_back(id);
          } else {
            rendered.push_back(langs.ciphers[tok_lang - 1].apply_id(id));
          }
        }
        recs.push_back({langs.vocab.decode(rendered, false), langs.tags[li]});
      }
    }
    write_alignment_jsonl(stage0_path(out_dir), recs);
    stats << "stage0_mlm.jsonl: " << recs.size() << " sentences ("
          << spec.stage0_sentences_per_lang << " per language)\n";
  }

  // ---- stage 1: pure base-language sentences ----
  {
    Rng rng = master.fork("stage1");
    std::vector<AlignmentRecord> recs;
    for (const auto& s : tb.build_corpus(spec.stage1_sentences, rng)) {
      recs.push_back({tb.text_of(s.tokens, "base"), "base"});
    }
    write_alignment_jsonl(stage1_path(out_dir), recs);
    stats << "stage1_align.jsonl: " << recs.size() << " sentences (base)\n";
  }

  // ---- stage 2: contrastive examples with mined hard negatives ----
  {
    Rng rng = master.fork("stage2");
    // mining pool: two renderings per fact, deduplicated by text
    std::vector<PoolEntry> pool;
    std::set<std::string> seen;
    for (int f = 0; f < spec.facts; ++f) {
      for (int k = 0; k < 2; ++k) {
        std::string text = tb.text_of(tb.render(f, random_syn(rng), rng), "base");
        if (seen.insert(text).second) pool.push_back({f, text});
      }
    }
    Tensor pool_emb = Tensor::zeros({static_cast<int>(pool.size()), tb.vocab().size()});
    for (std::size_t i = 0; i < pool.size(); ++i) {
      Tensor e = bag_of_tokens_embedding(tb.vocab(), pool[i].text);
      std::copy(e.data.begin(), e.data.end(),
                pool_emb.data.begin() + static_cast<std::ptrdiff_t>(i * e.data.size()));
    }
    std::vector<ContrastiveRecord> recs;
    std::vector<int> fact_order(static_cast<std::size_t>(spec.facts));
    for (int f = 0; f < spec.facts; ++f) fact_order[static_cast<std::size_t>(f)] = f;
    // round-robin over facts keeps any contiguous batch window free of
    // in-batch false negatives
    while (static_cast<int>(recs.size()) < spec.stage2_examples) {
      rng.shuffle(fact_order);
      for (int f : fact_order) {
        if (static_cast<int>(recs.size()) >= spec.stage2_examples) break;
        ContrastiveRecord r;
        r.lang = "base";
        const auto syn = random_syn(rng);
        r.query = tb.text_of(tb.render(f, syn, rng), "base");
        r.positive = tb.text_of(tb.render(f, Testbed::flip(syn), rng), "base");
        std::vector<std::uint8_t> eligible(pool.size(), 1);
        for (std::size_t i = 0; i < pool.size(); ++i) {
          if (pool[i].fact == f) eligible[i] = 0;
        }
        Tensor q_emb = bag_of_tokens_embedding(tb.vocab(), r.query);
        auto idx = mine_hard_negative_indices(pool_emb, q_emb, eligible, spec.n_hard_negatives);
        for (int i : idx) r.negatives.push_back(pool[static_cast<std::size_t>(i)].text);
        recs.push_back(std::move(r));
      }
    }
    write_contrastive_jsonl(stage2_path(out_dir), recs);
    stats << "stage2_contrastive.jsonl: " << recs.size() << " examples ("
          << spec.n_hard_negatives << " hard negatives each)\n";
  }

  // ---- evaluation datasets: identical base renderings, one copy per language ----
  {
    Rng rng = master.fork("eval");

    // retrieval: one doc per fact; the query is its full paraphrase
    std::vector<std::vector<std::int32_t>> doc_ids, query_ids;
    std::vector<RetrievalQueryRecord> base_queries;
    for (int f = 0; f < spec.facts; ++f) {
      const auto syn = random_syn(rng);
      doc_ids.push_back(tb.render(f, syn, rng));
      query_ids.push_back(tb.render(f, Testbed::flip(syn), rng));
    }

    // sts: graded pairs, score = shared triple elements / 3
    struct StsBase {
      std::vector<std::int32_t> s1, s2;
      double score;
    };
    std::vector<StsBase> sts_base;
    auto rand_entity = [&] { return static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.entities))); };
    auto rand_rel = [&] { return static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.relations))); };
    auto other_entity = [&](int not_a, int not_b) {
      int e = rand_entity();
      while (e == not_a || e == not_b) e = rand_entity();
      return e;
    };
    for (int i = 0; i < spec.eval_sts_pairs; ++i) {
      const int level = i % 4;
      const int a = rand_entity();
      int b = other_entity(a, a);
      const int r = rand_rel();
      int a2 = a, b2 = b, r2 = r;
      if (level <= 2) {
        // drop one shared element per level step
        std::vector<int> changed = {0, 1, 2};
        rng.shuffle(changed);
        for (int c = 0; c < 3 - level; ++c) {
          switch (changed[static_cast<std::size_t>(c)]) {
            case 0: a2 = other_entity(a, b2); break;
            case 1: {
              if (spec.relations > 1) {
                int nr = rand_rel();
                while (nr == r) nr = rand_rel();
                r2 = nr;
              } else {
                a2 = other_entity(a, b2);
              }
              break;
            }
            case 2: b2 = other_entity(b, a2); break;
          }
        }
      }
      int shared = (a2 == a ? 1 : 0) + (r2 == r ? 1 : 0) + (b2 == b ? 1 : 0);
      StsBase sb;
      sb.s1 = tb.render_triple(a, r, b, random_syn(rng), rng);
      sb.s2 = tb.render_triple(a2, r2, b2, random_syn(rng), rng);
      sb.score = static_cast<double>(shared) / 3.0;
      sts_base.push_back(std::move(sb));
    }

    // classification: label = relation
    std::vector<std::pair<std::vector<std::int32_t>, int>> cls_train, cls_test;
    for (int i = 0; i < spec.eval_cls_train + spec.eval_cls_test; ++i) {
      const int r = i % spec.relations;
      const int a = rand_entity();
      const int b = other_entity(a, a);
      auto ids = tb.render_triple(a, r, b, random_syn(rng), rng);
      if (i < spec.eval_cls_train) {
        cls_train.emplace_back(std::move(ids), r);
      } else {
        cls_test.emplace_back(std::move(ids), r);
      }
    }

    // clustering: label = subject entity
    std::vector<std::pair<std::vector<std::int32_t>, int>> clu;
    for (int i = 0; i < spec.eval_clustering; ++i) {
      const int a = i % spec.entities;
      const int b = other_entity(a, a);
      clu.emplace_back(tb.render_triple(a, rand_rel(), b, random_syn(rng), rng), a);
    }

    // reranking: paraphrases positive, near-miss facts negative
    struct RerankBase {
      std::vector<std::int32_t> query;
      std::vector<std::vector<std::int32_t>> candidates;
      std::vector<int> relevance;
    };
    std::vector<RerankBase> rerank_base;
    for (int qi = 0; qi < spec.eval_rerank_queries; ++qi) {
      const int f = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.facts)));
      const Fact& fact = tb.facts()[static_cast<std::size_t>(f)];
      const auto syn = random_syn(rng);
      RerankBase rb;
      rb.query = tb.render(f, syn, rng);
      rb.candidates.push_back(tb.render(f, Testbed::flip(syn), rng));
      rb.relevance.push_back(1);
      rb.candidates.push_back(tb.render(f, random_syn(rng), rng));
      rb.relevance.push_back(1);
      while (static_cast<int>(rb.candidates.size()) < spec.eval_rerank_candidates) {
        // near-miss: perturb one element of the fact
        int a = fact.subject, r = fact.relation, b = fact.object;
        switch (rng.below(3)) {
          case 0: a = other_entity(fact.subject, b); break;
          case 1:
            if (spec.relations > 1) {
              int nr = rand_rel();
              while (nr == fact.relation) nr = rand_rel();
              r = nr;
            } else {
              a = other_entity(fact.subject, b);
            }
            break;
          default: b = other_entity(fact.object, a); break;
        }
        rb.candidates.push_back(tb.render_triple(a, r, b, random_syn(rng), rng));
        rb.relevance.push_back(0);
      }
      // deterministic joint shuffle of candidates with their flags
      std::vector<std::size_t> order(rb.candidates.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      RerankBase shuffled;
      shuffled.query = rb.query;
      for (std::size_t i : order) {
        shuffled.candidates.push_back(rb.candidates[i]);
        shuffled.relevance.push_back(rb.relevance[i]);
      }
      rerank_base.push_back(std::move(shuffled));
    }

    for (const auto& tag : langs.tags) {
      const std::string dir = eval_dir(out_dir, tag);
      std::vector<CorpusDocRecord> docs;
      std::vector<RetrievalQueryRecord> queries;
      for (int f = 0; f < spec.facts; ++f) {
        docs.push_back({f, tb.text_of(doc_ids[static_cast<std::size_t>(f)], tag)});
        queries.push_back({tb.text_of(query_ids[static_cast<std::size_t>(f)], tag), {f}});
      }
      write_corpus_jsonl(dir + "/retrieval_corpus.jsonl", docs);
      write_retrieval_queries_jsonl(dir + "/retrieval_queries.jsonl", queries);

      std::vector<StsRecord> sts;
      for (const auto& sb : sts_base) {
        sts.push_back({tb.text_of(sb.s1, tag), tb.text_of(sb.s2, tag), sb.score});
      }
      write_sts_jsonl(dir + "/sts.jsonl", sts);

      std::vector<LabeledTextRecord> train, test;
      for (const auto& [ids, label] : cls_train) train.push_back({tb.text_of(ids, tag), label});
      for (const auto& [ids, label] : cls_test) test.push_back({tb.text_of(ids, tag), label});
      write_labeled_jsonl(dir + "/classification_train.jsonl", train);
      write_labeled_jsonl(dir + "/classification_test.jsonl", test);

      std::vector<ClusterRecord> clusters;
      for (const auto& [ids, label] : clu) clusters.push_back({tb.text_of(ids, tag), label});
      write_cluster_jsonl(dir + "/clustering.jsonl", clusters);

      std::vector<RerankRecord> rr;
      for (const auto& rb : rerank_base) {
        RerankRecord rec;
        rec.query = tb.text_of(rb.query, tag);
        for (const auto& c : rb.candidates) rec.candidates.push_back(tb.text_of(c, tag));
        rec.relevance = rb.relevance;
        rr.push_back(std::move(rec));
      }
      write_rerank_jsonl(dir + "/reranking.jsonl", rr);
    }
    stats << "eval: " << spec.facts << " retrieval queries, " << spec.eval_sts_pairs
          << " sts pairs, " << spec.eval_cls_train << "+" << spec.eval_cls_test
          << " classification, " << spec.eval_clustering << " clustering, "
          << spec.eval_rerank_queries << " reranking queries per language\n";
  }

  // generation metadata for reproducibility
  {
    nlohmann::json meta;
    meta["seed"] = spec.seed;
    meta["languages"] = spec.languages;
    meta["entities"] = spec.entities;
    meta["relations"] = spec.relations;
    meta["fillers"] = spec.fillers;
    meta["facts"] = spec.facts;
    meta["code_switch_ratio"] = spec.code_switch_ratio;
    meta["vocab_size"] = tb.vocab().size();
    std::ofstream out(out_dir + "/testbed_meta.json");
    out << meta.dump(2) << "\n";
  }
  stats << "vocab: " << tb.vocab().size() << " tokens, " << spec.languages << " languages\n";
  return stats.str();
}

}  // namespace lusifer
