// SPDX-License-Identifier: Apache-2.0
#include "lusifer/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "lusifer/dataset.hpp"
#include "lusifer/kmeans.hpp"
#include "lusifer/testbed.hpp"

namespace lusifer {

EmbedFn model_embedder(const Model& model, const Vocab& vocab, int batch_size) {
  return [&model, &vocab, batch_size](const std::vector<std::string>& texts) {
    return model.embed_texts(vocab, texts, batch_size);
  };
}

EmbedFn lm_only_embedder(const Model& model, const Vocab& vocab, int batch_size) {
  return [&model, &vocab, batch_size](const std::vector<std::string>& texts) {
    return model.embed_texts_lm_only(vocab, texts, batch_size);
  };
}

EmbedFn random_embedder(int dim, std::uint64_t seed) {
  return [dim, seed](const std::vector<std::string>& texts) {
    Tensor out = Tensor::zeros({static_cast<int>(texts.size()), dim});
    for (std::size_t i = 0; i < texts.size(); ++i) {
      // seeded by content so the embedding of a text is call-order independent
      Rng rng(derive_seed(seed, texts[i]));
      double norm = 0.0;
      double* row = out.data.data() + i * static_cast<std::size_t>(dim);
      for (int d = 0; d < dim; ++d) {
        row[d] = rng.normal();
        norm += row[d] * row[d];
      }
      norm = std::sqrt(norm);
      for (int d = 0; d < dim; ++d) row[d] /= norm;
    }
    return out;
  };
}

std::vector<RankedList> retrieval_run(const Tensor& query_embeddings,
                                      const Tensor& doc_embeddings,
                                      const std::vector<int>& doc_ids) {
  if (doc_embeddings.dim(0) == 0) throw DataError("retrieval over an empty corpus");
  if (query_embeddings.rank() != 2 || doc_embeddings.rank() != 2 ||
      query_embeddings.dim(1) != doc_embeddings.dim(1)) {
    throw ShapeError("retrieval embedding shape mismatch");
  }
  if (doc_ids.size() != static_cast<std::size_t>(doc_embeddings.dim(0))) {
    throw DataError("retrieval doc id count mismatch");
  }
  const int d = query_embeddings.dim(1);
  std::vector<RankedList> out;
  out.reserve(static_cast<std::size_t>(query_embeddings.dim(0)));
  std::vector<double> scores(doc_ids.size());
  for (int qi = 0; qi < query_embeddings.dim(0); ++qi) {
    const double* q = query_embeddings.data.data() + static_cast<std::size_t>(qi) * d;
    for (std::size_t di = 0; di < doc_ids.size(); ++di) {
      scores[di] = cosine_similarity(q, doc_embeddings.data.data() + di * static_cast<std::size_t>(d), d);
    }
    out.push_back(make_ranked_list(qi, doc_ids, scores));
  }
  return out;
}

std::vector<ReportRow> run_language_suite(const EmbedFn& embed, const std::string& lang_dir,
                                          const std::string& lang, const EvalOptions& opts) {
  std::vector<ReportRow> rows;

  {  // retrieval: nDCG@10
    auto queries = read_retrieval_queries_jsonl(lang_dir + "/retrieval_queries.jsonl");
    auto docs = read_corpus_jsonl(lang_dir + "/retrieval_corpus.jsonl");
    std::vector<std::string> qt, dt;
    std::vector<int> ids;
    for (const auto& q : queries) qt.push_back(q.query);
    for (const auto& doc : docs) {
      dt.push_back(doc.text);
      ids.push_back(doc.id);
    }
    Tensor qe = embed(qt), de = embed(dt);
    auto ranked = retrieval_run(qe, de, ids);
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      std::set<int> rel(queries[i].relevant_ids.begin(), queries[i].relevant_ids.end());
      sum += ndcg_at_k(ranked[i], rel, 10);
    }
    rows.push_back({"retrieval", lang, "testbed", "ndcg@10",
                    queries.empty() ? 0.0 : sum / static_cast<double>(queries.size())});
  }

  {  // sts: Pearson of cosine vs gold
    auto pairs = read_sts_jsonl(lang_dir + "/sts.jsonl");
    std::vector<std::string> s1, s2;
    std::vector<double> gold;
    for (const auto& p : pairs) {
      s1.push_back(p.s1);
      s2.push_back(p.s2);
      gold.push_back(p.score);
    }
    Tensor e1 = embed(s1), e2 = embed(s2);
    std::vector<double> cos(pairs.size());
    const int d = e1.dim(1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      cos[i] = cosine_similarity(e1.data.data() + i * static_cast<std::size_t>(d),
                                 e2.data.data() + i * static_cast<std::size_t>(d), d);
    }
    rows.push_back({"sts", lang, "testbed", "pearson_cosine", pearson(cos, gold)});
  }

  {  // classification: cosine k-NN accuracy
    auto train = read_labeled_jsonl(lang_dir + "/classification_train.jsonl");
    auto test = read_labeled_jsonl(lang_dir + "/classification_test.jsonl");
    std::vector<std::string> trt, tet;
    std::vector<int> trl, tel;
    for (const auto& r : train) {
      trt.push_back(r.text);
      trl.push_back(r.label);
    }
    for (const auto& r : test) {
      tet.push_back(r.text);
      tel.push_back(r.label);
    }
    rows.push_back({"classification", lang, "testbed", "accuracy",
                    knn_accuracy(embed(trt), trl, embed(tet), tel, opts.knn_k)});
  }

  {  // clustering: seeded k-means + V-measure, k = true class count
    auto recs = read_cluster_jsonl(lang_dir + "/clustering.jsonl");
    std::vector<std::string> texts;
    std::vector<int> labels;
    for (const auto& r : recs) {
      texts.push_back(r.text);
      labels.push_back(r.cluster);
    }
    const int k = static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
    rows.push_back({"clustering", lang, "testbed", "v_measure",
                    clustering_eval(embed(texts), labels, k, opts.seed, opts.kmeans_restarts)});
  }

  {  // reranking: MAP
    auto recs = read_rerank_jsonl(lang_dir + "/reranking.jsonl");
    std::vector<std::vector<int>> relevance_lists;
    for (const auto& r : recs) {
      std::vector<std::string> texts = {r.query};
      texts.insert(texts.end(), r.candidates.begin(), r.candidates.end());
      Tensor e = embed(texts);
      const int d = e.dim(1);
      std::vector<int> ids(r.candidates.size());
      std::vector<double> scores(r.candidates.size());
      for (std::size_t c = 0; c < r.candidates.size(); ++c) {
        ids[c] = static_cast<int>(c);
        scores[c] = cosine_similarity(e.data.data(),
                                      e.data.data() + (c + 1) * static_cast<std::size_t>(d), d);
      }
      RankedList ranked = make_ranked_list(0, ids, scores);
      std::vector<int> flags;
      for (const auto& [id, score] : ranked.items) flags.push_back(r.relevance[static_cast<std::size_t>(id)]);
      relevance_lists.push_back(std::move(flags));
    }
    rows.push_back({"reranking", lang, "testbed", "map", map_reranking(relevance_lists).map});
  }

  return rows;
}

double mean_task_score(const std::vector<ReportRow>& rows, const std::string& language) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.language != language || r.dataset != "testbed") continue;
    sum += r.value;
    ++n;
  }
  if (n == 0) throw DataError("no task rows for language " + language);
  return sum / n;
}

std::vector<ReportRow> with_aggregates(std::vector<ReportRow> rows) {
  std::map<std::string, std::vector<double>> by_lang;
  for (const auto& r : rows) {
    if (r.dataset == "testbed") by_lang[r.language].push_back(r.value);
  }
  std::vector<ReportRow> out = std::move(rows);
  double overall = 0.0;
  int n_langs = 0;
  for (const auto& [lang, values] : by_lang) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    // one dataset per task on the testbed, so the two macro views coincide;
    // both are reported under their own labels
    out.push_back({"all", lang, "macro_over_tasks", "mean_score", mean});
    out.push_back({"all", lang, "macro_over_datasets", "mean_score", mean});
    overall += mean;
    ++n_langs;
  }
  if (n_langs > 0) {
    out.push_back({"all", "all", "macro_over_tasks", "mean_score", overall / n_langs});
    out.push_back({"all", "all", "macro_over_datasets", "mean_score", overall / n_langs});
  }
  return out;
}

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report " + path);
  out << "task,language,dataset,metric,value\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.task << "," << r.language << "," << r.dataset << "," << r.metric << "," << r.value
        << "\n";
  }
}

std::string report_summary_table(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "task" << std::setw(12) << "language" << std::setw(22)
     << "dataset" << std::setw(18) << "metric" << "value\n";
  os << std::string(74, '-') << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.task << std::setw(12) << r.language << std::setw(22)
       << r.dataset << std::setw(18) << r.metric << r.value << "\n";
  }
  return os.str();
}

const TransferSystemScores& TransferReport::system(const std::string& name) const {
  for (const auto& s : systems) {
    if (s.system == name) return s;
  }
  throw DataError("no transfer scores for system " + name);
}

std::vector<ReportRow> TransferReport::all_rows() const {
  std::vector<ReportRow> rows;
  for (const auto& s : systems) {
    for (ReportRow r : s.rows) {
      r.dataset = s.system;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

TransferReport zero_shot_transfer_eval(const Model& model, const Vocab& vocab,
                                       const std::string& data_dir,
                                       const std::string& held_out_lang, const EvalOptions& opts) {
  const std::string dir = eval_dir(data_dir, held_out_lang);
  TransferReport report;
  report.language = held_out_lang;
  const struct {
    const char* name;
    EmbedFn embed;
  } systems[] = {
      {"model", model_embedder(model, vocab, opts.batch_size)},
      {"lm_only_baseline", lm_only_embedder(model, vocab, opts.batch_size)},
      {"random_baseline", random_embedder(model.config().target_lm.d_model, opts.seed)},
  };
  for (const auto& sys : systems) {
    TransferSystemScores scores;
    scores.system = sys.name;
    scores.rows = run_language_suite(sys.embed, dir, held_out_lang, opts);
    for (const auto& r : scores.rows) {
      if (r.task == "retrieval") scores.retrieval_ndcg = r.value;
    }
    scores.mean_score = mean_task_score(scores.rows, held_out_lang);
    report.systems.push_back(std::move(scores));
  }
  return report;
}

void export_embeddings_csv(const std::string& out_path, const EmbedFn& embed,
                           const std::vector<std::string>& texts, const std::vector<int>& labels,
                           const std::string& lang) {
  if (texts.size() != labels.size()) throw DataError("export: text/label count mismatch");
  Tensor e = embed(texts);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write " + out_path);
  out << std::setprecision(17);
  const int d = e.dim(1);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out << i << "," << lang << "," << labels[i];
    for (int j = 0; j < d; ++j) {
      out << "," << e.data[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
    }
    out << "\n";
  }
}

}  // namespace lusifer
