// khan: preprocess | train-kge | train | eval | sweep | gen-synthetic
//
// Settings come from defaults, then an optional --config file, then flags
// (one --<key> flag per config key, dashes for underscores). Exit codes:
// 0 success, 1 internal failure, 2 user or configuration error.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "khan/errors.hpp"
#include "khan/synthetic.hpp"

namespace fs = std::filesystem;
using namespace khan;
using khan::cli::RunConfig;

namespace {

struct Data {
  Vocabulary vocab;
  EncodedCorpus corpus;
};

fs::path require_file(const RunConfig& cfg, const std::string& key) {
  if (!cfg.has(key)) throw UserError("missing required key '" + key + "'");
  const fs::path p = cfg.str(key);
  if (!fs::exists(p)) throw UserError(key + ": no such file or directory: " + p.string());
  return p;
}

fs::path output_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.str("output_dir");
  if (dir.empty()) throw UserError("output_dir must not be empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UserError("cannot create output_dir " + dir.string() + ": " + ec.message());
  return dir;
}

std::string histogram_text(const std::vector<std::size_t>& h) {
  std::string out;
  for (std::size_t i = 0; i < h.size(); ++i) out += (i ? "/" : "") + std::to_string(h[i]);
  return out;
}

std::vector<std::size_t> histogram(const EncodedCorpus& c) {
  std::vector<std::size_t> h(c.classes, 0);
  for (const auto& a : c.articles) ++h.at(static_cast<std::size_t>(a.label));
  return h;
}

/// A preprocess directory (vocab.txt + encoded.jsonl) or a raw article file.
Data load_data(const RunConfig& cfg) {
  const auto path = require_file(cfg, "dataset");
  Data out;
  if (fs::is_directory(path)) {
    out.vocab = Vocabulary::load(path / "vocab.txt");
    out.corpus = load_encoded(path / "encoded.jsonl");
  } else {
    const auto ds = load_articles(path);
    out.vocab = build_vocab(ds.articles);
    const std::size_t n = cfg.count("n"), l = cfg.count("l");
    out.corpus = {n, l, ds.classes, encode_corpus(ds.articles, out.vocab, n, l)};
  }
  if (cfg.count("classes") != 0 && cfg.count("classes") != out.corpus.classes)
    throw UserError("classes=" + cfg.str("classes") + " but the dataset declares " +
                    std::to_string(out.corpus.classes));
  return out;
}

/// Hyperparameters with the encoded shape and class count taken from the data.
TrainConfig training_config(const RunConfig& cfg, const Data& data) {
  auto tc = cfg.training();
  tc.hp.n = data.corpus.max_words;
  tc.hp.l = data.corpus.max_sentences;
  tc.hp.classes = data.corpus.classes;
  tc.validate();
  return tc;
}

std::optional<KnowledgeBundle> load_bundle(const RunConfig& cfg, std::size_t rows, std::size_t d) {
  if (cfg.flag("no_knowledge")) return std::nullopt;
  for (const char* key : {"kg_common", "kg_lib", "kg_con"})
    if (!cfg.has(key))
      throw UserError(std::string("missing knowledge table '") + key +
                      "' (pass --no-knowledge to run without knowledge)");
  KnowledgeBundle b{KnowledgeEmbeddingTable::load(require_file(cfg, "kg_common")),
                    KnowledgeEmbeddingTable::load(require_file(cfg, "kg_lib")),
                    KnowledgeEmbeddingTable::load(require_file(cfg, "kg_con"))};
  b.validate(rows, d);
  return b;
}

void check_knowledge_paths(const RunConfig& cfg) {
  if (cfg.flag("no_knowledge")) return;
  for (const char* key : {"kg_common", "kg_lib", "kg_con"}) {
    if (!cfg.has(key))
      throw UserError(std::string("missing knowledge table '") + key +
                      "' (pass --no-knowledge to run without knowledge)");
    require_file(cfg, key);
  }
}

/// Rejects bad hyperparameters before any file is read; the class count is
/// only known after loading, so a placeholder stands in for it here.
void precheck_training(const RunConfig& cfg) {
  auto tc = cfg.training();
  if (tc.hp.classes == 0) tc.hp.classes = 2;
  tc.validate();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw UserError("cannot write " + p.string());
  out << text;
}

std::vector<EncodedArticle> pick(const std::vector<EncodedArticle>& all,
                                 const std::vector<std::size_t>& idx) {
  std::vector<EncodedArticle> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

// ---- subcommands -----------------------------------------------------------------

int cmd_preprocess(const RunConfig& cfg) {
  const auto path = require_file(cfg, "dataset");
  const auto dir = output_dir(cfg);
  const auto ds = load_articles(path);
  const auto vocab = build_vocab(ds.articles);
  const std::size_t n = cfg.count("n"), l = cfg.count("l");
  if (n == 0 || l == 0) throw UserError("n and l must be positive");
  EncodedCorpus corpus{n, l, ds.classes, encode_corpus(ds.articles, vocab, n, l)};
  vocab.save(dir / "vocab.txt");
  save_encoded(dir / "encoded.jsonl", corpus);
  std::cout << ds.articles.size() << " articles, classes " << histogram_text(ds.class_histogram())
            << "\n";
  return 0;
}

int cmd_train_kge(const RunConfig& cfg) {
  const auto triples = require_file(cfg, "triples");
  const auto stance = parse_stance(cfg.str("stance"));
  const auto kcfg = cfg.kge();
  const bool exporting = cfg.has("entity_links");
  if (exporting) {
    require_file(cfg, "entity_links");
    require_file(cfg, "vocab");
  }
  const auto dir = output_dir(cfg);

  const auto store = load_triples(triples, stance);
  if (store.duplicates_dropped())
    std::cerr << "note: dropped " << store.duplicates_dropped() << " duplicate triples\n";
  const auto [train_store, held] = split_holdout(store, cfg.real("holdout_ratio"), kcfg.seed);
  const auto result = train_kge(train_store, kcfg);
  const auto tag = to_string(stance);
  result.model.save(dir / (tag + ".kge"));
  std::cout << store.num_entities() << " entities, " << store.num_relations() << " relations, "
            << store.triples().size() << " triples";
  if (!result.epoch_loss.empty()) std::cout << "; final loss " << result.epoch_loss.back();
  std::cout << "\n";

  if (held.empty()) {
    std::cerr << "warning: no triples held out; evaluation skipped\n";
  } else {
    const auto m = evaluate_completion(result.model, store, held);
    std::ostringstream csv;
    csv.precision(17);
    csv << "MR,MRR,HITS@1,HITS@3,HITS@10\n"
        << m.mean_rank << ',' << m.mean_reciprocal_rank << ',' << m.hits_at(1) << ','
        << m.hits_at(3) << ',' << m.hits_at(10) << '\n';
    write_text(dir / (tag + "_metrics.csv"), csv.str());
    std::cout << "MR " << m.mean_rank << " MRR " << m.mean_reciprocal_rank << " over "
              << held.size() << " held-out triples\n";
  }

  if (exporting) {
    const auto links = load_entity_links(cfg.str("entity_links"));
    const auto vocab = Vocabulary::load(cfg.str("vocab"));
    const auto table = export_aligned_table(result.model, links, vocab, cfg.count("d"), stance,
                                            kcfg.seed);
    table.save(dir / (tag + "_table.txt"));
    std::cout << "table: " << table.covered() << " of " << table.rows << " words covered\n";
  }
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  require_file(cfg, "dataset");
  check_knowledge_paths(cfg);
  precheck_training(cfg);
  const auto dir = output_dir(cfg);
  const auto data = load_data(cfg);
  const auto tc = training_config(cfg, data);
  const auto bundle = load_bundle(cfg, data.vocab.size(), tc.hp.d);
  const KnowledgeBundle* kb = bundle ? &*bundle : nullptr;
  const auto& articles = data.corpus.articles;

  if (const auto folds = cfg.count("folds"); folds >= 2) {
    const auto report = cross_validate(articles, data.vocab.size(), kb, folds, tc, cfg.count("jobs"));
    write_text(dir / "cv.csv", report.to_csv());
    for (std::size_t f = 0; f < report.fold_accuracy.size(); ++f)
      std::cout << "fold " << f << " accuracy " << report.fold_accuracy[f] << "\n";
    std::cout << "mean " << report.mean << " std " << report.stddev << "\n";
    return 0;
  }

  std::vector<EncodedArticle> train_set = articles, validation;
  if (const double frac = cfg.real("validation_fraction"); frac > 0.0) {
    const auto [tr, va] = holdout_indices(articles.size(), frac, tc.seed);
    train_set = pick(articles, tr);
    validation = pick(articles, va);
  }
  std::ofstream stream(dir / "epochs.jsonl");
  const auto result = train(train_set, data.vocab.size(), kb, tc, validation,
                            [&](const EpochReport& r) {
                              const auto line = r.to_json();
                              stream << line << '\n' << std::flush;
                              std::cout << line << '\n' << std::flush;
                            });
  save_checkpoint(dir / "model.ckpt", tc.hp, result.params);
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const auto ckpt_path = require_file(cfg, "checkpoint");
  require_file(cfg, "dataset");
  check_knowledge_paths(cfg);
  const auto dir = output_dir(cfg);
  const auto data = load_data(cfg);
  const auto ckpt = load_checkpoint(ckpt_path, data.vocab.size());
  if (ckpt.hp.n != data.corpus.max_words || ckpt.hp.l != data.corpus.max_sentences ||
      ckpt.hp.classes != data.corpus.classes)
    throw UserError("checkpoint shape (n, l, classes) does not match the dataset");
  const auto bundle = load_bundle(cfg, data.vocab.size(), ckpt.hp.d);
  const double acc = evaluate_accuracy(ckpt.params, bundle ? &*bundle : nullptr,
                                       data.corpus.articles, ckpt.hp);
  std::ostringstream js;
  js.precision(17);
  js << "{\"accuracy\":" << acc << ",\"articles\":" << data.corpus.articles.size() << "}\n";
  write_text(dir / "eval.json", js.str());
  std::cout << "accuracy " << acc << " on " << data.corpus.articles.size() << " articles\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  require_file(cfg, "dataset");
  check_knowledge_paths(cfg);
  precheck_training(cfg);
  const auto alphas = cfg.reals("sweep_alphas"), betas = cfg.reals("sweep_betas");
  const auto dir = output_dir(cfg);
  const auto data = load_data(cfg);
  const auto tc = training_config(cfg, data);
  const auto bundle = load_bundle(cfg, data.vocab.size(), tc.hp.d);
  SweepProtocol protocol;
  protocol.folds = cfg.count("folds");
  protocol.jobs = cfg.count("jobs");
  const double frac = cfg.real("validation_fraction");
  protocol.validation_fraction = frac > 0.0 ? frac : 0.2;
  const auto result = sweep_alpha_beta(data.corpus.articles, data.vocab.size(),
                                       bundle ? &*bundle : nullptr, tc, alphas, betas, protocol);
  write_text(dir / "sweep.csv", result.to_csv());
  const auto [a, b, acc] = result.best();
  std::ostringstream line;
  line << "best alpha=" << a << " beta=" << b << " accuracy=" << acc << "\n";
  write_text(dir / "sweep_best.txt", line.str());
  std::cout << line.str();
  return 0;
}

int cmd_gen_synthetic(const RunConfig& cfg) {
  const auto dir = output_dir(cfg);
  const std::size_t classes = cfg.count("classes") ? cfg.count("classes") : 2;
  if (!cfg.flag("knowledge_corpus")) {
    SyntheticSpec spec;
    spec.num_articles = cfg.count("num_articles");
    spec.classes = classes;
    spec.planted_tokens_per_class = cfg.count("planted_tokens");
    spec.filler_vocabulary = cfg.count("filler_vocabulary");
    spec.sentences_per_article = cfg.count("sentences_per_article");
    spec.words_per_sentence = cfg.count("words_per_sentence");
    spec.seed = cfg.count("seed");
    const auto articles = gen_synthetic(spec);
    save_articles(dir / "synthetic.jsonl", articles, classes);
    std::cout << articles.size() << " articles written to " << (dir / "synthetic.jsonl").string()
              << "\n";
    return 0;
  }
  KnowledgeCorpusSpec spec;
  spec.train_articles = cfg.count("num_articles");
  spec.validation_articles = cfg.count("validation_articles");
  if (spec.validation_articles == 0) spec.validation_articles = std::max<std::size_t>(1, spec.train_articles / 4);
  spec.classes = classes;
  spec.sentences_per_article = cfg.count("sentences_per_article");
  spec.words_per_sentence = cfg.count("words_per_sentence");
  spec.filler_vocabulary = cfg.count("filler_vocabulary");
  spec.d = cfg.count("d");
  spec.seed = cfg.count("seed");
  const std::size_t n = spec.words_per_sentence, l = spec.sentences_per_article;
  const auto kc = gen_knowledge_corpus(spec, n, l);
  std::vector<RawArticle> raw = kc.train_raw;
  raw.insert(raw.end(), kc.validation_raw.begin(), kc.validation_raw.end());
  save_articles(dir / "articles.jsonl", raw, classes);
  std::vector<EncodedArticle> enc = kc.train;
  enc.insert(enc.end(), kc.validation.begin(), kc.validation.end());
  kc.vocab.save(dir / "vocab.txt");
  save_encoded(dir / "encoded.jsonl", {n, l, classes, enc});
  kc.bundle.common.save(dir / "kg_common.txt");
  kc.bundle.liberal.save(dir / "kg_lib.txt");
  kc.bundle.conservative.save(dir / "kg_con.txt");
  std::cout << raw.size() << " articles (" << spec.train_articles << " + "
            << spec.validation_articles << ") with knowledge tables written to " << dir.string()
            << "\n";
  return 0;
}

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

bool is_boolean_key(const std::string& key) {
  return key == "no_knowledge" || key == "positional_encoding" || key == "knowledge_corpus";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KHAN political-stance classifier"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, bool> bool_flags;
  app.add_option("--config", config_path, "key = value configuration file");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"preprocess", "encode a raw article file into vocab.txt and encoded.jsonl"},
      {"train-kge", "train and evaluate a knowledge-graph embedding; optionally export a table"},
      {"train", "train the classifier, or cross-validate with --folds"},
      {"eval", "accuracy of a checkpoint on a dataset"},
      {"sweep", "alpha/beta grid sweep"},
      {"gen-synthetic", "write a synthetic article corpus"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    for (const auto& k : RunConfig::keys()) {
      if (is_boolean_key(k.key)) {
        bool_flags[k.key] = false;
        sub->add_flag(flag_name(k.key), bool_flags[k.key], k.help);
      } else {
        sub->add_option(flag_name(k.key), overrides[k.key], k.help + " [" + k.default_value + "]");
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    auto* sub = app.get_subcommands().front();
    for (const auto& k : RunConfig::keys()) {
      if (sub->count(flag_name(k.key)) == 0) continue;
      cfg.set(k.key, is_boolean_key(k.key) ? (bool_flags[k.key] ? "true" : "false")
                                           : overrides[k.key]);
    }
    const std::string name = sub->get_name();
    if (name == "preprocess") return cmd_preprocess(cfg);
    if (name == "train-kge") return cmd_train_kge(cfg);
    if (name == "train") return cmd_train(cfg);
    if (name == "eval") return cmd_eval(cfg);
    if (name == "sweep") return cmd_sweep(cfg);
    if (name == "gen-synthetic") return cmd_gen_synthetic(cfg);
    return 2;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
