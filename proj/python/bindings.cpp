// Python bindings for the classifier, the fold/statistics helpers and the
// ranking metrics.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "khan/errors.hpp"
#include "khan/kge.hpp"
#include "khan/model.hpp"
#include "khan/optim.hpp"
#include "khan/synthetic.hpp"
#include "khan/text.hpp"
#include "khan/trainer.hpp"

namespace py = pybind11;
using namespace khan;

namespace {

std::vector<RawArticle> to_articles(const py::list& items) {
  std::vector<RawArticle> out;
  for (const auto& item : items) {
    const auto d = item.cast<py::dict>();
    RawArticle a;
    a.title = d.contains("title") ? d["title"].cast<std::string>() : "";
    a.body = d["body"].cast<std::string>();
    a.label = d.contains("label") ? d["label"].cast<int>() : 0;
    out.push_back(std::move(a));
  }
  return out;
}

py::list from_articles(const std::vector<RawArticle>& articles) {
  py::list out;
  for (const auto& a : articles) {
    py::dict d;
    d["title"] = a.title;
    d["body"] = a.body;
    d["label"] = a.label;
    out.append(d);
  }
  return out;
}

py::dict report_dict(const EpochReport& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["loss"] = r.loss;
  d["val_acc"] = r.val_acc;
  d["lr"] = r.lr;
  d["secs"] = r.secs;
  return d;
}

/// A trained classifier together with the vocabulary it was fit on.
class Classifier {
 public:
  Classifier(Vocabulary vocab, HyperParams hp, ModelParams params,
             std::vector<EpochReport> reports)
      : vocab_(std::move(vocab)), hp_(hp), params_(std::move(params)),
        reports_(std::move(reports)) {}

  std::vector<double> predict_proba(const std::string& title, const std::string& body) const {
    NoGradGuard guard;
    const auto enc = encode_article({title, body, 0}, vocab_, hp_.n, hp_.l);
    const auto p = predict(enc, params_, nullptr, hp_);
    return {p.data().begin(), p.data().end()};
  }

  int predict_label(const std::string& title, const std::string& body) const {
    const auto enc = encode_article({title, body, 0}, vocab_, hp_.n, hp_.l);
    return predict_class(enc, params_, nullptr, hp_);
  }

  double accuracy(const py::list& articles) const {
    const auto enc = encode_corpus(to_articles(articles), vocab_, hp_.n, hp_.l);
    return evaluate_accuracy(params_, nullptr, enc, hp_);
  }

  py::list reports() const {
    py::list out;
    for (const auto& r : reports_) out.append(report_dict(r));
    return out;
  }

  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t classes() const { return hp_.classes; }

 private:
  Vocabulary vocab_;
  HyperParams hp_;
  ModelParams params_;
  std::vector<EpochReport> reports_;
};

Classifier fit(const py::list& articles, std::size_t classes, std::size_t d, std::size_t heads,
               std::size_t n, std::size_t l, std::size_t epochs, double lr, double weight_decay,
               std::size_t batch_size, const std::string& mode, std::uint64_t seed) {
  const auto raw = to_articles(articles);
  if (raw.empty()) throw UserError("fit: no articles");
  auto vocab = build_vocab(raw);
  const auto enc = encode_corpus(raw, vocab, n, l);
  TrainConfig cfg;
  cfg.hp.d = d;
  cfg.hp.heads = heads;
  cfg.hp.n = n;
  cfg.hp.l = l;
  if (classes == 0)
    for (const auto& a : raw) classes = std::max<std::size_t>(classes, a.label + 1);
  cfg.hp.classes = classes;
  cfg.hp.mode = parse_mode(mode);
  cfg.hp.seed = seed;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.weight_decay = weight_decay;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.validate();
  auto result = [&] {
    py::gil_scoped_release release;
    return train(enc, vocab.size(), nullptr, cfg);
  }();
  return {std::move(vocab), cfg.hp, std::move(result.params), std::move(result.reports)};
}

py::dict completion_metrics(const std::function<double(int, int, int)>& score,
                            std::size_t num_entities,
                            const std::vector<std::tuple<int, int, int>>& known,
                            const std::vector<std::tuple<int, int, int>>& test) {
  TripleStore store;
  for (std::size_t e = 0; e < num_entities; ++e) store.intern_entity(std::to_string(e));
  std::vector<Triple> tests;
  int max_relation = -1;
  for (const auto& [h, r, t] : known) max_relation = std::max(max_relation, r);
  for (const auto& [h, r, t] : test) max_relation = std::max(max_relation, r);
  for (int r = 0; r <= max_relation; ++r) store.intern_relation(std::to_string(r));
  auto check = [&](int h, int r, int t) {
    if (h < 0 || t < 0 || r < 0 || static_cast<std::size_t>(h) >= num_entities ||
        static_cast<std::size_t>(t) >= num_entities)
      throw UserError("triple id out of range");
    return Triple{h, r, t};
  };
  for (const auto& [h, r, t] : known) store.add(check(h, r, t));
  for (const auto& [h, r, t] : test) tests.push_back(check(h, r, t));
  const auto m = evaluate_completion(
      [&](std::int32_t h, std::int32_t r, std::int32_t t) { return score(h, r, t); }, num_entities,
      store, tests);
  py::dict out;
  out["MR"] = m.mean_rank;
  out["MRR"] = m.mean_reciprocal_rank;
  for (const auto& [k, v] : m.hits) out[py::str("HITS@" + std::to_string(k))] = v;
  return out;
}

}  // namespace

PYBIND11_MODULE(_khan, m) {
  m.doc() = "KHAN political-stance classifier";
  py::register_exception<UserError>(m, "UserError", PyExc_ValueError);

  m.def(
      "gen_synthetic",
      [](std::size_t num_articles, std::size_t classes, std::size_t planted_tokens,
         std::size_t filler_vocabulary, std::size_t sentences, std::size_t words,
         std::uint64_t seed) {
        SyntheticSpec spec;
        spec.num_articles = num_articles;
        spec.classes = classes;
        spec.planted_tokens_per_class = planted_tokens;
        spec.filler_vocabulary = filler_vocabulary;
        spec.sentences_per_article = sentences;
        spec.words_per_sentence = words;
        spec.seed = seed;
        return from_articles(gen_synthetic(spec));
      },
      py::arg("num_articles") = 64, py::arg("classes") = 2, py::arg("planted_tokens") = 3,
      py::arg("filler_vocabulary") = 40, py::arg("sentences_per_article") = 4,
      py::arg("words_per_sentence") = 6, py::arg("seed") = 0,
      "Balanced corpus separable by class-specific planted tokens.");

  m.def(
      "load_articles",
      [](const std::string& path) {
        const auto ds = load_articles(path);
        return py::make_tuple(from_articles(ds.articles), ds.classes);
      },
      py::arg("path"), "(articles, classes) from a JSON-lines article file.");

  m.def("split_sentences", [](const std::string& body) { return split_sentences(body); },
        py::arg("body"));
  m.def("make_folds", &make_folds, py::arg("size"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "welch_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = welch_t_test(a, b);
        return py::make_tuple(r.t, r.p, r.df);
      },
      py::arg("a"), py::arg("b"), "(t, two-sided p, Welch-Satterthwaite df).");

  m.def(
      "mean_and_stddev",
      [](const std::vector<double>& v) { return mean_and_stddev(v); }, py::arg("values"));

  m.def("evaluate_completion", &completion_metrics, py::arg("score"), py::arg("num_entities"),
        py::arg("known"), py::arg("test"),
        "Filtered MR, MRR and HITS@1/3/10 for a score(h, r, t) callable.");

  py::class_<PlateauScheduler>(m, "PlateauScheduler")
      .def(py::init<double, std::size_t, double>(), py::arg("lr"), py::arg("patience") = 5,
           py::arg("factor") = 0.5)
      .def("step", &PlateauScheduler::step, py::arg("loss"))
      .def_property_readonly("lr", &PlateauScheduler::lr)
      .def_property_readonly("bad_epochs", &PlateauScheduler::bad_epochs);

  py::class_<Classifier>(m, "Classifier")
      .def("predict_proba", &Classifier::predict_proba, py::arg("title"), py::arg("body"))
      .def("predict", &Classifier::predict_label, py::arg("title"), py::arg("body"))
      .def("accuracy", &Classifier::accuracy, py::arg("articles"))
      .def_property_readonly("reports", &Classifier::reports)
      .def_property_readonly("vocab_size", &Classifier::vocab_size)
      .def_property_readonly("classes", &Classifier::classes);

  m.def("fit", &fit, py::arg("articles"), py::arg("classes") = 0, py::arg("d") = 32,
        py::arg("heads") = 4, py::arg("n") = 16, py::arg("l") = 8, py::arg("epochs") = 20,
        py::arg("lr") = 1e-3, py::arg("weight_decay") = 5e-2, py::arg("batch_size") = 16,
        py::arg("mode") = "WST", py::arg("seed") = 0,
        "Train a classifier without knowledge tables on a list of article dicts.");
}
