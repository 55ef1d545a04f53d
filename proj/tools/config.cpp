#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "khan/errors.hpp"

namespace khan::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

UserError bad_value(const std::string& key, const std::string& value, const char* want) {
  return UserError("invalid value '" + value + "' for key '" + key + "' (expected " + want + ")");
}

}  // namespace

const std::vector<KeySpec>& RunConfig::keys() {
  static const std::vector<KeySpec> specs = {
      // files
      {"dataset", "", "raw article JSONL, or a directory written by preprocess"},
      {"output_dir", "out", "directory receiving every output file"},
      {"kg_common", "", "common knowledge table"},
      {"kg_lib", "", "liberal knowledge table"},
      {"kg_con", "", "conservative knowledge table"},
      {"checkpoint", "", "model checkpoint for eval"},
      {"triples", "", "triple TSV for train-kge"},
      {"entity_links", "", "word<TAB>entity TSV for table export"},
      {"vocab", "", "vocabulary file for table export"},
      {"stance", "common", "common | liberal | conservative"},
      // model
      {"d", "32", "embedding width"},
      {"heads", "4", "attention heads"},
      {"n", "64", "max words per sentence"},
      {"l", "32", "max sentences per article"},
      {"classes", "0", "class count; 0 takes it from the dataset"},
      {"alpha", "0.5", "common-knowledge factor"},
      {"beta", "0.5", "political-knowledge factor"},
      {"mode", "All", "W | WS | WST | All"},
      {"injection_orientation", "factor_weighs_embedding", "factor_weighs_embedding | algorithm1"},
      {"positional_encoding", "false", "sinusoidal positions on sentence words"},
      {"l2_coeff", "0", "loss-side L2 weight (regularization=loss_penalty)"},
      // training
      {"lr", "1e-3", "learning rate"},
      {"weight_decay", "5e-2", "optimizer-side L2 (regularization=optimizer_decay)"},
      {"regularization", "optimizer_decay", "optimizer_decay | loss_penalty"},
      {"batch_size", "16", "mini-batch size"},
      {"epochs", "50", "training epochs"},
      {"patience", "5", "plateau patience"},
      {"lr_factor", "0.5", "plateau reduction factor"},
      {"folds", "0", "k-fold cross-validation when >= 2"},
      {"validation_fraction", "0", "held-out share when not cross-validating"},
      {"jobs", "1", "parallel folds or sweep cells"},
      {"seed", "0", "single seed for every random choice"},
      {"no_knowledge", "false", "run without knowledge tables"},
      // sweep
      {"sweep_alphas", "0.2,0.4,0.6,0.8,1.0", "alpha grid"},
      {"sweep_betas", "0.2,0.4,0.6,0.8,1.0", "beta grid"},
      // knowledge-graph embedding
      {"kge_method", "RotatE", "RotatE | ModE | HAKE"},
      {"kge_dim", "32", "entity width"},
      {"kge_gamma", "6", "score margin"},
      {"kge_negatives", "8", "negatives per positive"},
      {"kge_temperature", "1", "self-adversarial temperature"},
      {"kge_lr", "0.01", "KGE learning rate"},
      {"kge_epochs", "100", "KGE epochs"},
      {"kge_batch_size", "128", "KGE batch size"},
      {"holdout_ratio", "0.1", "held-out triple share"},
      // synthetic data
      {"num_articles", "64", "synthetic article count"},
      {"planted_tokens", "3", "planted tokens per class"},
      {"filler_vocabulary", "40", "shared filler tokens"},
      {"sentences_per_article", "4", "synthetic sentences per article"},
      {"words_per_sentence", "6", "synthetic words per sentence"},
      {"knowledge_corpus", "false", "emit the knowledge-signal corpus and its tables"},
      {"validation_articles", "0", "knowledge corpus: articles after the training block"},
  };
  return specs;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UserError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string(), lineno, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (!values_.count(key)) throw ParseError(path.string(), lineno, "unknown config key '" + key + "'");
    values_[key] = trim(line.substr(eq + 1));
  }
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("config key not registered: " + key);
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const auto& v = str(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw bad_value(key, v, "a number");
  return out;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto& v = str(key);
  unsigned long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(out);
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = str(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
  throw bad_value(key, v, "true or false");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      throw bad_value(key, str(key), "a comma-separated list of numbers");
    out.push_back(v);
  }
  if (out.empty()) throw bad_value(key, str(key), "at least one number");
  return out;
}

HyperParams RunConfig::hyper() const {
  HyperParams hp;
  hp.d = count("d");
  hp.heads = count("heads");
  hp.n = count("n");
  hp.l = count("l");
  hp.classes = count("classes");
  hp.alpha = real("alpha");
  hp.beta = real("beta");
  try {
    hp.mode = parse_mode(str("mode"));
  } catch (const std::exception&) {
    throw bad_value("mode", str("mode"), "W, WS, WST or All");
  }
  try {
    hp.orientation = parse_orientation(str("injection_orientation"));
  } catch (const std::exception&) {
    throw bad_value("injection_orientation", str("injection_orientation"),
                    "factor_weighs_embedding or algorithm1");
  }
  hp.positional_encoding = flag("positional_encoding");
  hp.l2_coeff = real("l2_coeff");
  hp.seed = count("seed");
  return hp;
}

TrainConfig RunConfig::training() const {
  TrainConfig cfg;
  cfg.lr = real("lr");
  cfg.weight_decay = real("weight_decay");
  cfg.batch_size = count("batch_size");
  cfg.epochs = count("epochs");
  cfg.patience = count("patience");
  cfg.lr_factor = real("lr_factor");
  cfg.seed = count("seed");
  const auto& reg = str("regularization");
  if (reg == "optimizer_decay")
    cfg.regularization = Regularization::OptimizerDecay;
  else if (reg == "loss_penalty")
    cfg.regularization = Regularization::LossPenalty;
  else
    throw bad_value("regularization", reg, "optimizer_decay or loss_penalty");
  cfg.hp = hyper();
  return cfg;
}

KgeConfig RunConfig::kge() const {
  KgeConfig cfg;
  try {
    cfg.method = parse_kge_method(str("kge_method"));
  } catch (const std::exception&) {
    throw bad_value("kge_method", str("kge_method"), "RotatE, ModE or HAKE");
  }
  cfg.dim = count("kge_dim");
  cfg.gamma = real("kge_gamma");
  cfg.negatives = count("kge_negatives");
  cfg.adversarial_temperature = real("kge_temperature");
  cfg.lr = real("kge_lr");
  cfg.epochs = count("kge_epochs");
  cfg.batch_size = count("kge_batch_size");
  cfg.seed = count("seed");
  return cfg;
}

}  // namespace khan::cli
