#include "tvae/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tvae/errors.hpp"

namespace tvae {

const std::vector<ConfigKey>& config_keys() {
  using K = ValueKind;
  static const std::vector<ConfigKey> keys = {
      {"seed", K::integer, "0", "root seed; every component seed derives from it"},
      {"output", K::text, "out", "output directory"},
      // data
      {"train", K::text, "", "training corpus"},
      {"valid", K::text, "", "validation corpus"},
      {"test", K::text, "", "test corpus"},
      {"input", K::text, "", "corpus for per-document commands"},
      {"train_topics", K::text, "", "topic sidecar CSV for the training corpus"},
      {"valid_topics", K::text, "", "topic sidecar CSV for the validation corpus"},
      {"test_topics", K::text, "", "topic sidecar CSV for the test corpus"},
      {"input_topics", K::text, "", "topic sidecar CSV for the input corpus"},
      {"labeled", K::boolean, "false", "corpus lines are label<TAB>text"},
      {"lowercase", K::boolean, "false", "lowercase tokens"},
      {"max_vocab", K::integer, "20000", "vocabulary size cap (reserved ids excluded)"},
      {"vocab", K::text, "", "vocabulary file; defaults to vocab.txt beside the checkpoint"},
      {"checkpoint", K::text, "", "model or LDA checkpoint"},
      // model
      {"mode", K::text, "vae", "vae or cvae"},
      {"topic", K::text, "none", "none, joint or marginal"},
      {"bow", K::boolean, "false", "add the bag-of-words loss"},
      {"emb", K::integer, "200", "embedding size"},
      {"hidden", K::integer, "200", "LSTM hidden size"},
      {"latent", K::integer, "16", "dimension of z"},
      {"topics", K::integer, "16", "number of topics K (LDA and topic modes)"},
      {"label_emb", K::integer, "8", "label embedding size (cvae)"},
      {"dropout", K::real, "0.2", "dropout rate"},
      // training
      {"lr", K::real, "0.001", "Adam learning rate"},
      {"weight_decay", K::real, "0.001", "decoupled weight decay"},
      {"epochs", K::integer, "48", "training epochs"},
      {"batch", K::integer, "32", "batch size"},
      {"kl_weight", K::optional_real, "", "fixed KL weight; empty means annealing"},
      // LDA
      {"lda_iterations", K::integer, "200", "Gibbs sweeps for lda-fit"},
      {"lda_alpha", K::real, "0", "document-topic prior; 0 means 50/K"},
      {"lda_beta", K::real, "0.01", "topic-word prior"},
      {"fold_sweeps", K::integer, "50", "fold-in sweeps"},
      {"fold_burn_in", K::integer, "10", "fold-in burn-in sweeps"},
      {"per_topic", K::integer, "10", "words per topic for lda-topics"},
      // generation
      {"max_len", K::integer, "200", "maximum generated length"},
      {"count", K::integer, "10", "sentences to sample"},
      {"label", K::integer, "-1", "class label for conditional sampling"},
      {"scale", K::real, "1", "prior sample scale"},
      {"z_samples", K::integer, "3", "posterior z samples per document"},
      {"t_samples", K::integer, "3", "posterior t samples per document"},
      {"a", K::integer, "0", "first document index for interpolation"},
      {"b", K::integer, "1", "second document index for interpolation"},
      {"steps", K::integer, "5", "interpolation points"},
      {"which", K::text, "z", "interpolate z, t or both"},
      // protocols
      {"n_train", K::integer, "500", "training examples for the linear probe"},
      {"n_per_class", K::integer, "0", "generated examples per class; 0 means train size / classes"},
      {"low_probability", K::boolean, "false", "scale prior samples by 2"},
      {"seeds", K::integer, "5", "repetitions of a protocol"},
      {"weights", K::real_list, "1,0.1,0.01", "fixed KL weights for kl-sweep"},
      {"grid_samples", K::integer, "100", "test documents in the density grid"},
      {"grid_cells", K::integer, "100", "density grid cells per axis"},
      // synthetic corpora
      {"kind", K::text, "markov", "synth-gen corpus: markov or cluster"},
      {"clusters", K::integer, "2", "clusters for the cluster corpus"},
      {"words_per_cluster", K::integer, "20", "vocabulary per cluster"},
      {"min_length", K::integer, "5", "shortest cluster-corpus document"},
      {"max_length", K::integer, "10", "longest cluster-corpus document"},
      {"iid_words", K::boolean, "false", "cluster documents draw words independently instead of from a chain"},
      {"synth_train", K::integer, "0", "training documents; 0 means the corpus default"},
      {"synth_valid", K::integer, "0", "validation documents; 0 means the corpus default"},
      {"synth_test", K::integer, "0", "test documents; 0 means the corpus default"},
      {"shuffle_labels", K::boolean, "false", "permute labels of the cluster corpus"},
  };
  return keys;
}

namespace {

const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_real(const std::string& s, double& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

void check_value(const ConfigKey& key, const std::string& value) {
  auto fail = [&](const char* what) {
    throw ConfigError("config key '" + key.name + "': '" + value + "' is not " + what);
  };
  std::int64_t i;
  double d;
  switch (key.kind) {
    case ValueKind::integer:
      if (!parse_int(value, i)) fail("an integer");
      break;
    case ValueKind::real:
      if (!parse_real(value, d)) fail("a number");
      break;
    case ValueKind::optional_real:
      if (!value.empty() && !parse_real(value, d)) fail("a number");
      break;
    case ValueKind::boolean:
      if (value != "true" && value != "false" && value != "1" && value != "0") fail("a boolean");
      break;
    case ValueKind::real_list:
      for (const auto& item : split_list(value)) {
        if (!parse_real(item, d)) fail("a comma-separated list of numbers");
      }
      break;
    case ValueKind::text:
      break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& k = find_key(key);
  const auto v = trim(value);
  check_value(k, v);
  values_[key] = v;
  explicit_[key] = true;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::text(const std::string& key) const {
  find_key(key);
  return values_.at(key);
}

std::int64_t RunConfig::integer(const std::string& key) const {
  std::int64_t v = 0;
  parse_int(text(key), v);
  return v;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

double RunConfig::real(const std::string& key) const {
  double v = 0.0;
  parse_real(text(key), v);
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = text(key);
  return v == "true" || v == "1";
}

std::optional<double> RunConfig::optional_real(const std::string& key) const {
  const auto& v = text(key);
  if (v.empty()) return std::nullopt;
  return real(key);
}

std::vector<double> RunConfig::real_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(text(key))) {
    double d = 0.0;
    parse_real(item, d);
    out.push_back(d);
  }
  return out;
}

std::uint64_t RunConfig::seed() const { return static_cast<std::uint64_t>(integer("seed")); }

ModelConfig RunConfig::model_config(std::size_t vocab_size, std::size_t classes) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.emb = count("emb");
  m.hidden = count("hidden");
  m.latent = count("latent");
  m.topic = parse_topic_mode(text("topic"));
  m.topics = m.uses_topics() ? count("topics") : 0;
  m.label_emb = count("label_emb");
  m.dropout = real("dropout");
  m.bow = flag("bow");
  const auto& mode = text("mode");
  if (mode != "vae" && mode != "cvae") throw ConfigError("mode must be vae or cvae, got '" + mode + "'");
  m.conditional = mode == "cvae";
  m.classes = m.conditional ? classes : 0;
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.lr = real("lr");
  t.weight_decay = real("weight_decay");
  t.epochs = count("epochs");
  t.batch = count("batch");
  t.kl_weight_override = optional_real("kl_weight");
  t.seed = derive_seed(seed(), "train");
  t.validate();
  return t;
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& k : config_keys()) out << k.name << '=' << values_.at(k.name) << '\n';
  return out.str();
}

}  // namespace tvae
