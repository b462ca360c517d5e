// tvae: command-line front end for the topic-aware text VAE.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "tvae/classifiers.hpp"
#include "tvae/config.hpp"
#include "tvae/data.hpp"
#include "tvae/errors.hpp"
#include "tvae/generation.hpp"
#include "tvae/lda.hpp"
#include "tvae/protocols.hpp"
#include "tvae/training.hpp"

namespace fs = std::filesystem;
using namespace tvae;

namespace {

// ---- helpers ----------------------------------------------------------------

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = cfg.text("output");
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
  std::ofstream out(output_dir(cfg) / "manifest.txt");
  out << "# tvae " << command << "\n" << cfg.dump();
}

std::string require(const RunConfig& cfg, const std::string& key) {
  const auto& v = cfg.text(key);
  if (v.empty()) throw ConfigError("missing required setting '" + key + "'");
  return v;
}

bool labeled(const RunConfig& cfg) { return cfg.flag("labeled") || cfg.text("mode") == "cvae"; }

Dataset load_split(const RunConfig& cfg, const Vocab& vocab, const std::string& path, const std::string& topics_key,
                   bool with_labels) {
  Dataset ds = make_dataset(vocab, read_corpus(path, with_labels), cfg.flag("lowercase"));
  const auto& topics = cfg.text(topics_key);
  if (!topics.empty()) attach_topics(ds, read_csv_matrix(topics));
  return ds;
}

fs::path vocab_path(const RunConfig& cfg) {
  if (!cfg.text("vocab").empty()) return cfg.text("vocab");
  return fs::path(require(cfg, "checkpoint")).parent_path() / "vocab.txt";
}

Checkpoint load_model(const RunConfig& cfg) { return load_checkpoint(require(cfg, "checkpoint")); }

/// Labels are read whenever the checkpoint is conditional or the config says so.
Dataset load_for_model(const RunConfig& cfg, const ModelParams& params, const Vocab& vocab, const std::string& key,
                       const std::string& topics_key) {
  if (vocab.size() != params.config.vocab_size) throw InputError("vocabulary does not match the checkpoint");
  return load_split(cfg, vocab, require(cfg, key), topics_key, cfg.flag("labeled") || params.config.conditional);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void print_and_save(const RunConfig& cfg, const std::string& file, const std::vector<std::string>& lines) {
  std::ofstream out(output_dir(cfg) / file);
  for (const auto& l : lines) {
    std::cout << l << '\n';
    out << l << '\n';
  }
}

std::vector<std::vector<int>> ids_of(const Dataset& ds) {
  std::vector<std::vector<int>> out;
  for (const auto& ex : ds.examples) out.push_back(ex.ids);
  return out;
}

// ---- commands -----------------------------------------------------------------

void cmd_synth_gen(const RunConfig& cfg) {
  const auto dir = output_dir(cfg);
  const auto seed = derive_seed(cfg.seed(), "synth");
  const auto& kind = cfg.text("kind");
  SyntheticSplits s;
  auto size_or = [&](const char* key, std::size_t fallback) {
    const auto v = cfg.count(key);
    return v ? v : fallback;
  };
  if (kind == "markov") {
    s = synthetic_markov_corpus(seed, 100, size_or("synth_train", 10000), size_or("synth_valid", 1000),
                                size_or("synth_test", 1000));
  } else if (kind == "cluster") {
    ClusterCorpusOptions o;
    o.clusters = cfg.count("clusters");
    o.words_per_cluster = cfg.count("words_per_cluster");
    o.min_length = cfg.count("min_length");
    o.max_length = cfg.count("max_length");
    o.markov = !cfg.flag("iid_words");
    o.train = size_or("synth_train", o.train);
    o.valid = size_or("synth_valid", o.valid);
    o.test = size_or("synth_test", o.test);
    s = cluster_corpus(seed, o);
    if (cfg.flag("shuffle_labels")) {
      Rng rng(derive_seed(cfg.seed(), "shuffle-labels"));
      for (auto* split : {&s.train, &s.valid, &s.test}) std::shuffle(split->labels.begin(), split->labels.end(), rng);
    }
  } else {
    throw ConfigError("kind must be markov or cluster, got '" + kind + "'");
  }
  write_corpus(dir / "train.txt", s.train);
  write_corpus(dir / "valid.txt", s.valid);
  write_corpus(dir / "test.txt", s.test);
  std::cout << "wrote " << s.train.lines.size() << '/' << s.valid.lines.size() << '/' << s.test.lines.size()
            << " documents to " << dir.string() << '\n';
}

void cmd_lda_fit(const RunConfig& cfg) {
  const auto dir = output_dir(cfg);
  const bool with_labels = labeled(cfg);
  const auto train_text = read_corpus(require(cfg, "train"), with_labels);
  Vocab vocab;
  if (!cfg.text("vocab").empty()) {
    vocab = Vocab::load(cfg.text("vocab"));
  } else {
    std::vector<std::vector<std::string>> toks;
    for (const auto& l : train_text.lines) toks.push_back(tokenize(l, cfg.flag("lowercase")));
    vocab = Vocab::build(toks, cfg.count("max_vocab"));
  }
  const Dataset train = make_dataset(vocab, train_text, cfg.flag("lowercase"));
  LdaOptions opt;
  opt.topics = cfg.count("topics");
  opt.iterations = cfg.count("lda_iterations");
  opt.alpha = cfg.real("lda_alpha");
  opt.beta = cfg.real("lda_beta");
  opt.seed = derive_seed(cfg.seed(), "lda");
  const auto fit = lda_fit(ids_of(train), vocab.size(), opt);
  fit.model.save(dir / "lda.ckpt");
  vocab.save(dir / "vocab.txt");

  FoldInOptions fold;
  fold.sweeps = cfg.count("fold_sweeps");
  fold.burn_in = cfg.count("fold_burn_in");
  for (const std::string split : {"train", "valid", "test"}) {
    if (cfg.text(split).empty()) continue;
    const Dataset ds = split == "train" ? train : make_dataset(vocab, read_corpus(cfg.text(split), with_labels),
                                                                cfg.flag("lowercase"));
    std::vector<std::vector<double>> theta;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      fold.seed = derive_seed(derive_seed(cfg.seed(), "fold-in-" + split), static_cast<std::uint64_t>(i));
      theta.push_back(lda_infer_theta(fit.model, ds.examples[i].ids, fold));
    }
    write_csv_matrix(dir / ("topics_" + split + ".csv"), theta);
  }
  std::cout << "fitted LDA with " << opt.topics << " topics on " << train.size() << " documents\n";
}

void cmd_lda_topics(const RunConfig& cfg) {
  const auto model = LdaModel::load(require(cfg, "checkpoint"));
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  if (vocab.size() != model.vocab_size()) throw InputError("vocabulary does not match the LDA checkpoint");
  std::vector<std::string> lines;
  const auto top = lda_top_words(model, cfg.count("per_topic"));
  for (std::size_t k = 0; k < top.size(); ++k) {
    std::string line = std::to_string(k) + ":";
    for (int w : top[k]) line += " " + vocab.token(w);
    lines.push_back(line);
  }
  print_and_save(cfg, "topics.txt", lines);
}

void cmd_train(const RunConfig& cfg) {
  const auto dir = output_dir(cfg);
  const bool with_labels = labeled(cfg);
  const auto train_text = read_corpus(require(cfg, "train"), with_labels);
  Vocab vocab;
  if (!cfg.text("vocab").empty()) {
    vocab = Vocab::load(cfg.text("vocab"));
  } else {
    std::vector<std::vector<std::string>> toks;
    for (const auto& l : train_text.lines) toks.push_back(tokenize(l, cfg.flag("lowercase")));
    vocab = Vocab::build(toks, cfg.count("max_vocab"));
  }
  Dataset train = make_dataset(vocab, train_text, cfg.flag("lowercase"));
  if (!cfg.text("train_topics").empty()) attach_topics(train, read_csv_matrix(cfg.text("train_topics")));
  const Dataset valid = load_split(cfg, vocab, require(cfg, "valid"), "valid_topics", with_labels);

  const ModelConfig model = cfg.model_config(vocab.size(), train.num_classes);
  if (model.topic == TopicMode::joint && (cfg.text("train_topics").empty() || cfg.text("valid_topics").empty())) {
    throw InputError("joint mode needs topic sidecars (train_topics, valid_topics)");
  }
  const TrainConfig tc = cfg.train_config();
  vocab.save(dir / "vocab.txt");

  TrainState state;
  if (!cfg.text("checkpoint").empty()) {
    state = load_checkpoint(cfg.text("checkpoint")).state;
    if (state.params.config.vocab_size != model.vocab_size) throw InputError("resume checkpoint vocabulary mismatch");
  } else {
    state = init_state(model, tc);
  }
  std::vector<MetricRow> rows;
  auto result = resume(std::move(state), tc, train, valid, [&](const MetricRow& r) {
    rows.push_back(r);
    write_metric_log(dir / "metrics.csv", rows);
    std::cout << "epoch " << r.epoch << " train " << fmt(r.total) << " valid nll " << fmt(r.valid_nll) << " kl "
              << fmt(r.valid_kl) << " ppl " << fmt(r.valid_ppl) << std::endl;
  });
  write_metric_log(dir / "metrics.csv", result.log);
  save_model(dir / "model.ckpt", result.best);
  save_checkpoint(dir / "last.ckpt", result.last, &tc);
  std::cout << "best epoch " << result.best_epoch << " valid objective " << fmt(result.best_valid) << '\n';
  if (!cfg.text("test").empty()) {
    const Dataset test = load_split(cfg, vocab, cfg.text("test"), "test_topics", with_labels);
    const auto rep = evaluate(result.best, test);
    print_and_save(cfg, "test_report.txt",
                   {"nll=" + fmt(rep.nll()) + " kl=" + fmt(rep.kl()) + " ppl=" + fmt(rep.ppl())});
  }
}

void cmd_eval(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  const Dataset data = load_for_model(cfg, ck.state.params, vocab, "input", "input_topics");
  const auto r = evaluate(ck.state.params, data);
  const double n = static_cast<double>(r.examples);
  print_and_save(cfg, "eval.txt",
                 {"nll=" + fmt(r.nll()) + " kl=" + fmt(r.kl()) + " ppl=" + fmt(r.ppl()),
                  "kl_z=" + fmt(r.kl_z_total / n) + " kl_t=" + fmt(r.kl_t_total / n) +
                      " topic_nll=" + fmt(r.topic_nll_total / n),
                  "examples=" + std::to_string(r.examples) + " tokens=" + std::to_string(r.token_count)});
}

void cmd_reconstruct(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  const Dataset data = load_for_model(cfg, ck.state.params, vocab, "input", "input_topics");
  Rng rng(derive_seed(cfg.seed(), "reconstruct"));
  std::vector<std::string> lines;
  for (const auto& ex : data.examples) {
    lines.push_back("input: " + detokenize(vocab, ex.ids));
    for (const auto& r : reconstruct(ck.state.params, ex, cfg.count("z_samples"), cfg.count("t_samples"), rng,
                                     cfg.count("max_len"))) {
      lines.push_back("  " + r.source + ": " + detokenize(vocab, r.ids));
    }
  }
  print_and_save(cfg, "reconstructions.txt", lines);
}

void cmd_sample(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  Rng rng(derive_seed(cfg.seed(), "sample"));
  std::vector<std::string> lines;
  for (const auto& g : sample_sentences(ck.state.params, cfg.count("count"), static_cast<int>(cfg.integer("label")),
                                        cfg.real("scale"), rng, cfg.count("max_len"))) {
    lines.push_back(detokenize(vocab, g.ids));
  }
  print_and_save(cfg, "samples.txt", lines);
}

void cmd_interpolate(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  const Dataset data = load_for_model(cfg, ck.state.params, vocab, "input", "input_topics");
  const auto a = cfg.count("a"), b = cfg.count("b");
  if (a >= data.size() || b >= data.size()) throw InputError("interpolation document index out of range");
  std::vector<std::string> lines;
  for (const auto& ids : interpolate(ck.state.params, data.examples[a], data.examples[b], cfg.count("steps"),
                                     parse_interpolate_which(cfg.text("which")), cfg.count("max_len"))) {
    lines.push_back(detokenize(vocab, ids));
  }
  print_and_save(cfg, "interpolation.txt", lines);
}

void cmd_infer_topics(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  if (ck.state.params.config.topic != TopicMode::marginal) throw ContractError("infer-topics needs a marginal model");
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  const Dataset data = load_for_model(cfg, ck.state.params, vocab, "input", "input_topics");
  write_csv_matrix(output_dir(cfg) / "theta.csv", infer_topics(ck.state.params, data));
  std::cout << "wrote topic distributions for " << data.size() << " documents\n";
}

void cmd_repr_export(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  const Dataset data = load_for_model(cfg, ck.state.params, vocab, "input", "input_topics");
  write_csv_matrix(output_dir(cfg) / "features.csv", extract_representations(ck.state.params, data));
  std::cout << "wrote " << data.size() << " feature rows\n";
}

LabeledFeatures features_for(const RunConfig& cfg, const ModelParams& params, const Vocab& vocab,
                             const std::string& split) {
  if (vocab.size() != params.config.vocab_size) throw InputError("vocabulary does not match the checkpoint");
  const Dataset ds = load_split(cfg, vocab, require(cfg, split), split + "_topics", true);
  return {extract_representations(params, ds), ds.labels()};
}

void cmd_clf_latent(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  const auto train = features_for(cfg, ck.state.params, vocab, "train");
  const auto valid = features_for(cfg, ck.state.params, vocab, "valid");
  const auto test = features_for(cfg, ck.state.params, vocab, "test");
  const auto r = linear_classifier_eval(train, valid, test, cfg.count("n_train"), cfg.count("seeds"),
                                        derive_seed(cfg.seed(), "clf-latent"));
  std::vector<std::string> lines{"accuracy=" + fmt(r.mean_accuracy)};
  for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
    lines.push_back("seed " + std::to_string(i) + " accuracy=" + fmt(r.accuracies[i]) + " lambda=" + fmt(r.lambdas[i]));
  }
  print_and_save(cfg, "clf_latent.txt", lines);
}

void cmd_clf_generated(const RunConfig& cfg) {
  const auto ck = load_model(cfg);
  const auto& params = ck.state.params;
  if (!params.config.conditional) throw ContractError("clf-generated needs a conditional (cvae) checkpoint");
  const Vocab vocab = Vocab::load(vocab_path(cfg));
  if (vocab.size() != params.config.vocab_size) throw InputError("vocabulary does not match the checkpoint");
  const Dataset test = load_split(cfg, vocab, require(cfg, "test"), "test_topics", true);
  std::size_t per_class = cfg.count("n_per_class");
  if (per_class == 0) {
    const auto train = read_corpus(require(cfg, "train"), true);
    per_class = train.lines.size() / params.config.classes;
  }
  const auto r = conditional_generation_eval(params, per_class, cfg.flag("low_probability"), test, cfg.count("seeds"),
                                             derive_seed(cfg.seed(), "clf-generated"), cfg.count("max_len"));
  std::vector<std::string> lines{"accuracy=" + fmt(r.mean_accuracy)};
  for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
    lines.push_back("seed " + std::to_string(i) + " accuracy=" + fmt(r.accuracies[i]));
  }
  print_and_save(cfg, "clf_generated.txt", lines);
}

void cmd_kl_sweep(RunConfig cfg) {
  // The sweep model is small unless configured otherwise.
  if (!cfg.is_set("emb")) cfg.set("emb", "16");
  if (!cfg.is_set("hidden")) cfg.set("hidden", "16");
  if (!cfg.is_set("latent")) cfg.set("latent", "2");
  // No other regularizer competes with the KL weight being swept.
  if (!cfg.is_set("dropout")) cfg.set("dropout", "0");
  if (!cfg.is_set("weight_decay")) cfg.set("weight_decay", "0");
  const auto dir = output_dir(cfg);
  TextCorpus train_text, valid_text, test_text;
  if (cfg.text("train").empty()) {
    const auto s = synthetic_markov_corpus(derive_seed(cfg.seed(), "synth"));
    train_text = s.train;
    valid_text = s.valid;
    test_text = s.test;
  } else {
    train_text = read_corpus(cfg.text("train"), false);
    valid_text = read_corpus(require(cfg, "valid"), false);
    test_text = read_corpus(require(cfg, "test"), false);
  }
  std::vector<std::vector<std::string>> toks;
  for (const auto& l : train_text.lines) toks.push_back(tokenize(l, cfg.flag("lowercase")));
  const Vocab vocab = Vocab::build(toks, cfg.count("max_vocab"));
  vocab.save(dir / "vocab.txt");
  const Dataset train = make_dataset(vocab, train_text), valid = make_dataset(vocab, valid_text),
                test = make_dataset(vocab, test_text);
  const ModelConfig model = cfg.model_config(vocab.size(), 0);
  if (model.topic != TopicMode::none || model.conditional) throw ConfigError("kl-sweep runs the standard VAE only");
  GridSpec grid;
  grid.cells = cfg.count("grid_cells");
  const auto runs = kl_sweep(model, cfg.train_config(), train, valid, test, cfg.real_list("weights"),
                             cfg.count("grid_samples"), grid);
  std::vector<std::string> lines{"weight,nll,kl,ppl"};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    lines.push_back(fmt(r.weight) + "," + fmt(r.test.nll()) + "," + fmt(r.test.kl()) + "," + fmt(r.test.ppl()));
    write_csv_matrix(dir / ("grid_" + std::to_string(i) + ".csv"), r.grid);
    write_metric_log(dir / ("metrics_" + std::to_string(i) + ".csv"), r.log);
    save_model(dir / ("model_" + std::to_string(i) + ".ckpt"), r.params);
  }
  print_and_save(cfg, "sweep.csv", lines);
}

struct Command {
  std::string name;
  std::string help;
  std::vector<std::string> keys;
  std::function<void(const RunConfig&)> run;
};

std::vector<Command> commands() {
  const std::vector<std::string> model_keys = {"mode", "topic", "bow", "emb", "hidden", "latent", "topics",
                                               "label_emb", "dropout"};
  const std::vector<std::string> train_keys = {"lr", "weight_decay", "epochs", "batch", "kl_weight"};
  const std::vector<std::string> split_keys = {"train", "valid", "test", "train_topics", "valid_topics",
                                               "test_topics", "labeled", "lowercase", "max_vocab", "vocab"};
  const std::vector<std::string> input_keys = {"checkpoint", "vocab", "input", "input_topics", "labeled", "lowercase"};
  auto join = [](std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  return {
      {"synth-gen", "write a synthetic corpus (Markov chain or labeled clusters)",
       {"kind", "clusters", "words_per_cluster", "min_length", "max_length", "iid_words", "synth_train", "synth_valid",
        "synth_test", "shuffle_labels"},
       cmd_synth_gen},
      {"lda-fit", "fit LDA on the training split and write topic sidecars",
       join({split_keys, {"topics", "lda_iterations", "lda_alpha", "lda_beta", "fold_sweeps", "fold_burn_in"}}),
       cmd_lda_fit},
      {"lda-topics", "print the top words of every LDA topic", {"checkpoint", "vocab", "per_topic"}, cmd_lda_topics},
      {"train", "train a VAE or CVAE in any topic mode", join({split_keys, model_keys, train_keys, {"checkpoint"}}),
       cmd_train},
      {"eval", "report NLL, KL and perplexity on a corpus", input_keys, cmd_eval},
      {"reconstruct", "decode documents from posterior means and samples",
       join({input_keys, {"z_samples", "t_samples", "max_len"}}), cmd_reconstruct},
      {"sample", "decode sentences drawn from the prior", {"checkpoint", "vocab", "count", "label", "scale", "max_len"},
       cmd_sample},
      {"interpolate", "decode points between two documents in latent space",
       join({input_keys, {"a", "b", "steps", "which", "max_len"}}), cmd_interpolate},
      {"infer-topics", "write per-document topic distributions of a marginal model", input_keys, cmd_infer_topics},
      {"repr-export", "write posterior-mean features per document", input_keys, cmd_repr_export},
      {"clf-latent", "linear SVM on latent features",
       join({{"checkpoint", "vocab", "train", "valid", "test", "train_topics", "valid_topics", "test_topics",
              "lowercase", "n_train", "seeds"}}),
       cmd_clf_latent},
      {"clf-generated", "classifier trained on generated text, tested on real text",
       {"checkpoint", "vocab", "train", "test", "test_topics", "lowercase", "n_per_class", "low_probability", "seeds",
        "max_len"},
       cmd_clf_generated},
      {"kl-sweep", "train standard VAEs at fixed KL weights and export latent densities",
       join({{"train", "valid", "test", "lowercase", "max_vocab", "weights", "grid_samples", "grid_cells"}, model_keys,
             train_keys}),
       [](const RunConfig& c) { cmd_kl_sweep(c); }},
  };
}

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ContractError*>(&e)) return 1;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-aware variational autoencoder for text"};
  app.require_subcommand(1);
  const auto cmds = commands();

  struct Parsed {
    std::string config_file;
    std::vector<std::string> overrides;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
  };
  std::vector<Parsed> parsed(cmds.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    auto& p = parsed[i];
    sub->add_option("--config", p.config_file, "key=value config file");
    sub->add_option("--set", p.overrides, "override a setting, key=value (repeatable)");
    std::vector<std::string> keys = cmds[i].keys;
    keys.insert(keys.begin(), {"seed", "output"});
    for (const auto& key : keys) {
      const auto& spec = *std::find_if(config_keys().begin(), config_keys().end(),
                                       [&](const ConfigKey& k) { return k.name == key; });
      if (spec.kind == ValueKind::boolean) {
        sub->add_flag(flag_name(key), p.flags[key], spec.help);
      } else {
        sub->add_option(flag_name(key), p.values[key], spec.help + " [" + spec.default_value + "]");
      }
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      RunConfig cfg;
      const auto& p = parsed[i];
      if (!p.config_file.empty()) cfg.load_file(p.config_file);
      for (const auto& o : p.overrides) cfg.apply_override(o);
      for (const auto& [key, value] : p.values) {
        if (subs[i]->count(flag_name(key)) > 0) cfg.set(key, value);
      }
      for (const auto& [key, on] : p.flags) {
        if (on) cfg.set(key, "true");
      }
      write_manifest(cfg, cmds[i].name);
      cmds[i].run(cfg);
      return 0;
    } catch (const tvae::Error& e) {
      std::cerr << "tvae " << cmds[i].name << ": " << e.what() << '\n';
      return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
      std::cerr << "tvae " << cmds[i].name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "tvae " << cmds[i].name << ": " << e.what() << '\n';
      return 2;
    }
  }
  return 1;
}
