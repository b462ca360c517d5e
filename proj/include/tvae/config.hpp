#pragma once

// Flat key=value run configuration. One setting per line, `#` starts a
// comment, unknown keys are rejected. Later sources override earlier ones:
// defaults, config file, command-line overrides.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tvae/model.hpp"
#include "tvae/training.hpp"

namespace tvae {

enum class ValueKind { integer, real, boolean, text, real_list, optional_real };

struct ConfigKey {
  std::string name;
  ValueKind kind;
  std::string default_value;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

class RunConfig {
 public:
  RunConfig();  // all defaults

  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void apply_override(const std::string& assignment);
  void load_file(const std::filesystem::path& path);
  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

  const std::string& text(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::optional<double> optional_real(const std::string& key) const;
  std::vector<double> real_list(const std::string& key) const;
  std::uint64_t seed() const;

  /// Model settings; vocab_size and classes come from the data.
  ModelConfig model_config(std::size_t vocab_size, std::size_t classes) const;
  TrainConfig train_config() const;

  /// Every key with its resolved value, in key-table order, loadable by load_file.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

}  // namespace tvae
