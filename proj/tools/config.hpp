// Flat `key = value` run configuration shared by every subcommand.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "khan/kge.hpp"
#include "khan/model.hpp"
#include "khan/trainer.hpp"

namespace khan::cli {

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
};

class RunConfig {
 public:
  /// Every accepted key with its default, in documentation order.
  static const std::vector<KeySpec>& keys();

  RunConfig();

  /// Reads `key = value` lines; '#' starts a comment. Unknown keys and
  /// malformed lines fail with the line number.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  bool has(const std::string& key) const { return !str(key).empty(); }

  HyperParams hyper() const;
  TrainConfig training() const;
  KgeConfig kge() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace khan::cli
