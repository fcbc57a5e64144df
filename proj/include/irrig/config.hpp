#pragma once

// Flat `key = value` configuration files. `include = other.conf` pulls in a
// file relative to the including one; later assignments win. `#` starts a
// comment.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "irrig/datagen.hpp"
#include "irrig/lstm.hpp"
#include "irrig/presets.hpp"
#include "irrig/rhc.hpp"

namespace irrig {

class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(const std::string& text, const std::string& base_dir = ".");

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) const;
  std::string str(const std::string& key) const;
  double num(const std::string& key, double def) const;
  int integer(const std::string& key, int def) const;
  bool flag(const std::string& key, bool def) const;
  std::vector<double> list(const std::string& key, const std::vector<double>& def) const;

  /// Throws ConfigError naming the first key that no reader asked for.
  void reject_unused() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  void read_file(const std::string& path, int depth);
  void read_text(const std::string& text, const std::string& base_dir, const std::string& origin, int depth);
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

CampaignConfig campaign_from(const Config& c);
TrainConfig training_from(const Config& c);
SigmoidConfig sigmoid_from(const Config& c);

/// `preset = case1a` starts from a built-in scenario; `zones = M` and
/// `zone.<j>.*` keys describe or override zones (1-based). Zone models come
/// from `zone.<j>.model` files, otherwise from `models`.
Scenario scenario_from(const Config& c, const ModelSource& models);

}  // namespace irrig
