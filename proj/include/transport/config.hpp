#pragma once

// Flat "key = value" configuration files. The same format is embedded in
// every CLI artifact (CSV lines prefixed with "#cfg ") so outputs can be fed
// back as inputs.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "transport/core_model.hpp"

namespace transport {

inline constexpr std::string_view kEmbeddedConfigPrefix = "#cfg ";

class KeyValueConfig {
 public:
  // Accepts plain config text, text with embedded "#cfg " lines (only those are
  // read when present), or a JSON artifact carrying a "config" object.
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig from_file(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  void erase(const std::string& key);
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Sorted "key = value" lines, each preceded by `line_prefix`.
  std::string render(std::string_view line_prefix = "") const;

 private:
  std::map<std::string, std::string> entries_;
};

std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::string join_list(const std::vector<std::string>& items, char sep = ',');
std::string trim(std::string_view text);

Schema schema_from_config(const KeyValueConfig& config);
void schema_to_config(const Schema& schema, KeyValueConfig& config);

}  // namespace transport
