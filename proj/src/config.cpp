#include "transport/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "transport/error.hpp"

namespace transport {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

namespace {

void parse_line(std::string_view line, std::size_t line_no, KeyValueConfig& config) {
  const std::string t = trim(line);
  if (t.empty() || t[0] == '#') return;
  const auto eq = t.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value': " + t);
  std::string key = trim(std::string_view(t).substr(0, eq));
  if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
  config.set(std::move(key), trim(std::string_view(t).substr(eq + 1)));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig config;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    try {
      const auto j = nlohmann::json::parse(body);
      for (const auto& [key, value] : j.at("config").items())
        config.set(key, value.is_string() ? value.get<std::string>() : value.dump());
      return config;
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("JSON input has no usable \"config\" object: ") + ex.what());
    }
  }

  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) lines.push_back(line);

  bool embedded = false;
  for (const auto& line : lines)
    if (line.rfind(kEmbeddedConfigPrefix, 0) == 0) embedded = true;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (embedded) {
      if (lines[i].rfind(kEmbeddedConfigPrefix, 0) == 0)
        parse_line(std::string_view(lines[i]).substr(kEmbeddedConfigPrefix.size()), i + 1, config);
    } else {
      parse_line(lines[i], i + 1, config);
    }
  }
  return config;
}

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

void KeyValueConfig::erase(const std::string& key) { entries_.erase(key); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool KeyValueConfig::contains(const std::string& key) const { return entries_.count(key) != 0; }

std::string KeyValueConfig::render(std::string_view line_prefix) const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += line_prefix;
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

Schema schema_from_config(const KeyValueConfig& config) {
  Schema s;
  if (auto v = config.get("treatment")) s.treatment = *v;
  if (auto v = config.get("outcome")) s.outcome = *v;
  if (auto v = config.get("x_columns")) s.x_columns = split_list(*v);
  if (auto v = config.get("v_columns")) s.v_columns = split_list(*v);
  if (auto v = config.get("stratum"); v && !v->empty()) s.stratum = *v;
  if (auto v = config.get("cluster"); v && !v->empty()) s.cluster = *v;
  if (auto v = config.get("weight"); v && !v->empty()) s.weight = *v;
  if (s.x_columns.empty()) throw ConfigError("schema is missing 'x_columns'");
  if (s.v_columns.empty()) throw ConfigError("schema is missing 'v_columns'");
  return s;
}

void schema_to_config(const Schema& schema, KeyValueConfig& config) {
  config.set("treatment", schema.treatment);
  config.set("outcome", schema.outcome);
  config.set("x_columns", join_list(schema.x_columns));
  config.set("v_columns", join_list(schema.v_columns));
  if (schema.stratum) config.set("stratum", *schema.stratum);
  if (schema.cluster) config.set("cluster", *schema.cluster);
  if (schema.weight) config.set("weight", *schema.weight);
}

}  // namespace transport
