#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "riftlab/rift.hpp"

// Experiment configuration, loaded from a TOML subset:
//
//   key = value            value: "string", true/false, integer, float, [array]
//   [section]              following keys are read as "section.key"
//   # comment              blank lines ignored; values never span lines
//
// Full TOML (dates, nested tables, multiline strings) is deliberately out of
// scope; the schema below only needs flat keys and one [prior] section.
// Errors are reported as "<source>:<line>: <message>".

namespace riftlab {

struct TomlValue {
  enum class Kind { boolean, integer, floating, string, array };
  Kind kind = Kind::integer;
  bool b = false;
  long long i = 0;
  double f = 0.0;
  std::string s;
  std::vector<TomlValue> items;
  int line = 0;

  bool is_number() const { return kind == Kind::integer || kind == Kind::floating; }
  double as_real() const { return kind == Kind::integer ? static_cast<double>(i) : f; }
};

struct TomlDoc {
  std::string source;  // name used in error messages
  std::map<std::string, TomlValue> values;
};

namespace config_detail {

[[noreturn]] inline void fail(const std::string& source, int line, const std::string& msg) {
  std::ostringstream os;
  os << source << ":" << line << ": " << msg;
  throw std::invalid_argument(os.str());
}

inline bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

struct LineCursor {
  const std::string& text;
  std::size_t pos = 0;
  const std::string& source;
  int line;

  void skip_space() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool at_end_or_comment() {
    skip_space();
    return pos >= text.size() || text[pos] == '#';
  }
  char peek() const { return pos < text.size() ? text[pos] : '\0'; }

  TomlValue parse_value();

  TomlValue parse_string() {
    TomlValue v;
    v.kind = TomlValue::Kind::string;
    v.line = line;
    ++pos;  // opening quote
    while (pos < text.size() && text[pos] != '"') {
      char c = text[pos];
      if (c == '\\') {
        if (pos + 1 >= text.size()) fail(source, line, "dangling escape in string");
        char e = text[pos + 1];
        if (e == '"') c = '"';
        else if (e == '\\') c = '\\';
        else if (e == 'n') c = '\n';
        else if (e == 't') c = '\t';
        else fail(source, line, std::string("unknown escape '\\") + e + "' in string");
        ++pos;
      }
      v.s.push_back(c);
      ++pos;
    }
    if (pos >= text.size()) fail(source, line, "unterminated string");
    ++pos;  // closing quote
    return v;
  }

  TomlValue parse_array() {
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    v.line = line;
    ++pos;  // '['
    skip_space();
    if (peek() == ']') {
      ++pos;
      return v;
    }
    while (true) {
      v.items.push_back(parse_value());
      skip_space();
      if (peek() == ',') {
        ++pos;
        skip_space();
        continue;
      }
      if (peek() == ']') {
        ++pos;
        break;
      }
      fail(source, line, "expected ',' or ']' in array");
    }
    for (const TomlValue& item : v.items) {
      const bool same = item.kind == v.items.front().kind ||
                        (item.is_number() && v.items.front().is_number());
      if (!same) fail(source, line, "array elements must share one type");
    }
    return v;
  }

  TomlValue parse_scalar() {
    std::size_t start = pos;
    while (pos < text.size() && text[pos] != ',' && text[pos] != ']' && text[pos] != '#' &&
           text[pos] != ' ' && text[pos] != '\t')
      ++pos;
    std::string tok = text.substr(start, pos - start);
    if (tok.empty()) fail(source, line, "expected a value");
    TomlValue v;
    v.line = line;
    if (tok == "true" || tok == "false") {
      v.kind = TomlValue::Kind::boolean;
      v.b = tok == "true";
      return v;
    }
    bool integral = true;
    for (std::size_t k = 0; k < tok.size(); ++k) {
      char c = tok[k];
      if (k == 0 && (c == '+' || c == '-')) continue;
      if (!std::isdigit(static_cast<unsigned char>(c))) integral = false;
    }
    if (integral && tok != "+" && tok != "-") {
      v.kind = TomlValue::Kind::integer;
      v.i = std::strtoll(tok.c_str(), nullptr, 10);
      return v;
    }
    char* end = nullptr;
    const double f = std::strtod(tok.c_str(), &end);
    if (end == nullptr || *end != '\0' || end == tok.c_str())
      fail(source, line, "cannot parse value '" + tok + "'");
    v.kind = TomlValue::Kind::floating;
    v.f = f;
    return v;
  }
};

inline TomlValue LineCursor::parse_value() {
  skip_space();
  if (peek() == '"') return parse_string();
  if (peek() == '[') return parse_array();
  return parse_scalar();
}

}  // namespace config_detail

inline TomlDoc parse_toml(const std::string& text, const std::string& source) {
  TomlDoc doc;
  doc.source = source;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    config_detail::LineCursor cur{raw, 0, source, line};
    if (cur.at_end_or_comment()) continue;
    if (cur.peek() == '[') {
      ++cur.pos;
      std::size_t start = cur.pos;
      while (cur.pos < raw.size() && config_detail::is_key_char(raw[cur.pos])) ++cur.pos;
      section = raw.substr(start, cur.pos - start);
      if (section.empty() || cur.peek() != ']')
        config_detail::fail(source, line, "malformed section header");
      ++cur.pos;
      if (!cur.at_end_or_comment())
        config_detail::fail(source, line, "trailing text after section header");
      continue;
    }
    std::size_t start = cur.pos;
    while (cur.pos < raw.size() && config_detail::is_key_char(raw[cur.pos])) ++cur.pos;
    std::string key = raw.substr(start, cur.pos - start);
    if (key.empty()) config_detail::fail(source, line, "expected a key");
    cur.skip_space();
    if (cur.peek() != '=') config_detail::fail(source, line, "expected '=' after key '" + key + "'");
    ++cur.pos;
    TomlValue value = cur.parse_value();
    if (!cur.at_end_or_comment())
      config_detail::fail(source, line, "trailing text after value for key '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    if (doc.values.count(key)) config_detail::fail(source, line, "duplicate key '" + key + "'");
    value.line = line;
    doc.values.emplace(std::move(key), std::move(value));
  }
  return doc;
}

// Typed, checked access over a parsed document. Tracks which keys were read so
// finish() can reject misspellings instead of silently ignoring them.
class ConfigReader {
 public:
  explicit ConfigReader(TomlDoc doc) : doc_(std::move(doc)) {}

  bool has(const std::string& key) const { return doc_.values.count(key) != 0; }

  double require_real(const std::string& key) { return real_at(find_required(key), key); }
  double get_real(const std::string& key, double fallback) {
    const TomlValue* v = find(key);
    return v ? real_at(*v, key) : fallback;
  }
  long long get_int(const std::string& key, long long fallback) {
    const TomlValue* v = find(key);
    return v ? int_at(*v, key) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) {
    const TomlValue* v = find(key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::boolean) type_error(*v, key, "true or false");
    return v->b;
  }
  std::string require_string(const std::string& key) {
    const TomlValue& v = find_required(key);
    if (v.kind != TomlValue::Kind::string) type_error(v, key, "a string");
    return v.s;
  }
  std::string get_string(const std::string& key, const std::string& fallback) {
    if (!find(key)) return fallback;
    return require_string(key);
  }
  std::vector<double> require_real_list(const std::string& key) {
    const TomlValue& v = find_required(key);
    if (v.kind != TomlValue::Kind::array) type_error(v, key, "an array");
    std::vector<double> out;
    for (const TomlValue& item : v.items) out.push_back(real_at(item, key));
    return out;
  }
  std::vector<long long> require_int_list(const std::string& key) {
    const TomlValue& v = find_required(key);
    if (v.kind != TomlValue::Kind::array) type_error(v, key, "an array");
    std::vector<long long> out;
    for (const TomlValue& item : v.items) out.push_back(int_at(item, key));
    return out;
  }
  std::string get_enum(const std::string& key, const std::vector<std::string>& options,
                       const std::string& fallback) {
    const TomlValue* v = find(key);
    const std::string got = v ? (v->kind == TomlValue::Kind::string
                                     ? v->s
                                     : (type_error(*v, key, "a string"), std::string()))
                              : fallback;
    for (const std::string& opt : options)
      if (got == opt) return got;
    std::ostringstream os;
    os << doc_.source << ":" << (v ? v->line : 0) << ": key '" << key << "' must be one of ";
    for (std::size_t k = 0; k < options.size(); ++k)
      os << (k ? ", " : "") << "'" << options[k] << "'";
    os << " (got '" << got << "')";
    throw std::invalid_argument(os.str());
  }

  // Rejects any key that was present but never read.
  void finish() const {
    for (const auto& [key, value] : doc_.values)
      if (!used_.count(key))
        config_detail::fail(doc_.source, value.line, "unknown key '" + key + "'");
  }

  const std::string& source() const { return doc_.source; }

 private:
  const TomlValue* find(const std::string& key) {
    auto it = doc_.values.find(key);
    if (it == doc_.values.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  const TomlValue& find_required(const std::string& key) {
    const TomlValue* v = find(key);
    if (!v)
      throw std::invalid_argument(doc_.source + ": missing required key '" + key + "'");
    return *v;
  }
  [[noreturn]] void type_error(const TomlValue& v, const std::string& key,
                               const std::string& expected) const {
    config_detail::fail(doc_.source, v.line, "key '" + key + "' must be " + expected);
  }
  double real_at(const TomlValue& v, const std::string& key) const {
    if (!v.is_number()) type_error(v, key, "a number");
    return v.as_real();
  }
  long long int_at(const TomlValue& v, const std::string& key) const {
    if (v.kind != TomlValue::Kind::integer) type_error(v, key, "an integer");
    return v.i;
  }

  TomlDoc doc_;
  std::set<std::string> used_;
};

enum class PriorKind { demos, intervention_rl, random };

struct PriorSpec {
  PriorKind kind = PriorKind::demos;
  int demos = 20;              // demos kind
  double smoothing = 1.0;      // demos kind: Laplace count added to every pair
  double concentration = 1.0;  // random kind: Dirichlet concentration
};

struct ExperimentConfig {
  std::string grid_file;
  double step_reward = -0.01;
  double goal_reward = 1.0;
  double hazard_reward = -1.0;
  double slip_prob = 0.0;
  double gamma = 0.95;
  double alpha_expert = 0.1;
  std::vector<double> omega_list;
  std::vector<double> b_list;
  PriorSpec prior;
  int rounds = 10;
  int episodes_per_round = 50;
  int max_horizon = 100;
  int eval_episodes = 200;
  std::vector<std::uint64_t> seeds;
  BootstrapMode bootstrap_mode = BootstrapMode::truncation;
  bool fresh_data_per_round = false;
  double rlif_temperature = 0.01;

  void validate() const {
    if (grid_file.empty()) throw std::invalid_argument("config: grid_file is empty");
    if (!(gamma >= 0.0 && gamma < 1.0))
      throw std::invalid_argument("config: gamma must lie in [0, 1)");
    if (!(slip_prob >= 0.0 && slip_prob <= 1.0))
      throw std::invalid_argument("config: slip_prob must lie in [0, 1]");
    if (!(alpha_expert > 0.0)) throw std::invalid_argument("config: alpha_expert must be > 0");
    if (omega_list.empty()) throw std::invalid_argument("config: omega_list is empty");
    for (double w : omega_list)
      if (!(w >= 0.0)) throw std::invalid_argument("config: omega_list entries must be >= 0");
    if (b_list.empty()) throw std::invalid_argument("config: B_list is empty");
    if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
    if (rounds <= 0) throw std::invalid_argument("config: rounds must be positive");
    if (episodes_per_round <= 0)
      throw std::invalid_argument("config: episodes_per_round must be positive");
    if (max_horizon <= 0) throw std::invalid_argument("config: max_horizon must be positive");
    if (eval_episodes <= 0) throw std::invalid_argument("config: eval_episodes must be positive");
    if (!(rlif_temperature > 0.0))
      throw std::invalid_argument("config: rlif_temperature must be > 0");
    if (prior.kind == PriorKind::demos) {
      if (prior.demos < 0) throw std::invalid_argument("config: prior.demos must be >= 0");
      if (prior.smoothing < 0.0)
        throw std::invalid_argument("config: prior.smoothing must be >= 0");
    }
    if (prior.kind == PriorKind::random && !(prior.concentration > 0.0))
      throw std::invalid_argument("config: prior.concentration must be > 0");
  }
};

inline ExperimentConfig parse_experiment_config(const std::string& text,
                                                const std::string& source) {
  ConfigReader reader(parse_toml(text, source));
  ExperimentConfig cfg;
  cfg.grid_file = reader.require_string("grid_file");
  cfg.step_reward = reader.get_real("step_reward", cfg.step_reward);
  cfg.goal_reward = reader.get_real("goal_reward", cfg.goal_reward);
  cfg.hazard_reward = reader.get_real("hazard_reward", cfg.hazard_reward);
  cfg.slip_prob = reader.get_real("slip_prob", cfg.slip_prob);
  cfg.gamma = reader.get_real("gamma", cfg.gamma);
  cfg.alpha_expert = reader.get_real("alpha_expert", cfg.alpha_expert);
  cfg.omega_list = reader.require_real_list("omega_list");
  cfg.b_list = reader.require_real_list("B_list");
  cfg.rounds = static_cast<int>(reader.get_int("rounds", cfg.rounds));
  cfg.episodes_per_round =
      static_cast<int>(reader.get_int("episodes_per_round", cfg.episodes_per_round));
  cfg.max_horizon = static_cast<int>(reader.get_int("max_horizon", cfg.max_horizon));
  cfg.eval_episodes = static_cast<int>(reader.get_int("eval_episodes", cfg.eval_episodes));
  for (long long s : reader.require_int_list("seeds")) {
    if (s < 0) throw std::invalid_argument(source + ": seeds must be non-negative");
    cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  cfg.bootstrap_mode =
      reader.get_enum("bootstrap_mode", {"truncation", "termination"}, "truncation") ==
              "truncation"
          ? BootstrapMode::truncation
          : BootstrapMode::termination;
  cfg.fresh_data_per_round = reader.get_bool("fresh_data_per_round", false);
  cfg.rlif_temperature = reader.get_real("rlif_temperature", cfg.rlif_temperature);

  if (!reader.has("prior.kind"))
    throw std::invalid_argument(source + ": missing required key 'prior.kind'");
  const std::string kind =
      reader.get_enum("prior.kind", {"demos", "intervention_rl", "random"}, "");
  if (kind == "demos") {
    cfg.prior.kind = PriorKind::demos;
    cfg.prior.demos = static_cast<int>(reader.get_int("prior.demos", cfg.prior.demos));
    cfg.prior.smoothing = reader.get_real("prior.smoothing", cfg.prior.smoothing);
  } else if (kind == "intervention_rl") {
    cfg.prior.kind = PriorKind::intervention_rl;
  } else {
    cfg.prior.kind = PriorKind::random;
    cfg.prior.concentration = reader.get_real("prior.concentration", cfg.prior.concentration);
  }

  reader.finish();
  cfg.validate();
  return cfg;
}

// Reads a config file; a relative grid_file is resolved against the config
// file's own directory so configs stay relocatable.
inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  ExperimentConfig cfg = parse_experiment_config(buf.str(), path);
  const std::filesystem::path grid(cfg.grid_file);
  if (grid.is_relative())
    cfg.grid_file = (std::filesystem::path(path).parent_path() / grid).string();
  return cfg;
}

}  // namespace riftlab
