#include "ecosim/topology.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "ecosim/errors.hpp"
#include "ecosim/random.hpp"
#include "ecosim/report.hpp"

namespace ecosim {

using json = nlohmann::json;

std::string_view to_string(Architecture arch) noexcept {
  return arch == Architecture::Centralized ? "centralized" : "federated";
}

std::string_view to_string(ModelKind kind) noexcept {
  return kind == ModelKind::Linear ? "linear" : "small_mlp";
}

long long Scenario::total_samples() const {
  long long total = 0;
  for (int k = 0; k < num_sensors; ++k) total += learning.samples_for(static_cast<std::size_t>(k));
  return total;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double as_double(const json& v, const std::string& field) {
  if (!v.is_number()) throw ValidationError(field, "expected a number, got " + v.dump());
  return v.get<double>();
}

long long as_integer(const json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ValidationError(field, "expected an integer, got " + v.dump());
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
    throw ValidationError(field, "integer out of range");
  return v.get<long long>();
}

int as_int(const json& v, const std::string& field) {
  const long long x = as_integer(v, field);
  if (x < INT32_MIN || x > INT32_MAX) throw ValidationError(field, "integer out of range");
  return static_cast<int>(x);
}

bool as_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ValidationError(field, "expected true or false, got " + v.dump());
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ValidationError(field, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

template <typename T, typename Conv>
std::vector<T> as_list(const json& v, const std::string& field, Conv conv) {
  std::vector<T> out;
  if (v.is_array()) {
    if (v.empty()) throw ValidationError(field, "list must not be empty");
    for (const auto& e : v) out.push_back(conv(e, field));
  } else {
    out.push_back(conv(v, field));
  }
  return out;
}

template <typename T>
json list_json(const std::vector<T>& values) {
  if (values.size() == 1) return json(values.front());
  return json(values);
}

struct Field {
  std::string_view section;
  std::string_view key;
  std::string_view alias;  // accepted on input only
  std::function<void(Scenario&, const json&, const std::string&)> set;
  std::function<json(const Scenario&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"topology", "name", "",
       [](Scenario& s, const json& v, const std::string& f) { s.name = as_string(v, f); },
       [](const Scenario& s) { return json(s.name); }},
      {"topology", "architecture", "",
       [](Scenario& s, const json& v, const std::string& f) {
         const std::string a = lower(as_string(v, f));
         if (a == "cl" || a == "centralized")
           s.architecture = Architecture::Centralized;
         else if (a == "fl" || a == "federated")
           s.architecture = Architecture::Federated;
         else
           throw ValidationError(f, "expected cl, fl, centralized or federated, got '" + a + "'");
       },
       [](const Scenario& s) { return json(std::string(to_string(s.architecture))); }},
      {"topology", "num_sensors", "K",
       [](Scenario& s, const json& v, const std::string& f) { s.num_sensors = as_int(v, f); },
       [](const Scenario& s) { return json(s.num_sensors); }},
      {"topology", "rounds", "n",
       [](Scenario& s, const json& v, const std::string& f) { s.rounds = as_int(v, f); },
       [](const Scenario& s) { return json(s.rounds); }},
      {"topology", "seed", "",
       [](Scenario& s, const json& v, const std::string& f) {
         if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                        v.get<long long>() < 0))
           throw ValidationError(f, "expected a non-negative integer, got " + v.dump());
         s.seed = v.get<std::uint64_t>();
       },
       [](const Scenario& s) { return json(s.seed); }},

      {"energy", "gamma", "",
       [](Scenario& s, const json& v, const std::string& f) { s.energy.gamma = as_double(v, f); },
       [](const Scenario& s) { return json(s.energy.gamma); }},
      {"energy", "alpha", "",
       [](Scenario& s, const json& v, const std::string& f) { s.energy.alpha = as_double(v, f); },
       [](const Scenario& s) { return json(s.energy.alpha); }},
      {"energy", "beta", "",
       [](Scenario& s, const json& v, const std::string& f) { s.energy.beta = as_double(v, f); },
       [](const Scenario& s) { return json(s.energy.beta); }},
      {"energy", "e0_compute", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.e0_compute = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.energy.e0_compute); }},
      {"energy", "ek_compute", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.ek_compute = as_list<double>(v, f, as_double);
       },
       [](const Scenario& s) { return list_json(s.energy.ek_compute); }},
      {"energy", "e_uplink_per_bit", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.e_uplink_per_bit = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.energy.e_uplink_per_bit); }},
      {"energy", "e_downlink_per_bit", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.e_downlink_per_bit = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.energy.e_downlink_per_bit); }},
      {"energy", "bits_per_param", "",
       [](Scenario& s, const json& v, const std::string& f) {
         const long long b = as_integer(v, f);
         if (b < 1 || b > 64) throw ValidationError(f, "must be in [1, 64]");
         s.energy.bits_per_param = static_cast<std::uint32_t>(b);
       },
       [](const Scenario& s) { return json(s.energy.bits_per_param); }},
      {"energy", "dataset_bits_per_sensor", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.dataset_bits_per_sensor = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.energy.dataset_bits_per_sensor); }},
      {"energy", "compute_selected_only", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.compute_selected_only = as_bool(v, f);
       },
       [](const Scenario& s) { return json(s.energy.compute_selected_only); }},
      {"energy", "downlink_selected_only", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.energy.downlink_selected_only = as_bool(v, f);
       },
       [](const Scenario& s) { return json(s.energy.downlink_selected_only); }},

      {"learning", "client_fraction", "C",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.client_fraction = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.learning.client_fraction); }},
      {"learning", "local_epochs", "E",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.local_epochs = as_int(v, f);
       },
       [](const Scenario& s) { return json(s.learning.local_epochs); }},
      {"learning", "batch_size", "B",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.batch_size = as_int(v, f);
       },
       [](const Scenario& s) { return json(s.learning.batch_size); }},
      {"learning", "learning_rate", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.learning_rate = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.learning.learning_rate); }},
      {"learning", "model_kind", "",
       [](Scenario& s, const json& v, const std::string& f) {
         const std::string m = lower(as_string(v, f));
         if (m == "linear")
           s.learning.model_kind = ModelKind::Linear;
         else if (m == "small_mlp" || m == "smallmlp" || m == "mlp")
           s.learning.model_kind = ModelKind::SmallMLP;
         else
           throw ValidationError(f, "expected linear or small_mlp, got '" + m + "'");
       },
       [](const Scenario& s) { return json(std::string(to_string(s.learning.model_kind))); }},
      {"learning", "samples_per_client", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.samples_per_client = as_list<int>(v, f, as_int);
       },
       [](const Scenario& s) { return list_json(s.learning.samples_per_client); }},
      {"learning", "input_dim", "",
       [](Scenario& s, const json& v, const std::string& f) { s.learning.input_dim = as_int(v, f); },
       [](const Scenario& s) { return json(s.learning.input_dim); }},
      {"learning", "hidden_dim", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.hidden_dim = as_int(v, f);
       },
       [](const Scenario& s) { return json(s.learning.hidden_dim); }},
      {"learning", "noise_std", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.noise_std = as_double(v, f);
       },
       [](const Scenario& s) { return json(s.learning.noise_std); }},
      {"learning", "holdout_samples", "",
       [](Scenario& s, const json& v, const std::string& f) {
         s.learning.holdout_samples = as_int(v, f);
       },
       [](const Scenario& s) { return json(s.learning.holdout_samples); }},
  };
  return table;
}

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields())
    if (f.section == section && (f.key == key || (!f.alias.empty() && f.alias == key))) return &f;
  return nullptr;
}

// Resolves `key` or `section.key`; bare keys must be unambiguous.
const Field* resolve_key(std::string_view key) {
  if (const auto dot = key.find('.'); dot != std::string_view::npos)
    return find_field(key.substr(0, dot), key.substr(dot + 1));
  const Field* found = nullptr;
  for (const auto& f : fields()) {
    if (f.key == key || (!f.alias.empty() && f.alias == key)) {
      if (found) return nullptr;
      found = &f;
    }
  }
  return found;
}

bool is_section(std::string_view s) { return s == "topology" || s == "energy" || s == "learning"; }

Scenario build_scenario(const json& root) {
  if (!root.is_object()) throw ParseError("scenario root must be an object/table");
  Scenario scenario;
  for (const auto& [section, body] : root.items()) {
    if (!is_section(section)) throw ValidationError(section, "unknown section");
    if (!body.is_object()) throw ParseError("section [" + section + "] must be a table");
    std::vector<const Field*> seen;
    for (const auto& [key, value] : body.items()) {
      const std::string name = section + "." + key;
      const Field* field = find_field(section, key);
      if (!field) throw ValidationError(name, "unknown key");
      if (std::find(seen.begin(), seen.end(), field) != seen.end())
        throw ValidationError(name, "given more than once");
      seen.push_back(field);
      field->set(scenario, value, section + "." + std::string(field->key));
    }
  }
  validate(scenario);
  return scenario;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

json parse_number(std::string_view tok) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (tok.find_first_of(".eE") == std::string_view::npos) {
    if (tok.front() != '-') {
      std::uint64_t u = 0;
      auto [p, ec] = std::from_chars(first, last, u);
      if (ec == std::errc{} && p == last) return json(u);
    } else {
      long long i = 0;
      auto [p, ec] = std::from_chars(first, last, i);
      if (ec == std::errc{} && p == last) return json(i);
    }
  }
  double d = 0.0;
  auto [p, ec] = std::from_chars(first, last, d);
  if (ec == std::errc{} && p == last) return json(d);
  return json();  // null: not a number
}

// Drops a trailing `# comment` that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

// One value token of the text format: "quoted", true/false, [a, b, ...],
// a number, or a bare word (taken as a string).
json parse_token(std::string_view raw) {
  const std::string_view tok = trim(raw);
  if (tok.empty()) throw ParseError("empty value");
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"') throw ParseError("unterminated string: " + std::string(tok));
    return json(std::string(tok.substr(1, tok.size() - 2)));
  }
  if (tok == "true") return json(true);
  if (tok == "false") return json(false);
  if (tok.front() == '[') {
    if (tok.back() != ']') throw ParseError("unterminated list: " + std::string(tok));
    json arr = json::array();
    std::string_view body = trim(tok.substr(1, tok.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      arr.push_back(parse_token(body.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      body = body.substr(comma + 1);
      if (trim(body).empty()) break;  // trailing comma
    }
    return arr;
  }
  if (json n = parse_number(tok); !n.is_null()) return n;
  return json(std::string(tok));
}

std::string format_token(const json& v) {
  if (v.is_string()) return "\"" + v.get<std::string>() + "\"";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return fmt::format("{}", v.get<std::uint64_t>());
  if (v.is_number_integer()) return fmt::format("{}", v.get<long long>());
  if (v.is_number_float()) {
    // Shortest round-trip form, always recognisable as floating point.
    std::string s = fmt::format("{}", v.get<double>());
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  if (v.is_array()) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_token(v[i]);
    return s + "]";
  }
  throw std::logic_error("unformattable scenario value");
}

json to_json(const Scenario& s) {
  json root = json::object();
  for (const auto& f : fields()) root[std::string(f.section)][std::string(f.key)] = f.get(s);
  return root;
}

}  // namespace

void validate(const Scenario& s) {
  auto require = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ValidationError(field, what);
  };
  auto finite_nonneg = [&](double v, const char* field) {
    require(std::isfinite(v) && v >= 0.0, field, fmt::format("must be finite and >= 0, got {}", v));
  };
  const auto K = static_cast<std::size_t>(std::max(s.num_sensors, 0));

  require(!s.name.empty() && s.name.find_first_of("\"\n\r") == std::string::npos, "topology.name",
          "must be non-empty and free of quotes and newlines");
  require(s.num_sensors >= 1, "topology.num_sensors", fmt::format("must be >= 1, got {}", s.num_sensors));
  require(s.rounds >= 0, "topology.rounds", fmt::format("must be >= 0, got {}", s.rounds));

  const EnergyParams& e = s.energy;
  require(std::isfinite(e.gamma) && e.gamma >= 0.0 && e.gamma <= 2.0, "energy.gamma",
          fmt::format("must be in [0, 2], got {}", e.gamma));
  finite_nonneg(e.alpha, "energy.alpha");
  require(std::isfinite(e.beta) && e.beta >= 0.0 && e.beta <= 1.0, "energy.beta",
          fmt::format("must be in [0, 1], got {}", e.beta));
  finite_nonneg(e.e0_compute, "energy.e0_compute");
  require(e.ek_compute.size() == 1 || e.ek_compute.size() == K, "energy.ek_compute",
          fmt::format("needs 1 or {} entries, got {}", K, e.ek_compute.size()));
  for (double v : e.ek_compute) finite_nonneg(v, "energy.ek_compute");
  finite_nonneg(e.e_uplink_per_bit, "energy.e_uplink_per_bit");
  finite_nonneg(e.e_downlink_per_bit, "energy.e_downlink_per_bit");
  require(e.bits_per_param >= 1 && e.bits_per_param <= 64, "energy.bits_per_param", "must be in [1, 64]");
  finite_nonneg(e.dataset_bits_per_sensor, "energy.dataset_bits_per_sensor");

  const LearningParams& l = s.learning;
  require(std::isfinite(l.client_fraction) && l.client_fraction > 0.0 && l.client_fraction <= 1.0,
          "learning.client_fraction", fmt::format("must be in (0, 1], got {}", l.client_fraction));
  require(l.local_epochs >= 1, "learning.local_epochs", "must be >= 1");
  require(l.batch_size >= 1, "learning.batch_size", "must be >= 1");
  require(std::isfinite(l.learning_rate) && l.learning_rate > 0.0, "learning.learning_rate",
          fmt::format("must be > 0, got {}", l.learning_rate));
  require(l.samples_per_client.size() == 1 || l.samples_per_client.size() == K,
          "learning.samples_per_client",
          fmt::format("needs 1 or {} entries, got {}", K, l.samples_per_client.size()));
  for (int n : l.samples_per_client) require(n >= 1, "learning.samples_per_client", "entries must be >= 1");
  require(l.input_dim >= 1, "learning.input_dim", "must be >= 1");
  require(l.model_kind == ModelKind::Linear || l.hidden_dim >= 1, "learning.hidden_dim",
          "must be >= 1 for small_mlp");
  require(l.hidden_dim >= 0, "learning.hidden_dim", "must be >= 0");
  finite_nonneg(l.noise_std, "learning.noise_std");
  require(l.holdout_samples >= 1, "learning.holdout_samples", "must be >= 1");
}

Scenario parse_scenario_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON scenario: ") + e.what());
  }
  return build_scenario(root);
}

Scenario parse_scenario_text(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(fmt::format("malformed scenario at line {}: {}", e.line(), e.message()));
  }
  json root = json::object();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ValidationError(section, "key outside of a [section]");
    if (!is_section(section)) throw ValidationError(section, "unknown section");
    json& obj = root[section] = json::object();
    for (const auto& [key, node] : body) {
      try {
        obj[key] = parse_token(strip_comment(node.data()));
      } catch (const ParseError& e) {
        throw ParseError(section + "." + key + ": " + e.what());
      }
    }
  }
  return build_scenario(root);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception&) {
    throw ParseError("cannot read scenario file '" + path.string() + "'");
  }
  if (lower(path.extension().string()) == ".json") return parse_scenario_json(text);
  return parse_scenario_text(text);
}

std::string to_text(const Scenario& scenario) {
  std::string out;
  std::string_view current;
  for (const auto& f : fields()) {
    if (f.section != current) {
      if (!current.empty()) out += "\n";
      out += fmt::format("[{}]\n", f.section);
      current = f.section;
    }
    out += fmt::format("{} = {}\n", f.key, format_token(f.get(scenario)));
  }
  return out;
}

std::string to_json_text(const Scenario& scenario) { return to_json(scenario).dump(2) + "\n"; }

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_file(path, lower(path.extension().string()) == ".json" ? to_json_text(scenario)
                                                                : to_text(scenario));
}

bool is_scenario_key(std::string_view key) { return resolve_key(key) != nullptr; }

Scenario with_override(const Scenario& scenario, std::string_view key, std::string_view value) {
  const Field* field = resolve_key(key);
  if (!field) throw ValidationError(std::string(key), "not a recognised scenario key");
  json root = to_json(scenario);
  root[std::string(field->section)][std::string(field->key)] = parse_token(value);
  return build_scenario(root);
}

namespace {

SyntheticDataset scenario_pool(const Scenario& s) {
  const auto total = static_cast<std::size_t>(s.total_samples());
  return generate_dataset(derive_seed({s.seed, stream::kData}),
                          total + static_cast<std::size_t>(s.learning.holdout_samples),
                          s.learning.input_dim, s.learning.noise_std);
}

}  // namespace

std::vector<ClientState> make_clients(const Scenario& scenario) {
  validate(scenario);
  SyntheticDataset pool = scenario_pool(scenario);
  const auto K = static_cast<std::size_t>(scenario.num_sensors);
  const double total = static_cast<double>(scenario.total_samples());
  const double total_bits = static_cast<double>(K) * scenario.energy.dataset_bits_per_sensor;

  std::vector<ClientState> clients(K);
  auto next = pool.samples.begin();
  for (std::size_t k = 0; k < K; ++k) {
    const int n_k = scenario.learning.samples_for(k);
    ClientState& c = clients[k];
    c.id = static_cast<int>(k);
    c.dataset.assign(std::make_move_iterator(next), std::make_move_iterator(next + n_k));
    next += n_k;
    c.dataset_bits = total_bits * static_cast<double>(n_k) / total;
  }
  return clients;
}

Dataset make_holdout(const Scenario& scenario) {
  validate(scenario);
  SyntheticDataset pool = scenario_pool(scenario);
  const auto offset = static_cast<std::ptrdiff_t>(scenario.total_samples());
  return Dataset(std::make_move_iterator(pool.samples.begin() + offset),
                 std::make_move_iterator(pool.samples.end()));
}

}  // namespace ecosim
