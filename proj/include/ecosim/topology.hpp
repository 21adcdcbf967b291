#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ecosim/learning.hpp"
#include "ecosim/scenario.hpp"

namespace ecosim {

/// Loads a scenario file. `.json` files use the JSON schema, anything
/// else the sectioned key/value format. Missing keys take defaults.
/// Throws ParseError or ValidationError.
Scenario load_scenario(const std::filesystem::path& path);

Scenario parse_scenario_text(std::string_view text);
Scenario parse_scenario_json(std::string_view text);

/// Canonical key/value text. parse_scenario_text(to_text(s)) == s.
std::string to_text(const Scenario& scenario);
std::string to_json_text(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// Throws ValidationError naming the first offending field.
void validate(const Scenario& scenario);

/// Returns a copy with one key replaced, re-validated. `key` is either a
/// bare field name or `section.field`.
Scenario with_override(const Scenario& scenario, std::string_view key, std::string_view value);

/// True if `key` names a scenario field (bare or `section.field`).
bool is_scenario_key(std::string_view key);

/// K clients holding contiguous slices of one synthetic pool. Client k gets
/// samples_for(k) samples and K * dataset_bits_per_sensor * n_k / sum(n)
/// bits of raw data. Pure function of the scenario.
std::vector<ClientState> make_clients(const Scenario& scenario);

/// Evaluation set drawn from the same ground truth as the client data.
Dataset make_holdout(const Scenario& scenario);

}  // namespace ecosim
