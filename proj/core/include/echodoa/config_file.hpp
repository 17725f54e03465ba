#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "echodoa/signal_sim.hpp"

namespace echodoa {

/// Plain `key = value` lines; `#` starts a comment; blank lines ignored.
using KeyValueMap = std::map<std::string, std::string>;

KeyValueMap parse_key_values(const std::string& text);
KeyValueMap read_key_value_file(const std::filesystem::path& path);

/// Applies the SimConfig keys found in `values` on top of `base`. Keys are the
/// field names (carrier_freq, sound_speed, sample_rate, echo_duration,
/// listen_window, decimation_factor, rng_seed, envelope). With `strict`, any
/// other key is a config error.
SimConfig apply_sim_config(const KeyValueMap& values, SimConfig base = {}, bool strict = false);

SimConfig load_sim_config(const std::filesystem::path& path);

std::string to_key_value_text(const SimConfig& config);

bool is_sim_config_key(const std::string& key);

double parse_double(const std::string& key, const std::string& value);
long long parse_integer(const std::string& key, const std::string& value);

}  // namespace echodoa
