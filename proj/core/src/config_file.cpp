#include "echodoa/config_file.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "echodoa/error.hpp"

namespace echodoa {
namespace {

constexpr std::array kSimKeys = {"carrier_freq",  "sound_speed",       "sample_rate", "echo_duration",
                                 "listen_window", "decimation_factor", "rng_seed",    "envelope"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool is_sim_config_key(const std::string& key) {
  for (const char* k : kSimKeys)
    if (key == k) return true;
  return false;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::config, "config key '" + key + "': not a number: '" + value + "'");
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  require(ec == std::errc{} && ptr == last, ErrorKind::config,
          "config key '" + key + "': not an integer: '" + value + "'");
  return v;
}

KeyValueMap parse_key_values(const std::string& text) {
  KeyValueMap out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), ErrorKind::config,
            "config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValueMap read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_key_values(text.str());
}

SimConfig apply_sim_config(const KeyValueMap& values, SimConfig base, bool strict) {
  for (const auto& [key, value] : values) {
    if (key == "carrier_freq") {
      base.carrier_freq = parse_double(key, value);
    } else if (key == "sound_speed") {
      base.sound_speed = parse_double(key, value);
    } else if (key == "sample_rate") {
      base.sample_rate = parse_double(key, value);
    } else if (key == "echo_duration") {
      base.echo_duration = parse_double(key, value);
    } else if (key == "listen_window") {
      base.listen_window = parse_double(key, value);
    } else if (key == "decimation_factor") {
      base.decimation_factor = static_cast<int>(parse_integer(key, value));
    } else if (key == "rng_seed") {
      std::uint64_t seed = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seed);
      require(ec == std::errc{} && ptr == value.data() + value.size(), ErrorKind::config,
              "config key 'rng_seed': expected an unsigned 64-bit integer, got '" + value + "'");
      base.rng_seed = seed;
    } else if (key == "envelope") {
      if (value == "hann") {
        base.envelope = EnvelopeShape::hann;
      } else if (value == "tukey") {
        base.envelope = EnvelopeShape::tukey;
      } else {
        fail(ErrorKind::config, "config key 'envelope': expected hann or tukey, got '" + value + "'");
      }
    } else if (strict) {
      fail(ErrorKind::config, "unknown config key '" + key + "'");
    }
  }
  return base;
}

SimConfig load_sim_config(const std::filesystem::path& path) {
  SimConfig config = apply_sim_config(read_key_value_file(path), SimConfig{}, true);
  try {
    config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string(e.what()));
  }
  return config;
}

std::string to_key_value_text(const SimConfig& config) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "carrier_freq = " << config.carrier_freq << '\n'
      << "sound_speed = " << config.sound_speed << '\n'
      << "sample_rate = " << config.sample_rate << '\n'
      << "echo_duration = " << config.echo_duration << '\n'
      << "listen_window = " << config.listen_window << '\n'
      << "decimation_factor = " << config.decimation_factor << '\n'
      << "rng_seed = " << config.rng_seed << '\n'
      << "envelope = " << (config.envelope == EnvelopeShape::hann ? "hann" : "tukey") << '\n';
  return out.str();
}

}  // namespace echodoa
