#include "acelab/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace acelab {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  auto end = s.find_last_not_of(" \t\r");
  return begin == std::string::npos ? "" : s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected number, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected unsigned integer, got '" +
                                value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected boolean, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  if (out.empty())
    throw std::invalid_argument("config key '" + key + "': expected a comma-separated list");
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

KeyValueMap parse_key_value_stream(std::istream& in) {
  KeyValueMap entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + trimmed + "'");
    std::string key = trim(trimmed.substr(0, eq));
    std::string value = trim(trimmed.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    entries[key] = value;
  }
  return entries;
}

KeyValueMap parse_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return parse_key_value_stream(in);
}

void apply_config_entries(TrainerConfig& config, const KeyValueMap& entries) {
  for (const auto& [key, value] : entries) {
    if (key == "group_size") {
      config.group_size = parse_int(key, value);
    } else if (key == "alpha") {
      config.alpha = parse_double(key, value);
    } else if (key == "kl_coeff") {
      config.kl_coeff = parse_double(key, value);
    } else if (key == "clip_low") {
      config.clip_low = parse_double(key, value);
    } else if (key == "clip_high") {
      if (value == "auto") {
        config.clip_high.reset();
      } else {
        config.clip_high = parse_double(key, value);
      }
    } else if (key == "learning_rate") {
      config.learning_rate = parse_double(key, value);
    } else if (key == "steps") {
      config.steps = parse_int(key, value);
    } else if (key == "algorithm") {
      config.algorithm = algorithm_from_string(value);
    } else if (key == "dynamic_sampling") {
      if (value == "auto") {
        config.dynamic_sampling.reset();
      } else {
        config.dynamic_sampling = parse_bool(key, value);
      }
    } else if (key == "token_level_loss") {
      if (value == "auto") {
        config.token_level_loss.reset();
      } else {
        config.token_level_loss = parse_bool(key, value);
      }
    } else if (key == "modulation") {
      config.modulation = modulation_from_string(value);
    } else if (key == "normalize_confidence") {
      config.normalize_confidence = parse_bool(key, value);
    } else if (key == "oef_use_raw_confidence") {
      config.oef_use_raw_confidence = parse_bool(key, value);
    } else if (key == "seed") {
      config.seed = parse_u64(key, value);
    } else if (key == "checkpoint_every") {
      config.checkpoint_every = parse_int(key, value);
    } else if (key == "optimizer") {
      config.optimizer = optimizer_from_string(value);
    } else if (key == "adamw_beta1") {
      config.adamw_beta1 = parse_double(key, value);
    } else if (key == "adamw_beta2") {
      config.adamw_beta2 = parse_double(key, value);
    } else if (key == "adamw_epsilon") {
      config.adamw_epsilon = parse_double(key, value);
    } else if (key == "adamw_weight_decay") {
      config.adamw_weight_decay = parse_double(key, value);
    } else if (key == "inner_epochs") {
      config.inner_epochs = parse_int(key, value);
    } else if (key == "advantage_epsilon") {
      config.advantage_epsilon = parse_double(key, value);
    } else if (key == "eval_rollouts") {
      config.eval_rollouts = parse_int(key, value);
    } else if (key == "entropy_samples") {
      config.entropy_samples = parse_int(key, value);
    } else if (key == "pass_ks") {
      config.pass_ks = parse_int_list(key, value);
    } else if (key == "pretrain_steps") {
      config.pretrain_steps = parse_int(key, value);
    } else if (key == "pretrain_learning_rate") {
      config.pretrain_learning_rate = parse_double(key, value);
    } else if (key == "pretrain_scale") {
      config.pretrain_scale = parse_double(key, value);
    } else if (key == "stop_token") {
      if (value == "none") {
        config.stop_token.reset();
      } else {
        config.stop_token = parse_int(key, value);
      }
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
}

TrainerConfig config_from_entries(const KeyValueMap& entries) {
  TrainerConfig config;
  apply_config_entries(config, entries);
  return config;
}

KeyValueMap config_to_entries(const TrainerConfig& config) {
  KeyValueMap out;
  out["group_size"] = std::to_string(config.group_size);
  out["alpha"] = format_double(config.alpha);
  out["kl_coeff"] = format_double(config.kl_coeff);
  out["clip_low"] = format_double(config.clip_low);
  out["clip_high"] = config.clip_high ? format_double(*config.clip_high) : "auto";
  out["learning_rate"] = format_double(config.learning_rate);
  out["steps"] = std::to_string(config.steps);
  out["algorithm"] = to_string(config.algorithm);
  out["dynamic_sampling"] =
      config.dynamic_sampling ? (*config.dynamic_sampling ? "true" : "false") : "auto";
  out["token_level_loss"] =
      config.token_level_loss ? (*config.token_level_loss ? "true" : "false") : "auto";
  out["modulation"] = to_string(config.modulation);
  out["normalize_confidence"] = config.normalize_confidence ? "true" : "false";
  out["oef_use_raw_confidence"] = config.oef_use_raw_confidence ? "true" : "false";
  out["seed"] = std::to_string(config.seed);
  out["checkpoint_every"] = std::to_string(config.checkpoint_every);
  out["optimizer"] = to_string(config.optimizer);
  out["adamw_beta1"] = format_double(config.adamw_beta1);
  out["adamw_beta2"] = format_double(config.adamw_beta2);
  out["adamw_epsilon"] = format_double(config.adamw_epsilon);
  out["adamw_weight_decay"] = format_double(config.adamw_weight_decay);
  out["inner_epochs"] = std::to_string(config.inner_epochs);
  out["advantage_epsilon"] = format_double(config.advantage_epsilon);
  out["eval_rollouts"] = std::to_string(config.eval_rollouts);
  out["entropy_samples"] = std::to_string(config.entropy_samples);
  std::string ks;
  for (std::size_t i = 0; i < config.pass_ks.size(); ++i) {
    if (i) ks += ',';
    ks += std::to_string(config.pass_ks[i]);
  }
  out["pass_ks"] = ks;
  out["pretrain_steps"] = std::to_string(config.pretrain_steps);
  out["pretrain_learning_rate"] = format_double(config.pretrain_learning_rate);
  out["pretrain_scale"] = format_double(config.pretrain_scale);
  out["stop_token"] = config.stop_token ? std::to_string(*config.stop_token) : "none";
  return out;
}

}  // namespace acelab
