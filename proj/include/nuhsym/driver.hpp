#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "nuhsym/charts.hpp"
#include "nuhsym/systems.hpp"

namespace nuh {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

// Every key with its default. "seed" has none and must be given (config or --seed).
json default_config();

// defaults overlaid with user values, names and types checked only
json merged_config(const json& user);
// merged and validated; throws ConfigError naming the offending key path
json effective_config(const json& user);
void validate_config(const json& cfg);

// hex FNV-1a of the canonical dump, output_dir and threads excluded
std::string config_hash(const json& cfg);

ModelPtr make_system(const json& sys);
// chi resolved ("auto" = half the smallest |exponent| on the reference orbit)
ChartParams chart_params(const json& cfg, const SystemModel& m);

struct RunResult {
  int status = 0;  // 0 ok, 2 config error, 3 numeric failure, 1 I/O
  int error = 0;   // Errc value when status != 0 (0 for foreign exceptions)
  std::vector<std::string> artifacts;
  std::string message;
};

// commands: analyze alphabet graph shadow periodic entropy refine suspend
RunResult run(const std::string& command, const json& user_config, const std::string& out_dir = "");

int exit_status(Errc e);

// CSV numbers: '.' decimal, 17 significant digits
std::string fmt_num(double x);

}  // namespace nuh
