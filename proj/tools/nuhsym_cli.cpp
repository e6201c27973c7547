// nuhsym command line; talks to the library only through the C interface
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "nuhsym/nuhsym.h"

namespace {

bool slurp(const std::string& path, std::string& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::ostringstream os;
  os << f.rdbuf();
  out = os.str();
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nuhsym: symbolic dynamics for nonuniformly hyperbolic maps"};
  app.set_version_flag("--version", std::string(nuh_version()));

  std::string command, config_path, out_dir, policy;
  int64_t seed = 0;
  bool print_config = false;

  app.add_option("command", command, "analyze | alphabet | graph | shadow | periodic | entropy | refine | suspend");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the config)");
  auto* pol_opt =
      app.add_option("--policy", policy, "chart-size policy")->check(CLI::IsMember({"paper", "practical"}));
  app.add_flag("--print-config", print_config, "print the effective config (all defaults) and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string text;
  if (!config_path.empty() && !slurp(config_path, text)) {
    std::cerr << "ConfigError: cannot read " << config_path << "\n";
    return 2;
  }

  if (print_config) {
    char* s = nullptr;
    nuh_status st = nuh_merged_config(text.c_str(), *seed_opt ? &seed : nullptr, *pol_opt ? policy.c_str() : nullptr, &s);
    if (st != NUH_OK) {
      std::cerr << nuh_last_error() << "\n";
      return st == NUH_E_CONFIG ? 2 : 3;
    }
    std::cout << s << "\n";
    nuh_free_string(s);
    return 0;
  }

  if (command.empty()) {
    std::cerr << "ConfigError: no command given\n" << app.help();
    return 2;
  }

  int code = 0;
  nuh_status st = nuh_run(command.c_str(), text.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
                          *seed_opt ? &seed : nullptr, *pol_opt ? policy.c_str() : nullptr, &code);
  if (st != NUH_OK) {
    std::cerr << nuh_last_error() << "\n";
    return code == 0 ? 3 : code;
  }
  return 0;
}
