#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/experiment.hpp"

namespace sparse_oracle {

/**
 * Flat key=value run configuration. All keys optional; '#' starts a comment.
 * Recognized keys:
 *   sweep           part1 | part2 | single          (default part1)
 *   m_total         power of two                    (default 256)
 *   p               sparsity fraction               (default 0.02)
 *   tau2            effect variance                 (default 0.9)
 *   sigma_mode      known | unknown | both          (default both; 'both' only
 *                                                    meaningful for sweeps)
 *   methods         comma list of oracle,mBIC,mBIC1,mBIC2,mBIC3,BH,SD
 *   alpha           FDR/FWER level                  (default 0.05)
 *   replicates      per-scenario Monte-Carlo size   (default 10000)
 *   seed            64-bit root seed                (default 20240101)
 *   k_max_fraction  nested-search cap as a fraction of m_total (default 0.3)
 * Unknown keys are rejected by name.
 */
struct RunConfig {
  std::string sweep = "part1";
  ScenarioConfig scenario;
  std::vector<SigmaMode> modes = {SigmaMode::known, SigmaMode::unknown};

  void set(const std::string& key, const std::string& value) {
    auto parse_double = [&](const char* what) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing junk");
        return v;
      } catch (const std::exception&) {
        throw config_error(std::string("config: could not parse number for '") + what + "'");
      }
    };
    auto parse_long = [&](const char* what) {
      try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing junk");
        return v;
      } catch (const std::exception&) {
        throw config_error(std::string("config: could not parse integer for '") + what + "'");
      }
    };

    if (key == "sweep") {
      if (value != "part1" && value != "part2" && value != "single") {
        throw config_error("config: sweep must be part1, part2 or single");
      }
      sweep = value;
    } else if (key == "m_total") {
      scenario.m_total = static_cast<int>(parse_long("m_total"));
    } else if (key == "p") {
      scenario.p = parse_double("p");
    } else if (key == "tau2") {
      scenario.tau2 = parse_double("tau2");
    } else if (key == "sigma_mode") {
      set_sigma_mode(value);
    } else if (key == "methods") {
      scenario.methods = parse_methods(value);
    } else if (key == "alpha") {
      scenario.alpha = parse_double("alpha");
    } else if (key == "replicates") {
      scenario.replicates = static_cast<int>(parse_long("replicates"));
    } else if (key == "seed") {
      try {
        std::size_t pos = 0;
        scenario.seed = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw config_error("config: could not parse integer for 'seed'");
      }
    } else if (key == "k_max_fraction") {
      scenario.k_max_fraction = parse_double("k_max_fraction");
    } else {
      throw config_error("config: unknown key '" + key + "'");
    }
  }

  void set_sigma_mode(const std::string& value) {
    if (value == "known") {
      modes = {SigmaMode::known};
      scenario.sigma_mode = SigmaMode::known;
    } else if (value == "unknown") {
      modes = {SigmaMode::unknown};
      scenario.sigma_mode = SigmaMode::unknown;
    } else if (value == "both") {
      modes = {SigmaMode::known, SigmaMode::unknown};
      scenario.sigma_mode = SigmaMode::known;
    } else {
      throw config_error("config: sigma_mode must be known, unknown or both");
    }
  }

  static std::vector<Method> parse_methods(const std::string& list) {
    std::vector<Method> methods;
    std::istringstream is(list);
    std::string token;
    while (std::getline(is, token, ',')) {
      const auto first = token.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      const auto last = token.find_last_not_of(" \t");
      methods.push_back(method_from_name(token.substr(first, last - first + 1)));
    }
    if (methods.empty()) throw config_error("config: methods list is empty");
    return methods;
  }

  void load_text(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw config_error("config: expected key=value, got '" + line + "'");
      }
      set(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    RunConfig cfg;
    cfg.load_text(buffer.str());
    return cfg;
  }

  /// Canonical serialization (fixed key order) used for the manifest hash.
  std::string canonical_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "sweep=" << sweep << "\n";
    os << "m_total=" << scenario.m_total << "\n";
    os << "p=" << scenario.p << "\n";
    os << "tau2=" << scenario.tau2 << "\n";
    os << "sigma_mode=";
    if (modes.size() == 2) {
      os << "both";
    } else {
      os << sigma_mode_name(modes.front());
    }
    os << "\n";
    os << "methods=";
    for (std::size_t i = 0; i < scenario.methods.size(); ++i) {
      os << (i ? "," : "") << method_name(scenario.methods[i]);
    }
    os << "\n";
    os << "alpha=" << scenario.alpha << "\n";
    os << "replicates=" << scenario.replicates << "\n";
    os << "seed=" << scenario.seed << "\n";
    os << "k_max_fraction=" << scenario.k_max_fraction << "\n";
    return os.str();
  }
};

}  // namespace sparse_oracle
