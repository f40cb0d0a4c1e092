// SPDX-License-Identifier: Apache-2.0
#include "layergen/config.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "layergen/textio.hpp"

namespace layergen {

std::vector<long> ExperimentConfig::x_grid() const {
  std::vector<long> xs;
  for (long i = 0; i < x_count; ++i) xs.push_back(x_start_deci + i * x_step_deci);
  return xs;
}

std::vector<int> ExperimentConfig::hidden_widths(int width) const {
  return std::vector<int>(static_cast<size_t>(depth), width);
}

TransferProtocol ExperimentConfig::transfer_protocol() const {
  TransferProtocol p;
  p.x_deci_a = transfer_x_a_deci;
  p.x_deci_b = transfer_x_b_deci;
  p.n_values = transfer_n_values;
  p.donor_seeds = donor_seeds;
  p.recipient_seeds = recipient_seeds;
  p.bvp_template = bvp;
  p.train = train;
  p.seed_core = seed_core;
  return p;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& section, const std::string& key, const std::string& msg) {
    throw ConfigError("[" + section + "] " + key + ": " + msg);
  };
  if (widths.empty()) fail("experiment", "widths", "at least one width required");
  for (int w : widths)
    if (w < 1) fail("experiment", "widths", "widths must be positive");
  if (depth < 1) fail("experiment", "depth", "at least one hidden layer required");
  if (x_count < 1) fail("experiment", "x_count", "at least one task position required");
  if (x_count > 1 && x_step_deci <= 0)
    fail("experiment", "x_step", "positive step required for multiple positions");
  if (seeds < 1) fail("experiment", "seeds", "at least one seed required");
  if (out_root.empty()) fail("experiment", "out_root", "output root must be set");

  bvp.validate();
  train.validate();
  grid.validate();
  if (svcca_threshold && !(*svcca_threshold > 0.0 && *svcca_threshold <= 1.0))
    fail("svcca", "threshold", "must lie in (0, 1] or be 'none'");

  for (int w : transfer_widths)
    if (std::find(widths.begin(), widths.end(), w) == widths.end())
      fail("transfer", "widths", "width " + std::to_string(w) +
                                     " has no trained ensemble in [experiment] widths");
  transfer_protocol().validate(depth);
  const auto xs = x_grid();
  if (std::find(xs.begin(), xs.end(), transfer_x_a_deci) == xs.end())
    fail("transfer", "x_a", "donor position " + format_deci(transfer_x_a_deci) +
                                " is not on the experiment x' grid");
  for (long s : donor_seeds)
    if (s < 0 || s >= seeds)
      fail("transfer", "donor_seeds", "seed " + std::to_string(s) + " outside 0.." +
                                          std::to_string(seeds - 1));
  if (oracle_n < 3) fail("oracle", "n", "grid must have at least 3 points per side");
  if (jobs < 1) fail("run", "jobs", "at least one worker required");
}

namespace {

struct IniFile {
  // section -> key -> value, with consumption tracking for strictness
  std::map<std::string, std::map<std::string, std::string>> data;
  std::set<std::pair<std::string, std::string>> consumed;
  std::string origin;

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& msg) const {
    throw ConfigError(origin + ": [" + section + "] " + key + ": " + msg);
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) {
    consumed.insert({section, key});
    auto s = data.find(section);
    if (s == data.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  }

  template <typename F>
  void set_if(const std::string& section, const std::string& key, F&& apply) {
    if (auto v = get(section, key)) {
      try {
        apply(*v);
      } catch (const Error& e) {
        fail(section, key, e.what());
      }
    }
  }

  void check_all_consumed() const {
    for (const auto& [section, kvs] : data)
      for (const auto& [key, value] : kvs)
        if (!consumed.count({section, key})) fail(section, key, "unknown key");
  }
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

IniFile ini_parse(const std::string& text, const std::string& origin) {
  IniFile ini;
  ini.origin = origin;
  std::istringstream in(text);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto pos = t.find('=');
    if (pos == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(t.substr(0, pos));
    const std::string value = trim(t.substr(pos + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!ini.data[section].emplace(key, value).second)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return ini;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& tok : split_ws(s)) out.push_back(static_cast<int>(parse_long(tok, what)));
  return out;
}

std::vector<long> parse_long_list(const std::string& s, const std::string& what) {
  std::vector<long> out;
  for (const auto& tok : split_ws(s)) out.push_back(parse_long(tok, what));
  return out;
}

const std::set<std::string> k_known_sections = {"experiment", "bvp",      "train", "svcca",
                                                "transfer",   "oracle",   "run"};

} // namespace

ExperimentConfig config_parse(const std::string& text, const std::string& origin) {
  IniFile ini = ini_parse(text, origin);
  for (const auto& [section, kvs] : ini.data)
    if (!k_known_sections.count(section))
      throw ConfigError(origin + ": unknown section [" + section + "]");

  ExperimentConfig c;
  bool transfer_widths_set = false;

  ini.set_if("experiment", "widths",
             [&](const std::string& v) { c.widths = parse_int_list(v, "widths"); });
  ini.set_if("experiment", "depth",
             [&](const std::string& v) { c.depth = static_cast<int>(parse_long(v, "depth")); });
  ini.set_if("experiment", "x_start",
             [&](const std::string& v) { c.x_start_deci = parse_deci(v, "x_start"); });
  ini.set_if("experiment", "x_step",
             [&](const std::string& v) { c.x_step_deci = parse_deci(v, "x_step"); });
  ini.set_if("experiment", "x_count",
             [&](const std::string& v) { c.x_count = parse_long(v, "x_count"); });
  ini.set_if("experiment", "seeds",
             [&](const std::string& v) { c.seeds = parse_long(v, "seeds"); });
  ini.set_if("experiment", "seed_core",
             [&](const std::string& v) { c.seed_core = parse_u64(v, "seed_core"); });
  ini.set_if("experiment", "out_root", [&](const std::string& v) { c.out_root = v; });

  ini.set_if("bvp", "y_source",
             [&](const std::string& v) { c.bvp.y_source = parse_double(v, "y_source"); });
  ini.set_if("bvp", "r", [&](const std::string& v) { c.bvp.r = parse_double(v, "r"); });
  ini.set_if("bvp", "eta", [&](const std::string& v) { c.bvp.eta = parse_double(v, "eta"); });
  ini.set_if("bvp", "x0", [&](const std::string& v) { c.bvp.domain.x0 = parse_double(v, "x0"); });
  ini.set_if("bvp", "x1", [&](const std::string& v) { c.bvp.domain.x1 = parse_double(v, "x1"); });
  ini.set_if("bvp", "y0", [&](const std::string& v) { c.bvp.domain.y0 = parse_double(v, "y0"); });
  ini.set_if("bvp", "y1", [&](const std::string& v) { c.bvp.domain.y1 = parse_double(v, "y1"); });

  ini.set_if("train", "n_interior",
             [&](const std::string& v) { c.train.n_interior = parse_long(v, "n_interior"); });
  ini.set_if("train", "n_per_edge",
             [&](const std::string& v) { c.train.n_per_edge = parse_long(v, "n_per_edge"); });
  ini.set_if("train", "test_scale",
             [&](const std::string& v) { c.train.test_scale = parse_long(v, "test_scale"); });
  ini.set_if("train", "resample_every", [&](const std::string& v) {
    c.train.resample_every = parse_long(v, "resample_every");
  });
  ini.set_if("train", "eval_every",
             [&](const std::string& v) { c.train.eval_every = parse_long(v, "eval_every"); });
  ini.set_if("train", "patience", [&](const std::string& v) {
    c.train.patience = static_cast<int>(parse_long(v, "patience"));
  });
  ini.set_if("train", "max_epochs",
             [&](const std::string& v) { c.train.max_epochs = parse_long(v, "max_epochs"); });
  ini.set_if("train", "alpha",
             [&](const std::string& v) { c.train.adam.alpha = parse_double(v, "alpha"); });
  ini.set_if("train", "beta1",
             [&](const std::string& v) { c.train.adam.beta1 = parse_double(v, "beta1"); });
  ini.set_if("train", "beta2",
             [&](const std::string& v) { c.train.adam.beta2 = parse_double(v, "beta2"); });
  ini.set_if("train", "eps",
             [&](const std::string& v) { c.train.adam.eps = parse_double(v, "eps"); });
  ini.set_if("train", "norm",
             [&](const std::string& v) { c.train.norm = loss_norm_from_string(v); });

  ini.set_if("svcca", "grid_nx", [&](const std::string& v) {
    c.grid.nx = static_cast<int>(parse_long(v, "grid_nx"));
  });
  ini.set_if("svcca", "grid_ny", [&](const std::string& v) {
    c.grid.ny = static_cast<int>(parse_long(v, "grid_ny"));
  });
  ini.set_if("svcca", "threshold", [&](const std::string& v) {
    if (v == "none")
      c.svcca_threshold.reset();
    else
      c.svcca_threshold = parse_double(v, "threshold");
  });

  ini.set_if("transfer", "widths", [&](const std::string& v) {
    c.transfer_widths = parse_int_list(v, "transfer widths");
    transfer_widths_set = true;
  });
  ini.set_if("transfer", "x_a",
             [&](const std::string& v) { c.transfer_x_a_deci = parse_deci(v, "x_a"); });
  ini.set_if("transfer", "x_b",
             [&](const std::string& v) { c.transfer_x_b_deci = parse_deci(v, "x_b"); });
  ini.set_if("transfer", "n_values",
             [&](const std::string& v) { c.transfer_n_values = parse_int_list(v, "n_values"); });
  ini.set_if("transfer", "donor_seeds",
             [&](const std::string& v) { c.donor_seeds = parse_long_list(v, "donor_seeds"); });
  ini.set_if("transfer", "recipient_seeds", [&](const std::string& v) {
    c.recipient_seeds = parse_long_list(v, "recipient_seeds");
  });

  ini.set_if("oracle", "n",
             [&](const std::string& v) { c.oracle_n = static_cast<int>(parse_long(v, "n")); });
  ini.set_if("run", "jobs",
             [&](const std::string& v) { c.jobs = static_cast<int>(parse_long(v, "jobs")); });

  ini.check_all_consumed();

  if (!transfer_widths_set) c.transfer_widths = c.widths;
  c.grid.domain = c.bvp.domain;
  c.validate();
  return c;
}

ExperimentConfig config_load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw MissingInputError("cannot read config file " + path.string());
  }
  return config_parse(text, path.string());
}

} // namespace layergen
