#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/eval.hpp"
#include "skillseries/features.hpp"
#include "skillseries/pipeline.hpp"

namespace skillseries {

/// Everything a CLI run needs. Defaults reproduce the reference protocol.
struct RunConfig {
  std::filesystem::path dataset_root;
  std::vector<Task> tasks{kAllTasks.begin(), kAllTasks.end()};
  std::vector<Scheme> schemes{Scheme::LOSO, Scheme::LOUO};
  std::vector<FeatureSet> feature_sets = default_feature_sets();
  std::vector<FeatureFamily> classification_families{kAllFamilies.begin(), kAllFamilies.end()};
  FeatureConfig features;
  std::map<FeatureFamily, ModelParams> params = default_model_table();
  std::size_t window = 100;
  std::size_t stride = 25;
  std::uint64_t seed = 0;
  std::size_t repeats = 20;
  RhoMode rho_mode = RhoMode::Pooled;
  PValueMethod p_method = PValueMethod::TDistribution;
  std::filesystem::path out_dir = "out";

  void validate() const {
    if (tasks.empty()) throw BadParam("no task selected");
    if (schemes.empty()) throw BadParam("no scheme selected");
    if (repeats < 1) throw BadParam("repeats must be >= 1");
    if (stride < 1) throw BadParam("stride must be >= 1");
    if (window < 1) throw BadParam("window must be >= 1");
    if (features.dct_q < 1 || features.dft_q < 1) throw BadParam("q must be >= 1");
    features.apen.validate();
    features.smt.validate();
    for (const auto& [f, p] : params) {
      const auto name = std::string(to_string(f));
      if (p.k_classify < 1 || p.k_predict < 1) throw BadParam(name + ": PCA k must be >= 1");
      if (!(p.C > 0.0)) throw BadParam(name + ": C must be > 0");
      if (!(p.epsilon >= 0.0)) throw BadParam(name + ": epsilon must be >= 0");
    }
  }

  ExperimentConfig experiment(Scheme scheme) const {
    ExperimentConfig e;
    e.scheme = scheme;
    e.repeats = repeats;
    e.seed = seed;
    e.feature_sets = feature_sets;
    e.classification_families = classification_families;
    e.features = features;
    e.params = params;
    e.rho_mode = rho_mode;
    e.p_method = p_method;
    return e;
  }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  for (auto& part : split_char(value, ','))
    if (auto t = trim(part); !t.empty()) out.emplace_back(t);
  return out;
}

/// Lower case with '-' folded to '_'; unlike lower(), keeps underscores.
inline std::string key_name(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = ch == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline double setting_double(const std::string& key, std::string_view value) {
  const auto v = parse_double(trim(value));
  if (!v) throw BadParam("config: '" + key + "' expects a number, got '" + std::string(value) + "'");
  return *v;
}

inline std::size_t setting_count(const std::string& key, std::string_view value) {
  const auto v = parse_int(trim(value));
  if (!v || *v < 0) throw BadParam("config: '" + key + "' expects a non-negative integer, got '" +
                                   std::string(value) + "'");
  return static_cast<std::size_t>(*v);
}

}  // namespace detail

/// Applies one `key = value` setting. Per-family model keys take the form
/// `<family>.k_classify`, `<family>.k_predict`, `<family>.C`, `<family>.epsilon`.
inline void apply_setting(RunConfig& cfg, const std::string& raw_key, std::string_view value) {
  using namespace detail;
  const std::string key = key_name(trim(raw_key));
  const std::string v(trim(value));
  if (key == "dataset") {
    cfg.dataset_root = v;
  } else if (key == "task") {
    cfg.tasks.clear();
    for (const auto& t : split_list(v)) {
      if (lower(t) == "all") {
        cfg.tasks.assign(kAllTasks.begin(), kAllTasks.end());
        break;
      }
      const auto task = parse_task(t);
      if (!task) throw BadParam("config: unknown task '" + t + "'");
      cfg.tasks.push_back(*task);
    }
  } else if (key == "scheme") {
    cfg.schemes.clear();
    for (const auto& s : split_list(v)) {
      if (lower(s) == "both" || lower(s) == "all") {
        cfg.schemes = {Scheme::LOSO, Scheme::LOUO};
        break;
      }
      const auto scheme = parse_scheme(s);
      if (!scheme) throw BadParam("config: unknown scheme '" + s + "'");
      cfg.schemes.push_back(*scheme);
    }
  } else if (key == "families") {
    cfg.feature_sets.clear();
    for (const auto& s : split_list(v)) cfg.feature_sets.push_back(parse_feature_set(s));
  } else if (key == "classification_families") {
    cfg.classification_families.clear();
    for (const auto& s : split_list(v)) {
      const auto f = parse_family(s);
      if (!f) throw BadParam("config: unknown family '" + s + "'");
      cfg.classification_families.push_back(*f);
    }
  } else if (key == "window") {
    cfg.window = setting_count(key, v);
  } else if (key == "stride") {
    cfg.stride = setting_count(key, v);
  } else if (key == "seed") {
    cfg.seed = setting_count(key, v);
  } else if (key == "repeats") {
    cfg.repeats = setting_count(key, v);
  } else if (key == "rho_mode") {
    const auto m = parse_rho_mode(v);
    if (!m) throw BadParam("config: rho_mode must be pooled or fold-mean");
    cfg.rho_mode = *m;
  } else if (key == "p_value") {
    if (lower(v) == "t") cfg.p_method = PValueMethod::TDistribution;
    else if (lower(v) == "permutation") cfg.p_method = PValueMethod::Permutation;
    else throw BadParam("config: p_value must be t or permutation");
  } else if (key == "out") {
    cfg.out_dir = v;
  } else if (key == "dct_q") {
    cfg.features.dct_q = setting_count(key, v);
  } else if (key == "dft_q") {
    cfg.features.dft_q = setting_count(key, v);
  } else if (key == "apen_m") {
    cfg.features.apen.m = static_cast<int>(setting_count(key, v));
  } else if (key == "apen_tau") {
    cfg.features.apen.tau = static_cast<int>(setting_count(key, v));
  } else if (key == "apen_radii") {
    cfg.features.apen.radii.clear();
    for (const auto& r : split_list(v)) cfg.features.apen.radii.push_back(setting_double(key, r));
  } else if (key == "apen_radius_mode") {
    if (lower(v) == "std") cfg.features.apen.radius_mode = RadiusMode::StdScaled;
    else if (lower(v) == "abs") cfg.features.apen.radius_mode = RadiusMode::Absolute;
    else throw BadParam("config: apen_radius_mode must be std or abs");
  } else if (key == "smt_windows") {
    cfg.features.smt.n_windows = setting_count(key, v);
  } else if (key == "smt_levels") {
    cfg.features.smt.gray_levels = static_cast<int>(setting_count(key, v));
  } else if (const auto dot = key.find('.'); dot != std::string::npos) {
    const auto fam = parse_family(key.substr(0, dot));
    if (!fam) throw BadParam("config: unknown family in key '" + raw_key + "'");
    auto& p = cfg.params[*fam];
    const auto field = key.substr(dot + 1);
    if (field == "k_classify") p.k_classify = setting_count(key, v);
    else if (field == "k_predict") p.k_predict = setting_count(key, v);
    else if (field == "c") p.C = setting_double(key, v);
    else if (field == "epsilon") p.epsilon = setting_double(key, v);
    else throw BadParam("config: unknown model key '" + raw_key + "'");
  } else {
    throw BadParam("config: unknown key '" + raw_key + "'");
  }
}

/// Flat `key = value` lines; `#` starts a comment.
inline void load_config(std::istream& in, RunConfig& cfg) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw BadParam("config line " + std::to_string(number) + ": expected key = value");
    apply_setting(cfg, std::string(body.substr(0, eq)), body.substr(eq + 1));
  }
}

inline void load_config_file(const std::filesystem::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw BadParam("cannot open config file " + path.string());
  load_config(in, cfg);
}

}  // namespace skillseries
