#include "mcseg/config.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mcseg {

namespace {

using nlohmann::json;

double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ParameterError("config key '" + key + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ParameterError("config key '" + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw FormatError("config parse error in " + path + ": " + e.what());
  }
  if (!root.is_object()) throw FormatError("config must be a flat JSON object: " + path);

  PipelineConfig cfg;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "sigma_min") cfg.sigma_min = as_number(v, key);
    else if (key == "sigma_max") cfg.sigma_max = as_number(v, key);
    else if (key == "n_scales") cfg.n_scales = as_int(v, key);
    else if (key == "t_dog") cfg.t_dog = as_number(v, key);
    else if (key == "o_dog") cfg.o_dog = as_number(v, key);
    else if (key == "h_thr") cfg.h_thr = as_number(v, key);
    else if (key == "xi") cfg.xi = as_number(v, key);
    else if (key == "alpha") cfg.alpha = as_number(v, key);
    else if (key == "p_thr") cfg.p_thr = as_number(v, key);
    else if (key == "o_thr") cfg.o_thr = as_number(v, key);
    else if (key == "overlap_mode") {
      if (!v.is_string()) throw ParameterError("config key 'overlap_mode' must be a string");
      cfg.overlap_mode = v.get<std::string>();
    } else if (key == "match_max_dist_px") cfg.match_max_dist_px = as_number(v, key);
    else if (key == "match_min_iou") cfg.match_min_iou = as_number(v, key);
    else if (key == "pixel_spacing_mm") cfg.pixel_spacing_mm = as_number(v, key);
    else if (key == "pauc_samples") cfg.pauc_samples = as_int(v, key);
    else if (key == "pauc_fp_max") cfg.pauc_fp_max = as_number(v, key);
    else if (key == "froc_thresholds") cfg.froc_thresholds = as_int(v, key);
    else if (key == "optics_min_samples") cfg.optics_min_samples = as_int(v, key);
    else if (key == "optics_max_eps_mm") cfg.optics_max_eps_mm = as_number(v, key);
    else if (key == "eps_cut_mm") cfg.eps_cut_mm = as_number(v, key);
    else if (key == "kmeans_k") cfg.kmeans_k = as_int(v, key);
    else if (key == "kmeans_restarts") cfg.kmeans_restarts = as_int(v, key);
    else if (key == "seed") {
      if (!v.is_number_integer()) throw ParameterError("config key 'seed' must be an integer");
      cfg.seed = v.get<std::uint64_t>();
    } else if (key == "threads") cfg.threads = as_int(v, key);
    else throw ParameterError("unknown config key '" + key + "'");
  }
  validate_config(cfg);
  return cfg;
}

void validate_config(const PipelineConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ParameterError("config field '" + field + "' " + what);
  };
  if (!(cfg.sigma_min > 0.0)) fail("sigma_min", "must be > 0");
  if (!(cfg.sigma_max > cfg.sigma_min)) fail("sigma_max", "must be > sigma_min");
  if (cfg.n_scales < 2) fail("n_scales", "must be >= 2");
  if (!(cfg.t_dog >= 0.0)) fail("t_dog", "must be >= 0");
  if (!(cfg.o_dog >= 0.0)) fail("o_dog", "must be >= 0");
  if (!std::isfinite(cfg.h_thr)) fail("h_thr", "must be finite");
  if (!(cfg.xi > 0.0)) fail("xi", "must be > 0");
  if (cfg.alpha == 0.0 || !std::isfinite(cfg.alpha)) fail("alpha", "must be finite and nonzero");
  if (!(cfg.p_thr >= 0.0 && cfg.p_thr <= 1.0)) fail("p_thr", "must be in [0,1]");
  if (!(cfg.o_thr >= 0.0 && cfg.o_thr <= 1.0)) fail("o_thr", "must be in [0,1]");
  if (cfg.overlap_mode != "geq" && cfg.overlap_mode != "leq")
    fail("overlap_mode", "must be 'geq' or 'leq'");
  if (!(cfg.match_max_dist_px >= 0.0)) fail("match_max_dist_px", "must be >= 0");
  if (!(cfg.match_min_iou >= 0.0 && cfg.match_min_iou <= 1.0))
    fail("match_min_iou", "must be in [0,1]");
  if (!(cfg.pixel_spacing_mm > 0.0)) fail("pixel_spacing_mm", "must be > 0");
  if (cfg.pauc_samples < 1) fail("pauc_samples", "must be >= 1");
  if (!(cfg.pauc_fp_max > 0.0)) fail("pauc_fp_max", "must be > 0");
  if (cfg.froc_thresholds < 2) fail("froc_thresholds", "must be >= 2");
  if (cfg.optics_min_samples < 2) fail("optics_min_samples", "must be >= 2");
  if (!(cfg.optics_max_eps_mm > 0.0)) fail("optics_max_eps_mm", "must be > 0");
  if (!(cfg.eps_cut_mm > 0.0)) fail("eps_cut_mm", "must be > 0");
  if (cfg.kmeans_k < 1) fail("kmeans_k", "must be >= 1");
  if (cfg.kmeans_restarts < 1) fail("kmeans_restarts", "must be >= 1");
  if (cfg.threads < 1) fail("threads", "must be >= 1");
}

}  // namespace mcseg
