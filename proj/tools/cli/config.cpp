#include "config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ocutrack::cli {

using nlohmann::json;

namespace {

// Shortest decimal that reads back as the same float, so 0.9f prints as 0.9.
double decimal(float v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf - 1, v);
  *r.ptr = '\0';
  return std::strtod(buf, nullptr);
}


using Handler = std::function<void(const json&)>;

void apply_object(const json& j, const std::string& where, const std::map<std::string, Handler>& handlers) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto h = handlers.find(it.key());
    if (h == handlers.end()) throw ConfigError("unknown config key: " + where + "." + it.key());
    try {
      h->second(*it);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + where + "." + it.key() + ": " + e.what());
    }
  }
}

template <typename T>
Handler set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config value out of range: " + what);
}

void validate(const RunConfig& c) {
  const auto& u = c.unet.config;
  require(u.depth >= 1 && u.depth <= 6, "unet.depth in [1, 6]");
  require(u.base_channels >= 1 && u.base_channels <= 256, "unet.base_channels in [1, 256]");
  require(u.input_height >= 1 && u.input_width >= 1, "unet input size positive");
  const auto& h = c.unet.hyper;
  require(h.lr > 0 && h.lr <= 10, "unet.lr in (0, 10]");
  require(h.momentum >= 0 && h.momentum < 1, "unet.momentum in [0, 1)");
  require(h.epochs >= 1 && h.epochs <= 10000, "unet.epochs in [1, 10000]");
  require(h.holdout_fraction >= 0 && h.holdout_fraction < 1, "unet.holdout_fraction in [0, 1)");
  require(c.synth.pupil_count >= 1 && c.synth.cr_count >= 1, "synth counts >= 1");
  require(c.featext.prob_threshold > 0 && c.featext.prob_threshold < 1, "featext.prob_threshold in (0, 1)");
  require(c.featext.cr_area_min >= 1 && c.featext.cr_area_max >= c.featext.cr_area_min, "featext CR area range");
  const auto& k = c.classical;
  require(k.cr_threshold > 0 && k.cr_threshold <= 1, "classical.cr_threshold in (0, 1]");
  require(k.cr_area_min >= 1 && k.cr_area_max >= k.cr_area_min, "classical CR area range");
  require(k.cr_inpaint_margin >= 0, "classical.cr_inpaint_margin >= 0");
  require(k.n_radii >= 1 && k.n_radii <= 8, "classical.radii has 1 to 8 entries");
  for (int i = 0; i < k.n_radii; ++i) require(k.radii[i] >= 1, "classical.radii positive");
  require(k.n_rays >= 8, "classical.n_rays >= 8");
  require(k.max_radius > 1, "classical.max_radius > 1");
  require(k.gradient_threshold > 0 && k.gradient_threshold <= 1, "classical.gradient_threshold in (0, 1]");
  require(k.max_iterations >= 1, "classical.max_iterations >= 1");
  require(k.convergence_eps > 0, "classical.convergence_eps > 0");
  require(c.confidence_threshold >= 0 && c.confidence_threshold <= 1, "confidence_threshold in [0, 1]");
  require(c.max_latency_ms > 0, "max_latency_ms > 0");
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  oct_unet_default_config(&c.unet.config);
  oct_train_default_hyper(&c.unet.hyper);
  oct_classical_default_config(&c.classical);
  return c;
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = default_config();
  auto& u = c.unet;
  auto& k = c.classical;
  apply_object(root, "config",
               {{"paths",
                 [&](const json& j) {
                   apply_object(j, "paths",
                                {{"models", set(c.paths.models)},
                                 {"dataset", set(c.paths.dataset)},
                                 {"frames", set(c.paths.frames)},
                                 {"outputs", set(c.paths.outputs)}});
                 }},
                {"unet",
                 [&](const json& j) {
                   apply_object(j, "unet",
                                {{"depth", set(u.config.depth)},
                                 {"base_channels", set(u.config.base_channels)},
                                 {"input_height", set(u.config.input_height)},
                                 {"input_width", set(u.config.input_width)},
                                 {"lr", set(u.hyper.lr)},
                                 {"momentum", set(u.hyper.momentum)},
                                 {"epochs", set(u.hyper.epochs)},
                                 {"holdout_fraction", set(u.hyper.holdout_fraction)}});
                 }},
                {"synth",
                 [&](const json& j) {
                   apply_object(j, "synth",
                                {{"pupil_count", set(c.synth.pupil_count)},
                                 {"cr_count", set(c.synth.cr_count)},
                                 {"distribution", [&](const json& d) { c.synth.distribution_json = d.dump(); }}});
                 }},
                {"featext",
                 [&](const json& j) {
                   apply_object(j, "featext",
                                {{"prob_threshold", set(c.featext.prob_threshold)},
                                 {"cr_area_min", set(c.featext.cr_area_min)},
                                 {"cr_area_max", set(c.featext.cr_area_max)}});
                 }},
                {"classical",
                 [&](const json& j) {
                   apply_object(j, "classical",
                                {{"cr_threshold", set(k.cr_threshold)},
                                 {"cr_area_min", set(k.cr_area_min)},
                                 {"cr_area_max", set(k.cr_area_max)},
                                 {"cr_inpaint_margin", set(k.cr_inpaint_margin)},
                                 {"radii",
                                  [&](const json& r) {
                                    const auto v = r.get<std::vector<int>>();
                                    require(!v.empty() && v.size() <= 8, "classical.radii has 1 to 8 entries");
                                    k.n_radii = static_cast<int>(v.size());
                                    for (std::size_t i = 0; i < v.size(); ++i) k.radii[i] = v[i];
                                  }},
                                 {"n_rays", set(k.n_rays)},
                                 {"max_radius", set(k.max_radius)},
                                 {"gradient_threshold", set(k.gradient_threshold)},
                                 {"max_iterations", set(k.max_iterations)},
                                 {"convergence_eps", set(k.convergence_eps)}});
                 }},
                {"calibration", set(c.calibration)},
                {"confidence_threshold", set(c.confidence_threshold)},
                {"max_latency_ms", set(c.max_latency_ms)}});
  validate(c);
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  const auto& u = c.unet;
  const auto& k = c.classical;
  json j;
  j["paths"] = {{"models", c.paths.models},
                {"dataset", c.paths.dataset},
                {"frames", c.paths.frames},
                {"outputs", c.paths.outputs}};
  j["unet"] = {{"depth", u.config.depth},
               {"base_channels", u.config.base_channels},
               {"input_height", u.config.input_height},
               {"input_width", u.config.input_width},
               {"lr", decimal(u.hyper.lr)},
               {"momentum", decimal(u.hyper.momentum)},
               {"epochs", u.hyper.epochs},
               {"holdout_fraction", u.hyper.holdout_fraction}};
  j["synth"] = {{"pupil_count", c.synth.pupil_count}, {"cr_count", c.synth.cr_count}};
  if (c.synth.distribution_json) j["synth"]["distribution"] = json::parse(*c.synth.distribution_json);
  j["featext"] = {{"prob_threshold", decimal(c.featext.prob_threshold)},
                  {"cr_area_min", c.featext.cr_area_min},
                  {"cr_area_max", c.featext.cr_area_max}};
  j["classical"] = {{"cr_threshold", decimal(k.cr_threshold)},
                    {"cr_area_min", k.cr_area_min},
                    {"cr_area_max", k.cr_area_max},
                    {"cr_inpaint_margin", k.cr_inpaint_margin},
                    {"radii", std::vector<int>(k.radii, k.radii + k.n_radii)},
                    {"n_rays", k.n_rays},
                    {"max_radius", k.max_radius},
                    {"gradient_threshold", k.gradient_threshold},
                    {"max_iterations", k.max_iterations},
                    {"convergence_eps", k.convergence_eps}};
  j["calibration"] = c.calibration;
  j["confidence_threshold"] = c.confidence_threshold;
  j["max_latency_ms"] = c.max_latency_ms;
  return j.dump(2) + "\n";
}

oct_tracker_options tracker_options(const RunConfig& c) {
  oct_tracker_options o;
  oct_tracker_default_options(&o);
  o.prob_threshold = c.featext.prob_threshold;
  o.cr_area_min = c.featext.cr_area_min;
  o.cr_area_max = c.featext.cr_area_max;
  o.confidence_threshold = c.confidence_threshold;
  return o;
}

}  // namespace ocutrack::cli
