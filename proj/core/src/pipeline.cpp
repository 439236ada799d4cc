#include "scfusion/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "scfusion/errors.hpp"
#include "scfusion/io.hpp"
#include "scfusion/train.hpp"

namespace scf::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f.good()) throw IoError("failed writing " + path);
}

void make_dirs(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

// ---- strict JSON plumbing ------------------------------------------------

json parse_object(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError(std::string(what) + ": malformed JSON");
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  return j;
}

void check_keys(const json& j, const char* what, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known)
      throw ValidationError(std::string(what) + ": unknown key \"" + it.key() + "\"");
  }
}

[[noreturn]] void bad_type(const char* what, const char* key, const char* expect) {
  throw ValidationError(std::string(what) + ": \"" + key + "\" must be " + expect);
}

double jnum(const json& j, const char* what, const char* key, double def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  if (!it->is_number()) bad_type(what, key, "a number");
  return it->get<double>();
}

int jint(const json& j, const char* what, const char* key, int def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  if (!it->is_number_integer()) bad_type(what, key, "an integer");
  return it->get<int>();
}

bool jbool(const json& j, const char* what, const char* key, bool def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  if (!it->is_boolean()) bad_type(what, key, "a boolean");
  return it->get<bool>();
}

std::string jstr(const json& j, const char* what, const char* key, const std::string& def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  if (!it->is_string()) bad_type(what, key, "a string");
  return it->get<std::string>();
}

uint64_t ju64(const json& j, const char* what, const char* key, uint64_t def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  if (it->is_number_unsigned()) return it->get<uint64_t>();
  if (it->is_number_integer() && it->get<int64_t>() >= 0)
    return static_cast<uint64_t>(it->get<int64_t>());
  bad_type(what, key, "a non-negative integer");
}

std::string jreq_str(const json& j, const char* what, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string(what) + ": missing key \"" + key + "\"");
  if (!it->is_string()) bad_type(what, key, "a string");
  return it->get<std::string>();
}

// ---- logging -------------------------------------------------------------

int log_rank(const std::string& level) {
  if (level == "error") return 0;
  if (level == "warn") return 1;
  if (level == "info") return 2;
  if (level == "debug") return 3;
  throw ValidationError("log level must be one of error, warn, info, debug");
}

void check_opts(const CommonOpts& opts) {
  if (opts.threads < 1) throw ValidationError("threads must be >= 1");
  log_rank(opts.log_level);
}

void note(const CommonOpts& opts, const std::string& msg) {
  if (log_rank(opts.log_level) >= 2) std::cerr << "[scfusion] " << msg << "\n";
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---- config --------------------------------------------------------------

const char* projection_name(Projection p) {
  return p == Projection::kBilinear ? "bilinear" : "spt";
}

Projection projection_from_name(const std::string& name) {
  if (name == "bilinear") return Projection::kBilinear;
  if (name == "spt") return Projection::kSpt;
  throw ValidationError("unknown projection backend: " + name);
}

void HeadConfig::validate() const {
  if (hidden < 1) throw ValidationError("head hidden channels must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValidationError("decode threshold must be in (0,1)");
  if (nms_radius < 1) throw ValidationError("nms_radius must be >= 1");
  if (grad_clip < 0.0) throw ValidationError("grad_clip must be non-negative");
}

void PipelineConfig::validate() const {
  if (stride < 1) throw ValidationError("stride must be >= 1");
  proj::KernelSpec::make(kernel.sigma, kernel.size);
  loss.validate();
  head.validate();
  tracker.validate();
  eval.validate();
}

std::string pipeline_config_json(const PipelineConfig& cfg) {
  json j;
  j["projection"] = projection_name(cfg.projection);
  j["fusion"] = fusion::fusion_rule_name(cfg.fusion);
  j["gaussian_mask"] = cfg.gaussian_mask;
  j["depth_weight"] = cfg.depth_weight;
  j["normalize_weights"] = cfg.normalize_weights;
  j["splat"] = cfg.splat == proj::SplatRule::kMax ? "max" : "mean";
  j["stride"] = cfg.stride;
  j["kernel"] = {{"sigma", cfg.kernel.sigma}, {"size", cfg.kernel.size}};
  j["loss"] = {{"alpha", cfg.loss.alpha},
               {"gamma", cfg.loss.gamma},
               {"beta", cfg.loss.beta},
               {"centernet_variant", cfg.loss.centernet_variant}};
  j["mc_loss"] = cfg.mc_loss;
  j["multi_valid"] = cfg.multi_valid == MultiValid::kUnion ? "union" : "all";
  j["head"] = {{"hidden", cfg.head.hidden},
               {"lr", cfg.head.lr},
               {"threshold", cfg.head.threshold},
               {"nms_radius", cfg.head.nms_radius},
               {"grad_clip", cfg.head.grad_clip}};
  j["tracker"] = {{"gate", cfg.tracker.gate},
                  {"max_age", cfg.tracker.max_age},
                  {"min_hits", cfg.tracker.min_hits}};
  j["eval"] = {{"match_radius", cfg.eval.match_radius}};
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  const char* W = "pipeline config";
  json j = parse_object(json_text, W);
  check_keys(j, W,
             {"projection", "fusion", "gaussian_mask", "depth_weight", "normalize_weights",
              "splat", "stride", "kernel", "loss", "mc_loss", "multi_valid", "head", "tracker",
              "eval", "seed"});
  PipelineConfig c;
  c.projection = projection_from_name(jstr(j, W, "projection", projection_name(c.projection)));
  c.fusion = fusion::fusion_rule_from_name(jstr(j, W, "fusion", fusion::fusion_rule_name(c.fusion)));
  c.gaussian_mask = jbool(j, W, "gaussian_mask", c.gaussian_mask);
  c.depth_weight = jbool(j, W, "depth_weight", c.depth_weight);
  c.normalize_weights = jbool(j, W, "normalize_weights", c.normalize_weights);
  const std::string splat = jstr(j, W, "splat", "mean");
  if (splat == "max")
    c.splat = proj::SplatRule::kMax;
  else if (splat == "mean")
    c.splat = proj::SplatRule::kMean;
  else
    throw ValidationError("unknown splat rule: " + splat);
  c.stride = jint(j, W, "stride", c.stride);
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    if (!k.is_object()) bad_type(W, "kernel", "an object");
    check_keys(k, "pipeline config kernel", {"sigma", "size"});
    c.kernel.sigma = jnum(k, W, "sigma", c.kernel.sigma);
    c.kernel.size = jint(k, W, "size", c.kernel.size);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    if (!l.is_object()) bad_type(W, "loss", "an object");
    check_keys(l, "pipeline config loss", {"alpha", "gamma", "beta", "centernet_variant"});
    c.loss.alpha = jnum(l, W, "alpha", c.loss.alpha);
    c.loss.gamma = jnum(l, W, "gamma", c.loss.gamma);
    c.loss.beta = jnum(l, W, "beta", c.loss.beta);
    c.loss.centernet_variant = jbool(l, W, "centernet_variant", c.loss.centernet_variant);
  }
  c.mc_loss = jbool(j, W, "mc_loss", c.mc_loss);
  const std::string mv = jstr(j, W, "multi_valid", "union");
  if (mv == "union")
    c.multi_valid = MultiValid::kUnion;
  else if (mv == "all")
    c.multi_valid = MultiValid::kAll;
  else
    throw ValidationError("multi_valid must be \"union\" or \"all\"");
  if (j.contains("head")) {
    const json& h = j.at("head");
    if (!h.is_object()) bad_type(W, "head", "an object");
    check_keys(h, "pipeline config head", {"hidden", "lr", "threshold", "nms_radius", "grad_clip"});
    c.head.hidden = jint(h, W, "hidden", c.head.hidden);
    c.head.lr = jnum(h, W, "lr", c.head.lr);
    c.head.threshold = jnum(h, W, "threshold", c.head.threshold);
    c.head.nms_radius = jint(h, W, "nms_radius", c.head.nms_radius);
    c.head.grad_clip = jnum(h, W, "grad_clip", c.head.grad_clip);
  }
  if (j.contains("tracker")) {
    const json& t = j.at("tracker");
    if (!t.is_object()) bad_type(W, "tracker", "an object");
    check_keys(t, "pipeline config tracker", {"gate", "max_age", "min_hits"});
    c.tracker.gate = jnum(t, W, "gate", c.tracker.gate);
    c.tracker.max_age = jint(t, W, "max_age", c.tracker.max_age);
    c.tracker.min_hits = jint(t, W, "min_hits", c.tracker.min_hits);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    if (!e.is_object()) bad_type(W, "eval", "an object");
    check_keys(e, "pipeline config eval", {"match_radius"});
    c.eval.match_radius = jnum(e, W, "match_radius", c.eval.match_radius);
  }
  c.seed = ju64(j, W, "seed", c.seed);
  c.validate();
  return c;
}

std::string scene_config_json(const sim::SceneConfig& cfg) {
  json j;
  j["n_cameras"] = cfg.n_cameras;
  j["ring_radius"] = cfg.ring_radius;
  j["ring_height"] = cfg.ring_height;
  j["focal"] = cfg.focal;
  j["image_w"] = cfg.image_w;
  j["image_h"] = cfg.image_h;
  j["grid"] = {{"origin_x", cfg.grid.origin_x},
               {"origin_y", cfg.grid.origin_y},
               {"cell_size", cfg.grid.cell_size},
               {"width", cfg.grid.width},
               {"height", cfg.grid.height}};
  j["n_walkers"] = cfg.n_walkers;
  j["speed_min"] = cfg.speed_min;
  j["speed_max"] = cfg.speed_max;
  j["fps"] = cfg.fps;
  j["n_frames"] = cfg.n_frames;
  json occ = json::array();
  for (const sim::Occluder& o : cfg.occluders)
    occ.push_back({{"x", o.x}, {"y", o.y}, {"radius", o.radius}});
  j["occluders"] = occ;
  j["noise_sigma"] = cfg.noise_sigma;
  j["channels"] = cfg.channels;
  j["bump_radius"] = cfg.bump_radius;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

sim::SceneConfig parse_scene_config(const std::string& json_text) {
  const char* W = "scene config";
  json j = parse_object(json_text, W);
  check_keys(j, W, {"n_cameras", "ring_radius", "ring_height", "focal", "image_w", "image_h",
                    "grid", "n_walkers", "speed_min", "speed_max", "fps", "n_frames", "occluders",
                    "noise_sigma", "channels", "bump_radius", "seed"});
  sim::SceneConfig c;
  c.n_cameras = jint(j, W, "n_cameras", c.n_cameras);
  c.ring_radius = jnum(j, W, "ring_radius", c.ring_radius);
  c.ring_height = jnum(j, W, "ring_height", c.ring_height);
  c.focal = jnum(j, W, "focal", c.focal);
  c.image_w = jint(j, W, "image_w", c.image_w);
  c.image_h = jint(j, W, "image_h", c.image_h);
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (!g.is_object()) bad_type(W, "grid", "an object");
    check_keys(g, "scene config grid", {"origin_x", "origin_y", "cell_size", "width", "height"});
    c.grid.origin_x = jnum(g, W, "origin_x", c.grid.origin_x);
    c.grid.origin_y = jnum(g, W, "origin_y", c.grid.origin_y);
    c.grid.cell_size = jnum(g, W, "cell_size", c.grid.cell_size);
    c.grid.width = jint(g, W, "width", c.grid.width);
    c.grid.height = jint(g, W, "height", c.grid.height);
  }
  c.n_walkers = jint(j, W, "n_walkers", c.n_walkers);
  c.speed_min = jnum(j, W, "speed_min", c.speed_min);
  c.speed_max = jnum(j, W, "speed_max", c.speed_max);
  c.fps = jnum(j, W, "fps", c.fps);
  c.n_frames = jint(j, W, "n_frames", c.n_frames);
  if (j.contains("occluders")) {
    const json& arr = j.at("occluders");
    if (!arr.is_array()) bad_type(W, "occluders", "an array");
    c.occluders.clear();
    for (const json& o : arr) {
      if (!o.is_object()) throw ValidationError("scene config: occluders must hold objects");
      check_keys(o, "scene config occluder", {"x", "y", "radius"});
      sim::Occluder occ;
      occ.x = jnum(o, W, "x", 0.0);
      occ.y = jnum(o, W, "y", 0.0);
      occ.radius = jnum(o, W, "radius", 0.0);
      c.occluders.push_back(occ);
    }
  }
  c.noise_sigma = jnum(j, W, "noise_sigma", c.noise_sigma);
  c.channels = jint(j, W, "channels", c.channels);
  c.bump_radius = jnum(j, W, "bump_radius", c.bump_radius);
  c.seed = ju64(j, W, "seed", c.seed);
  c.validate();
  return c;
}

std::string eval_config_json(const metrics::EvalConfig& cfg) {
  json j;
  j["match_radius"] = cfg.match_radius;
  return j.dump(2) + "\n";
}

metrics::EvalConfig parse_eval_config(const std::string& json_text) {
  const char* W = "eval config";
  json j = parse_object(json_text, W);
  check_keys(j, W, {"match_radius"});
  metrics::EvalConfig c;
  c.match_radius = jnum(j, W, "match_radius", c.match_radius);
  c.validate();
  return c;
}

// ---- scene directory -----------------------------------------------------

std::string feature_filename(int frame, int camera) {
  return fmt("f%04d_c%02d.bevf", frame, camera);
}

std::string prob_filename(int frame) { return fmt("prob_f%04d.bevf", frame); }

std::string SceneDir::path(const std::string& name) const {
  return (fs::path(dir) / name).string();
}

std::string SceneDir::feature_path(int frame, int camera) const {
  return path(feature_filename(frame, camera));
}

std::vector<std::string> SceneDir::input_paths(bool include_gt) const {
  std::vector<std::string> out{path("scene.json"), path("calibration.json")};
  if (include_gt) out.push_back(path("gt.csv"));
  for (int t = 0; t < cfg.n_frames; ++t)
    for (int s = 0; s < cfg.n_cameras; ++s) out.push_back(feature_path(t, s));
  return out;
}

SceneDir open_scene(const std::string& dir) {
  SceneDir s;
  s.dir = dir;
  s.cfg = parse_scene_config(read_text(s.path("scene.json")));
  s.cameras = io::read_calibration(s.path("calibration.json"));
  if (static_cast<int>(s.cameras.size()) != s.cfg.n_cameras)
    throw ValidationError("calibration camera count does not match scene.json");
  for (const geom::CameraModel& cam : s.cameras)
    if (cam.image_w != s.cfg.image_w || cam.image_h != s.cfg.image_h)
      throw ValidationError("calibration image dims do not match scene.json");
  return s;
}

// ---- projection and fusion -----------------------------------------------

int fused_channels(const PipelineConfig& cfg, int n_cameras, int channels) {
  return cfg.fusion == fusion::FusionRule::kConcat ? n_cameras * channels : channels;
}

FrameFeatures project_frame(const std::vector<FeatureMap>& fms,
                            const std::vector<geom::CameraModel>& cams, const geom::BevGrid& grid,
                            const PipelineConfig& cfg) {
  if (fms.empty() || fms.size() != cams.size())
    throw ValidationError("need one feature map per camera");
  FrameFeatures out;
  const int n = static_cast<int>(cams.size());
  out.views.reserve(n);
  out.masks.reserve(n);
  std::vector<ConfidenceMap> confs;
  confs.reserve(n);
  for (int s = 0; s < n; ++s) {
    BevFeature f;
    Mask m;
    if (cfg.projection == Projection::kSpt) {
      auto pr = proj::spt_project(fms[s], cams[s], grid, cfg.stride, cfg.splat);
      f = std::move(pr.first);
      m = std::move(pr.second);
    } else {
      f = proj::bilinear_project(fms[s], cams[s], grid, cfg.stride);
      m = proj::make_mask(f);
    }
    ConfidenceMap c = ConfidenceMap::ones(grid.height, grid.width);
    if (cfg.gaussian_mask)
      c = fusion::combine_confidence(c, proj::confidence_map(m, cfg.kernel));
    if (cfg.depth_weight)
      c = fusion::combine_confidence(c, fusion::density_weights_from_depth(cams[s], grid));
    out.views.push_back(std::move(f));
    out.masks.push_back(std::move(m));
    confs.push_back(std::move(c));
  }
  out.union_mask = Mask::zeros(grid.height, grid.width);
  for (int s = 0; s < n; ++s)
    for (size_t i = 0; i < out.union_mask.v.size(); ++i)
      if (out.masks[s].v[i]) out.union_mask.v[i] = 1;
  switch (cfg.fusion) {
    case fusion::FusionRule::kWeighted:
      out.fused = fusion::weighted_aggregate(out.views, confs, cfg.normalize_weights).f;
      break;
    case fusion::FusionRule::kConcat:
      out.fused = fusion::concat_fuse(out.views).f;
      break;
    case fusion::FusionRule::kMean:
      out.fused = fusion::mean_fuse(out.views).f;
      break;
  }
  return out;
}

namespace {

std::vector<FeatureMap> load_frame(const SceneDir& scene, int t) {
  std::vector<FeatureMap> fms;
  fms.reserve(static_cast<size_t>(scene.cfg.n_cameras));
  for (int s = 0; s < scene.cfg.n_cameras; ++s) {
    FeatureMap fm = io::read_bevf(scene.feature_path(t, s));
    if (fm.c != scene.cfg.channels || fm.h != scene.cfg.image_h || fm.w != scene.cfg.image_w)
      throw ValidationError("feature file dims do not match scene.json: " +
                            scene.feature_path(t, s));
    fms.push_back(std::move(fm));
  }
  return fms;
}

// Cap the global L2 norm of one step's gradients. The focal objective
// produces occasional huge per-frame gradients (a handful of hard positive
// cells under a sum loss); unclipped they knock hidden filters into the
// always-negative ReLU region, where their gradient is zero forever and
// the model silently collapses onto its output bias.
void clip_grads(head::HeadParams* g, double cap) {
  if (cap <= 0.0) return;
  double sq = g->b2 * g->b2;
  for (const std::vector<double>* vs : {&g->w1, &g->b1, &g->w2})
    for (double v : *vs) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= cap) return;
  const double s = cap / norm;
  for (std::vector<double>* vs : {&g->w1, &g->b1, &g->w2})
    for (double& v : *vs) v *= s;
  g->b2 *= s;
}

std::vector<head::GtHeatmap> gt_heatmaps(const std::vector<metrics::TrackPoint>& pts,
                                         const geom::BevGrid& grid, int n_frames) {
  std::vector<head::GtHeatmap> maps;
  maps.reserve(static_cast<size_t>(n_frames));
  for (int t = 0; t < n_frames; ++t) maps.push_back(head::GtHeatmap::zeros(grid.height, grid.width));
  for (const metrics::TrackPoint& p : pts) {
    if (p.frame < 0 || p.frame >= n_frames)
      throw ValidationError("ground truth frame outside the scene range");
    const auto cell = geom::cell_of(grid, Eigen::Vector2d(p.x, p.y));
    if (!cell) throw ValidationError("ground truth point outside the grid");
    maps[static_cast<size_t>(p.frame)].at(cell->first, cell->second) = 1;
  }
  return maps;
}

}  // namespace

// ---- training ------------------------------------------------------------

TrainOutput train_scene(const SceneDir& scene, const PipelineConfig& cfg, int epochs) {
  cfg.validate();
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  const geom::BevGrid& grid = scene.cfg.grid;
  const int T = scene.cfg.n_frames;
  const int S = scene.cfg.n_cameras;
  const int C = scene.cfg.channels;
  const int h = grid.height;
  const int w = grid.width;

  // The features never change across epochs; project the whole scene once.
  std::vector<FrameFeatures> feats;
  feats.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t)
    feats.push_back(project_frame(load_frame(scene, t), scene.cameras, grid, cfg));

  const std::vector<metrics::TrackPoint> gt = io::read_gt_csv(scene.path("gt.csv"));
  const std::vector<head::GtHeatmap> maps = gt_heatmaps(gt, grid, T);

  const int fc = fused_channels(cfg, S, C);
  const auto fused_view = [&](int t) -> train::InputView {
    return t < 0 ? train::InputView{nullptr, fc, 0} : train::full_view(feats[t].fused);
  };
  const auto single_view = [&](int t, int s) -> train::InputView {
    const int off = cfg.fusion == fusion::FusionRule::kConcat ? s * C : 0;
    return t < 0 ? train::InputView{nullptr, fc, off}
                 : train::InputView{&feats[t].views[s], fc, off};
  };

  // Active sets are functions of the fixed features; precompute them too.
  std::vector<std::vector<uint8_t>> multi_active(static_cast<size_t>(T));
  std::vector<std::vector<std::vector<uint8_t>>> single_active(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    multi_active[t] = train::active_bitmap(fused_view(t), fused_view(t - 1), h, w);
    if (cfg.mc_loss) {
      single_active[t].resize(static_cast<size_t>(S));
      for (int s = 0; s < S; ++s)
        single_active[t][s] = train::active_bitmap(single_view(t, s), single_view(t - 1, s), h, w);
    }
  }

  TrainOutput out;
  out.params = head::HeadParams::seeded(2 * fc, cfg.head.hidden, cfg.seed);
  out.log.reserve(static_cast<size_t>(epochs));

  for (int e = 0; e < epochs; ++e) {
    double sum_single = 0.0, sum_multi = 0.0;
    std::vector<double> sum_cam(static_cast<size_t>(S), 0.0);
    for (int t = 0; t < T; ++t) {
      const Mask* mvalid = cfg.multi_valid == MultiValid::kUnion ? &feats[t].union_mask : nullptr;
      train::SparseLoss multi =
          train::head_focal_step(out.params, fused_view(t), fused_view(t - 1), h, w, maps[t],
                                 mvalid, cfg.loss, &multi_active[t]);
      head::HeadParams grads = std::move(multi.grads);
      double l_single = 0.0;
      if (cfg.mc_loss) {
        for (int s = 0; s < S; ++s) {
          train::SparseLoss single =
              train::head_focal_step(out.params, single_view(t, s), single_view(t - 1, s), h, w,
                                     maps[t], &feats[t].masks[s], cfg.loss, &single_active[t][s]);
          l_single += single.loss;
          sum_cam[static_cast<size_t>(s)] += single.loss;
          train::axpy(cfg.loss.beta, single.grads, &grads);
        }
      }
      const double l_det = losses::combined_loss(l_single, multi.loss, cfg.loss);
      if (!std::isfinite(l_det))
        throw NumericError(fmt("loss diverged at epoch %d, frame %d", e, t));
      sum_single += l_single;
      sum_multi += multi.loss;
      clip_grads(&grads, cfg.head.grad_clip);
      out.params = head::sgd_step(out.params, grads, cfg.head.lr);
    }
    losses::LossReport rep;
    rep.l_single = sum_single / T;
    rep.l_multi = sum_multi / T;
    rep.l_det = losses::combined_loss(rep.l_single, rep.l_multi, cfg.loss);
    if (cfg.mc_loss) {
      rep.per_camera.resize(static_cast<size_t>(S));
      for (int s = 0; s < S; ++s) rep.per_camera[static_cast<size_t>(s)] = sum_cam[s] / T;
    }
    out.log.push_back(std::move(rep));
  }
  return out;
}

// ---- inference -----------------------------------------------------------

RunOutput run_scene(const SceneDir& scene, const head::HeadParams& params,
                    const PipelineConfig& cfg) {
  cfg.validate();
  const geom::BevGrid& grid = scene.cfg.grid;
  const int fc = fused_channels(cfg, scene.cfg.n_cameras, scene.cfg.channels);
  if (params.in_c != 2 * fc)
    throw ValidationError("trained parameters do not match the configured channel width");
  if (params.hidden != cfg.head.hidden)
    throw ValidationError("trained parameters do not match the configured hidden width");

  RunOutput out;
  track::Tracker tracker(cfg.tracker);
  Tensor3f prev;
  for (int t = 0; t < scene.cfg.n_frames; ++t) {
    FrameFeatures ff = project_frame(load_frame(scene, t), scene.cameras, grid, cfg);
    const train::InputView cur = train::full_view(ff.fused);
    const train::InputView pre =
        t > 0 ? train::full_view(prev) : train::InputView{nullptr, fc, 0};
    head::ProbMap pm = train::sparse_forward(params, cur, pre, grid.height, grid.width);
    // The loss only ever constrained cells inside the validity domain;
    // probabilities elsewhere are artifacts of zero padding, so inference
    // reports zero there rather than decoding uncontrolled logits.
    if (cfg.multi_valid == MultiValid::kUnion)
      for (size_t i = 0; i < pm.p.size(); ++i)
        if (!ff.union_mask.v[i]) pm.p[i] = 0.0;
    std::vector<Detection> dets =
        head::decode_detections(pm, grid, cfg.head.threshold, cfg.head.nms_radius, t);
    for (auto& row : tracker.step(t, dets)) out.track_rows.push_back(std::move(row));
    out.detections.insert(out.detections.end(), dets.begin(), dets.end());
    out.probmaps.push_back(std::move(pm));
    prev = std::move(ff.fused);
  }
  std::sort(out.track_rows.begin(), out.track_rows.end(),
            [](const std::pair<int, track::TrackState>& a,
               const std::pair<int, track::TrackState>& b) {
              if (a.second.frame != b.second.frame) return a.second.frame < b.second.frame;
              return a.first < b.first;
            });
  return out;
}

// ---- manifests -----------------------------------------------------------

void write_manifest(const std::string& path, const RunManifest& m) {
  json j;
  j["schema_version"] = 1;
  j["tool"] = "scfusion";
  j["code_version"] = m.code_version;
  j["verb"] = m.verb;
  j["created_utc"] = m.created_utc;
  j["seed"] = m.seed;
  if (m.epochs >= 0) j["epochs"] = m.epochs;
  j["config"] = json::parse(m.config_json);
  j["args"] = m.args;
  json ins = json::array();
  for (const ManifestInput& in : m.inputs)
    ins.push_back({{"path", in.path}, {"fnv1a", in.fnv1a}});
  j["inputs"] = ins;
  j["outputs"] = m.outputs;
  j["out_dir"] = m.out_dir;
  write_text(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
  const char* W = "manifest";
  json j = parse_object(read_text(path), W);
  RunManifest m;
  m.verb = jreq_str(j, W, "verb");
  m.code_version = jstr(j, W, "code_version", "");
  m.created_utc = jstr(j, W, "created_utc", "");
  m.seed = ju64(j, W, "seed", 0);
  m.epochs = jint(j, W, "epochs", -1);
  if (!j.contains("config")) throw ValidationError("manifest: missing key \"config\"");
  m.config_json = j.at("config").dump();
  if (j.contains("args")) {
    const json& a = j.at("args");
    if (!a.is_object()) bad_type(W, "args", "an object");
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!it.value().is_string()) throw ValidationError("manifest: args values must be strings");
      m.args[it.key()] = it.value().get<std::string>();
    }
  }
  if (j.contains("inputs")) {
    const json& arr = j.at("inputs");
    if (!arr.is_array()) bad_type(W, "inputs", "an array");
    for (const json& in : arr)
      m.inputs.push_back({jreq_str(in, W, "path"), jreq_str(in, W, "fnv1a")});
  }
  if (j.contains("outputs")) {
    const json& arr = j.at("outputs");
    if (!arr.is_array()) bad_type(W, "outputs", "an array");
    for (const json& o : arr) {
      if (!o.is_string()) throw ValidationError("manifest: outputs must be strings");
      m.outputs.push_back(o.get<std::string>());
    }
  }
  m.out_dir = jstr(j, W, "out_dir", "");
  return m;
}

uint64_t hash_inputs(const std::vector<std::string>& paths) {
  uint64_t h = 14695981039346656037ull;
  for (const std::string& p : paths) {
    const uint64_t fh = io::fnv1a_file(p);
    for (int i = 0; i < 8; ++i) {
      h ^= (fh >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

RunManifest base_manifest(const char* verb, uint64_t seed, const std::string& config_json,
                          const std::string& out_dir) {
  RunManifest m;
  m.verb = verb;
  m.code_version = kVersion;
  m.created_utc = utc_now();
  m.seed = seed;
  m.config_json = config_json;
  m.out_dir = out_dir;
  return m;
}

void add_inputs(RunManifest& m, const std::vector<std::string>& paths) {
  for (const std::string& p : paths) m.inputs.push_back({p, io::hex64(io::fnv1a_file(p))});
}

std::string params_blob_path(const std::string& json_path) {
  json j = parse_object(read_text(json_path), "head params manifest");
  auto it = j.find("blob");
  if (it == j.end() || !it->is_string())
    throw IoError("head params manifest lacks a blob name: " + json_path);
  return (fs::path(json_path).parent_path() / it->get<std::string>()).string();
}

}  // namespace

// ---- commands ------------------------------------------------------------

void simulate_to_dir(const sim::SceneConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  make_dirs(out_dir);
  const fs::path out(out_dir);
  const sim::Scene scene = sim::gen_scene(cfg);

  RunManifest m = base_manifest("simulate", cfg.seed, scene_config_json(cfg), out_dir);
  write_text((out / "scene.json").string(), scene_config_json(cfg));
  io::write_calibration((out / "calibration.json").string(), scene.cameras);
  const sim::GroundTruth gt = sim::export_ground_truth(scene);
  io::write_gt_csv((out / "gt.csv").string(), gt.points);
  m.outputs = {"scene.json", "calibration.json", "gt.csv"};
  for (int t = 0; t < cfg.n_frames; ++t) {
    for (int s = 0; s < cfg.n_cameras; ++s) {
      const sim::RenderedView rv = sim::render_features(scene, t, s);
      io::write_bevf((out / feature_filename(t, s)).string(), rv.fm);
      m.outputs.push_back(feature_filename(t, s));
    }
  }
  write_manifest((out / "manifest.json").string(), m);
}

void cmd_simulate(const std::string& scene_config_path, const std::string& out_dir,
                  const CommonOpts& opts) {
  check_opts(opts);
  sim::SceneConfig cfg;
  if (!scene_config_path.empty()) cfg = parse_scene_config(read_text(scene_config_path));
  if (opts.seed) cfg.seed = *opts.seed;
  simulate_to_dir(cfg, out_dir);
  note(opts, "simulate: wrote scene to " + out_dir);
}

void train_to_dir(const std::string& scene_dir, const PipelineConfig& cfg, int epochs,
                  const std::string& out_dir) {
  const SceneDir scene = open_scene(scene_dir);
  const TrainOutput res = train_scene(scene, cfg, epochs);
  make_dirs(out_dir);
  const fs::path out(out_dir);
  io::write_head_params((out / "head_params.json").string(), (out / "head_params.bin").string(),
                        res.params, cfg.seed);
  std::string log;
  for (size_t e = 0; e < res.log.size(); ++e) {
    const losses::LossReport& rep = res.log[e];
    json line;
    line["epoch"] = e;
    line["l_single"] = rep.l_single;
    line["l_multi"] = rep.l_multi;
    line["l_det"] = rep.l_det;
    line["per_camera"] = rep.per_camera;
    log += line.dump() + "\n";
  }
  write_text((out / "training_log.jsonl").string(), log);

  RunManifest m = base_manifest("train", cfg.seed, pipeline_config_json(cfg), out_dir);
  m.epochs = epochs;
  m.args["scene_dir"] = scene_dir;
  add_inputs(m, scene.input_paths(true));
  m.outputs = {"head_params.bin", "head_params.json", "training_log.jsonl"};
  write_manifest((out / "manifest.json").string(), m);
}

void cmd_train(const std::string& scene_dir, const std::string& config_path,
               const std::string& out_dir, int epochs, const CommonOpts& opts) {
  check_opts(opts);
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = parse_pipeline_config(read_text(config_path));
  if (opts.seed) cfg.seed = *opts.seed;
  train_to_dir(scene_dir, cfg, epochs, out_dir);
  note(opts, fmt("train: %d epochs done, params in ", epochs) + out_dir);
}

void run_to_dir(const std::string& scene_dir, const std::string& params_json,
                const PipelineConfig& cfg, const std::string& out_dir) {
  const SceneDir scene = open_scene(scene_dir);
  const head::HeadParams params = io::read_head_params(params_json);
  const RunOutput res = run_scene(scene, params, cfg);
  make_dirs(out_dir);
  const fs::path out(out_dir);
  io::write_detections_csv((out / "detections.csv").string(), res.detections);
  io::write_tracks_csv((out / "tracks.csv").string(), res.track_rows);

  RunManifest m = base_manifest("run", cfg.seed, pipeline_config_json(cfg), out_dir);
  m.args["scene_dir"] = scene_dir;
  m.args["params"] = params_json;
  // Deliberately excludes the scene's ground truth: inference never sees it.
  std::vector<std::string> ins = scene.input_paths(false);
  ins.push_back(params_json);
  ins.push_back(params_blob_path(params_json));
  add_inputs(m, ins);
  m.outputs = {"detections.csv", "tracks.csv"};
  for (size_t t = 0; t < res.probmaps.size(); ++t) {
    const head::ProbMap& pm = res.probmaps[t];
    Tensor3f tens = Tensor3f::zeros(1, pm.h, pm.w);
    for (size_t i = 0; i < pm.p.size(); ++i) tens.v[i] = static_cast<float>(pm.p[i]);
    const std::string name = prob_filename(static_cast<int>(t));
    io::write_bevf((out / name).string(), tens);
    m.outputs.push_back(name);
  }
  write_manifest((out / "manifest.json").string(), m);
}

void cmd_run(const std::string& scene_dir, const std::string& params_json,
             const std::string& config_path, const std::string& out_dir, const CommonOpts& opts) {
  check_opts(opts);
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = parse_pipeline_config(read_text(config_path));
  if (opts.seed) cfg.seed = *opts.seed;
  run_to_dir(scene_dir, params_json, cfg, out_dir);
  note(opts, "run: tracks in " + out_dir);
}

void eval_to_dir(const std::string& gt_csv, const std::string& tracks_csv,
                 const metrics::EvalConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const std::vector<metrics::TrackPoint> gt = io::read_gt_csv(gt_csv);
  const std::vector<metrics::TrackPoint> pred = io::read_tracks_csv(tracks_csv);
  const metrics::MetricsReport rep = metrics::evaluate_tracks(gt, pred, cfg);
  make_dirs(out_dir);
  const fs::path out(out_dir);
  io::write_metrics_json((out / "metrics.json").string(), rep);

  RunManifest m = base_manifest("eval", 0, eval_config_json(cfg), out_dir);
  m.args["gt"] = gt_csv;
  m.args["tracks"] = tracks_csv;
  add_inputs(m, {gt_csv, tracks_csv});
  m.outputs = {"metrics.json"};
  write_manifest((out / "manifest.json").string(), m);
}

void cmd_eval(const std::string& gt_csv, const std::string& tracks_csv,
              const std::string& config_path, const std::string& out_dir, const CommonOpts& opts) {
  check_opts(opts);
  metrics::EvalConfig cfg;
  if (!config_path.empty()) cfg = parse_eval_config(read_text(config_path));
  eval_to_dir(gt_csv, tracks_csv, cfg, out_dir);
  note(opts, "eval: metrics in " + out_dir);
}

// ---- ablation ------------------------------------------------------------

std::vector<std::pair<std::string, PipelineConfig>> ablation_rows(const PipelineConfig& base) {
  const auto mk = [&](Projection p, fusion::FusionRule f, bool weights, bool mc) {
    PipelineConfig c = base;
    c.projection = p;
    c.fusion = f;
    c.gaussian_mask = weights;
    c.depth_weight = weights;
    c.mc_loss = mc;
    return c;
  };
  // The reference detector this table starts from fuses views by channel
  // concatenation, so the first two rows keep that rule; weight aggregation
  // then replaces it with the confidence-weighted sum.
  return {
      {"Baseline", mk(Projection::kBilinear, fusion::FusionRule::kConcat, false, false)},
      {"+ SPT", mk(Projection::kSpt, fusion::FusionRule::kConcat, false, false)},
      {"+ Weight Aggregation", mk(Projection::kSpt, fusion::FusionRule::kWeighted, true, false)},
      {"+ MC loss", mk(Projection::kSpt, fusion::FusionRule::kWeighted, true, true)},
  };
}

namespace {

const char* const kRowDirs[4] = {"0_baseline", "1_spt", "2_weight_aggregation", "3_mc_loss"};

std::string metric_cell(const std::optional<double>& v) {
  return v ? fmt("%.6f", *v) : std::string();
}

json metric_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void ablate_to_dir(const std::string& scene_dir, const PipelineConfig& cfg, int epochs,
                   const std::string& out_dir) {
  cfg.validate();
  const SceneDir scene = open_scene(scene_dir);
  const auto rows = ablation_rows(cfg);
  make_dirs(out_dir);
  const fs::path out(out_dir);

  std::string csv = "row,MODA,MODP,IDF1,MOTA,MOTP\n";
  json jrows = json::array();
  for (size_t i = 0; i < rows.size(); ++i) {
    const std::string& name = rows[i].first;
    const PipelineConfig& rcfg = rows[i].second;
    const fs::path rdir = out / kRowDirs[i];
    train_to_dir(scene_dir, rcfg, epochs, (rdir / "train").string());
    run_to_dir(scene_dir, (rdir / "train" / "head_params.json").string(), rcfg,
               (rdir / "run").string());
    eval_to_dir(scene.path("gt.csv"), (rdir / "run" / "tracks.csv").string(), rcfg.eval,
                (rdir / "eval").string());
    const metrics::MetricsReport rep =
        io::read_metrics_json((rdir / "eval" / "metrics.json").string());

    csv += name + "," + metric_cell(rep.moda) + "," + fmt("%.6f", rep.modp) + "," +
           metric_cell(rep.idf1) + "," + metric_cell(rep.mota) + "," + fmt("%.6f", rep.motp) +
           "\n";
    json row;
    row["name"] = name;
    row["dir"] = kRowDirs[i];
    row["inputs_fnv1a"] = io::hex64(hash_inputs(scene.input_paths(true)));
    row["config"] = json::parse(pipeline_config_json(rcfg));
    row["metrics"] = {{"moda", metric_json(rep.moda)}, {"modp", rep.modp},
                      {"idf1", metric_json(rep.idf1)}, {"mota", metric_json(rep.mota)},
                      {"motp", rep.motp}};
    jrows.push_back(std::move(row));
  }
  write_text((out / "ablation.csv").string(), csv);
  json table;
  table["schema_version"] = 1;
  table["rows"] = jrows;
  write_text((out / "ablation.json").string(), table.dump(2) + "\n");

  RunManifest m = base_manifest("ablate", cfg.seed, pipeline_config_json(cfg), out_dir);
  m.epochs = epochs;
  m.args["scene_dir"] = scene_dir;
  add_inputs(m, scene.input_paths(true));
  m.outputs = {"ablation.csv", "ablation.json"};
  write_manifest((out / "manifest.json").string(), m);
}

void cmd_ablate(const std::string& scene_dir, const std::string& config_path,
                const std::string& out_dir, int epochs, const CommonOpts& opts) {
  check_opts(opts);
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = parse_pipeline_config(read_text(config_path));
  if (opts.seed) cfg.seed = *opts.seed;
  ablate_to_dir(scene_dir, cfg, epochs, out_dir);
  note(opts, "ablate: table in " + out_dir);
}

// ---- dump ----------------------------------------------------------------

namespace {

geom::BevGrid bbox_grid(const std::vector<metrics::TrackPoint>& rows) {
  if (rows.empty()) return geom::BevGrid::make(0.0, 0.0, 0.25, 4, 4);
  double min_x = rows[0].x, max_x = rows[0].x, min_y = rows[0].y, max_y = rows[0].y;
  for (const metrics::TrackPoint& p : rows) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double cell = 0.25;
  const int w = std::max(1, static_cast<int>(std::ceil((max_x - min_x + 2.0) / cell)));
  const int h = std::max(1, static_cast<int>(std::ceil((max_y - min_y + 2.0) / cell)));
  return geom::BevGrid::make(min_x - 1.0, min_y - 1.0, cell, w, h);
}

std::string first_line(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void cmd_dump(const std::string& input_path, const std::string& out_path,
              const std::string& scene_json_path) {
  if (input_path.ends_with(".bevf")) {
    const Tensor3f t = io::read_bevf(input_path);
    std::vector<double> vals(static_cast<size_t>(t.h) * t.w, 0.0);
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        double acc = 0.0;
        for (int c = 0; c < t.c; ++c) acc += t.at(c, y, x);
        vals[static_cast<size_t>(y) * t.w + x] = acc / t.c;
      }
    }
    io::write_pgm_normalized(out_path, t.h, t.w, vals);
  } else if (input_path.ends_with(".csv")) {
    const std::string header = first_line(input_path);
    std::vector<metrics::TrackPoint> rows;
    if (header == "frame,track_id,x_world,y_world,score")
      rows = io::read_tracks_csv(input_path);
    else if (header == "frame,walker_id,x_world,y_world")
      rows = io::read_gt_csv(input_path);
    else
      throw ValidationError("dump expects a tracks or ground-truth CSV");
    const geom::BevGrid grid = scene_json_path.empty()
                                   ? bbox_grid(rows)
                                   : parse_scene_config(read_text(scene_json_path)).grid;
    io::write_trajectory_svg(out_path, rows, grid);
  } else {
    throw ValidationError("dump input must be a .bevf tensor or a .csv trajectory file");
  }

  RunManifest m = base_manifest("dump", 0, "{}", fs::path(out_path).parent_path().string());
  m.args["input"] = input_path;
  m.args["out"] = out_path;
  m.args["scene"] = scene_json_path;
  std::vector<std::string> ins{input_path};
  if (!scene_json_path.empty()) ins.push_back(scene_json_path);
  add_inputs(m, ins);
  m.outputs = {fs::path(out_path).filename().string()};
  write_manifest(out_path + ".manifest.json", m);
}

// ---- rerun ---------------------------------------------------------------

void cmd_rerun(const std::string& manifest_path, const std::string& out_dir) {
  const RunManifest m = read_manifest(manifest_path);
  const std::string out = out_dir.empty() ? m.out_dir : out_dir;
  const auto arg = [&](const char* k) -> const std::string& {
    auto it = m.args.find(k);
    if (it == m.args.end())
      throw ValidationError(std::string("manifest lacks argument \"") + k + "\"");
    return it->second;
  };
  const auto epochs = [&]() {
    if (m.epochs < 0) throw ValidationError("manifest lacks an epoch count");
    return m.epochs;
  };
  if (m.verb == "simulate") {
    simulate_to_dir(parse_scene_config(m.config_json), out);
  } else if (m.verb == "train") {
    train_to_dir(arg("scene_dir"), parse_pipeline_config(m.config_json), epochs(), out);
  } else if (m.verb == "run") {
    run_to_dir(arg("scene_dir"), arg("params"), parse_pipeline_config(m.config_json), out);
  } else if (m.verb == "eval") {
    eval_to_dir(arg("gt"), arg("tracks"), parse_eval_config(m.config_json), out);
  } else if (m.verb == "ablate") {
    ablate_to_dir(arg("scene_dir"), parse_pipeline_config(m.config_json), epochs(), out);
  } else if (m.verb == "dump") {
    cmd_dump(arg("input"), out_dir.empty() ? arg("out") : out_dir, arg("scene"));
  } else {
    throw ValidationError("unknown manifest verb: " + m.verb);
  }
}

}  // namespace scf::pipeline
