#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scfusion/fusion.hpp"
#include "scfusion/geometry.hpp"
#include "scfusion/head.hpp"
#include "scfusion/losses.hpp"
#include "scfusion/metrics.hpp"
#include "scfusion/projection.hpp"
#include "scfusion/simulator.hpp"
#include "scfusion/tensor.hpp"
#include "scfusion/tracker.hpp"

// End-to-end harness: configuration, scene directories, the train/run/eval
// compositions, and the command entry points behind the CLI verbs.
namespace scf::pipeline {

inline constexpr const char* kVersion = "scfusion 0.1.0";

enum class Projection { kBilinear, kSpt };
const char* projection_name(Projection p);
Projection projection_from_name(const std::string& name);

// Cells the fused-map loss covers: the union of the per-camera projection
// masks (default) or every grid cell.
enum class MultiValid { kUnion, kAll };

struct HeadConfig {
  int hidden = 16;
  double lr = 0.01;
  double threshold = 0.3;   // decode probability cutoff
  int nms_radius = 2;  // decode suppression window radius, cells
  // The focal objective sums over every valid cell, so a frame's gradient
  // can spike into the thousands while the logits are still settling
  // (wide fused inputs are the worst case); one oversized step pushes every
  // probability into the clamp band, where the gradient is exactly zero and
  // training freezes. Healthy step norms stay well under this cap, so it
  // only bites on those spikes.
  double grad_clip = 200.0;  // global L2 cap per step; 0 disables clipping

  void validate() const;
};

// Everything the pipeline needs to turn rendered views into tracks:
// projection backend, fusion rule with its confidence sources, loss and
// head hyperparameters, tracker gates, and the seed.
struct PipelineConfig {
  Projection projection = Projection::kSpt;
  fusion::FusionRule fusion = fusion::FusionRule::kWeighted;
  bool gaussian_mask = true;      // mask-smoothing confidence term
  bool depth_weight = true;       // camera-distance density term
  bool normalize_weights = false; // divide the weighted sum by total confidence
  proj::SplatRule splat = proj::SplatRule::kMean;
  int stride = 1;
  proj::KernelSpec kernel{};
  // Focal loss in the centernet form by default: the printed form's
  // (1-p)^gamma modulator also damps the negative term, which starves
  // confidently-wrong negatives of gradient and lets the background run
  // away to p=1 (b2 is shared by every cell). The p^gamma variant keeps
  // negatives anchored; flip the flag to study the printed form.
  losses::LossConfig loss{2.0, 4.0, 0.1, true};
  bool mc_loss = true;  // add the per-camera single-view losses
  MultiValid multi_valid = MultiValid::kUnion;
  HeadConfig head{};
  track::TrackerConfig tracker{};
  metrics::EvalConfig eval{};
  uint64_t seed = 7;

  void validate() const;
};

// Strict parsers: unknown keys and wrong types are errors, missing keys
// keep their defaults. The emitters produce the canonical snapshot text the
// parsers accept back unchanged.
PipelineConfig parse_pipeline_config(const std::string& json_text);
std::string pipeline_config_json(const PipelineConfig& cfg);

sim::SceneConfig parse_scene_config(const std::string& json_text);
std::string scene_config_json(const sim::SceneConfig& cfg);

metrics::EvalConfig parse_eval_config(const std::string& json_text);
std::string eval_config_json(const metrics::EvalConfig& cfg);

// On-disk scene layout written by `simulate`: scene.json (config snapshot),
// calibration.json, gt.csv, one feature file per (frame, camera).
std::string feature_filename(int frame, int camera);
std::string prob_filename(int frame);

struct SceneDir {
  std::string dir;
  sim::SceneConfig cfg;
  std::vector<geom::CameraModel> cameras;

  std::string path(const std::string& name) const;
  std::string feature_path(int frame, int camera) const;
  // Deterministic input census for manifests; the ground truth file is
  // listed only when a command is allowed to consume it.
  std::vector<std::string> input_paths(bool include_gt) const;
};

SceneDir open_scene(const std::string& dir);

// One frame's per-camera BEV projections, their masks, and the fused map.
struct FrameFeatures {
  std::vector<BevFeature> views;
  std::vector<Mask> masks;
  Mask union_mask;
  Tensor3f fused;
};

FrameFeatures project_frame(const std::vector<FeatureMap>& fms,
                            const std::vector<geom::CameraModel>& cams, const geom::BevGrid& grid,
                            const PipelineConfig& cfg);

// Channel width of the fused map: S*C under concat, C otherwise.
int fused_channels(const PipelineConfig& cfg, int n_cameras, int channels);

struct TrainOutput {
  head::HeadParams params;
  std::vector<losses::LossReport> log;  // one entry per epoch, per-frame means
};

// Projects the whole scene once (features are constant across epochs), then
// runs per-frame SGD on the combined detection loss in frame order.
TrainOutput train_scene(const SceneDir& scene, const PipelineConfig& cfg, int epochs);

struct RunOutput {
  std::vector<Detection> detections;
  std::vector<std::pair<int, track::TrackState>> track_rows;  // sorted by (frame, id)
  std::vector<head::ProbMap> probmaps;                        // one per frame
};

RunOutput run_scene(const SceneDir& scene, const head::HeadParams& params,
                    const PipelineConfig& cfg);

struct ManifestInput {
  std::string path;
  std::string fnv1a;  // content hash, 16 hex digits
};

// Provenance record for one command: the effective config snapshot plus
// hashed inputs, sufficient to re-execute the command and reproduce its
// primary outputs byte for byte. The manifest itself carries the wall-clock
// stamp, so it is not part of that comparison.
struct RunManifest {
  std::string verb;
  std::string code_version;
  std::string created_utc;
  uint64_t seed = 0;
  int epochs = -1;  // train and ablate only; omitted when negative
  std::string config_json;
  std::map<std::string, std::string> args;  // verb-specific input locations
  std::vector<ManifestInput> inputs;
  std::vector<std::string> outputs;  // relative to out_dir
  std::string out_dir;
};

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

// Order-sensitive combination of the files' content hashes, for checking
// that different runs consumed identical inputs.
uint64_t hash_inputs(const std::vector<std::string>& paths);

// Global CLI options. threads is accepted for interface stability but
// execution stays single-threaded; log_level gates the stderr notes.
struct CommonOpts {
  std::optional<uint64_t> seed;  // overrides the config's seed
  int threads = 1;
  std::string log_level = "info";
};

// The four ablation rows derived from a base config, in report order.
std::vector<std::pair<std::string, PipelineConfig>> ablation_rows(const PipelineConfig& base);

// Command bodies on parsed configs; `rerun` re-dispatches onto these.
void simulate_to_dir(const sim::SceneConfig& cfg, const std::string& out_dir);
void train_to_dir(const std::string& scene_dir, const PipelineConfig& cfg, int epochs,
                  const std::string& out_dir);
void run_to_dir(const std::string& scene_dir, const std::string& params_json,
                const PipelineConfig& cfg, const std::string& out_dir);
void eval_to_dir(const std::string& gt_csv, const std::string& tracks_csv,
                 const metrics::EvalConfig& cfg, const std::string& out_dir);
void ablate_to_dir(const std::string& scene_dir, const PipelineConfig& cfg, int epochs,
                   const std::string& out_dir);

// CLI verbs: read the config file (defaults when empty), apply overrides,
// delegate, and leave a manifest in the output directory.
void cmd_simulate(const std::string& scene_config_path, const std::string& out_dir,
                  const CommonOpts& opts);
void cmd_train(const std::string& scene_dir, const std::string& config_path,
               const std::string& out_dir, int epochs, const CommonOpts& opts);
void cmd_run(const std::string& scene_dir, const std::string& params_json,
             const std::string& config_path, const std::string& out_dir, const CommonOpts& opts);
void cmd_eval(const std::string& gt_csv, const std::string& tracks_csv,
              const std::string& config_path, const std::string& out_dir, const CommonOpts& opts);
void cmd_ablate(const std::string& scene_dir, const std::string& config_path,
                const std::string& out_dir, int epochs, const CommonOpts& opts);
void cmd_dump(const std::string& input_path, const std::string& out_path,
              const std::string& scene_json_path);
void cmd_rerun(const std::string& manifest_path, const std::string& out_dir);

}  // namespace scf::pipeline
