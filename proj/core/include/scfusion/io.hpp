#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scfusion/detection.hpp"
#include "scfusion/geometry.hpp"
#include "scfusion/head.hpp"
#include "scfusion/metrics.hpp"
#include "scfusion/tensor.hpp"
#include "scfusion/tracker.hpp"

namespace scf::io {

// Tensor container: magic "BEVF", three u32 little-endian dims C,H,W, then
// C*H*W f32 little-endian values channel-major. Masks and confidence maps
// travel in the same container with C=1.
void write_bevf(const std::string& path, const Tensor3f& t);
Tensor3f read_bevf(const std::string& path);

// {"cameras":[{"id":...,"K":[9 row-major],"R":[9 row-major],"t":[3],
//  "width":...,"height":...}]}; field names are part of the contract.
void write_calibration(const std::string& path, const std::vector<geom::CameraModel>& cams);
std::vector<geom::CameraModel> read_calibration(const std::string& path);

// Ground truth: header frame,walker_id,x_world,y_world.
void write_gt_csv(const std::string& path, const std::vector<metrics::TrackPoint>& rows);
std::vector<metrics::TrackPoint> read_gt_csv(const std::string& path);

// Tracks: header frame,track_id,x_world,y_world,score.
void write_tracks_csv(const std::string& path,
                      const std::vector<std::pair<int, track::TrackState>>& rows);
std::vector<metrics::TrackPoint> read_tracks_csv(const std::string& path);

// Detections: header frame,x_world,y_world,score.
void write_detections_csv(const std::string& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections_csv(const std::string& path);

// Parameter files: a JSON manifest (shapes, seed, blob name) next to a raw
// little-endian f64 blob holding w1, b1, w2, b2 in that order.
void write_head_params(const std::string& json_path, const std::string& bin_path,
                       const head::HeadParams& params, uint64_t seed);
head::HeadParams read_head_params(const std::string& json_path);

void write_metrics_json(const std::string& path, const metrics::MetricsReport& report);
metrics::MetricsReport read_metrics_json(const std::string& path);

// Binary PGM (P5), row-major, values linearly rescaled so the maximum maps
// to 255; non-positive maxima render black.
void write_pgm_normalized(const std::string& path, int h, int w, const std::vector<double>& values);

// One SVG polyline per track id, colored stably by id, world y pointing up.
void write_trajectory_svg(const std::string& path, const std::vector<metrics::TrackPoint>& rows,
                          const geom::BevGrid& grid);

// Content hash (FNV-1a over the raw bytes) for run manifests.
uint64_t fnv1a_file(const std::string& path);
std::string hex64(uint64_t value);

}  // namespace scf::io
