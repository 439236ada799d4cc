#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace scf::metrics {

struct EvalConfig {
  double match_radius = 0.5;  // meters on the ground plane

  void validate() const;
};

// One annotated or predicted object position; `id` is the trajectory label.
struct TrackPoint {
  int frame = 0;
  int id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct FrameMatch {
  std::vector<std::pair<int, int>> pairs;  // (gt index, det index)
  std::vector<double> dist;                // per matched pair
  std::vector<int> unmatched_gt;
  std::vector<int> unmatched_det;
};

// Minimum-total-distance one-to-one matching; pairs farther than radius
// stay unmatched.
FrameMatch match_frame(const std::vector<Point2>& gt, const std::vector<Point2>& det,
                       double radius);

struct DetectionScores {
  std::optional<double> moda;  // absent when the sequence has no ground truth
  double modp = 0.0;
  double precision = 1.0;
  double recall = 1.0;
  long tp = 0, fp = 0, fn = 0, gt_total = 0;
};

// MODA = 1 - (FP+FN)/GT_total; MODP = mean over matches of (1 - d/radius).
DetectionScores detection_metrics(const std::vector<FrameMatch>& frames, double radius);

struct ClearScores {
  std::optional<double> mota;  // absent when the sequence has no ground truth
  double motp = 0.0;
  int id_switches = 0;
  long tp = 0, fp = 0, fn = 0, gt_total = 0;
};

// CLEAR protocol with sticky gt-to-hypothesis correspondence: surviving
// pairs within radius persist; the rest re-match by minimal distance, and
// a change in a ground truth's assigned hypothesis counts one id switch.
ClearScores clear_mot(const std::vector<TrackPoint>& gt, const std::vector<TrackPoint>& pred,
                      double radius);

struct IdScores {
  std::optional<double> idf1;  // absent when the sequence has no ground truth
  double mt = 0.0;             // fraction of gt trajectories covered >= 80%
  double ml = 0.0;             // fraction covered <= 20%
  long idtp = 0, idfp = 0, idfn = 0;
};

// IDF1 from the optimal trajectory-level bipartite assignment maximizing
// identity true positives (frame-wise hits within radius).
IdScores id_metrics(const std::vector<TrackPoint>& gt, const std::vector<TrackPoint>& pred,
                    double radius);

struct MetricsReport {
  std::optional<double> moda, mota, idf1;
  double modp = 0.0, motp = 0.0;
  double precision = 1.0, recall = 1.0;
  double mt = 0.0, ml = 0.0;
  long tp = 0, fp = 0, fn = 0, gt_total = 0;
  int id_switches = 0;
};

MetricsReport evaluate_tracks(const std::vector<TrackPoint>& gt,
                              const std::vector<TrackPoint>& pred, const EvalConfig& cfg);

}  // namespace scf::metrics
