#include "scfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "scfusion/assignment.hpp"
#include "scfusion/errors.hpp"

namespace scf::metrics {

void EvalConfig::validate() const {
  if (!(match_radius > 0.0)) throw ValidationError("match radius must be positive");
}

FrameMatch match_frame(const std::vector<Point2>& gt, const std::vector<Point2>& det,
                       double radius) {
  if (!(radius > 0.0)) throw ValidationError("match radius must be positive");
  FrameMatch res;
  const int ng = static_cast<int>(gt.size());
  const int nd = static_cast<int>(det.size());
  if (ng > 0 && nd > 0) {
    std::vector<double> cost(static_cast<size_t>(ng) * nd);
    for (int g = 0; g < ng; ++g)
      for (int d = 0; d < nd; ++d) {
        const double dist = std::hypot(gt[g].x - det[d].x, gt[g].y - det[d].y);
        cost[g * nd + d] = dist <= radius ? dist : assign::kForbidden;
      }
    const std::vector<int> match = assign::solve(cost, ng, nd);
    std::vector<char> det_taken(nd, 0);
    for (int g = 0; g < ng; ++g) {
      if (match[g] >= 0) {
        res.pairs.emplace_back(g, match[g]);
        res.dist.push_back(std::hypot(gt[g].x - det[match[g]].x, gt[g].y - det[match[g]].y));
        det_taken[match[g]] = 1;
      } else {
        res.unmatched_gt.push_back(g);
      }
    }
    for (int d = 0; d < nd; ++d)
      if (!det_taken[d]) res.unmatched_det.push_back(d);
  } else {
    for (int g = 0; g < ng; ++g) res.unmatched_gt.push_back(g);
    for (int d = 0; d < nd; ++d) res.unmatched_det.push_back(d);
  }
  return res;
}

DetectionScores detection_metrics(const std::vector<FrameMatch>& frames, double radius) {
  if (frames.empty()) throw ValidationError("detection metrics need at least one frame");
  if (!(radius > 0.0)) throw ValidationError("match radius must be positive");
  DetectionScores s;
  double overlap = 0.0;
  for (const FrameMatch& fm : frames) {
    s.tp += static_cast<long>(fm.pairs.size());
    s.fp += static_cast<long>(fm.unmatched_det.size());
    s.fn += static_cast<long>(fm.unmatched_gt.size());
    for (double d : fm.dist) overlap += 1.0 - d / radius;
  }
  s.gt_total = s.tp + s.fn;
  if (s.tp > 0) s.modp = overlap / static_cast<double>(s.tp);
  if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
  if (s.gt_total > 0) {
    s.recall = static_cast<double>(s.tp) / static_cast<double>(s.gt_total);
    s.moda = 1.0 - static_cast<double>(s.fp + s.fn) / static_cast<double>(s.gt_total);
  }
  return s;
}

namespace {

struct FrameEntry {
  int id;
  Point2 pt;
};

// frame -> entries in input order; ids must be unique within a frame.
std::map<int, std::vector<FrameEntry>> by_frame(const std::vector<TrackPoint>& pts,
                                                const char* what) {
  std::map<int, std::vector<FrameEntry>> out;
  for (const TrackPoint& p : pts) out[p.frame].push_back(FrameEntry{p.id, {p.x, p.y}});
  for (auto& [frame, entries] : out) {
    std::set<int> ids;
    for (const FrameEntry& e : entries)
      if (!ids.insert(e.id).second)
        throw ValidationError(std::string(what) + " has a duplicate id within one frame");
    std::sort(entries.begin(), entries.end(),
              [](const FrameEntry& a, const FrameEntry& b) { return a.id < b.id; });
  }
  return out;
}

}  // namespace

ClearScores clear_mot(const std::vector<TrackPoint>& gt, const std::vector<TrackPoint>& pred,
                      double radius) {
  if (!(radius > 0.0)) throw ValidationError("match radius must be positive");
  const auto gt_frames = by_frame(gt, "ground truth");
  const auto pred_frames = by_frame(pred, "prediction");
  std::set<int> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : pred_frames) frames.insert(f);

  ClearScores s;
  double overlap = 0.0;
  std::map<int, int> last_match;  // gt id -> hypothesis id, persists across gaps

  for (int frame : frames) {
    static const std::vector<FrameEntry> kNone;
    const auto git = gt_frames.find(frame);
    const auto pit = pred_frames.find(frame);
    const std::vector<FrameEntry>& g = git == gt_frames.end() ? kNone : git->second;
    const std::vector<FrameEntry>& h = pit == pred_frames.end() ? kNone : pit->second;

    std::vector<char> g_used(g.size(), 0), h_used(h.size(), 0);
    // Keep surviving correspondences first (in gt id order), so an optimal
    // re-match cannot steal an identity that is still valid.
    for (size_t gi = 0; gi < g.size(); ++gi) {
      const auto lm = last_match.find(g[gi].id);
      if (lm == last_match.end()) continue;
      for (size_t hi = 0; hi < h.size(); ++hi) {
        if (h_used[hi] || h[hi].id != lm->second) continue;
        const double d = std::hypot(g[gi].pt.x - h[hi].pt.x, g[gi].pt.y - h[hi].pt.y);
        if (d <= radius) {
          g_used[gi] = 1;
          h_used[hi] = 1;
          ++s.tp;
          overlap += 1.0 - d / radius;
        }
        break;
      }
    }

    // Remaining points: minimum-distance matching, gated at radius.
    std::vector<int> g_rest, h_rest;
    std::vector<Point2> g_pts, h_pts;
    for (size_t gi = 0; gi < g.size(); ++gi)
      if (!g_used[gi]) {
        g_rest.push_back(static_cast<int>(gi));
        g_pts.push_back(g[gi].pt);
      }
    for (size_t hi = 0; hi < h.size(); ++hi)
      if (!h_used[hi]) {
        h_rest.push_back(static_cast<int>(hi));
        h_pts.push_back(h[hi].pt);
      }
    const FrameMatch fm = match_frame(g_pts, h_pts, radius);
    for (size_t k = 0; k < fm.pairs.size(); ++k) {
      const int gid = g[g_rest[fm.pairs[k].first]].id;
      const int hid = h[h_rest[fm.pairs[k].second]].id;
      const auto lm = last_match.find(gid);
      if (lm != last_match.end() && lm->second != hid) ++s.id_switches;
      last_match[gid] = hid;
      ++s.tp;
      overlap += 1.0 - fm.dist[k] / radius;
    }
    s.fn += static_cast<long>(fm.unmatched_gt.size());
    s.fp += static_cast<long>(fm.unmatched_det.size());
  }

  s.gt_total = s.tp + s.fn;
  if (s.tp > 0) s.motp = overlap / static_cast<double>(s.tp);
  if (s.gt_total > 0)
    s.mota = 1.0 - static_cast<double>(s.fp + s.fn + s.id_switches) / static_cast<double>(s.gt_total);
  return s;
}

IdScores id_metrics(const std::vector<TrackPoint>& gt, const std::vector<TrackPoint>& pred,
                    double radius) {
  if (!(radius > 0.0)) throw ValidationError("match radius must be positive");
  const auto gt_frames = by_frame(gt, "ground truth");
  const auto pred_frames = by_frame(pred, "prediction");

  // Trajectory views: id -> frame -> point.
  std::map<int, std::map<int, Point2>> gt_traj, pred_traj;
  for (const TrackPoint& p : gt) gt_traj[p.id][p.frame] = {p.x, p.y};
  for (const TrackPoint& p : pred) pred_traj[p.id][p.frame] = {p.x, p.y};

  IdScores s;
  const long gt_points = static_cast<long>(gt.size());
  const long pred_points = static_cast<long>(pred.size());

  if (!gt_traj.empty() && !pred_traj.empty()) {
    std::vector<const std::map<int, Point2>*> gts, preds;
    for (const auto& [id, t] : gt_traj) gts.push_back(&t);
    for (const auto& [id, t] : pred_traj) preds.push_back(&t);
    const int ng = static_cast<int>(gts.size());
    const int np = static_cast<int>(preds.size());
    std::vector<long> hits(static_cast<size_t>(ng) * np, 0);
    std::vector<double> cost(static_cast<size_t>(ng) * np, 0.0);
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < np; ++j) {
        long n = 0;
        for (const auto& [frame, gpt] : *gts[i]) {
          const auto it = preds[j]->find(frame);
          if (it == preds[j]->end()) continue;
          if (std::hypot(gpt.x - it->second.x, gpt.y - it->second.y) <= radius) ++n;
        }
        hits[i * np + j] = n;
        cost[i * np + j] = -static_cast<double>(n);
      }
    const std::vector<int> match = assign::solve(cost, ng, np);
    for (int i = 0; i < ng; ++i)
      if (match[i] >= 0) s.idtp += hits[i * np + match[i]];
  }
  s.idfn = gt_points - s.idtp;
  s.idfp = pred_points - s.idtp;
  if (gt_points > 0)
    s.idf1 = 2.0 * static_cast<double>(s.idtp) / static_cast<double>(gt_points + pred_points);

  // Coverage for MT/ML comes from per-frame minimum-distance matching.
  std::map<int, long> covered, length;
  for (const auto& [id, t] : gt_traj) {
    covered[id] = 0;
    length[id] = static_cast<long>(t.size());
  }
  for (const auto& [frame, g] : gt_frames) {
    const auto pit = pred_frames.find(frame);
    if (pit == pred_frames.end()) continue;
    std::vector<Point2> g_pts, h_pts;
    for (const FrameEntry& e : g) g_pts.push_back(e.pt);
    for (const FrameEntry& e : pit->second) h_pts.push_back(e.pt);
    const FrameMatch fm = match_frame(g_pts, h_pts, radius);
    for (const auto& [gi, hi] : fm.pairs) ++covered[g[gi].id];
  }
  if (!length.empty()) {
    long mt = 0, ml = 0;
    for (const auto& [id, len] : length) {
      const double c = static_cast<double>(covered[id]) / static_cast<double>(len);
      if (c >= 0.8) ++mt;
      if (c <= 0.2) ++ml;
    }
    s.mt = static_cast<double>(mt) / static_cast<double>(length.size());
    s.ml = static_cast<double>(ml) / static_cast<double>(length.size());
  }
  return s;
}

MetricsReport evaluate_tracks(const std::vector<TrackPoint>& gt,
                              const std::vector<TrackPoint>& pred, const EvalConfig& cfg) {
  cfg.validate();
  const auto gt_frames = by_frame(gt, "ground truth");
  const auto pred_frames = by_frame(pred, "prediction");
  std::set<int> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : pred_frames) frames.insert(f);

  MetricsReport r;
  if (!frames.empty()) {
    std::vector<FrameMatch> matches;
    for (int frame : frames) {
      static const std::vector<FrameEntry> kNone;
      const auto git = gt_frames.find(frame);
      const auto pit = pred_frames.find(frame);
      const std::vector<FrameEntry>& g = git == gt_frames.end() ? kNone : git->second;
      const std::vector<FrameEntry>& h = pit == pred_frames.end() ? kNone : pit->second;
      std::vector<Point2> g_pts, h_pts;
      for (const FrameEntry& e : g) g_pts.push_back(e.pt);
      for (const FrameEntry& e : h) h_pts.push_back(e.pt);
      matches.push_back(match_frame(g_pts, h_pts, cfg.match_radius));
    }
    const DetectionScores det = detection_metrics(matches, cfg.match_radius);
    r.moda = det.moda;
    r.modp = det.modp;
    r.precision = det.precision;
    r.recall = det.recall;
    r.tp = det.tp;
    r.fp = det.fp;
    r.fn = det.fn;
    r.gt_total = det.gt_total;
  }
  const ClearScores clear = clear_mot(gt, pred, cfg.match_radius);
  r.mota = clear.mota;
  r.motp = clear.motp;
  r.id_switches = clear.id_switches;
  const IdScores ids = id_metrics(gt, pred, cfg.match_radius);
  r.idf1 = ids.idf1;
  r.mt = ids.mt;
  r.ml = ids.ml;
  return r;
}

}  // namespace scf::metrics
