#include "scfusion/tracker.hpp"

#include <cmath>

#include "scfusion/assignment.hpp"
#include "scfusion/errors.hpp"

namespace scf::track {

void TrackerConfig::validate() const {
  if (!(gate > 0.0)) throw ValidationError("tracker gate must be positive");
  if (max_age < 0) throw ValidationError("tracker max_age must be non-negative");
  if (min_hits < 1) throw ValidationError("tracker min_hits must be >= 1");
}

AssociationResult associate(const std::vector<Track>& tracks,
                            const std::vector<Detection>& detections, double gate) {
  if (!(gate > 0.0)) throw ValidationError("association gate must be positive");
  AssociationResult res;
  const int nt = static_cast<int>(tracks.size());
  const int nd = static_cast<int>(detections.size());
  if (nt == 0 || nd == 0) {
    for (int t = 0; t < nt; ++t) res.unmatched_tracks.push_back(t);
    for (int d = 0; d < nd; ++d) res.unmatched_detections.push_back(d);
    return res;
  }

  std::vector<double> cost(static_cast<size_t>(nt) * nd);
  for (int t = 0; t < nt; ++t) {
    const TrackState& s = tracks[t].last();
    for (int d = 0; d < nd; ++d) {
      const double dist = std::hypot(s.x - detections[d].x, s.y - detections[d].y);
      cost[t * nd + d] = dist <= gate ? dist : assign::kForbidden;
    }
  }
  const std::vector<int> match = assign::solve(cost, nt, nd);

  std::vector<char> det_taken(nd, 0);
  for (int t = 0; t < nt; ++t) {
    if (match[t] >= 0) {
      res.matches.emplace_back(t, match[t]);
      det_taken[match[t]] = 1;
    } else {
      res.unmatched_tracks.push_back(t);
    }
  }
  for (int d = 0; d < nd; ++d)
    if (!det_taken[d]) res.unmatched_detections.push_back(d);
  return res;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<std::pair<int, TrackState>> Tracker::step(int frame,
                                                      const std::vector<Detection>& detections) {
  if (frame <= last_frame_) throw ValidationError("tracker frames must strictly increase");
  last_frame_ = frame;

  // Build the active view; indices into tracks_ so results map back.
  std::vector<int> active;
  std::vector<Track> active_tracks;
  for (size_t i = 0; i < tracks_.size(); ++i) {
    if (!tracks_[i].terminated) {
      active.push_back(static_cast<int>(i));
      active_tracks.push_back(tracks_[i]);
    }
  }

  const AssociationResult assoc = associate(active_tracks, detections, cfg_.gate);
  std::vector<std::pair<int, TrackState>> emitted;

  for (const auto& [ti, di] : assoc.matches) {
    Track& tr = tracks_[active[ti]];
    const Detection& det = detections[di];
    tr.states.push_back(TrackState{frame, det.x, det.y, det.score});
    tr.misses = 0;
    ++tr.hits;
    if (!tr.confirmed && tr.hits >= cfg_.min_hits) {
      tr.confirmed = true;
      for (const TrackState& s : tr.states) emitted.emplace_back(tr.id, s);
    } else if (tr.confirmed) {
      emitted.emplace_back(tr.id, tr.states.back());
    }
  }

  for (int ti : assoc.unmatched_tracks) {
    Track& tr = tracks_[active[ti]];
    ++tr.misses;
    tr.hits = 0;
    if (tr.misses > cfg_.max_age) tr.terminated = true;
  }

  for (int di : assoc.unmatched_detections) {
    const Detection& det = detections[di];
    Track tr;
    tr.id = next_id_++;
    tr.states.push_back(TrackState{frame, det.x, det.y, det.score});
    tr.hits = 1;
    if (tr.hits >= cfg_.min_hits) {
      tr.confirmed = true;
      emitted.emplace_back(tr.id, tr.states.back());
    }
    tracks_.push_back(std::move(tr));
  }

  return emitted;
}

}  // namespace scf::track
