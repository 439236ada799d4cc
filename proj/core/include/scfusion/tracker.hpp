#pragma once

#include <utility>
#include <vector>

#include "scfusion/detection.hpp"

namespace scf::track {

struct TrackerConfig {
  double gate = 1.0;  // meters; association beyond this is forbidden
  int max_age = 3;    // a track survives up to this many consecutive misses
  int min_hits = 2;   // consecutive hits before a track is confirmed

  void validate() const;
};

struct TrackState {
  int frame = 0;
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

struct Track {
  int id = 0;
  std::vector<TrackState> states;  // matched frames only, strictly increasing
  int misses = 0;                  // consecutive unmatched frames
  int hits = 0;                    // consecutive matched frames
  bool confirmed = false;
  bool terminated = false;

  const TrackState& last() const { return states.back(); }
};

struct AssociationResult {
  std::vector<std::pair<int, int>> matches;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

// Optimal one-to-one nearest-position assignment between the tracks' last
// states and the detections; pairs farther than gate stay unmatched.
// Tracks are expected in ascending id order, which the solver's row order
// turns into the deterministic tie-break.
AssociationResult associate(const std::vector<Track>& tracks,
                            const std::vector<Detection>& detections, double gate);

// Frame-sequential tracker with a constant-position motion model. Tracks
// are tentative until min_hits consecutive hits (a miss resets the count);
// on confirmation the buffered states are released retroactively, and each
// later matched frame emits one state. Tracks terminate once their
// consecutive misses exceed max_age; terminated ids are never revived.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg);

  // Feeds one frame of detections; frames must strictly increase. Returns
  // the (track id, state) rows that became final this frame.
  std::vector<std::pair<int, TrackState>> step(int frame, const std::vector<Detection>& detections);

  const std::vector<Track>& tracks() const { return tracks_; }

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  int last_frame_ = -1;
};

}  // namespace scf::track
