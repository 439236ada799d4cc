#include <doctest.h>

#include <vector>

#include "scfusion/errors.hpp"
#include "scfusion/tracker.hpp"

using namespace scf;
using track::Tracker;
using track::TrackerConfig;

namespace {

Detection det(int frame, double x, double y, double score = 0.9) {
  return Detection{frame, x, y, score};
}

}  // namespace

TEST_CASE("association matches nearest pairs inside the gate") {
  std::vector<track::Track> tracks(2);
  tracks[0].id = 1;
  tracks[0].states.push_back({0, 0.0, 0.0, 0.9});
  tracks[1].id = 2;
  tracks[1].states.push_back({0, 5.0, 0.0, 0.9});

  const std::vector<Detection> dets{det(1, 0.2, 0.0), det(1, 4.9, 0.1), det(1, 9.0, 9.0)};
  const track::AssociationResult res = track::associate(tracks, dets, 1.0);
  REQUIRE(res.matches.size() == 2);
  CHECK(res.matches[0] == std::pair<int, int>{0, 0});
  CHECK(res.matches[1] == std::pair<int, int>{1, 1});
  REQUIRE(res.unmatched_detections.size() == 1);
  CHECK(res.unmatched_detections[0] == 2);
  CHECK(res.unmatched_tracks.empty());
}

TEST_CASE("association picks the global optimum, not the greedy pairing") {
  // Greedy would give track 0 the detection at 0.4 and leave track 1 with
  // one at 1.3 (outside the gate). The optimal pairing matches both.
  std::vector<track::Track> tracks(2);
  tracks[0].id = 1;
  tracks[0].states.push_back({0, 0.0, 0.0, 0.9});
  tracks[1].id = 2;
  tracks[1].states.push_back({0, 1.0, 0.0, 0.9});
  const std::vector<Detection> dets{det(1, 0.4, 0.0), det(1, 0.9, 0.0)};
  const track::AssociationResult res = track::associate(tracks, dets, 1.0);
  REQUIRE(res.matches.size() == 2);
  CHECK(res.matches[0] == std::pair<int, int>{0, 0});
  CHECK(res.matches[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("confirmation is retroactive at min_hits consecutive hits") {
  Tracker tr(TrackerConfig{});  // min_hits = 2
  CHECK(tr.step(0, {det(0, 1.0, 1.0)}).empty());  // tentative
  const auto rows = tr.step(1, {det(1, 1.1, 1.0)});
  REQUIRE(rows.size() == 2);  // both buffered states released together
  CHECK(rows[0].first == rows[1].first);
  CHECK(rows[0].second.frame == 0);
  CHECK(rows[1].second.frame == 1);
  const auto next = tr.step(2, {det(2, 1.2, 1.0)});
  REQUIRE(next.size() == 1);
  CHECK(next[0].first == rows[0].first);
}

TEST_CASE("a miss resets the consecutive-hit count of a tentative track") {
  Tracker tr(TrackerConfig{});
  CHECK(tr.step(0, {det(0, 0.0, 0.0)}).empty());
  CHECK(tr.step(1, {}).empty());  // miss: hit streak back to zero
  CHECK(tr.step(2, {det(2, 0.1, 0.0)}).empty());
  const auto rows = tr.step(3, {det(3, 0.2, 0.0)});
  // Confirmed now; every matched state (frames 0, 2, 3) becomes final.
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].second.frame == 0);
  CHECK(rows[1].second.frame == 2);
  CHECK(rows[2].second.frame == 3);
}

TEST_CASE("confirmed tracks coast through misses up to max_age") {
  Tracker tr(TrackerConfig{});  // max_age = 3
  tr.step(0, {det(0, 0.0, 0.0)});
  tr.step(1, {det(1, 0.0, 0.0)});  // confirmed
  tr.step(2, {});
  tr.step(3, {});
  tr.step(4, {});  // three misses: still alive
  const auto rows = tr.step(5, {det(5, 0.3, 0.0)});
  REQUIRE(rows.size() == 1);  // same identity resumed, missed frames emit nothing
  CHECK(rows[0].first == 1);
  CHECK(rows[0].second.frame == 5);
}

TEST_CASE("terminated identities are never revived") {
  Tracker tr(TrackerConfig{});
  tr.step(0, {det(0, 0.0, 0.0)});
  tr.step(1, {det(1, 0.0, 0.0)});
  for (int f = 2; f <= 5; ++f) tr.step(f, {});  // misses 1..4 > max_age: terminated
  tr.step(6, {det(6, 0.0, 0.0)});
  const auto rows = tr.step(7, {det(7, 0.0, 0.0)});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].first == 2);  // fresh id at the same position
}

TEST_CASE("detections beyond the gate start new tracks") {
  Tracker tr(TrackerConfig{});
  tr.step(0, {det(0, 0.0, 0.0)});
  tr.step(1, {det(1, 0.0, 0.0)});
  // 1.05 m away with gate 1.0: not associated, a second (tentative) track.
  const auto rows = tr.step(2, {det(2, 1.05, 0.0)});
  CHECK(rows.empty());
  REQUIRE(tr.tracks().size() == 2);
  CHECK(tr.tracks()[1].id == 2);
  CHECK_FALSE(tr.tracks()[1].confirmed);
}

TEST_CASE("min_hits of one confirms immediately") {
  TrackerConfig cfg;
  cfg.min_hits = 1;
  Tracker tr(cfg);
  const auto rows = tr.step(0, {det(0, 2.0, 3.0)});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].second.x == 2.0);
}

TEST_CASE("crossing walkers keep their identities under optimal association") {
  Tracker tr(TrackerConfig{});
  // Two walkers approach, meet near x=0, and continue; per-frame optimal
  // matching never swaps them because each detection stays nearest its own
  // track.
  for (int f = 0; f <= 8; ++f) {
    const double xa = -2.0 + 0.5 * f;
    const double xb = 2.0 - 0.5 * f;
    tr.step(f, {det(f, xa, 0.4), det(f, xb, -0.4)});
  }
  REQUIRE(tr.tracks().size() == 2);
  const track::Track& a = tr.tracks()[0];
  CHECK(a.states.front().y == 0.4);
  CHECK(a.states.back().y == 0.4);
  CHECK(a.states.back().x == doctest::Approx(2.0));
}

TEST_CASE("tracker validation") {
  CHECK_THROWS_AS(Tracker(TrackerConfig{0.0, 3, 2}), ValidationError);
  CHECK_THROWS_AS(Tracker(TrackerConfig{1.0, -1, 2}), ValidationError);
  CHECK_THROWS_AS(Tracker(TrackerConfig{1.0, 3, 0}), ValidationError);
  Tracker tr(TrackerConfig{});
  tr.step(3, {});
  CHECK_THROWS_AS(tr.step(3, {}), ValidationError);
  CHECK_THROWS_AS(tr.step(2, {}), ValidationError);
  std::vector<track::Track> tracks(1);
  tracks[0].states.push_back({0, 0.0, 0.0, 0.9});
  CHECK_THROWS_AS(track::associate(tracks, {}, 0.0), ValidationError);
}
