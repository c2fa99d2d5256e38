// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coopcast/geometry.hpp"
#include "coopcast/rng.hpp"

namespace coopcast {

enum class AgentType { kCar, kTruck, kCyclist, kPedestrian, kBus, kVan, kMotorcyclist, kTricyclist };
enum class ViewKind { kEgo, kInfrastructure, kVehicle };
enum class TurnDir { kLeft, kRight, kStraight };
enum class RoadType { kIntersection, kNormal };

const char* to_string(AgentType t);
const char* to_string(ViewKind k);
const char* to_string(TurnDir t);
const char* to_string(RoadType r);
AgentType agent_type_from_string(const std::string& s);
ViewKind view_kind_from_string(const std::string& s);
TurnDir turn_from_string(const std::string& s);
RoadType road_type_from_string(const std::string& s);

struct BBox {
  double length = 0.0;  // m, > 0
  double width = 0.0;   // m, > 0
  Vec2 heading;         // unit
  bool operator==(const BBox&) const = default;
};

struct ObservedState {
  Vec2 p;            // world-frame position, m
  Vec2 r;            // unit heading (cos, sin)
  BBox bbox;
  double speed = 0;  // m/s
  bool operator==(const ObservedState&) const = default;

  Rect rect() const { return Rect{p, {bbox.length * 0.5, bbox.width * 0.5}, bbox.heading}; }
};

struct AgentTrack {
  int track_id = 0;  // unique within its view
  AgentType type = AgentType::kCar;
  std::vector<std::optional<ObservedState>> frames;  // length T
  bool operator==(const AgentTrack&) const = default;

  int observed_count() const;
  int first_observed() const;  // -1 if none
  int last_observed() const;   // -1 if none
  const ObservedState& state_at(int t) const { return *frames[t]; }
};

struct View {
  int view_id = 0;
  ViewKind kind = ViewKind::kEgo;
  std::vector<AgentTrack> tracks;
  bool operator==(const View&) const = default;

  const AgentTrack* find_track(int track_id) const;
};

struct LaneSegment {
  Vec2 start, end;  // start != end
  TurnDir turn = TurnDir::kStraight;
  RoadType road_type = RoadType::kNormal;
  bool operator==(const LaneSegment&) const = default;
};

struct TrackRef {
  int view_id = 0;
  int track_id = 0;
  auto operator<=>(const TrackRef&) const = default;
};

struct TruthRecord {
  int agent_id = 0;
  std::vector<Vec2> future;  // H ground-truth positions
  bool operator==(const TruthRecord&) const = default;
};

struct Scenario {
  std::vector<View> views;
  std::vector<LaneSegment> map;
  int T = 0;        // observed steps
  int H = 0;        // future steps
  double dt = 0.1;  // seconds
  TrackRef target;  // must live in the ego view
  std::optional<std::map<TrackRef, TruthRecord>> truth;
  bool operator==(const Scenario&) const = default;

  const View* find_view(int view_id) const;
  const AgentTrack* find_track(TrackRef ref) const;
  const View& ego_view() const;
  // Throws DataError on the first violated invariant.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Synthetic generation

struct OcclusionSector {
  double theta0 = 0.0;  // radians, measured at the view's sensor origin
  double theta1 = 0.0;  // occludes angles in [theta0, theta1] (mod 2pi)
};

struct GenConfig {
  int n_agents = 4;
  int n_views = 3;  // 1 ego + (n_views-1) cooperative views
  double arm_length = 60.0;   // intersection arm length, m
  double lane_spacing = 3.5;  // opposing-lane separation, m
  double sigma = 0.15;        // observation noise, m
  int occlusion_sectors = 1;  // random occluded sectors per view
  double detection_range = 70.0;
  double frag_prob = 0.15;  // chance of an artificial >=3 frame dropout per track
  std::uint64_t seed = 0;
  int t_obs = 40;
  int t_fut = 40;
  double dt = 0.1;
  double turn_prob = 0.4;   // fraction of agents on turn routes
  double accel_prob = 0.3;  // fraction of agents with non-zero acceleration
  // When non-empty, view i uses fixed_occlusion[i] instead of random sectors.
  std::vector<std::vector<OcclusionSector>> fixed_occlusion;

  void validate() const;
};

// Agents follow intersection lane routes (straight, quarter-circle turns,
// optional constant acceleration); each view observes a noisy, range-limited,
// occlusion-masked subset with per-view track id permutations. Occlusion gaps
// of >= 3 frames split a track into fragments with fresh ids. Ground truth
// identities and futures are always attached.
Scenario generate_scenario(const GenConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line.

std::string serialize_scenario(const Scenario& s);
Scenario deserialize_scenario(const std::string& line, std::size_t line_no = 0);

void write_scenarios(const std::vector<Scenario>& scenarios, const std::string& path);

// Streaming reader; holds one scenario at a time.
class ScenarioReader {
 public:
  explicit ScenarioReader(std::istream& in) : in_(&in) {}
  std::optional<Scenario> next();
  std::size_t line_no() const { return line_no_; }

 private:
  std::istream* in_;
  std::size_t line_no_ = 0;
};

std::vector<Scenario> read_scenarios(const std::string& path);

// ---------------------------------------------------------------------------

// Seed-deterministic disjoint covering partition; fraction sizes are assigned
// by largest remainder. A nonzero fraction that receives zero items raises
// DataError.
std::vector<std::vector<std::size_t>> split_dataset(std::size_t n,
                                                    const std::vector<double>& fractions,
                                                    std::uint64_t seed);

}  // namespace coopcast
