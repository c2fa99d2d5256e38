// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "coopcast/errors.hpp"
#include "json.hpp"

namespace coopcast {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// enum names

const char* to_string(AgentType t) {
  switch (t) {
    case AgentType::kCar: return "car";
    case AgentType::kTruck: return "truck";
    case AgentType::kCyclist: return "cyclist";
    case AgentType::kPedestrian: return "pedestrian";
    case AgentType::kBus: return "bus";
    case AgentType::kVan: return "van";
    case AgentType::kMotorcyclist: return "motorcyclist";
    case AgentType::kTricyclist: return "tricyclist";
  }
  return "car";
}

const char* to_string(ViewKind k) {
  switch (k) {
    case ViewKind::kEgo: return "ego";
    case ViewKind::kInfrastructure: return "infrastructure";
    case ViewKind::kVehicle: return "vehicle";
  }
  return "ego";
}

const char* to_string(TurnDir t) {
  switch (t) {
    case TurnDir::kLeft: return "left";
    case TurnDir::kRight: return "right";
    case TurnDir::kStraight: return "straight";
  }
  return "straight";
}

const char* to_string(RoadType r) {
  return r == RoadType::kIntersection ? "intersection" : "normal";
}

namespace {

template <typename E>
E enum_from_string(const std::string& s, const std::vector<std::pair<const char*, E>>& table,
                   const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw DataError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

AgentType agent_type_from_string(const std::string& s) {
  return enum_from_string<AgentType>(
      s,
      {{"car", AgentType::kCar},
       {"truck", AgentType::kTruck},
       {"cyclist", AgentType::kCyclist},
       {"pedestrian", AgentType::kPedestrian},
       {"bus", AgentType::kBus},
       {"van", AgentType::kVan},
       {"motorcyclist", AgentType::kMotorcyclist},
       {"tricyclist", AgentType::kTricyclist}},
      "agent_type");
}

ViewKind view_kind_from_string(const std::string& s) {
  return enum_from_string<ViewKind>(s,
                                    {{"ego", ViewKind::kEgo},
                                     {"infrastructure", ViewKind::kInfrastructure},
                                     {"vehicle", ViewKind::kVehicle}},
                                    "view kind");
}

TurnDir turn_from_string(const std::string& s) {
  return enum_from_string<TurnDir>(
      s, {{"left", TurnDir::kLeft}, {"right", TurnDir::kRight}, {"straight", TurnDir::kStraight}},
      "turn");
}

RoadType road_type_from_string(const std::string& s) {
  return enum_from_string<RoadType>(
      s, {{"intersection", RoadType::kIntersection}, {"normal", RoadType::kNormal}}, "road_type");
}

// ---------------------------------------------------------------------------
// track / view / scenario helpers

int AgentTrack::observed_count() const {
  int n = 0;
  for (const auto& f : frames)
    if (f) ++n;
  return n;
}

int AgentTrack::first_observed() const {
  for (std::size_t t = 0; t < frames.size(); ++t)
    if (frames[t]) return static_cast<int>(t);
  return -1;
}

int AgentTrack::last_observed() const {
  for (std::size_t t = frames.size(); t > 0; --t)
    if (frames[t - 1]) return static_cast<int>(t - 1);
  return -1;
}

const AgentTrack* View::find_track(int track_id) const {
  for (const auto& tr : tracks)
    if (tr.track_id == track_id) return &tr;
  return nullptr;
}

const View* Scenario::find_view(int view_id) const {
  for (const auto& v : views)
    if (v.view_id == view_id) return &v;
  return nullptr;
}

const AgentTrack* Scenario::find_track(TrackRef ref) const {
  const View* v = find_view(ref.view_id);
  return v ? v->find_track(ref.track_id) : nullptr;
}

const View& Scenario::ego_view() const {
  for (const auto& v : views)
    if (v.kind == ViewKind::kEgo) return v;
  throw DataError("scenario: no ego view");
}

void Scenario::validate() const {
  if (T < 2 || H < 2) throw DataError("scenario: T and H must be >= 2");
  if (dt <= 0.0) throw DataError("scenario: dt must be positive");
  int ego_count = 0;
  for (const auto& v : views) ego_count += v.kind == ViewKind::kEgo ? 1 : 0;
  if (ego_count != 1)
    throw DataError("scenario: expected exactly one ego view, found " + std::to_string(ego_count));
  for (const auto& v : views) {
    std::vector<int> ids;
    for (const auto& tr : v.tracks) {
      ids.push_back(tr.track_id);
      if (static_cast<int>(tr.frames.size()) != T)
        throw DataError("scenario: track frame array length != T");
      if (tr.observed_count() < 1)
        throw DataError("scenario: track with zero observed frames in view " +
                        std::to_string(v.view_id));
      for (const auto& f : tr.frames) {
        if (!f) continue;
        if (std::fabs(f->r.norm() - 1.0) > 1e-9)
          throw DataError("scenario: heading |r| != 1 in view " + std::to_string(v.view_id) +
                          " track " + std::to_string(tr.track_id));
        if (std::fabs(f->bbox.heading.norm() - 1.0) > 1e-9)
          throw DataError("scenario: bbox heading |r| != 1");
        if (!(f->bbox.length > 0.0 && f->bbox.width > 0.0))
          throw DataError("scenario: bbox extents must be positive");
      }
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw DataError("scenario: duplicate track id in view " + std::to_string(v.view_id));
  }
  for (const auto& seg : map)
    if (seg.start == seg.end) throw DataError("scenario: zero-length lane segment");
  const View* tv = find_view(target.view_id);
  if (!tv || tv->kind != ViewKind::kEgo || !tv->find_track(target.track_id))
    throw DataError("scenario: target must reference a track in the ego view");
  if (truth) {
    for (const auto& v : views)
      for (const auto& tr : v.tracks) {
        auto it = truth->find(TrackRef{v.view_id, tr.track_id});
        if (it == truth->end())
          throw DataError("scenario: truth missing for view " + std::to_string(v.view_id) +
                          " track " + std::to_string(tr.track_id));
        if (static_cast<int>(it->second.future.size()) != H)
          throw DataError("scenario: truth future length != H");
      }
  }
}

// ---------------------------------------------------------------------------
// synthetic world

void GenConfig::validate() const {
  if (n_agents < 1) throw ConfigError("gen: n_agents must be >= 1");
  if (n_views < 1) throw ConfigError("gen: n_views must be >= 1");
  if (sigma < 0.0) throw ConfigError("gen: sigma must be >= 0");
  if (t_obs < 2 || t_fut < 2) throw ConfigError("gen: t_obs and t_fut must be >= 2");
  if (dt <= 0.0) throw ConfigError("gen: dt must be positive");
  if (detection_range <= 0.0) throw ConfigError("gen: detection_range must be positive");
  if (frag_prob < 0.0 || frag_prob > 1.0) throw ConfigError("gen: frag_prob must be in [0,1]");
  if (arm_length <= 10.0) throw ConfigError("gen: arm_length must exceed 10 m");
  if (lane_spacing <= 0.0) throw ConfigError("gen: lane_spacing must be positive");
}

namespace {

// A route is a polyline/arc chain with arc-length parameterization. Positions
// past either end extrapolate along the boundary heading so kinematics stay
// defined for any s.
struct RoutePiece {
  bool is_arc = false;
  Vec2 a, b;          // line endpoints
  Vec2 center;        // arc
  double radius = 0.0;
  double theta0 = 0.0, theta1 = 0.0;  // arc sweep; sign gives direction
  TurnDir turn = TurnDir::kStraight;

  double length() const {
    return is_arc ? radius * std::fabs(theta1 - theta0) : (b - a).norm();
  }
  Vec2 position(double s) const {
    if (!is_arc) {
      Vec2 dir = b - a;
      double len = dir.norm();
      return a + dir * (s / len);
    }
    double th = theta0 + (theta1 > theta0 ? 1.0 : -1.0) * s / radius;
    return center + Vec2{std::cos(th), std::sin(th)} * radius;
  }
  Vec2 heading(double s) const {
    if (!is_arc) {
      Vec2 dir = b - a;
      double len = dir.norm();
      return {dir.x / len, dir.y / len};
    }
    double sgn = theta1 > theta0 ? 1.0 : -1.0;
    double th = theta0 + sgn * s / radius;
    return {-std::sin(th) * sgn, std::cos(th) * sgn};
  }
};

struct Route {
  std::vector<RoutePiece> pieces;
  TurnDir turn = TurnDir::kStraight;

  double length() const {
    double s = 0.0;
    for (const auto& p : pieces) s += p.length();
    return s;
  }
  void locate(double s, Vec2& pos, Vec2& hdg) const {
    double total = length();
    if (s < 0.0) {
      Vec2 h = pieces.front().heading(0.0);
      pos = pieces.front().position(0.0) + h * s;
      hdg = h;
      return;
    }
    if (s >= total) {
      const RoutePiece& last = pieces.back();
      Vec2 h = last.heading(last.length());
      pos = last.position(last.length()) + h * (s - total);
      hdg = h;
      return;
    }
    for (const auto& p : pieces) {
      double len = p.length();
      if (s <= len) {
        pos = p.position(s);
        hdg = p.heading(s);
        return;
      }
      s -= len;
    }
    const RoutePiece& last = pieces.back();
    pos = last.position(last.length());
    hdg = last.heading(last.length());
  }
};

Vec2 rot90(Vec2 v, int k) {
  k = ((k % 4) + 4) % 4;
  switch (k) {
    case 0: return v;
    case 1: return {-v.y, v.x};
    case 2: return {-v.x, -v.y};
    default: return {v.y, -v.x};
  }
}

RoutePiece rotate_piece(const RoutePiece& p, int k) {
  RoutePiece out = p;
  out.a = rot90(p.a, k);
  out.b = rot90(p.b, k);
  out.center = rot90(p.center, k);
  out.theta0 = p.theta0 + k * 1.5707963267948966;
  out.theta1 = p.theta1 + k * 1.5707963267948966;
  return out;
}

// Base routes enter from the west arm driving east; rotations by 90 degrees
// produce the other arms. Right-hand traffic, lane offset o, junction box b.
std::vector<Route> build_routes(double arm, double o, double box) {
  std::vector<Route> routes;
  // through
  Route through;
  through.pieces.push_back({false, {-arm, -o}, {arm, -o}});
  through.turn = TurnDir::kStraight;
  // right turn (east -> south), clockwise quarter arc, radius box - o
  Route right;
  right.pieces.push_back({false, {-arm, -o}, {-box, -o}});
  RoutePiece arc_r;
  arc_r.is_arc = true;
  arc_r.center = {-box, -box};
  arc_r.radius = box - o;
  arc_r.theta0 = 1.5707963267948966;  // 90 deg
  arc_r.theta1 = 0.0;
  arc_r.turn = TurnDir::kRight;
  right.pieces.push_back(arc_r);
  right.pieces.push_back({false, {-o, -box}, {-o, -arm}});
  right.turn = TurnDir::kRight;
  // left turn (east -> north), counterclockwise arc, radius box + o
  Route left;
  left.pieces.push_back({false, {-arm, -o}, {-box, -o}});
  RoutePiece arc_l;
  arc_l.is_arc = true;
  arc_l.center = {-box, box};
  arc_l.radius = box + o;
  arc_l.theta0 = -1.5707963267948966;
  arc_l.theta1 = 0.0;
  arc_l.turn = TurnDir::kLeft;
  left.pieces.push_back(arc_l);
  left.pieces.push_back({false, {o, box}, {o, arm}});
  left.turn = TurnDir::kLeft;

  for (int k = 0; k < 4; ++k) {
    for (const Route* base : {&through, &right, &left}) {
      Route r;
      r.turn = base->turn;
      for (const auto& p : base->pieces) r.pieces.push_back(rotate_piece(p, k));
      routes.push_back(std::move(r));
    }
  }
  return routes;
}

// Sidewalk lines for pedestrians, outside the roadway.
std::vector<Route> build_walk_routes(double arm, double off) {
  std::vector<Route> routes;
  for (int k = 0; k < 4; ++k) {
    Route r;
    RoutePiece p{false, {-arm, -off}, {arm, -off}};
    r.pieces.push_back(rotate_piece(p, k));
    r.turn = TurnDir::kStraight;
    routes.push_back(std::move(r));
  }
  return routes;
}

struct AgentSpec {
  AgentType type = AgentType::kCar;
  const Route* route = nullptr;
  double s0 = 0.0;
  double v0 = 0.0;
  double accel = 0.0;
  BBox dims;
};

BBox bbox_for(AgentType t) {
  switch (t) {
    case AgentType::kCar: return {4.5, 1.9, {1, 0}};
    case AgentType::kTruck: return {8.0, 2.5, {1, 0}};
    case AgentType::kBus: return {11.0, 2.9, {1, 0}};
    case AgentType::kVan: return {5.2, 2.0, {1, 0}};
    case AgentType::kCyclist: return {1.8, 0.6, {1, 0}};
    case AgentType::kMotorcyclist: return {2.0, 0.7, {1, 0}};
    case AgentType::kPedestrian: return {0.6, 0.6, {1, 0}};
    case AgentType::kTricyclist: return {2.6, 1.0, {1, 0}};
  }
  return {4.5, 1.9, {1, 0}};
}

bool angle_in_sector(double theta, const OcclusionSector& sec) {
  auto wrap = [](double a) {
    while (a < 0.0) a += 2.0 * 3.14159265358979323846;
    while (a >= 2.0 * 3.14159265358979323846) a -= 2.0 * 3.14159265358979323846;
    return a;
  };
  double a = wrap(theta), lo = wrap(sec.theta0), hi = wrap(sec.theta1);
  if (lo <= hi) return a >= lo && a <= hi;
  return a >= lo || a <= hi;
}

}  // namespace

Scenario generate_scenario(const GenConfig& cfg, Rng& rng) {
  cfg.validate();
  const double kPi = 3.14159265358979323846;
  const double o = cfg.lane_spacing * 0.5;
  const double box = std::max(8.0, cfg.lane_spacing * 2.5);
  const int T = cfg.t_obs, H = cfg.t_fut;

  std::vector<Route> routes = build_routes(cfg.arm_length, o, box);
  std::vector<Route> walks = build_walk_routes(cfg.arm_length, box + 2.0);

  Scenario sc;
  sc.T = T;
  sc.H = H;
  sc.dt = cfg.dt;

  // Lane map: sample through lanes and turn arcs every 2 m. Through routes
  // are the full centerlines; turn routes contribute only their arcs (the
  // straight approaches and exits coincide with the through lanes).
  const double kStep = 2.0;
  for (std::size_t ri = 0; ri < routes.size(); ++ri) {
    const Route& r = routes[ri];
    bool through = r.turn == TurnDir::kStraight;
    for (const auto& piece : r.pieces) {
      if (!through && !piece.is_arc) continue;
      double len = piece.length();
      int n = std::max(1, static_cast<int>(std::floor(len / kStep)));
      for (int i = 0; i < n; ++i) {
        double s0 = len * i / n, s1 = len * (i + 1) / n;
        LaneSegment seg;
        seg.start = piece.position(s0);
        seg.end = piece.position(s1);
        seg.turn = piece.is_arc ? piece.turn : TurnDir::kStraight;
        Vec2 mid = (seg.start + seg.end) * 0.5;
        seg.road_type = (std::fabs(mid.x) <= box + 1.0 && std::fabs(mid.y) <= box + 1.0)
                            ? RoadType::kIntersection
                            : RoadType::kNormal;
        sc.map.push_back(seg);
      }
    }
  }

  // Agents with ground-truth kinematics.
  Rng agent_rng = rng.split(1);
  std::vector<AgentSpec> agents;
  std::vector<std::vector<Vec2>> gt_pos(cfg.n_agents);   // T + H steps
  std::vector<std::vector<Vec2>> gt_hdg(cfg.n_agents);
  std::vector<std::vector<double>> gt_speed(cfg.n_agents);
  for (int a = 0; a < cfg.n_agents; ++a) {
    AgentSpec spec;
    double type_draw = agent_rng.uniform();
    if (type_draw < 0.60)
      spec.type = AgentType::kCar;
    else if (type_draw < 0.72)
      spec.type = AgentType::kVan;
    else if (type_draw < 0.80)
      spec.type = AgentType::kTruck;
    else if (type_draw < 0.85)
      spec.type = AgentType::kBus;
    else if (type_draw < 0.92)
      spec.type = AgentType::kCyclist;
    else if (type_draw < 0.96)
      spec.type = AgentType::kMotorcyclist;
    else
      spec.type = AgentType::kPedestrian;
    spec.dims = bbox_for(spec.type);

    bool walker = spec.type == AgentType::kPedestrian;
    if (walker) {
      spec.route = &walks[agent_rng.below(walks.size())];
      spec.v0 = agent_rng.uniform(1.0, 1.6);
      spec.accel = 0.0;
    } else {
      bool turning = agent_rng.uniform() < cfg.turn_prob;
      // routes alternate through/right/left per arm
      std::size_t arm = agent_rng.below(4);
      std::size_t kind = turning ? (1 + agent_rng.below(2)) : 0;
      spec.route = &routes[arm * 3 + kind];
      double base_speed = spec.type == AgentType::kCyclist ? agent_rng.uniform(3.0, 5.0)
                                                           : agent_rng.uniform(6.0, 12.0);
      spec.v0 = base_speed;
      spec.accel = agent_rng.uniform() < cfg.accel_prob ? agent_rng.uniform(-1.2, 1.2) : 0.0;
    }
    double horizon_s = spec.v0 * cfg.dt * (T + H) + 0.5 * std::fabs(spec.accel) *
                           (cfg.dt * (T + H)) * (cfg.dt * (T + H));
    double len = spec.route->length();
    double max_s0 = std::max(2.0, len - horizon_s - 2.0);
    spec.s0 = agent_rng.uniform(2.0, max_s0);
    agents.push_back(spec);

    double s = spec.s0, v = spec.v0;
    for (int t = 0; t < T + H; ++t) {
      Vec2 p, h;
      spec.route->locate(s, p, h);
      gt_pos[a].push_back(p);
      gt_hdg[a].push_back(h);
      gt_speed[a].push_back(v);
      s += v * cfg.dt;
      v = std::clamp(v + spec.accel * cfg.dt, 0.5, 25.0);
    }
  }

  // Views: ego + cooperative sensors around the junction.
  Rng view_rng = rng.split(2);
  struct SensorSetup {
    ViewKind kind;
    Vec2 origin;
    std::vector<OcclusionSector> sectors;
  };
  std::vector<SensorSetup> sensors;
  for (int v = 0; v < cfg.n_views; ++v) {
    SensorSetup s;
    if (v == 0) {
      s.kind = ViewKind::kEgo;
      double ang = view_rng.uniform(0.0, 2.0 * kPi);
      double rad = view_rng.uniform(10.0, 20.0);
      s.origin = {rad * std::cos(ang), rad * std::sin(ang)};
    } else if (v == 1) {
      s.kind = ViewKind::kInfrastructure;
      s.origin = {0.0, 0.0};
    } else {
      s.kind = ViewKind::kVehicle;
      double ang = view_rng.uniform(0.0, 2.0 * kPi);
      double rad = view_rng.uniform(10.0, 25.0);
      s.origin = {rad * std::cos(ang), rad * std::sin(ang)};
    }
    if (static_cast<std::size_t>(v) < cfg.fixed_occlusion.size()) {
      s.sectors = cfg.fixed_occlusion[v];
    } else {
      for (int k = 0; k < cfg.occlusion_sectors; ++k) {
        double a0 = view_rng.uniform(0.0, 2.0 * kPi);
        double width = view_rng.uniform(0.3, 1.1);
        s.sectors.push_back({a0, a0 + width});
      }
    }
    sensors.push_back(std::move(s));
  }

  sc.truth.emplace();
  std::vector<std::vector<Vec2>> futures(cfg.n_agents);
  for (int a = 0; a < cfg.n_agents; ++a)
    futures[a] = {gt_pos[a].begin() + T, gt_pos[a].end()};

  for (int v = 0; v < cfg.n_views; ++v) {
    const SensorSetup& sensor = sensors[v];
    Rng noise_rng = rng.split(100 + static_cast<std::uint64_t>(v));
    View view;
    view.view_id = v;
    view.kind = sensor.kind;

    struct Fragment {
      int agent = 0;
      std::vector<std::optional<ObservedState>> frames;
      int first = 0;
    };
    std::vector<Fragment> fragments;

    for (int a = 0; a < cfg.n_agents; ++a) {
      // visibility mask from range + occlusion + random dropout
      std::vector<char> visible(T, 0);
      for (int t = 0; t < T; ++t) {
        Vec2 rel = gt_pos[a][t] - sensor.origin;
        if (rel.norm() > cfg.detection_range) continue;
        double theta = std::atan2(rel.y, rel.x);
        bool occluded = false;
        for (const auto& sec : sensor.sectors) occluded = occluded || angle_in_sector(theta, sec);
        if (!occluded) visible[t] = 1;
      }
      if (noise_rng.uniform() < cfg.frag_prob) {
        int gap_len = 3 + static_cast<int>(noise_rng.below(4));
        int gap_at = static_cast<int>(noise_rng.below(static_cast<std::uint64_t>(std::max(1, T - gap_len))));
        for (int t = gap_at; t < std::min(T, gap_at + gap_len); ++t) visible[t] = 0;
      }

      // split on gaps >= 3 frames; smaller holes stay inside one track
      int t = 0;
      while (t < T) {
        if (!visible[t]) {
          ++t;
          continue;
        }
        int start = t;
        int end = t;  // inclusive
        int cursor = t;
        while (cursor < T) {
          if (visible[cursor]) {
            end = cursor;
            ++cursor;
            continue;
          }
          int gap_start = cursor;
          while (cursor < T && !visible[cursor]) ++cursor;
          int gap = cursor - gap_start;
          if (gap >= 3 || cursor >= T) break;
        }
        Fragment frag;
        frag.agent = a;
        frag.first = start;
        frag.frames.assign(T, std::nullopt);
        for (int ft = start; ft <= end; ++ft) {
          if (!visible[ft]) continue;
          ObservedState st;
          st.p = gt_pos[a][ft] + Vec2{noise_rng.clipped_normal(cfg.sigma),
                                      noise_rng.clipped_normal(cfg.sigma)};
          double dth = cfg.sigma > 0.0 ? noise_rng.clipped_normal(0.2 * cfg.sigma) : 0.0;
          st.r = heading_from_angle(heading_angle(gt_hdg[a][ft]) + dth);
          st.bbox = agents[a].dims;
          st.bbox.heading = st.r;
          st.speed = std::max(0.0, gt_speed[a][ft] +
                                       (cfg.sigma > 0.0 ? noise_rng.clipped_normal(cfg.sigma) : 0.0));
          frag.frames[ft] = st;
        }
        fragments.push_back(std::move(frag));
        t = end + 1;
      }
    }

    // fresh per-view ids: a seeded permutation over fragments
    std::vector<int> ids(fragments.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    Rng id_rng = rng.split(200 + static_cast<std::uint64_t>(v));
    id_rng.shuffle(ids);

    for (std::size_t i = 0; i < fragments.size(); ++i) {
      AgentTrack tr;
      tr.track_id = ids[i];
      tr.type = agents[fragments[i].agent].type;
      tr.frames = std::move(fragments[i].frames);
      view.tracks.push_back(std::move(tr));
      (*sc.truth)[TrackRef{v, ids[i]}] =
          TruthRecord{fragments[i].agent, futures[fragments[i].agent]};
    }
    std::sort(view.tracks.begin(), view.tracks.end(),
              [](const AgentTrack& x, const AgentTrack& y) { return x.track_id < y.track_id; });
    sc.views.push_back(std::move(view));
  }

  // Target: an ego track observed near the end of the window, preferring the
  // best-covered one. Fragmented agents naturally yield high-missing targets.
  const View& ego = sc.ego_view();
  if (ego.tracks.empty()) throw DataError("generate_scenario: no ego-visible agents");
  const AgentTrack* best = nullptr;
  for (const auto& tr : ego.tracks) {
    if (tr.observed_count() < 2 || tr.last_observed() < T - 3) continue;
    if (!best || tr.observed_count() > best->observed_count() ||
        (tr.observed_count() == best->observed_count() && tr.track_id < best->track_id))
      best = &tr;
  }
  if (!best) {
    for (const auto& tr : ego.tracks) {
      if (tr.observed_count() < 2) continue;
      if (!best || tr.last_observed() > best->last_observed() ||
          (tr.last_observed() == best->last_observed() && tr.track_id < best->track_id))
        best = &tr;
    }
  }
  if (!best) throw DataError("generate_scenario: no decodable ego track");
  sc.target = TrackRef{ego.view_id, best->track_id};

  sc.validate();
  return sc;
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace {

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("expected [x,y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

json frame_json(const std::optional<ObservedState>& f, int t) {
  if (!f) return nullptr;
  json o;
  o["t"] = t;
  o["p"] = vec_json(f->p);
  o["r"] = vec_json(f->r);
  o["bbox"] = json::array({f->bbox.length, f->bbox.width, f->bbox.heading.x, f->bbox.heading.y});
  o["speed"] = f->speed;
  return o;
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
  json root;
  root["version"] = 1;
  root["dt"] = s.dt;
  root["T"] = s.T;
  root["H"] = s.H;
  root["target"] = json{{"view", s.target.view_id}, {"track", s.target.track_id}};
  json views = json::array();
  for (const auto& v : s.views) {
    json jv;
    jv["view_id"] = v.view_id;
    jv["kind"] = to_string(v.kind);
    json tracks = json::array();
    for (const auto& tr : v.tracks) {
      json jt;
      jt["track_id"] = tr.track_id;
      jt["agent_type"] = to_string(tr.type);
      json frames = json::array();
      for (int t = 0; t < s.T; ++t) frames.push_back(frame_json(tr.frames[t], t));
      jt["frames"] = std::move(frames);
      tracks.push_back(std::move(jt));
    }
    jv["tracks"] = std::move(tracks);
    views.push_back(std::move(jv));
  }
  root["views"] = std::move(views);
  json map = json::array();
  for (const auto& seg : s.map) {
    json js;
    js["start"] = vec_json(seg.start);
    js["end"] = vec_json(seg.end);
    js["turn"] = to_string(seg.turn);
    js["road_type"] = to_string(seg.road_type);
    map.push_back(std::move(js));
  }
  root["map"] = std::move(map);
  if (s.truth) {
    json truth = json::array();
    for (const auto& [ref, rec] : *s.truth) {
      json jr;
      jr["view"] = ref.view_id;
      jr["track"] = ref.track_id;
      jr["agent"] = rec.agent_id;
      json fut = json::array();
      for (const auto& p : rec.future) fut.push_back(vec_json(p));
      jr["future"] = std::move(fut);
      truth.push_back(std::move(jr));
    }
    root["truth"] = std::move(truth);
  }
  return root.dump();
}

Scenario deserialize_scenario(const std::string& line, std::size_t line_no) {
  const std::string where = "scenario line " + std::to_string(line_no) + ": ";
  json root;
  try {
    root = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(where + "parse error: " + e.what());
  }
  try {
    Scenario s;
    if (root.at("version").get<int>() != 1) throw DataError("unsupported version");
    s.dt = root.at("dt").get<double>();
    s.T = root.at("T").get<int>();
    s.H = root.at("H").get<int>();
    s.target = TrackRef{root.at("target").at("view").get<int>(),
                        root.at("target").at("track").get<int>()};
    for (const auto& jv : root.at("views")) {
      View v;
      v.view_id = jv.at("view_id").get<int>();
      v.kind = view_kind_from_string(jv.at("kind").get<std::string>());
      for (const auto& jt : jv.at("tracks")) {
        AgentTrack tr;
        tr.track_id = jt.at("track_id").get<int>();
        tr.type = agent_type_from_string(jt.at("agent_type").get<std::string>());
        const auto& frames = jt.at("frames");
        if (static_cast<int>(frames.size()) != s.T)
          throw DataError("frames array length != T");
        for (int t = 0; t < s.T; ++t) {
          const auto& jf = frames[t];
          if (jf.is_null()) {
            tr.frames.emplace_back(std::nullopt);
            continue;
          }
          if (jf.at("t").get<int>() != t) throw DataError("frame t mismatch");
          ObservedState st;
          st.p = vec_from(jf.at("p"));
          st.r = vec_from(jf.at("r"));
          const auto& bb = jf.at("bbox");
          if (!bb.is_array() || bb.size() != 4) throw DataError("bbox must be [l,w,rc,rs]");
          st.bbox = BBox{bb[0].get<double>(), bb[1].get<double>(),
                         {bb[2].get<double>(), bb[3].get<double>()}};
          st.speed = jf.at("speed").get<double>();
          tr.frames.emplace_back(st);
        }
        v.tracks.push_back(std::move(tr));
      }
      s.views.push_back(std::move(v));
    }
    for (const auto& js : root.at("map")) {
      LaneSegment seg;
      seg.start = vec_from(js.at("start"));
      seg.end = vec_from(js.at("end"));
      seg.turn = turn_from_string(js.at("turn").get<std::string>());
      seg.road_type = road_type_from_string(js.at("road_type").get<std::string>());
      s.map.push_back(seg);
    }
    if (root.contains("truth")) {
      s.truth.emplace();
      for (const auto& jr : root.at("truth")) {
        TruthRecord rec;
        rec.agent_id = jr.at("agent").get<int>();
        for (const auto& jp : jr.at("future")) rec.future.push_back(vec_from(jp));
        (*s.truth)[TrackRef{jr.at("view").get<int>(), jr.at("track").get<int>()}] = std::move(rec);
      }
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw DataError(where + "schema error: " + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  }
}

void write_scenarios(const std::vector<Scenario>& scenarios, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& s : scenarios) f << serialize_scenario(s) << "\n";
  if (!f) throw DataError("write failed for '" + path + "'");
}

std::optional<Scenario> ScenarioReader::next() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_no_;
    if (line.empty()) continue;
    return deserialize_scenario(line, line_no_);
  }
  return std::nullopt;
}

std::vector<Scenario> read_scenarios(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open scenario file '" + path + "'");
  ScenarioReader reader(f);
  std::vector<Scenario> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> split_dataset(std::size_t n,
                                                    const std::vector<double>& fractions,
                                                    std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw DataError("split_dataset: negative fraction");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw DataError("split_dataset: fractions must sum to 1");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  // largest-remainder apportionment
  std::vector<std::size_t> sizes(fractions.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    double exact = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-12));
    assigned += sizes[i];
    remainders.push_back({exact - static_cast<double>(sizes[i]), i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) sizes[remainders[k % remainders.size()].second] += 1;

  for (std::size_t i = 0; i < fractions.size(); ++i)
    if (fractions[i] > 0.0 && sizes[i] == 0)
      throw DataError("split_dataset: fraction " + std::to_string(fractions[i]) +
                      " yields an empty partition for n=" + std::to_string(n));

  std::vector<std::vector<std::size_t>> parts;
  std::size_t off = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    parts.emplace_back(order.begin() + off, order.begin() + off + sizes[i]);
    off += sizes[i];
  }
  return parts;
}

}  // namespace coopcast
