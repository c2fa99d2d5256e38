// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/association.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "coopcast/errors.hpp"
#include "coopcast/hungarian.hpp"
#include "json.hpp"

namespace coopcast {

using json = nlohmann::ordered_json;

int view_order_key(const View& v) { return v.kind == ViewKind::kEgo ? -1 : v.view_id; }

bool view_before(const View& a, const View& b) { return view_order_key(a) < view_order_key(b); }

std::vector<TrackPair> CandidateMask::kept() const {
  std::vector<TrackPair> out;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (keep[i]) out.push_back(all[i]);
  return out;
}

bool CandidateMask::is_kept(const TrackPair& p) const {
  auto it = index_.find(p);
  return it != index_.end() && keep[it->second];
}

std::size_t CandidateMask::kept_count() const {
  std::size_t n = 0;
  for (char k : keep) n += k ? 1 : 0;
  return n;
}

namespace {

struct Bounds {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  bool empty = true;

  void add(Vec2 p) {
    if (empty) {
      min_x = max_x = p.x;
      min_y = max_y = p.y;
      empty = false;
      return;
    }
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  Bounds inflated(double m) const {
    Bounds b = *this;
    b.min_x -= m;
    b.min_y -= m;
    b.max_x += m;
    b.max_y += m;
    return b;
  }
  bool disjoint(const Bounds& o) const {
    if (empty || o.empty) return true;
    return max_x < o.min_x || o.max_x < min_x || max_y < o.min_y || o.max_y < min_y;
  }
};

Bounds track_bounds(const AgentTrack& tr) {
  Bounds b;
  for (const auto& f : tr.frames)
    if (f) b.add(f->p);
  return b;
}

}  // namespace

CandidateMask pre_prune(const Scenario& s) {
  constexpr double kInflation = 2.0;  // m
  std::vector<const View*> views;
  for (const auto& v : s.views) views.push_back(&v);
  std::sort(views.begin(), views.end(),
            [](const View* a, const View* b) { return view_before(*a, *b); });

  CandidateMask mask;
  std::map<TrackRef, Bounds> bounds;
  for (const View* v : views)
    for (const auto& tr : v->tracks)
      bounds[TrackRef{v->view_id, tr.track_id}] = track_bounds(tr).inflated(kInflation);

  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    for (std::size_t vj = vi + 1; vj < views.size(); ++vj) {
      for (const auto& ta : views[vi]->tracks) {
        for (const auto& tb : views[vj]->tracks) {
          TrackPair p{TrackRef{views[vi]->view_id, ta.track_id},
                      TrackRef{views[vj]->view_id, tb.track_id}};
          bool kept = ta.type == tb.type && !bounds[p.a].disjoint(bounds[p.b]);
          mask.all.push_back(p);
          mask.keep.push_back(kept ? 1 : 0);
        }
      }
    }
  }

  // canonical sort, keeping flags aligned
  std::vector<std::size_t> order(mask.all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return mask.all[x] < mask.all[y]; });
  std::vector<TrackPair> all;
  std::vector<char> keep;
  for (std::size_t i : order) {
    all.push_back(mask.all[i]);
    keep.push_back(mask.keep[i]);
  }
  mask.all = std::move(all);
  mask.keep = std::move(keep);
  for (std::size_t i = 0; i < mask.all.size(); ++i) mask.index_[mask.all[i]] = i;
  return mask;
}

void LabelGenConfig::validate() const {
  if (tau_iou < 0.0 || tau_iou >= 1.0) throw ConfigError("labels: tau_iou must be in [0, 1)");
  if (eps_length < 1) throw ConfigError("labels: eps_length must be >= 1");
}

bool PseudoLabels::contains(const TrackPair& p) const {
  return std::any_of(pairs.begin(), pairs.end(),
                     [&](const LabeledPair& lp) { return lp.pair == p; });
}

PseudoLabels generate_pseudo_labels(const Scenario& s, const LabelGenConfig& cfg) {
  return generate_pseudo_labels(s, cfg, pre_prune(s));
}

PseudoLabels generate_pseudo_labels(const Scenario& s, const LabelGenConfig& cfg,
                                    const CandidateMask& mask) {
  cfg.validate();
  std::vector<const View*> views;
  for (const auto& v : s.views) views.push_back(&v);
  std::sort(views.begin(), views.end(),
            [](const View* a, const View* b) { return view_before(*a, *b); });

  struct Vote {
    int count = 0;
    double iou_sum = 0.0;
  };
  std::map<TrackPair, Vote> votes;

  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    for (std::size_t vj = vi + 1; vj < views.size(); ++vj) {
      const View& va = *views[vi];
      const View& vb = *views[vj];
      for (int t = 0; t < s.T; ++t) {
        std::vector<const AgentTrack*> pa, pb;
        for (const auto& tr : va.tracks)
          if (tr.frames[t]) pa.push_back(&tr);
        for (const auto& tr : vb.tracks)
          if (tr.frames[t]) pb.push_back(&tr);
        if (pa.empty() || pb.empty()) continue;

        std::vector<std::vector<double>> w(pa.size(), std::vector<double>(pb.size(), 0.0));
        for (std::size_t i = 0; i < pa.size(); ++i) {
          for (std::size_t j = 0; j < pb.size(); ++j) {
            TrackPair p{TrackRef{va.view_id, pa[i]->track_id},
                        TrackRef{vb.view_id, pb[j]->track_id}};
            if (!mask.is_kept(p)) continue;
            double iou = iou_bev(pa[i]->frames[t]->rect(), pb[j]->frames[t]->rect());
            w[i][j] = iou > cfg.tau_iou ? iou : 0.0;
          }
        }
        Assignment asg = hungarian_max(w);
        for (auto [i, j] : asg.pairs) {
          if (w[i][j] <= cfg.tau_iou) continue;  // zeroed or sub-threshold
          TrackPair p{TrackRef{va.view_id, pa[i]->track_id},
                      TrackRef{vb.view_id, pb[j]->track_id}};
          Vote& v = votes[p];
          v.count += 1;
          v.iou_sum += w[i][j];
        }
      }
    }
  }

  // accept by matched length, then resolve one-to-one conflicts per view pair
  std::vector<LabeledPair> accepted;
  for (const auto& [pair, vote] : votes) {
    if (vote.count < cfg.eps_length) continue;
    accepted.push_back({pair, vote.count, vote.iou_sum / vote.count});
  }
  std::sort(accepted.begin(), accepted.end(), [](const LabeledPair& x, const LabeledPair& y) {
    if (x.count != y.count) return x.count > y.count;
    if (x.mean_iou != y.mean_iou) return x.mean_iou > y.mean_iou;
    return x.pair < y.pair;
  });

  PseudoLabels out;
  // Conflicts are per view pair: a track may appear in at most one accepted
  // pair toward each opposing view.
  std::set<std::pair<TrackRef, int>> used;  // (track, opposing view id)
  for (const auto& lp : accepted) {
    auto ka = std::make_pair(lp.pair.a, lp.pair.b.view_id);
    auto kb = std::make_pair(lp.pair.b, lp.pair.a.view_id);
    if (used.count(ka) || used.count(kb)) continue;
    used.insert(ka);
    used.insert(kb);
    out.pairs.push_back(lp);
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const LabeledPair& x, const LabeledPair& y) { return x.pair < y.pair; });
  return out;
}

std::set<TrackPair> truth_pairs(const Scenario& s) {
  if (!s.truth) throw DataError("association: scenario has no ground-truth identities");
  std::vector<const View*> views;
  for (const auto& v : s.views) views.push_back(&v);
  std::sort(views.begin(), views.end(),
            [](const View* a, const View* b) { return view_before(*a, *b); });
  std::set<TrackPair> out;
  for (std::size_t vi = 0; vi < views.size(); ++vi)
    for (std::size_t vj = vi + 1; vj < views.size(); ++vj)
      for (const auto& ta : views[vi]->tracks)
        for (const auto& tb : views[vj]->tracks) {
          TrackRef ra{views[vi]->view_id, ta.track_id};
          TrackRef rb{views[vj]->view_id, tb.track_id};
          if (s.truth->at(ra).agent_id == s.truth->at(rb).agent_id) out.insert(TrackPair{ra, rb});
        }
  return out;
}

AssociationScore association_metrics(const std::vector<TrackPair>& predicted, const Scenario& s) {
  std::set<TrackPair> truth = truth_pairs(s);
  AssociationScore sc;
  for (const auto& p : predicted) {
    if (truth.count(p))
      sc.tp += 1;
    else
      sc.fp += 1;
  }
  sc.fn = static_cast<int>(truth.size()) - sc.tp;
  sc.precision = predicted.empty() ? 1.0 : static_cast<double>(sc.tp) / (sc.tp + sc.fp);
  sc.recall = truth.empty() ? 1.0 : static_cast<double>(sc.tp) / (sc.tp + sc.fn);
  sc.f1 = (sc.precision + sc.recall) > 0.0
              ? 2.0 * sc.precision * sc.recall / (sc.precision + sc.recall)
              : 0.0;
  return sc;
}

// ---------------------------------------------------------------------------

void write_labels(const std::vector<PseudoLabels>& labels, const std::vector<Scenario>& scenarios,
                  const std::string& path) {
  if (labels.size() != scenarios.size())
    throw DataError("write_labels: label/scenario count mismatch");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  for (std::size_t id = 0; id < labels.size(); ++id) {
    const Scenario& s = scenarios[id];
    std::vector<const View*> views;
    for (const auto& v : s.views) views.push_back(&v);
    std::sort(views.begin(), views.end(),
              [](const View* a, const View* b) { return view_before(*a, *b); });
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
      for (std::size_t vj = vi + 1; vj < views.size(); ++vj) {
        json rec;
        rec["scenario_id"] = id;
        rec["view_pair"] = json::array({views[vi]->view_id, views[vj]->view_id});
        json pairs = json::array();
        for (const auto& lp : labels[id].pairs) {
          if (lp.pair.a.view_id != views[vi]->view_id || lp.pair.b.view_id != views[vj]->view_id)
            continue;
          pairs.push_back(
              json{{"a", lp.pair.a.track_id}, {"b", lp.pair.b.track_id}, {"count", lp.count}});
        }
        rec["pairs"] = std::move(pairs);
        f << rec.dump() << "\n";
      }
    }
  }
  if (!f) throw DataError("write failed for '" + path + "'");
}

std::vector<PseudoLabels> read_labels(const std::string& path, std::size_t n_scenarios) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open labels file '" + path + "'");
  std::vector<PseudoLabels> out(n_scenarios);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("labels line " + std::to_string(line_no) + ": parse error: " + e.what());
    }
    try {
      std::size_t id = rec.at("scenario_id").get<std::size_t>();
      if (id >= n_scenarios)
        throw DataError("scenario_id " + std::to_string(id) + " out of range");
      int va = rec.at("view_pair").at(0).get<int>();
      int vb = rec.at("view_pair").at(1).get<int>();
      for (const auto& jp : rec.at("pairs")) {
        LabeledPair lp;
        lp.pair = TrackPair{TrackRef{va, jp.at("a").get<int>()},
                            TrackRef{vb, jp.at("b").get<int>()}};
        lp.count = jp.at("count").get<int>();
        out[id].pairs.push_back(lp);
      }
    } catch (const json::exception& e) {
      throw DataError("labels line " + std::to_string(line_no) + ": schema error: " + e.what());
    }
  }
  for (auto& l : out)
    std::sort(l.pairs.begin(), l.pairs.end(),
              [](const LabeledPair& x, const LabeledPair& y) { return x.pair < y.pair; });
  return out;
}

}  // namespace coopcast
