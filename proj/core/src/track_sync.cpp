// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/track_sync.hpp"

#include "coopcast/errors.hpp"

namespace coopcast {

AgentTrack resync_track(const AgentTrack& track, int drop_latest) {
  if (drop_latest < 0 || drop_latest > 2)
    throw NumericError("resync_track: drop_latest must be in {0,1,2}");
  if (drop_latest == 0) return track;

  const int T = static_cast<int>(track.frames.size());
  AgentTrack out = track;
  std::vector<int> refill;
  for (int t = std::max(0, T - drop_latest); t < T; ++t) {
    if (out.frames[t]) {
      refill.push_back(t);
      out.frames[t].reset();
    }
  }
  if (refill.empty()) return out;

  int t1 = out.last_observed();
  int t0 = -1;
  for (int t = t1 - 1; t >= 0; --t) {
    if (out.frames[t]) {
      t0 = t;
      break;
    }
  }
  if (t1 < 0 || t0 < 0)
    throw NumericError("resync_track: fewer than 2 observed frames remain after drop");

  const ObservedState& s1 = *out.frames[t1];
  const ObservedState& s0 = *out.frames[t0];
  Vec2 step = (s1.p - s0.p) * (1.0 / static_cast<double>(t1 - t0));
  for (int t : refill) {
    ObservedState st = s1;  // heading, bbox, speed carried forward
    st.p = s1.p + step * static_cast<double>(t - t1);
    out.frames[t] = st;
  }
  return out;
}

}  // namespace coopcast
