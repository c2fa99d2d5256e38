// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "coopcast/scenario.hpp"

namespace coopcast {

// Latency resynchronization: removes the last `drop_latest` frame slots
// (k in {0,1,2}), then refills each removed-and-originally-present timestamp
// by linear position extrapolation from the last two remaining observed
// states. Heading, bbox and speed are carried forward from the last remaining
// state. Fewer than 2 remaining observed frames is an error.
AgentTrack resync_track(const AgentTrack& track, int drop_latest);

}  // namespace coopcast
