// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "coopcast/nn.hpp"

namespace coopcast {

// Checkpoint file layout:
//   coopcast.ckpt 1\n
//   tensor <name> f64 <extent>...\n     (one line per tensor, store order)
//   payload\n
//   <raw little-endian f64 payloads in manifest order>
//   <8-byte little-endian FNV-1a 64 checksum of the payload bytes>
void save_checkpoint(const ParamStore& params, const std::string& path);

// Verifies the checksum and full length before returning; a truncated or
// corrupt file raises DataError without a partial store.
ParamStore load_checkpoint(const std::string& path);

// Compares against an expected schema (name -> shape); the first mismatch
// raises NumericError naming the offending tensor.
void validate_param_shapes(const ParamStore& params,
                           const std::map<std::string, std::vector<std::int64_t>>& expected);

std::uint64_t fnv1a64(const unsigned char* bytes, std::size_t n);

}  // namespace coopcast
