// SPDX-License-Identifier: Apache-2.0
//
// rislocsync: RIS-aided joint localization and synchronization for mmWave MISO links
// Copyright (C) 2026 The rislocsync Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <cstdint>
#include <random>

namespace rislocsync
{

// Independent random substreams keyed by (seed, purpose, index, index).
// Every draw in the library goes through one of these so results never
// depend on evaluation order or thread schedule.

enum class stream_tag : std::uint64_t
{
    path_phases = 1,
    pilots = 2,
    ris_profile = 3,
    noise = 4,
    trial = 5,
    reference = 6,
    geometry = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, stream_tag tag, std::uint64_t a = 0, std::uint64_t b = 0) noexcept
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
    h = splitmix64(h ^ a);
    return splitmix64(h ^ (b * 0xD1B54A32D192ED03ull));
}

inline std::mt19937_64 substream(std::uint64_t seed, stream_tag tag, std::uint64_t a = 0, std::uint64_t b = 0)
{
    return std::mt19937_64(derive_seed(seed, tag, a, b));
}

} // namespace rislocsync
