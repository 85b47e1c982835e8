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

#include <stdexcept>
#include <string>

namespace rislocsync
{

// Base class for all library errors.
class error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Two of BS, RIS and MS share a position, so a path length is zero.
class coincident_nodes : public error
{
public:
    using error::error;
};

// Array sizes disagree with the scenario (profile length, pilot shape, ...).
class dimension_mismatch : public error
{
public:
    using error::error;
};

// The location-domain FIM cannot be inverted. This is an expected
// outcome (e.g. no RIS path), not a programming error.
class singular_fim : public error
{
public:
    singular_fim(double smallest_eigenvalue, double reciprocal_condition)
        : error("singular Fisher information matrix (smallest eigenvalue " +
                std::to_string(smallest_eigenvalue) + ", rcond " + std::to_string(reciprocal_condition) + ")"),
          smallest_eigenvalue(smallest_eigenvalue), reciprocal_condition(reciprocal_condition)
    {
    }

    double smallest_eigenvalue;
    double reciprocal_condition;
};

// The 2x2 amplitude Gram matrix is numerically singular.
class degenerate_geometry : public error
{
public:
    using error::error;
};

// The relaxed dictionary has numerical rank below 2N.
class rank_deficient : public error
{
public:
    using error::error;
};

// The relaxed estimator needs at least two transmissions.
class insufficient_transmissions : public error
{
public:
    using error::error;
};

} // namespace rislocsync
