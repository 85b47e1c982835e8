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

#include <rislocsync/model.hpp>

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <new>
#include <utility>

// Delay recovery from a sampled complex exponential e[n] = c exp(-j 2 pi n tau / (N T)).

namespace rislocsync
{

namespace detail
{

// FFTW's planner is not reentrant; plan execution is.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

struct fftw_buffer_deleter
{
    void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};

using fftw_buffer = std::unique_ptr<fftw_complex[], fftw_buffer_deleter>;

inline fftw_buffer make_fftw_buffer(std::size_t n)
{
    auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (p == nullptr)
        throw std::bad_alloc();
    return fftw_buffer(p);
}

// Forward DFT X[k] = sum_n x[n] exp(-j 2 pi n k / L) of a zero-padded input.
inline std::vector<cplx> padded_dft(const cvector& x, int length)
{
    auto in = make_fftw_buffer(length);
    auto out = make_fftw_buffer(length);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_1d(length, in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    }
    for (int i = 0; i < length; ++i) {
        const cplx v = i < x.size() ? x[i] : cplx{0.0, 0.0};
        in[i][0] = v.real();
        in[i][1] = v.imag();
    }
    fftw_execute(plan);
    std::vector<cplx> spectrum(length);
    for (int i = 0; i < length; ++i)
        spectrum[i] = {out[i][0], out[i][1]};
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    return spectrum;
}

} // namespace detail

// At least max(4096, 64 N) points, rounded up to a multiple of N so that
// integer multiples of T fall exactly on a bin.
inline int delay_fft_length(int samples)
{
    const int minimum = std::max(4096, 64 * samples);
    return ((minimum + samples - 1) / samples) * samples;
}

// Peak of the zero-padded spectrum refined by a parabola through the log
// magnitudes of the three bins around it. Returns tau in [0, N T).
inline double delay_from_exponential(const cvector& e, double symbol_period)
{
    const int n = static_cast<int>(e.size());
    if (n < 2)
        throw std::invalid_argument("delay estimation needs at least 2 samples");
    const int length = delay_fft_length(n);
    const std::vector<cplx> spectrum = detail::padded_dft(e, length);

    int peak = 0;
    double peak_mag = -1.0;
    for (int k = 0; k < length; ++k) {
        const double mag = std::abs(spectrum[k]);
        if (mag > peak_mag) {
            peak_mag = mag;
            peak = k;
        }
    }

    constexpr double floor = 1e-300;
    const double lm = std::log(std::abs(spectrum[(peak + length - 1) % length]) + floor);
    const double l0 = std::log(peak_mag + floor);
    const double lp = std::log(std::abs(spectrum[(peak + 1) % length]) + floor);
    const double curvature = lm - 2.0 * l0 + lp;
    double offset = 0.0;
    if (curvature < 0.0)
        offset = std::clamp(0.5 * (lm - lp) / curvature, -0.5, 0.5);

    // spectrum peaks at k / L = -tau / (N T) mod 1
    const double cycles = (peak + offset) / length;
    double frac = -cycles - std::floor(-cycles);
    if (frac >= 1.0)
        frac = 0.0;
    return frac * symbol_period;
}

} // namespace rislocsync
