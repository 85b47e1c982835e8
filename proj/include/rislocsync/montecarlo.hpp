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

#include <rislocsync/bounds.hpp>
#include <rislocsync/estimators.hpp>
#include <rislocsync/model.hpp>
#include <rislocsync/random.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

// Monte Carlo RMSE experiments: RMSE versus SNR for position and clock
// offset, and position RMSE versus the number of transmissions for a set
// of RIS sizes, each with the matching PEB / CEB.

namespace rislocsync
{

struct experiment_config
{
    scenario_config base;
    std::vector<double> snr_grid_db{-15.0, -10.0, -5.0, 0.0, 5.0, 10.0};
    std::vector<int> g_grid{2, 3, 4, 5, 6, 7};
    std::vector<int> nr_grid{20, 40};
    double sweep_g_snr_db = -5.0;
    int trials = 200;
    std::uint64_t master_seed = 1;
    int workers = 0; // 0: all available processors
    std::optional<search_region> region;

    bool operator==(const experiment_config&) const = default;
};

inline void validate(const experiment_config& c)
{
    validate(c.base);
    if (c.trials < 1)
        throw std::invalid_argument("trials must be >= 1");
    if (c.snr_grid_db.empty() || c.g_grid.empty() || c.nr_grid.empty())
        throw std::invalid_argument("grids must be non-empty");
    if (c.workers < 0)
        throw std::invalid_argument("workers must be >= 0");
    if (c.region && !c.region->valid())
        throw std::invalid_argument("search region is empty");
    for (int nr : c.nr_grid)
        if (nr < 1)
            throw std::invalid_argument("nr_grid entries must be >= 1");
}

enum class estimator_tag
{
    rml,
    ml,
};

inline const char* to_string(estimator_tag t)
{
    return t == estimator_tag::rml ? "RML" : "ML";
}

struct trial_record
{
    int trial = 0;
    double snr_db = 0.0;
    estimator_tag estimator = estimator_tag::rml;
    int transmissions = 0;
    int ris_elements = 0;
    vec2 p_hat = vec2::Constant(std::numeric_limits<double>::quiet_NaN());
    double delta_hat = std::numeric_limits<double>::quiet_NaN();
    double p_err = std::numeric_limits<double>::quiet_NaN();
    double delta_err = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    double cost = std::numeric_limits<double>::quiet_NaN();
    // "ok", "not-converged", "ambiguous", "boundary", or the estimator error
    std::string status = "ok";

    bool operator==(const trial_record&) const = default;
};

struct sweep_result
{
    double snr_db = 0.0;
    int transmissions = 0;
    int ris_elements = 0;
    estimator_tag estimator = estimator_tag::rml;
    double rmse_p = 0.0;     // all trials with an estimate, flagged ones included
    double rmse_delta = 0.0;
    double rmse_p_converged = 0.0; // flagged trials excluded
    double rmse_delta_converged = 0.0;
    double peb = std::numeric_limits<double>::quiet_NaN();
    double ceb = std::numeric_limits<double>::quiet_NaN();
    int trials_used = 0;
    int flagged = 0;
    int failed = 0;
    std::string status = "ok"; // or "singular-fim", "insufficient-transmissions"
};

struct sweep_output
{
    std::vector<trial_record> trials;
    std::vector<sweep_result> summary;
};

// Scenario of one trial: every random draw keyed by (master_seed, trial),
// so trial k sees the same pilots, RIS profiles, phases and unit noise at
// every SNR point.
inline scenario_config trial_scenario(const experiment_config& c, double snr_db, int trial)
{
    scenario_config s = c.base;
    s.rng_seed = derive_seed(c.master_seed, stream_tag::trial, static_cast<std::uint64_t>(trial));
    return with_snr(s, snr_db);
}

// The realization used for PEB / CEB at each axis point.
inline scenario_config reference_scenario(const experiment_config& c, double snr_db)
{
    scenario_config s = c.base;
    s.rng_seed = derive_seed(c.master_seed, stream_tag::reference);
    return with_snr(s, snr_db);
}

inline search_region region_for(const experiment_config& c)
{
    return c.region ? *c.region : default_search_region(c.base);
}

struct bound_point
{
    double peb = std::numeric_limits<double>::quiet_NaN();
    double ceb = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";
};

inline bound_point reference_bounds(const experiment_config& c, double snr_db)
{
    const scenario_config s = reference_scenario(c, snr_db);
    bound_point b;
    try {
        const precoding_config pc = default_precoding(s, make_known_ris_path(s));
        const bounds_report r = compute_bounds(s, pc);
        b.peb = r.peb;
        b.ceb = r.ceb;
    } catch (const singular_fim&) {
        b.status = "singular-fim";
    }
    return b;
}

inline std::pair<trial_record, trial_record> run_trial(const experiment_config& c, double snr_db, int trial,
                                                       noise_mode noise = noise_mode::enabled)
{
    const scenario_config s = trial_scenario(c, snr_db, trial);
    trial_record rml;
    rml.trial = trial;
    rml.snr_db = snr_db;
    rml.estimator = estimator_tag::rml;
    rml.transmissions = s.transmissions;
    rml.ris_elements = s.ris_elements;
    trial_record ml = rml;
    ml.estimator = estimator_tag::ml;

    auto fill = [&](trial_record& rec, const vec2& p, double delta, double cost, bool converged) {
        rec.p_hat = p;
        rec.delta_hat = delta;
        rec.p_err = (p - s.ms_position).norm();
        rec.delta_err = std::abs(delta - s.clock_offset_s);
        rec.cost = cost;
        rec.converged = converged;
    };

    try {
        const precoding_config pc = default_precoding(s, make_known_ris_path(s));
        const synthesis syn = synthesize(s, pc, noise);
        const signal_model model(syn.obs);
        const joint_estimate est = locate(model, region_for(c));

        const rml_estimate& r = est.relaxed;
        fill(rml, r.p_hat, r.delta_hat, r.cost, r.refinement_converged);
        if (!r.refinement_converged)
            rml.status = "not-converged";
        else if (r.on_boundary)
            rml.status = "boundary";
        else if (r.ambiguous_minimum)
            rml.status = "ambiguous";

        fill(ml, est.ml.p_hat, est.ml.delta_hat, est.ml.cost, est.ml.converged);
        if (!est.ml.converged)
            ml.status = "not-converged";
    } catch (const insufficient_transmissions&) {
        rml.status = ml.status = "insufficient-transmissions";
    } catch (const rank_deficient&) {
        rml.status = ml.status = "rank-deficient";
    } catch (const degenerate_geometry&) {
        rml.status = ml.status = "degenerate-geometry";
    }
    return {std::move(rml), std::move(ml)};
}

namespace detail
{

inline int worker_count(int requested, std::size_t jobs)
{
    int w = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    w = std::max(1, w);
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(w), std::max<std::size_t>(1, jobs)));
}

// Runs job(i) for i in [0, count) on `workers` threads; results are
// written by index so the outcome does not depend on the schedule.
template <typename Job>
void parallel_for(std::size_t count, int workers, Job&& job)
{
    const int w = worker_count(workers, count);
    if (w == 1) {
        for (std::size_t i = 0; i < count; ++i)
            job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&]() {
            for (std::size_t i = next++; i < count && !failed; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    if (!failed.exchange(true))
                        failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (failure)
        std::rethrow_exception(failure);
}

inline sweep_result summarize(const std::vector<const trial_record*>& records, estimator_tag tag, double snr_db,
                              int transmissions, int ris_elements, const bound_point& bound)
{
    sweep_result r;
    r.snr_db = snr_db;
    r.transmissions = transmissions;
    r.ris_elements = ris_elements;
    r.estimator = tag;
    r.peb = bound.peb;
    r.ceb = bound.ceb;
    r.status = bound.status;

    double sp = 0.0, sd = 0.0, sp_c = 0.0, sd_c = 0.0;
    int n_conv = 0;
    for (const trial_record* rec : records) {
        if (rec->estimator != tag)
            continue;
        if (!std::isfinite(rec->p_err) || !std::isfinite(rec->delta_err)) {
            ++r.failed;
            continue;
        }
        ++r.trials_used;
        sp += rec->p_err * rec->p_err;
        sd += rec->delta_err * rec->delta_err;
        if (rec->converged) {
            ++n_conv;
            sp_c += rec->p_err * rec->p_err;
            sd_c += rec->delta_err * rec->delta_err;
        } else {
            ++r.flagged;
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.rmse_p = r.trials_used > 0 ? std::sqrt(sp / r.trials_used) : nan;
    r.rmse_delta = r.trials_used > 0 ? std::sqrt(sd / r.trials_used) : nan;
    r.rmse_p_converged = n_conv > 0 ? std::sqrt(sp_c / n_conv) : nan;
    r.rmse_delta_converged = n_conv > 0 ? std::sqrt(sd_c / n_conv) : nan;
    if (r.status == "ok" && r.failed > 0 && r.trials_used == 0)
        r.status = records.empty() ? "ok" : records.front()->status;
    return r;
}

} // namespace detail

using progress_callback = std::function<void(std::size_t done, std::size_t total)>;

// All trials of one scenario over a list of SNR points, with per-point
// summaries (RML row then ML row).
inline sweep_output run_snr_points(const experiment_config& c, const std::vector<double>& snrs,
                                   const progress_callback& progress = {}, noise_mode noise = noise_mode::enabled)
{
    validate(c);
    const std::size_t per_point = static_cast<std::size_t>(c.trials);
    const std::size_t total = per_point * snrs.size();
    std::vector<std::pair<trial_record, trial_record>> results(total);
    std::atomic<std::size_t> done{0};
    detail::parallel_for(total, c.workers, [&](std::size_t i) {
        const double snr = snrs[i / per_point];
        results[i] = run_trial(c, snr, static_cast<int>(i % per_point), noise);
        const std::size_t d = ++done;
        if (progress)
            progress(d, total);
    });

    sweep_output out;
    out.trials.reserve(2 * total);
    for (std::size_t k = 0; k < snrs.size(); ++k) {
        std::vector<const trial_record*> point;
        for (std::size_t t = 0; t < per_point; ++t) {
            const auto& pr = results[k * per_point + t];
            out.trials.push_back(pr.first);
            out.trials.push_back(pr.second);
        }
        for (std::size_t i = out.trials.size() - 2 * per_point; i < out.trials.size(); ++i)
            point.push_back(&out.trials[i]);
        const bound_point b = reference_bounds(c, snrs[k]);
        for (estimator_tag tag : {estimator_tag::rml, estimator_tag::ml})
            out.summary.push_back(
                detail::summarize(point, tag, snrs[k], c.base.transmissions, c.base.ris_elements, b));
    }
    return out;
}

// RMSE of p and delta versus SNR.
inline sweep_output sweep_snr(const experiment_config& c, const progress_callback& progress = {})
{
    return run_snr_points(c, c.snr_grid_db, progress);
}

// Position RMSE versus G for each RIS size, at sweep_g_snr_db. G < 2 yields
// an "insufficient-transmissions" row without running trials.
inline sweep_output sweep_g(const experiment_config& c, const progress_callback& progress = {})
{
    validate(c);
    sweep_output out;
    std::size_t total = 0;
    for (int nr : c.nr_grid)
        for (int g : c.g_grid)
            if (g >= 2 && nr >= 1)
                total += static_cast<std::size_t>(c.trials);
    std::size_t done_before = 0;

    for (int nr : c.nr_grid)
        for (int g : c.g_grid) {
            experiment_config point = c;
            point.base.ris_elements = nr;
            point.base.transmissions = std::max(g, 1);
            if (g < 2) {
                bound_point b;
                if (g >= 1) {
                    b = reference_bounds(point, c.sweep_g_snr_db);
                }
                for (estimator_tag tag : {estimator_tag::rml, estimator_tag::ml}) {
                    sweep_result r;
                    r.snr_db = c.sweep_g_snr_db;
                    r.transmissions = g;
                    r.ris_elements = nr;
                    r.estimator = tag;
                    r.rmse_p = r.rmse_delta = r.rmse_p_converged = r.rmse_delta_converged =
                        std::numeric_limits<double>::quiet_NaN();
                    r.peb = b.peb;
                    r.ceb = b.ceb;
                    r.status = "insufficient-transmissions";
                    out.summary.push_back(r);
                }
                continue;
            }
            const std::size_t offset = done_before;
            progress_callback inner;
            if (progress)
                inner = [&, offset](std::size_t d, std::size_t) { progress(offset + d, total); };
            sweep_output part = run_snr_points(point, {c.sweep_g_snr_db}, inner);
            done_before += static_cast<std::size_t>(c.trials);
            out.trials.insert(out.trials.end(), part.trials.begin(), part.trials.end());
            out.summary.insert(out.summary.end(), part.summary.begin(), part.summary.end());
        }
    return out;
}

} // namespace rislocsync
