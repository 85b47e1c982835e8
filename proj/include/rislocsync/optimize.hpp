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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace rislocsync
{

struct nelder_mead_options
{
    int max_iterations = 500;
    // simplex diameter (max-norm distance of any vertex to the best one)
    double x_tolerance = 1e-9;
    // spread of vertex costs <= f_relative * |f_best| + f_absolute
    double f_relative_tolerance = 1e-12;
    double f_absolute_tolerance = 0.0;
    // re-expansions around the best point after a first convergence
    int restarts = 1;
};

struct nelder_mead_result
{
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

// Derivative-free simplex descent (reflection 1, expansion 2, contraction
// 1/2, shrink 1/2). The objective may return +inf for infeasible points.
template <typename Objective>
nelder_mead_result nelder_mead(Objective&& objective, const Eigen::VectorXd& start, const Eigen::VectorXd& initial_step,
                               const nelder_mead_options& opt = {})
{
    const Eigen::Index dim = start.size();
    std::vector<Eigen::VectorXd> simplex(dim + 1);
    std::vector<double> cost(dim + 1);

    nelder_mead_result result;
    result.x = start;
    result.f = objective(start);

    auto build_simplex = [&](const Eigen::VectorXd& centre, double f_centre) {
        simplex[0] = centre;
        cost[0] = f_centre;
        for (Eigen::Index i = 0; i < dim; ++i) {
            simplex[i + 1] = centre;
            simplex[i + 1][i] += initial_step[i];
            cost[i + 1] = objective(simplex[i + 1]);
        }
    };

    auto order = [&]() {
        std::vector<Eigen::Index> idx(dim + 1);
        for (Eigen::Index i = 0; i <= dim; ++i)
            idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return cost[a] < cost[b]; });
        std::vector<Eigen::VectorXd> s(dim + 1);
        std::vector<double> c(dim + 1);
        for (Eigen::Index i = 0; i <= dim; ++i) {
            s[i] = simplex[idx[i]];
            c[i] = cost[idx[i]];
        }
        simplex = std::move(s);
        cost = std::move(c);
    };

    auto is_converged = [&]() {
        double diameter = 0.0;
        for (Eigen::Index i = 1; i <= dim; ++i)
            diameter = std::max(diameter, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
        const double spread = cost[dim] - cost[0];
        return diameter <= opt.x_tolerance &&
               spread <= opt.f_relative_tolerance * std::abs(cost[0]) + opt.f_absolute_tolerance;
    };

    int restarts_left = opt.restarts;
    build_simplex(result.x, result.f);
    order();

    while (result.iterations < opt.max_iterations) {
        if (is_converged()) {
            const bool improved = cost[0] < result.f - (opt.f_relative_tolerance * std::abs(result.f) + opt.f_absolute_tolerance);
            const bool first_pass = restarts_left == opt.restarts;
            result.x = simplex[0];
            result.f = std::min(result.f, cost[0]);
            if (restarts_left > 0 && (first_pass || improved)) {
                --restarts_left;
                build_simplex(result.x, result.f);
                order();
                continue;
            }
            result.converged = true;
            return result;
        }
        ++result.iterations;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (Eigen::Index i = 0; i < dim; ++i)
            centroid += simplex[i];
        centroid /= static_cast<double>(dim);

        const Eigen::VectorXd& worst = simplex[dim];
        const Eigen::VectorXd reflected = centroid + (centroid - worst);
        const double f_reflected = objective(reflected);

        if (f_reflected < cost[0]) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - worst);
            const double f_expanded = objective(expanded);
            if (f_expanded < f_reflected) {
                simplex[dim] = expanded;
                cost[dim] = f_expanded;
            } else {
                simplex[dim] = reflected;
                cost[dim] = f_reflected;
            }
        } else if (f_reflected < cost[dim - 1]) {
            simplex[dim] = reflected;
            cost[dim] = f_reflected;
        } else {
            const bool outside = f_reflected < cost[dim];
            const Eigen::VectorXd contracted =
                outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid)) : Eigen::VectorXd(centroid + 0.5 * (worst - centroid));
            const double f_contracted = objective(contracted);
            if (f_contracted < (outside ? f_reflected : cost[dim])) {
                simplex[dim] = contracted;
                cost[dim] = f_contracted;
            } else {
                for (Eigen::Index i = 1; i <= dim; ++i) {
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                    cost[i] = objective(simplex[i]);
                }
            }
        }
        order();
    }

    if (cost[0] < result.f) {
        result.x = simplex[0];
        result.f = cost[0];
    }
    result.converged = false;
    return result;
}

} // namespace rislocsync
