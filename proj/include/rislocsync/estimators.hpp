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

#include <rislocsync/delay.hpp>
#include <rislocsync/model.hpp>
#include <rislocsync/optimize.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

// Joint ML estimation of (p, delta) with the path amplitudes profiled out,
// and the relaxed estimator that treats the per-subcarrier delay phasors
// as unstructured and recovers delays and clock offset afterwards.

namespace rislocsync
{

// Position and clock offset hypothesis Theta = [p_x, p_y, delta].
struct theta
{
    vec2 position;
    double delta = 0.0;
};

struct search_region
{
    double x_min = 0.0;
    double x_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;

    bool contains(const vec2& p) const { return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max; }

    vec2 clamp(const vec2& p) const { return {std::clamp(p.x(), x_min, x_max), std::clamp(p.y(), y_min, y_max)}; }

    bool valid() const { return x_max > x_min && y_max > y_min; }

    bool operator==(const search_region&) const = default;
};

// Both arrays resolve only sin(angle), so each bearing has a mirror image
// across the array axis. The region between the BS and the RIS along x
// keeps only the true intersection of the two bearings.
inline search_region default_search_region(const scenario_config& s)
{
    const vec2 q = s.bs_position;
    const vec2 r = s.ris_position;
    const double margin = 0.5 * (r - q).norm();
    return {std::min(q.x(), r.x()), std::max(q.x(), r.x()), std::min(q.y(), r.y()) - margin, std::max(q.y(), r.y()) + margin};
}

struct theta_estimate
{
    vec2 p_hat = vec2::Zero();
    double delta_hat = 0.0;
    std::optional<Eigen::Vector2cd> alpha_hat; // (alpha_BM, alpha_R), set when converged
    double cost = 0.0;
    double noise_variance_hat = 0.0;
    int iterations = 0;
    bool converged = false;
};

// A refined local minimum of the relaxed cost.
struct rml_candidate
{
    vec2 p_hat = vec2::Zero();
    double delta_hat = 0.0;
    double cost = 0.0;
};

struct rml_estimate
{
    vec2 p_hat = vec2::Zero();
    double tau_bm_hat = 0.0;
    double tau_r_hat = 0.0;
    double delta_hat = 0.0;
    cvector e_hat; // [e_BM; e_R], length 2N
    double cost = 0.0;
    bool ambiguous_minimum = false;
    bool on_boundary = false;
    bool refinement_converged = false;
    // refined search starts, lowest relaxed cost first; candidates[0] is p_hat
    std::vector<rml_candidate> candidates;
};

// Per-observation precomputation shared by every cost evaluation. Holds
// S^g, the known BS -> RIS hop factored as (Omega^g a_RIS(phi_BR)) and
// (a_BS^T(theta_BR) S^g), and kappa_n.
class signal_model
{
public:
    explicit signal_model(const observation_set& obs)
        : obs_(&obs), system_(obs.meta), known_(make_known_ris_path(obs.meta))
    {
        validate_system(system_);
        if (!(system_.power_w > 0.0))
            throw std::invalid_argument("estimators need a positive transmit power");
        const precoding_config& pc = obs.precoding;
        validate_precoding(pc, system_);
        if (obs.y.rows() != system_.transmissions || obs.y.cols() != system_.subcarriers)
            throw dimension_mismatch("observation matrix must be G x N");

        const double sol = system_.spacing_over_lambda();
        const cvector a_bs_ris = steering_vector(known_.theta_br, system_.bs_antennas, sol);
        const cvector a_ris_in = steering_vector(known_.phi_br, system_.ris_elements, sol);
        for (int g = 0; g < system_.transmissions; ++g) {
            transmitted_.push_back(pc.transmitted(g));
            ris_hop_.push_back(a_bs_ris.transpose() * transmitted_.back());
            ris_incident_.push_back(pc.ris_diagonal(g).cwiseProduct(a_ris_in));
        }
        kappa_.resize(system_.subcarriers);
        for (int n = 0; n < system_.subcarriers; ++n)
            kappa_[n] = system_.subcarrier_rate(n);
        y_energy_ = obs.y.squaredNorm();
    }

    const observation_set& observations() const { return *obs_; }
    const scenario_config& system() const { return system_; }
    const known_ris_path& known() const { return known_; }
    int transmissions() const { return system_.transmissions; }
    int subcarriers() const { return system_.subcarriers; }
    double kappa(int n) const { return kappa_[n]; }
    double observation_energy() const { return y_energy_; }

    double theta_bm(const vec2& p) const
    {
        const vec2 d = p - system_.bs_position;
        return std::atan2(d.y(), d.x());
    }

    double theta_rm(const vec2& p) const
    {
        const vec2 d = p - system_.ris_position;
        return std::atan2(d.y(), d.x());
    }

    double tau_bm(const vec2& p, double delta) const { return (p - system_.bs_position).norm() / speed_of_light + delta; }

    double tau_r(const vec2& p, double delta) const
    {
        return ((system_.ris_position - system_.bs_position).norm() + (p - system_.ris_position).norm()) / speed_of_light + delta;
    }

    // G x N, entry (g, n) = a_BS^T(theta) s^g[n]
    cmatrix los_response(double theta_bm) const
    {
        const crow a = steering_vector(theta_bm, system_.bs_antennas, system_.spacing_over_lambda()).transpose();
        cmatrix out(transmissions(), subcarriers());
        for (int g = 0; g < transmissions(); ++g)
            out.row(g) = a * transmitted_[g];
        return out;
    }

    // G x N, entry (g, n) = a_RIS^T(theta) Omega^g A s^g[n]
    cmatrix ris_response(double theta_rm) const
    {
        const cvector a = steering_vector(theta_rm, system_.ris_elements, system_.spacing_over_lambda());
        cmatrix out(transmissions(), subcarriers());
        for (int g = 0; g < transmissions(); ++g)
            out.row(g) = a.cwiseProduct(ris_incident_[g]).sum() * ris_hop_[g];
        return out;
    }

    // Row of exp(-j kappa_n tau).
    crow delay_phasor(double tau) const
    {
        crow out(subcarriers());
        for (int n = 0; n < subcarriers(); ++n)
            out[n] = std::polar(1.0, -kappa_[n] * tau);
        return out;
    }

private:
    const observation_set* obs_;
    scenario_config system_;
    known_ris_path known_;
    std::vector<cmatrix> transmitted_;
    std::vector<crow> ris_hop_;
    std::vector<cvector> ris_incident_;
    Eigen::VectorXd kappa_;
    double y_energy_ = 0.0;
};

namespace detail
{

// The two columns of every B^g, as G x N arrays.
struct stacked_columns
{
    cmatrix los;
    cmatrix ris;
};

inline stacked_columns ml_columns(const signal_model& model, const theta& th)
{
    stacked_columns c;
    c.los = model.los_response(model.theta_bm(th.position));
    c.ris = model.ris_response(model.theta_rm(th.position));
    const crow d_bm = model.delay_phasor(model.tau_bm(th.position, th.delta));
    const crow d_r = model.delay_phasor(model.tau_r(th.position, th.delta));
    for (int g = 0; g < model.transmissions(); ++g) {
        c.los.row(g).array() *= d_bm.array();
        c.ris.row(g).array() *= d_r.array();
    }
    return c;
}

inline constexpr double max_gram_condition = 1e12;

// sqrt(P) alpha_hat for the stacked columns; throws degenerate_geometry.
inline Eigen::Vector2cd scaled_alpha(const stacked_columns& c, const cmatrix& y)
{
    Eigen::Matrix2cd gram;
    gram(0, 0) = c.los.squaredNorm();
    gram(1, 1) = c.ris.squaredNorm();
    gram(0, 1) = (c.los.conjugate().cwiseProduct(c.ris)).sum();
    gram(1, 0) = std::conj(gram(0, 1));
    Eigen::Vector2cd rhs;
    rhs[0] = (c.los.conjugate().cwiseProduct(y)).sum();
    rhs[1] = (c.ris.conjugate().cwiseProduct(y)).sum();

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()[0];
    const double hi = eig.eigenvalues()[1];
    if (!(hi > 0.0) || !(lo > 0.0) || hi / lo > max_gram_condition)
        throw degenerate_geometry("amplitude Gram matrix is ill-conditioned");
    return gram.inverse() * rhs;
}

} // namespace detail

// B^g (N x 2): column 1 = (S~_BM^g)^T a_BS(theta_BM), column 2 = (S~_R^g)^T A^T Omega^g a_RIS(theta_RM).
inline cmatrix build_b(int g, const theta& th, const signal_model& model)
{
    if (g < 0 || g >= model.transmissions())
        throw dimension_mismatch("transmission index out of range");
    const detail::stacked_columns c = detail::ml_columns(model, th);
    cmatrix b(model.subcarriers(), 2);
    b.col(0) = c.los.row(g).transpose();
    b.col(1) = c.ris.row(g).transpose();
    return b;
}

// alpha_hat = (1 / sqrt(P)) B^-1 sum_g (B^g)^H y^g
inline Eigen::Vector2cd profile_alpha(const theta& th, const signal_model& model)
{
    return detail::scaled_alpha(detail::ml_columns(model, th), model.observations().y) / std::sqrt(model.system().power_w);
}

// L(Theta) = sum_g || y^g - sqrt(P) B^g alpha_hat(Theta) ||^2
inline double ml_cost(const theta& th, const signal_model& model, Eigen::Vector2cd* alpha_out = nullptr)
{
    const detail::stacked_columns c = detail::ml_columns(model, th);
    const cmatrix& y = model.observations().y;
    const Eigen::Vector2cd a = detail::scaled_alpha(c, y);
    if (alpha_out != nullptr)
        *alpha_out = a / std::sqrt(model.system().power_w);
    return (y - a[0] * c.los - a[1] * c.ris).squaredNorm();
}

struct ml_options
{
    nelder_mead_options optimizer{};
    // initial simplex edge in meters: arc length of the bearing, LOS pseudo-range, BS-MS range
    double position_step = 0.1;
    double range_offset_step = 0.5;
    int max_starts = 6; // relaxed candidates used as starts by locate
};

namespace detail
{

// The search runs in (theta_BM, c tau_BM, |p - q|): the LOS path alone pins
// the first two, which keeps the weakly determined direction (sliding along
// the bearing while the clock offset compensates) on one axis.
inline Eigen::Vector3d to_los_coordinates(const theta& th, const scenario_config& s)
{
    const vec2 d = th.position - s.bs_position;
    return {std::atan2(d.y(), d.x()), d.norm() + speed_of_light * th.delta, d.norm()};
}

inline theta from_los_coordinates(const Eigen::VectorXd& x, const scenario_config& s)
{
    const double range = x[2];
    return {s.bs_position + range * vec2(std::cos(x[0]), std::sin(x[0])), (x[1] - range) / speed_of_light};
}

} // namespace detail

// Local minimization of L over Theta from `init`. When a region is given,
// positions outside it are infeasible.
inline theta_estimate ml_estimate(const signal_model& model, const theta& init, const ml_options& opt = {},
                                  const std::optional<search_region>& region = std::nullopt)
{
    const scenario_config& s = model.system();
    auto objective = [&](const Eigen::VectorXd& x) {
        if (!(x[2] > 0.0))
            return std::numeric_limits<double>::infinity();
        const theta th = detail::from_los_coordinates(x, s);
        if (region && !region->contains(th.position))
            return std::numeric_limits<double>::infinity();
        try {
            return ml_cost(th, model);
        } catch (const degenerate_geometry&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    nelder_mead_options nm = opt.optimizer;
    if (nm.f_absolute_tolerance == 0.0)
        nm.f_absolute_tolerance = std::numeric_limits<double>::epsilon() * model.observation_energy();

    const Eigen::Vector3d start = detail::to_los_coordinates(init, s);
    const double range = std::max(start[2], opt.position_step);
    const Eigen::Vector3d step(opt.position_step / range, opt.range_offset_step, opt.position_step);
    const nelder_mead_result r = nelder_mead(objective, start, step, nm);

    const theta best = detail::from_los_coordinates(r.x, s);
    theta_estimate est;
    est.p_hat = best.position;
    est.delta_hat = best.delta;
    est.iterations = r.iterations;
    est.converged = r.converged && std::isfinite(r.f);
    est.cost = r.f;
    const int samples = model.transmissions() * model.subcarriers();
    est.noise_variance_hat = r.f / samples;
    if (est.converged)
        est.alpha_hat = profile_alpha(best, model);
    return est;
}

// Clock offset minimizing L at a fixed position, scanned over one symbol
// period (delays are identifiable modulo N T) in steps of T / oversample.
inline double best_offset_at(const vec2& p, const signal_model& model, int oversample = 4)
{
    const scenario_config& s = model.system();
    const double base = -(p - s.bs_position).norm() / speed_of_light;
    const int steps = oversample * s.subcarriers;
    double best = base;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int i = 0; i < steps; ++i) {
        const double delta = base + i * s.symbol_period() / steps;
        double c = std::numeric_limits<double>::infinity();
        try {
            c = ml_cost({p, delta}, model);
        } catch (const degenerate_geometry&) {
        }
        if (c < best_cost) {
            best_cost = c;
            best = delta;
        }
    }
    return best;
}

// Phi(p), GN x 2N: block row g = [diag(a_BS^T S^g), diag(a_RIS^T Omega^g A S^g)].
inline cmatrix build_phi(const vec2& p, const signal_model& model)
{
    const int G = model.transmissions();
    const int N = model.subcarriers();
    if (G < 2)
        throw insufficient_transmissions("the relaxed model needs at least 2 transmissions");
    const cmatrix los = model.los_response(model.theta_bm(p));
    const cmatrix ris = model.ris_response(model.theta_rm(p));
    cmatrix phi = cmatrix::Zero(static_cast<Eigen::Index>(G) * N, 2 * N);
    for (int g = 0; g < G; ++g)
        for (int n = 0; n < N; ++n) {
            phi(g * N + n, n) = los(g, n);
            phi(g * N + n, N + n) = ris(g, n);
        }
    return phi;
}

namespace detail
{

inline constexpr double min_rank_ratio = 1e-10;

struct relaxed_fit
{
    cvector e;
    double residual = 0.0;
};

// Phi is block diagonal over subcarriers after a row/column permutation,
// so the least-squares fit splits into N independent G x 2 problems,
// each solved by Householder QR.
inline relaxed_fit relaxed_least_squares_bearings(double theta_bm, double theta_rm, const signal_model& model)
{
    const int G = model.transmissions();
    const int N = model.subcarriers();
    if (G < 2)
        throw insufficient_transmissions("the relaxed model needs at least 2 transmissions");
    const cmatrix los = model.los_response(theta_bm);
    const cmatrix ris = model.ris_response(theta_rm);
    const cmatrix& y = model.observations().y;

    relaxed_fit fit;
    fit.e.resize(2 * N);
    Eigen::MatrixX2cd a(G, 2);
    for (int n = 0; n < N; ++n) {
        a.col(0) = los.col(n);
        a.col(1) = ris.col(n);
        const Eigen::Vector2d scale(a.col(0).norm(), a.col(1).norm());
        if (!(scale[0] > 0.0) || !(scale[1] > 0.0))
            throw rank_deficient("relaxed dictionary has a zero column");
        const Eigen::MatrixX2cd normalized = a * scale.cwiseInverse().asDiagonal();
        const Eigen::HouseholderQR<Eigen::MatrixX2cd> qr(normalized);
        const auto& rr = qr.matrixQR();
        if (std::abs(rr(1, 1)) < min_rank_ratio * std::abs(rr(0, 0)))
            throw rank_deficient("relaxed dictionary is rank deficient");
        const Eigen::Vector2cd z = qr.solve(y.col(n));
        const Eigen::Vector2cd e_n = z.cwiseQuotient(scale.cast<cplx>());
        fit.e[n] = e_n[0];
        fit.e[N + n] = e_n[1];
        fit.residual += (y.col(n) - normalized * z).squaredNorm();
    }
    return fit;
}

inline relaxed_fit relaxed_least_squares(const vec2& p, const signal_model& model)
{
    return relaxed_least_squares_bearings(model.theta_bm(p), model.theta_rm(p), model);
}

// Residual of the per-subcarrier fit with one path column alone
// (the LOS response or the RIS response at a single bearing).
inline double single_path_residual(const cmatrix& columns, const signal_model& model)
{
    const cmatrix& y = model.observations().y;
    double residual = 0.0;
    for (Eigen::Index n = 0; n < y.cols(); ++n) {
        const double energy = columns.col(n).squaredNorm();
        const double fitted = energy > 0.0 ? std::norm(columns.col(n).dot(y.col(n))) / energy : 0.0;
        residual += std::max(0.0, y.col(n).squaredNorm() - fitted);
    }
    return residual;
}

// Indices of the local minima of a sampled 1D profile, cheapest first.
inline std::vector<int> profile_minima(const std::vector<double>& v, int keep)
{
    std::vector<int> idx;
    const int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(v[i]))
            continue;
        const bool left = i == 0 || v[i] < v[i - 1];
        const bool right = i == n - 1 || v[i] <= v[i + 1];
        if (left && right)
            idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    if (static_cast<int>(idx.size()) > keep)
        idx.resize(keep);
    return idx;
}

} // namespace detail

// || P_perp(Phi(p)) y ||^2
inline double rml_cost(const vec2& p, const signal_model& model)
{
    return detail::relaxed_least_squares(p, model).residual;
}

// e_hat = Phi(p)^+ y
inline cvector estimate_e(const vec2& p, const signal_model& model)
{
    return detail::relaxed_least_squares(p, model).e;
}

// Delays of the two halves of e_hat, each in [0, N T).
inline std::pair<double, double> delays_from_e(const cvector& e_hat, const scenario_config& s)
{
    const int N = s.subcarriers;
    if (e_hat.size() != 2 * N)
        throw dimension_mismatch("e_hat must have length 2N");
    const double period = s.symbol_period();
    return {delay_from_exponential(e_hat.head(N), period), delay_from_exponential(e_hat.tail(N), period)};
}

// delta_hat = 1/2 [tau_BM - |p|/c + tau_R - (|r| + |r - p|)/c], positions relative to the BS.
inline double clock_offset(const vec2& p_rel, double tau_bm_hat, double tau_r_hat, const vec2& r_rel)
{
    const double c = speed_of_light;
    return 0.5 * (tau_bm_hat - p_rel.norm() / c + tau_r_hat - (r_rel.norm() + (r_rel - p_rel).norm()) / c);
}

struct rml_options
{
    int grid_points_x = 50;
    int grid_points_y = 50;
    double refine_tolerance = 1e-4;          // meters, upper bound on the final step
    double refine_bearing_tolerance = 1e-10; // rad
    int refine_max_iterations = 2000;
    double ambiguity_fraction = 0.01; // cells within 1% of the minimum ...
    int ambiguity_cells = 2;          // ... more than this many cells away
    int max_candidates = 5;           // grid local minima refined
    int bearing_scan_points = 400;    // per bearing, over its span across the region
    int bearing_candidates = 3;       // local minima kept per bearing scan
};

namespace detail
{

// Range of bearings from `node` covering a rectangle (full circle when the
// node lies strictly inside it).
inline std::pair<double, double> bearing_span(const vec2& node, const search_region& region)
{
    const bool inside = node.x() > region.x_min && node.x() < region.x_max && node.y() > region.y_min && node.y() < region.y_max;
    if (inside)
        return {-pi, pi};
    const vec2 centre(0.5 * (region.x_min + region.x_max), 0.5 * (region.y_min + region.y_max));
    const double ref = std::atan2(centre.y() - node.y(), centre.x() - node.x());
    double lo = 0.0, hi = 0.0;
    for (const vec2& corner : {vec2(region.x_min, region.y_min), vec2(region.x_max, region.y_min),
                               vec2(region.x_min, region.y_max), vec2(region.x_max, region.y_max)}) {
        const vec2 d = corner - node;
        if (d.norm() == 0.0)
            continue;
        const double a = wrap_angle(std::atan2(d.y(), d.x()) - ref);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    return {ref + lo, ref + hi};
}

inline double cross(const vec2& a, const vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Intersection of the ray from q at theta_bm with the ray from r at theta_rm.
inline std::optional<vec2> bearing_intersection(const vec2& q, double theta_bm, const vec2& r, double theta_rm)
{
    const vec2 u1(std::cos(theta_bm), std::sin(theta_bm));
    const vec2 u2(std::cos(theta_rm), std::sin(theta_rm));
    const double det = cross(u1, u2);
    if (std::abs(det) < 1e-9)
        return std::nullopt;
    const vec2 d = r - q;
    const double t = cross(d, u2) / det;
    const double s = cross(d, u1) / det;
    if (!(t > 0.0) || !(s > 0.0))
        return std::nullopt;
    return q + t * u1;
}

} // namespace detail

// The relaxed cost depends on p only through the bearings theta_BM(p) and
// theta_RM(p). In noise-free or high-SNR data its LOS part is much narrower
// in theta_BM than a grid cell, so grid minima alone land on wrong bearings.
// Besides the grid minima, starts come from a dense scan of each bearing with
// its path column alone followed by a scan of the other bearing along each
// kept ray; all starts are refined in bearing coordinates and the lowest
// cost wins.
inline rml_estimate rml_estimate_position(const signal_model& model, const search_region& region, const rml_options& opt = {})
{
    if (model.transmissions() < 2)
        throw insufficient_transmissions("the relaxed estimator needs at least 2 transmissions");
    if (!region.valid())
        throw std::invalid_argument("search region is empty");
    if (opt.grid_points_x < 1 || opt.grid_points_y < 1 || opt.bearing_scan_points < 2)
        throw std::invalid_argument("search grid is too small");

    const scenario_config& s = model.system();
    const vec2 q = s.bs_position;
    const vec2 r = s.ris_position;
    const double inf = std::numeric_limits<double>::infinity();
    auto safe_cost = [&](const vec2& p) {
        try {
            return rml_cost(p, model);
        } catch (const rank_deficient&) {
            return inf;
        }
    };

    // coarse grid over the region; lowest linear index wins ties
    const int nx = opt.grid_points_x;
    const int ny = opt.grid_points_y;
    const double dx = (region.x_max - region.x_min) / nx;
    const double dy = (region.y_max - region.y_min) / ny;
    auto cell_centre = [&](int ix, int iy) { return vec2(region.x_min + (ix + 0.5) * dx, region.y_min + (iy + 0.5) * dy); };
    std::vector<double> grid(static_cast<std::size_t>(nx) * ny);
    int best = 0;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            const int idx = iy * nx + ix;
            grid[idx] = safe_cost(cell_centre(ix, iy));
            if (grid[idx] < grid[best])
                best = idx;
        }
    if (!std::isfinite(grid[best]))
        throw rank_deficient("relaxed dictionary is rank deficient over the whole search region");

    rml_estimate est;
    const int bx = best % nx;
    const int by = best / nx;
    const double threshold = grid[best] * (1.0 + opt.ambiguity_fraction);
    for (int idx = 0; idx < nx * ny && !est.ambiguous_minimum; ++idx) {
        const int ix = idx % nx;
        const int iy = idx / nx;
        if (grid[idx] <= threshold && std::max(std::abs(ix - bx), std::abs(iy - by)) > opt.ambiguity_cells)
            est.ambiguous_minimum = true;
    }

    // grid cells that are minima of their 8-neighbourhood, cheapest first
    std::vector<int> minima;
    for (int idx = 0; idx < nx * ny; ++idx) {
        if (!std::isfinite(grid[idx]))
            continue;
        const int ix = idx % nx;
        const int iy = idx / nx;
        bool is_min = true;
        for (int jy = std::max(0, iy - 1); jy <= std::min(ny - 1, iy + 1) && is_min; ++jy)
            for (int jx = std::max(0, ix - 1); jx <= std::min(nx - 1, ix + 1); ++jx) {
                const int j = jy * nx + jx;
                if (j != idx && (grid[j] < grid[idx] || (grid[j] == grid[idx] && j < idx))) {
                    is_min = false;
                    break;
                }
            }
        if (is_min)
            minima.push_back(idx);
    }
    std::stable_sort(minima.begin(), minima.end(), [&](int a, int b) { return grid[a] < grid[b]; });
    if (static_cast<int>(minima.size()) > std::max(1, opt.max_candidates))
        minima.resize(std::max(1, opt.max_candidates));

    std::vector<Eigen::Vector2d> starts;
    for (int idx : minima) {
        const vec2 p = cell_centre(idx % nx, idx / nx);
        starts.emplace_back(model.theta_bm(p), model.theta_rm(p));
    }

    // decoupled bearing scans: one path alone over its bearing, then the
    // other bearing along each kept ray with the full relaxed cost
    const std::array<std::pair<double, double>, 2> span = {detail::bearing_span(q, region), detail::bearing_span(r, region)};
    const int nb = opt.bearing_scan_points;
    const std::array<double, 2> step = {(span[0].second - span[0].first) / nb, (span[1].second - span[1].first) / nb};
    auto sample = [&](int path, int i) { return span[path].first + (i + 0.5) * step[path]; };
    auto path_residual = [&](int path, double angle) {
        return detail::single_path_residual(path == 0 ? model.los_response(angle) : model.ris_response(angle), model);
    };
    for (int path = 0; path < 2; ++path) {
        const int other = 1 - path;
        std::vector<double> scan(nb);
        for (int i = 0; i < nb; ++i)
            scan[i] = path_residual(path, sample(path, i));
        for (int i : detail::profile_minima(scan, opt.bearing_candidates)) {
            nelder_mead_options nm1;
            nm1.max_iterations = opt.refine_max_iterations;
            nm1.x_tolerance = opt.refine_bearing_tolerance;
            nm1.f_relative_tolerance = inf;
            nm1.restarts = 0;
            const double angle = nelder_mead([&](const Eigen::VectorXd& t) { return path_residual(path, t[0]); },
                                             Eigen::VectorXd::Constant(1, sample(path, i)),
                                             Eigen::VectorXd::Constant(1, 0.5 * step[path]), nm1)
                                     .x[0];
            std::vector<double> along(nb, inf);
            for (int j = 0; j < nb; ++j) {
                Eigen::Vector2d b;
                b[path] = angle;
                b[other] = sample(other, j);
                const std::optional<vec2> p = detail::bearing_intersection(q, b[0], r, b[1]);
                if (!p || !region.contains(*p))
                    continue;
                try {
                    along[j] = detail::relaxed_least_squares_bearings(b[0], b[1], model).residual;
                } catch (const rank_deficient&) {
                }
            }
            for (int j : detail::profile_minima(along, opt.bearing_candidates)) {
                Eigen::Vector2d b;
                b[path] = angle;
                b[other] = sample(other, j);
                starts.push_back(b);
            }
        }
    }

    // refinement in bearing coordinates; positions leaving the region are
    // evaluated at the nearest point of the region
    auto position_of = [&](const Eigen::VectorXd& b) -> std::optional<vec2> {
        const std::optional<vec2> p = detail::bearing_intersection(q, b[0], r, b[1]);
        if (!p)
            return std::nullopt;
        return region.clamp(*p);
    };
    auto objective = [&](const Eigen::VectorXd& b) {
        const std::optional<vec2> p = position_of(b);
        return p ? safe_cost(*p) : inf;
    };
    const double range_scale = std::max({(region.x_max - region.x_min), (region.y_max - region.y_min), 1e-3});
    nelder_mead_options nm;
    nm.max_iterations = opt.refine_max_iterations;
    nm.x_tolerance = std::min(opt.refine_bearing_tolerance, opt.refine_tolerance / (2.0 * range_scale));
    nm.f_relative_tolerance = inf;
    nm.restarts = 1;

    struct refined
    {
        vec2 p;
        double cost;
        bool converged;
    };
    std::vector<refined> runs;
    for (const Eigen::Vector2d& start : starts) {
        if (!position_of(start))
            continue;
        const nelder_mead_result res = nelder_mead(objective, start, Eigen::Vector2d(0.5 * step[0], 0.5 * step[1]), nm);
        const std::optional<vec2> p = position_of(res.x);
        if (p && std::isfinite(res.f))
            runs.push_back({*p, res.f, res.converged});
    }
    if (runs.empty()) {
        const vec2 p = cell_centre(bx, by);
        runs.push_back({p, grid[best], false});
    }
    std::stable_sort(runs.begin(), runs.end(), [](const refined& a, const refined& b) { return a.cost < b.cost; });

    std::vector<vec2> kept;
    for (const refined& run : runs) {
        // starts that refine to the same point are reported once
        if (std::any_of(kept.begin(), kept.end(), [&](const vec2& k) { return (k - run.p).norm() <= 10.0 * opt.refine_tolerance; }))
            continue;
        kept.push_back(run.p);
        const detail::relaxed_fit fit = detail::relaxed_least_squares(run.p, model);
        const auto [tau_bm, tau_r] = delays_from_e(fit.e, s);
        rml_candidate c;
        c.p_hat = run.p;
        c.cost = fit.residual;
        c.delta_hat = clock_offset(run.p - s.bs_position, tau_bm, tau_r, s.ris_relative());
        if (est.candidates.empty()) {
            est.p_hat = run.p;
            est.e_hat = fit.e;
            est.cost = fit.residual;
            est.tau_bm_hat = tau_bm;
            est.tau_r_hat = tau_r;
            est.delta_hat = c.delta_hat;
            est.refinement_converged = run.converged;
        }
        est.candidates.push_back(c);
    }

    const double edge = 1e-9 * std::max(region.x_max - region.x_min, region.y_max - region.y_min);
    est.on_boundary = est.p_hat.x() - region.x_min <= edge || region.x_max - est.p_hat.x() <= edge ||
                      est.p_hat.y() - region.y_min <= edge || region.y_max - est.p_hat.y() <= edge;
    return est;
}

struct joint_estimate
{
    rml_estimate relaxed;
    theta_estimate ml;
    int ml_start = 0; // index of the relaxed candidate the ML solution started from
};

// The relaxed estimate followed by the ML refinement. The ML search is
// started from the best max_starts relaxed candidates, once with its closed-form clock
// offset and once with the offset minimizing L at that position; the
// lowest likelihood cost wins.
inline joint_estimate locate(const signal_model& model, const search_region& region, const rml_options& ropt = {},
                             const ml_options& mopt = {})
{
    joint_estimate out;
    out.relaxed = rml_estimate_position(model, region, ropt);
    bool first = true;
    const std::size_t starts = std::min(out.relaxed.candidates.size(), static_cast<std::size_t>(std::max(1, mopt.max_starts)));
    for (std::size_t i = 0; i < starts; ++i) {
        const rml_candidate& c = out.relaxed.candidates[i];
        for (const double delta : {c.delta_hat, best_offset_at(c.p_hat, model)}) {
            theta_estimate est = ml_estimate(model, {c.p_hat, delta}, mopt, region);
            if (first || est.cost < out.ml.cost) {
                out.ml = std::move(est);
                out.ml_start = static_cast<int>(i);
                first = false;
            }
        }
    }
    return out;
}

} // namespace rislocsync
