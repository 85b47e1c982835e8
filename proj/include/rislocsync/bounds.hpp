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

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>

// Fisher information in the channel domain, its transformation to the
// location domain, and the position / clock-offset error bounds.

namespace rislocsync
{

using channel_fim = Eigen::Matrix<double, channel_params::size, channel_params::size>;
using location_fim = Eigen::Matrix<double, location_params::size, location_params::size>;
using transform_matrix = Eigen::Matrix<double, location_params::size, channel_params::size>;
using signal_gradient_vector = Eigen::Matrix<cplx, channel_params::size, 1>;

struct fim_location_result
{
    location_fim j_eta;
    transform_matrix t;
};

struct bounds_report
{
    double peb = 0.0; // meters
    double ceb = 0.0; // seconds
    location_fim psi; // J_eta^-1
};

namespace detail
{

// Gradient of m^g[n] w.r.t. gamma for a given transmitted vector s^g[n] and
// RIS diagonal Omega^g.
inline signal_gradient_vector signal_gradient_at(const cvector& s_gn, const cvector& ris_diag, int n,
                                                 const channel_params& gamma, const known_ris_path& known,
                                                 const scenario_config& s)
{
    const double sol = s.spacing_over_lambda();
    const double kappa = s.subcarrier_rate(n);
    const double amp = std::sqrt(s.power_w);

    const cplx los_phase = amp * std::polar(1.0, gamma.phi_bm - kappa * gamma.tau_bm);
    const cplx los = los_phase * steering_vector(gamma.theta_bm, s.bs_antennas, sol).cwiseProduct(s_gn).sum();
    const cplx los_d = los_phase * steering_vector_derivative(gamma.theta_bm, s.bs_antennas, sol).cwiseProduct(s_gn).sum();

    // a^T Omega A s, with the RIS diagonal folded into the steering vector
    const cvector at_ris = known.coupling * s_gn;
    const cvector ar = steering_vector(gamma.theta_rm, s.ris_elements, sol).cwiseProduct(ris_diag);
    const cvector dar = steering_vector_derivative(gamma.theta_rm, s.ris_elements, sol).cwiseProduct(ris_diag);
    const cplx ris_phase = amp * std::polar(1.0, gamma.phi_r - kappa * (known.tau_br + gamma.tau_rm));
    const cplx ris = ris_phase * ar.cwiseProduct(at_ris).sum();
    const cplx ris_d = ris_phase * dar.cwiseProduct(at_ris).sum();

    signal_gradient_vector d;
    d[0] = -imag_unit * kappa * gamma.rho_bm * los;
    d[1] = gamma.rho_bm * los_d;
    d[2] = los;
    d[3] = imag_unit * gamma.rho_bm * los;
    d[4] = -imag_unit * kappa * gamma.rho_r * ris;
    d[5] = gamma.rho_r * ris_d;
    d[6] = ris;
    d[7] = imag_unit * gamma.rho_r * ris;
    return d;
}

} // namespace detail

// Analytic d m^g[n] / d gamma.
inline signal_gradient_vector signal_gradient(int g, int n, const channel_params& gamma, const known_ris_path& known,
                                              const precoding_config& pc, const scenario_config& s)
{
    if (g < 0 || g >= pc.transmissions() || n < 0 || n >= s.subcarriers)
        throw dimension_mismatch("signal_gradient index out of range");
    const cvector s_gn = pc.beamformer * pc.pilots[g].col(n);
    return detail::signal_gradient_at(s_gn, pc.ris_diagonal(g), n, gamma, known, s);
}

// J_gamma = (2 / sigma^2) sum_g sum_n Re{ (dm/dgamma)^H (dm/dgamma) }
inline channel_fim fim_channel(const channel_params& gamma, const known_ris_path& known, const precoding_config& pc,
                               const scenario_config& s)
{
    if (!(s.noise_variance > 0.0))
        throw std::invalid_argument("noise variance must be > 0");
    channel_fim j = channel_fim::Zero();
    for (int g = 0; g < pc.transmissions(); ++g) {
        const cmatrix S = pc.transmitted(g);
        const cvector ris_diag = pc.ris_diagonal(g);
        for (int n = 0; n < s.subcarriers; ++n) {
            const signal_gradient_vector d = detail::signal_gradient_at(S.col(n), ris_diag, n, gamma, known, s);
            j += (d.conjugate() * d.transpose()).real();
        }
    }
    j *= 2.0 / s.noise_variance;
    return 0.5 * (j + j.transpose());
}

// T = d gamma^T / d eta; rows follow eta, columns follow gamma.
inline transform_matrix jacobian_t(const vec2& ms_position, const scenario_config& s)
{
    const vec2 p = ms_position - s.bs_position;
    const vec2 pr = p - s.ris_relative();
    const double dp = p.norm();
    const double dpr = pr.norm();
    if (dp == 0.0)
        throw coincident_nodes("MS and BS are coincident");
    if (dpr == 0.0)
        throw coincident_nodes("MS and RIS are coincident");

    const double c = speed_of_light;
    transform_matrix t = transform_matrix::Zero();
    // d tau_BM, d theta_BM
    t(0, 0) = p.x() / (c * dp);
    t(1, 0) = p.y() / (c * dp);
    t(0, 1) = -p.y() / (dp * dp);
    t(1, 1) = p.x() / (dp * dp);
    // d tau_RM, d theta_RM
    t(0, 4) = pr.x() / (c * dpr);
    t(1, 4) = pr.y() / (c * dpr);
    t(0, 5) = -pr.y() / (dpr * dpr);
    t(1, 5) = pr.x() / (dpr * dpr);
    // amplitudes and phases pass through
    t(2, 2) = 1.0;
    t(3, 3) = 1.0;
    t(4, 6) = 1.0;
    t(5, 7) = 1.0;
    // clock offset shifts both delays
    t(6, 0) = 1.0;
    t(6, 4) = 1.0;
    return t;
}

inline fim_location_result fim_location(const channel_fim& j_gamma, const vec2& ms_position, const scenario_config& s)
{
    fim_location_result out;
    out.t = jacobian_t(ms_position, s);
    const location_fim j = out.t * j_gamma * out.t.transpose();
    out.j_eta = 0.5 * (j + j.transpose());
    return out;
}

inline constexpr double min_reciprocal_condition = 1e-14;

// Inverse of a symmetric FIM through the eigendecomposition of its
// diagonally equilibrated form D J D, D = diag(J)^{-1/2}. The conditioning
// test is applied to D J D so that mixed units (seconds vs meters) do not
// read as singularity.
template <typename Matrix>
Matrix symmetric_fim_inverse(const Matrix& j)
{
    const Eigen::SelfAdjointEigenSolver<Matrix> raw(j, Eigen::EigenvaluesOnly);
    const double smallest = raw.eigenvalues()[0];

    const auto diag = j.diagonal();
    if ((diag.array() <= 0.0).any() || !diag.allFinite())
        throw singular_fim(smallest, 0.0);

    const auto d = diag.cwiseSqrt().cwiseInverse().eval();
    const Matrix c = d.asDiagonal() * j * d.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
    const auto& lambda = eig.eigenvalues();
    const double rcond = lambda[0] / lambda[lambda.size() - 1];
    if (!(rcond > min_reciprocal_condition))
        throw singular_fim(smallest, rcond);

    const Matrix c_inv = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    Matrix psi = d.asDiagonal() * c_inv * d.asDiagonal();
    return 0.5 * (psi + psi.transpose());
}

inline bounds_report bounds_from_fim(const location_fim& j_eta)
{
    bounds_report b;
    b.psi = symmetric_fim_inverse(j_eta);
    b.peb = std::sqrt(b.psi(0, 0) + b.psi(1, 1));
    b.ceb = std::sqrt(b.psi(6, 6));
    return b;
}

// PEB / CEB for the scenario's true MS position under the given precoding.
inline bounds_report compute_bounds(const scenario_config& s, const precoding_config& pc)
{
    validate(s);
    validate_precoding(pc, s);
    const auto [gamma, known] = geometry_to_params(s);
    const channel_fim j_gamma = fim_channel(gamma, known, pc, s);
    return bounds_from_fim(fim_location(j_gamma, s.ms_position, s).j_eta);
}

} // namespace rislocsync
