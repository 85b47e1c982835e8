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

#include <rislocsync/errors.hpp>
#include <rislocsync/random.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Scenario description, geometry, per-path channels and observation
// synthesis for a downlink OFDM MISO link with one BS, one RIS and one
// single-antenna MS in the plane. All quantities are SI (seconds, meters,
// radians, watts).

namespace rislocsync
{

inline constexpr double speed_of_light = 299792458.0;
inline constexpr double pi = std::numbers::pi;

using cplx = std::complex<double>;
using vec2 = Eigen::Vector2d;
using cvector = Eigen::VectorXcd;
using crow = Eigen::RowVectorXcd;
using cmatrix = Eigen::MatrixXcd;

inline constexpr cplx imag_unit{0.0, 1.0};

// Wraps to (-pi, pi].
inline double wrap_angle(double angle)
{
    double w = std::remainder(angle, 2.0 * pi);
    if (w <= -pi)
        w += 2.0 * pi;
    return w;
}

// How the cascaded BS -> RIS -> MS amplitude is derived from geometry.
//  cascaded   : rho_R = rho_BR * rho_RM, each a free-space amplitude over its own hop
//  end_to_end : one free-space amplitude over the total path length |r| + |r - p|
enum class ris_amplitude_model
{
    cascaded,
    end_to_end,
};

inline double thermal_noise_variance(double noise_psd_dbm_hz, double bandwidth_hz)
{
    return std::pow(10.0, (noise_psd_dbm_hz - 30.0) / 10.0) * bandwidth_hz;
}

struct scenario_config
{
    vec2 bs_position{0.0, 0.0};
    vec2 ris_position{12.0, 7.0};
    vec2 ms_position{5.0, 5.0};
    double carrier_hz = 60e9;
    double bandwidth_hz = 40e6;
    int subcarriers = 30;
    int transmissions = 5;
    int bs_antennas = 20;
    int ris_elements = 20;
    int beams = 10;
    double power_w = 1.0;
    double noise_variance = thermal_noise_variance(-174.0, 40e6);
    double clock_offset_s = 93.75e-9;
    std::uint64_t rng_seed = 0;
    ris_amplitude_model ris_model = ris_amplitude_model::cascaded;
    double ris_amplitude_scale = 1.0;

    double sampling_period() const { return 1.0 / bandwidth_hz; }
    double symbol_period() const { return subcarriers * sampling_period(); }
    double wavelength() const { return speed_of_light / carrier_hz; }
    double element_spacing() const { return 0.5 * wavelength(); }
    double spacing_over_lambda() const { return element_spacing() / wavelength(); }

    // kappa_n = 2 pi n / (N T)
    double subcarrier_rate(int n) const { return 2.0 * pi * n / symbol_period(); }

    // Positions relative to the BS, which is the origin of all angle/delay formulas.
    vec2 ms_relative() const { return ms_position - bs_position; }
    vec2 ris_relative() const { return ris_position - bs_position; }

    bool operator==(const scenario_config&) const = default;
};

// Checks the parameters the estimators rely on (everything except the
// MS position and clock offset).
inline void validate_system(const scenario_config& s)
{
    auto require = [](bool ok, const char* what) {
        if (!ok)
            throw std::invalid_argument(what);
    };
    require(s.subcarriers >= 2, "subcarriers must be >= 2");
    require(s.transmissions >= 1, "transmissions must be >= 1");
    require(s.bs_antennas >= 1, "bs_antennas must be >= 1");
    require(s.ris_elements >= 1, "ris_elements must be >= 1");
    require(s.beams >= 1 && s.beams <= s.bs_antennas, "beams must be in [1, bs_antennas]");
    require(std::isfinite(s.carrier_hz) && s.carrier_hz > 0.0, "carrier frequency must be > 0");
    require(std::isfinite(s.bandwidth_hz) && s.bandwidth_hz > 0.0, "bandwidth must be > 0");
    require(std::isfinite(s.power_w) && s.power_w >= 0.0, "power must be >= 0");
    require(std::isfinite(s.noise_variance) && s.noise_variance > 0.0, "noise variance must be > 0");
    require(std::isfinite(s.ris_amplitude_scale) && s.ris_amplitude_scale >= 0.0, "ris amplitude scale must be >= 0");
    require(s.bs_position.allFinite() && s.ris_position.allFinite(), "positions must be finite");
    if ((s.ris_position - s.bs_position).norm() == 0.0)
        throw coincident_nodes("BS and RIS are coincident");
}

inline void validate(const scenario_config& s)
{
    validate_system(s);
    if (!s.ms_position.allFinite() || !std::isfinite(s.clock_offset_s))
        throw std::invalid_argument("MS position and clock offset must be finite");
    if ((s.ms_position - s.bs_position).norm() == 0.0)
        throw coincident_nodes("MS and BS are coincident");
    if ((s.ms_position - s.ris_position).norm() == 0.0)
        throw coincident_nodes("MS and RIS are coincident");
}

// The scenario as seen by an estimator: MS position and clock offset unknown.
inline scenario_config without_unknowns(scenario_config s)
{
    s.ms_position = vec2::Constant(std::numeric_limits<double>::quiet_NaN());
    s.clock_offset_s = std::numeric_limits<double>::quiet_NaN();
    return s;
}

// gamma = [tau_BM, theta_BM, rho_BM, phi_BM, tau_RM, theta_RM, rho_R, phi_R]
struct channel_params
{
    static constexpr int size = 8;
    using vector_type = Eigen::Matrix<double, size, 1>;

    double tau_bm = 0.0;
    double theta_bm = 0.0;
    double rho_bm = 0.0;
    double phi_bm = 0.0;
    double tau_rm = 0.0;
    double theta_rm = 0.0;
    double rho_r = 0.0;
    double phi_r = 0.0;

    vector_type to_vector() const
    {
        vector_type v;
        v << tau_bm, theta_bm, rho_bm, phi_bm, tau_rm, theta_rm, rho_r, phi_r;
        return v;
    }

    static channel_params from_vector(const vector_type& v)
    {
        return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    }
};

// eta = [p_x, p_y, rho_BM, phi_BM, rho_R, phi_R, delta]; p in absolute coordinates.
struct location_params
{
    static constexpr int size = 7;
    using vector_type = Eigen::Matrix<double, size, 1>;

    double px = 0.0;
    double py = 0.0;
    double rho_bm = 0.0;
    double phi_bm = 0.0;
    double rho_r = 0.0;
    double phi_r = 0.0;
    double delta = 0.0;

    vec2 position() const { return {px, py}; }

    vector_type to_vector() const
    {
        vector_type v;
        v << px, py, rho_bm, phi_bm, rho_r, phi_r, delta;
        return v;
    }

    static location_params from_vector(const vector_type& v)
    {
        return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
    }
};

// The BS -> RIS hop, fully determined by the known BS and RIS positions.
struct known_ris_path
{
    double tau_br = 0.0;
    double theta_br = 0.0;
    double phi_br = 0.0; // angle of arrival at the RIS
    cmatrix coupling;    // A = a_RIS(phi_BR) a_BS^T(theta_BR), N_R x N_BS
};

struct precoding_config
{
    cmatrix beamformer;                   // F, N_BS x M, unit Frobenius norm
    std::vector<cmatrix> pilots;          // per g: M x N, column n is x^g[n]
    std::vector<Eigen::VectorXd> ris_phases; // per g: omega^g, length N_R

    int transmissions() const { return static_cast<int>(pilots.size()); }

    // S^g = [s^g[0] ... s^g[N-1]] = F X^g
    cmatrix transmitted(int g) const { return beamformer * pilots.at(g); }

    // diagonal of Omega^g
    cvector ris_diagonal(int g) const
    {
        const Eigen::VectorXd& w = ris_phases.at(g);
        cvector d(w.size());
        for (Eigen::Index i = 0; i < w.size(); ++i)
            d[i] = std::polar(1.0, w[i]);
        return d;
    }
};

struct observation_set
{
    cmatrix y; // G x N
    precoding_config precoding;
    scenario_config meta; // MS position and clock offset are NaN
};

struct synthesis
{
    observation_set obs;
    cmatrix noise_free; // m^g[n], G x N
    channel_params truth;
    location_params truth_location;
    known_ris_path known;
};

// Element k = exp(j 2 pi (d / lambda) k sin(angle)).
inline cvector steering_vector(double angle, int num_elements, double spacing_over_lambda = 0.5)
{
    cvector a(num_elements);
    const double step = 2.0 * pi * spacing_over_lambda * std::sin(angle);
    for (int k = 0; k < num_elements; ++k)
        a[k] = std::polar(1.0, step * k);
    return a;
}

// d/d(angle) of steering_vector.
inline cvector steering_vector_derivative(double angle, int num_elements, double spacing_over_lambda = 0.5)
{
    cvector da = steering_vector(angle, num_elements, spacing_over_lambda);
    const double rate = 2.0 * pi * spacing_over_lambda * std::cos(angle);
    for (int k = 0; k < num_elements; ++k)
        da[k] *= imag_unit * (rate * k);
    return da;
}

inline known_ris_path make_known_ris_path(const scenario_config& s)
{
    const vec2 r = s.ris_relative();
    if (r.norm() == 0.0)
        throw coincident_nodes("BS and RIS are coincident");
    known_ris_path k;
    k.tau_br = r.norm() / speed_of_light;
    k.theta_br = std::atan2(r.y(), r.x());
    k.phi_br = wrap_angle(-pi + k.theta_br);
    k.coupling = steering_vector(k.phi_br, s.ris_elements, s.spacing_over_lambda()) *
                 steering_vector(k.theta_br, s.bs_antennas, s.spacing_over_lambda()).transpose();
    return k;
}

// Delays and angles of the channel parameters from a position, clock offset
// and path amplitudes. Delta is attached to tau_RM so that
// tau_R = tau_BR + tau_RM = (|r| + |r - p|)/c + delta.
inline channel_params channel_from_location(const location_params& eta, const scenario_config& s)
{
    const vec2 p = eta.position() - s.bs_position;
    const vec2 r = s.ris_relative();
    const vec2 pr = p - r;
    channel_params g;
    g.tau_bm = p.norm() / speed_of_light + eta.delta;
    g.theta_bm = std::atan2(p.y(), p.x());
    g.rho_bm = eta.rho_bm;
    g.phi_bm = eta.phi_bm;
    g.tau_rm = pr.norm() / speed_of_light + eta.delta;
    g.theta_rm = std::atan2(pr.y(), pr.x());
    g.rho_r = eta.rho_r;
    g.phi_r = eta.phi_r;
    return g;
}

// Free-space amplitude lambda / (4 pi d).
inline double free_space_amplitude(double wavelength, double distance)
{
    return wavelength / (4.0 * pi * distance);
}

struct path_phase_draw
{
    double phi_bm;
    double phi_br;
    double phi_rm;
};

// Uniform on (-pi, pi], drawn from the scenario seed.
inline path_phase_draw draw_path_phases(std::uint64_t seed)
{
    auto rng = substream(seed, stream_tag::path_phases);
    std::uniform_real_distribution<double> u(-pi, pi);
    path_phase_draw d{};
    d.phi_bm = wrap_angle(u(rng));
    d.phi_br = wrap_angle(u(rng));
    d.phi_rm = wrap_angle(u(rng));
    return d;
}

// The true location-domain parameters: amplitudes from free-space path loss,
// phases from the seeded stream.
inline location_params true_location(const scenario_config& s)
{
    validate(s);
    const vec2 p = s.ms_relative();
    const vec2 r = s.ris_relative();
    const double lambda = s.wavelength();
    const path_phase_draw ph = draw_path_phases(s.rng_seed);

    location_params eta;
    eta.px = s.ms_position.x();
    eta.py = s.ms_position.y();
    eta.rho_bm = free_space_amplitude(lambda, p.norm());
    eta.phi_bm = ph.phi_bm;
    switch (s.ris_model) {
    case ris_amplitude_model::cascaded:
        eta.rho_r = free_space_amplitude(lambda, r.norm()) * free_space_amplitude(lambda, (r - p).norm());
        break;
    case ris_amplitude_model::end_to_end:
        eta.rho_r = free_space_amplitude(lambda, r.norm() + (r - p).norm());
        break;
    }
    eta.rho_r *= s.ris_amplitude_scale;
    eta.phi_r = wrap_angle(ph.phi_br + ph.phi_rm);
    eta.delta = s.clock_offset_s;
    return eta;
}

inline std::pair<channel_params, known_ris_path> geometry_to_params(const scenario_config& s)
{
    return {channel_from_location(true_location(s), s), make_known_ris_path(s)};
}

// h^T[n] = h_BM^T[n] + h_RM^T[n] Omega^g H_BR[n], with the two amplitudes of
// the RIS hops merged into (rho_R, phi_R).
inline crow composite_channel(int n, const channel_params& gamma, const known_ris_path& known,
                              const Eigen::VectorXd& ris_phase, const scenario_config& s)
{
    if (n < 0 || n >= s.subcarriers)
        throw dimension_mismatch("subcarrier index out of range");
    if (ris_phase.size() != s.ris_elements)
        throw dimension_mismatch("RIS profile length differs from ris_elements");
    if (known.coupling.rows() != s.ris_elements || known.coupling.cols() != s.bs_antennas)
        throw dimension_mismatch("RIS coupling matrix has wrong shape");

    const double kappa = s.subcarrier_rate(n);
    const double sol = s.spacing_over_lambda();

    const cplx los_gain = std::polar(gamma.rho_bm, gamma.phi_bm - kappa * gamma.tau_bm);
    crow h = los_gain * steering_vector(gamma.theta_bm, s.bs_antennas, sol).transpose();

    const cplx ris_gain = std::polar(gamma.rho_r, gamma.phi_r - kappa * (known.tau_br + gamma.tau_rm));
    cvector reflected = steering_vector(gamma.theta_rm, s.ris_elements, sol);
    for (int i = 0; i < s.ris_elements; ++i)
        reflected[i] *= std::polar(1.0, ris_phase[i]);
    h += ris_gain * (reflected.transpose() * known.coupling);
    return h;
}

// One beam toward the RIS plus M-1 beams on the midpoints of a uniform
// partition of [-pi/2, pi/2]; QPSK pilots; binary {0, pi} RIS phases.
inline precoding_config default_precoding(const scenario_config& s, const known_ris_path& known)
{
    validate_system(s);
    const int nbs = s.bs_antennas;
    const int beams = s.beams;
    const double sol = s.spacing_over_lambda();

    precoding_config pc;
    pc.beamformer.resize(nbs, beams);
    pc.beamformer.col(0) = steering_vector(known.theta_br, nbs, sol).conjugate();
    const int coverage = beams - 1;
    for (int m = 0; m < coverage; ++m) {
        const double angle = -pi / 2.0 + (m + 0.5) * pi / coverage;
        pc.beamformer.col(m + 1) = steering_vector(angle, nbs, sol).conjugate();
    }
    pc.beamformer /= pc.beamformer.norm();

    const double amp = 1.0 / std::sqrt(2.0);
    pc.pilots.reserve(s.transmissions);
    pc.ris_phases.reserve(s.transmissions);
    for (int g = 0; g < s.transmissions; ++g) {
        cmatrix x(beams, s.subcarriers);
        for (int n = 0; n < s.subcarriers; ++n) {
            auto rng = substream(s.rng_seed, stream_tag::pilots, g, n);
            std::bernoulli_distribution bit(0.5);
            for (int m = 0; m < beams; ++m) {
                const double re = bit(rng) ? amp : -amp;
                const double im = bit(rng) ? amp : -amp;
                x(m, n) = {re, im};
            }
        }
        pc.pilots.push_back(std::move(x));

        auto rng = substream(s.rng_seed, stream_tag::ris_profile, g);
        std::bernoulli_distribution bit(0.5);
        Eigen::VectorXd w(s.ris_elements);
        for (int i = 0; i < s.ris_elements; ++i)
            w[i] = bit(rng) ? pi : 0.0;
        pc.ris_phases.push_back(std::move(w));
    }
    return pc;
}

inline void validate_precoding(const precoding_config& pc, const scenario_config& s)
{
    if (pc.beamformer.rows() != s.bs_antennas)
        throw dimension_mismatch("beamformer rows differ from bs_antennas");
    if (pc.transmissions() != s.transmissions || static_cast<int>(pc.ris_phases.size()) != s.transmissions)
        throw dimension_mismatch("precoding transmission count differs from scenario");
    for (int g = 0; g < s.transmissions; ++g) {
        if (pc.pilots[g].rows() != pc.beamformer.cols() || pc.pilots[g].cols() != s.subcarriers)
            throw dimension_mismatch("pilot block has wrong shape");
        if (pc.ris_phases[g].size() != s.ris_elements)
            throw dimension_mismatch("RIS profile length differs from ris_elements");
    }
    if (std::abs(pc.beamformer.norm() - 1.0) > 1e-12)
        throw std::invalid_argument("beamformer must have unit Frobenius norm");
}

enum class noise_mode
{
    enabled,
    disabled,
};

// y^g[n] = sqrt(P) h^g[n]^T F x^g[n] + nu^g[n], nu ~ CN(0, sigma^2), drawn
// from per-(g, n) substreams of the scenario seed.
inline synthesis synthesize(const scenario_config& s, const precoding_config& pc, noise_mode noise = noise_mode::enabled)
{
    validate(s);
    validate_precoding(pc, s);

    synthesis out;
    out.truth_location = true_location(s);
    out.truth = channel_from_location(out.truth_location, s);
    out.known = make_known_ris_path(s);

    const int G = s.transmissions;
    const int N = s.subcarriers;
    const double amp = std::sqrt(s.power_w);
    const double noise_std = std::sqrt(s.noise_variance / 2.0);

    out.noise_free.resize(G, N);
    out.obs.y.resize(G, N);
    for (int g = 0; g < G; ++g) {
        const cmatrix S = pc.transmitted(g);
        for (int n = 0; n < N; ++n) {
            const crow h = composite_channel(n, out.truth, out.known, pc.ris_phases[g], s);
            const cplx m = amp * (h * S.col(n)).value();
            out.noise_free(g, n) = m;
            cplx nu{0.0, 0.0};
            if (noise == noise_mode::enabled) {
                auto rng = substream(s.rng_seed, stream_tag::noise, g, n);
                std::normal_distribution<double> normal(0.0, noise_std);
                const double re = normal(rng);
                const double im = normal(rng);
                nu = {re, im};
            }
            out.obs.y(g, n) = m + nu;
        }
    }
    out.obs.precoding = pc;
    out.obs.meta = without_unknowns(s);
    return out;
}

// SNR over the LOS path: 10 log10(P rho_BM^2 / sigma^2).
inline double los_snr_db(const scenario_config& s)
{
    const double rho = free_space_amplitude(s.wavelength(), s.ms_relative().norm());
    return 10.0 * std::log10(s.power_w * rho * rho / s.noise_variance);
}

// Transmit power giving the requested LOS SNR at fixed noise variance.
inline double power_for_snr(const scenario_config& s, double snr_db)
{
    const double rho = free_space_amplitude(s.wavelength(), s.ms_relative().norm());
    return std::pow(10.0, snr_db / 10.0) * s.noise_variance / (rho * rho);
}

inline scenario_config with_snr(scenario_config s, double snr_db)
{
    s.power_w = power_for_snr(s, snr_db);
    return s;
}

} // namespace rislocsync
