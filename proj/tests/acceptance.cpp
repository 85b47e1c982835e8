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

// Acceptance gate: one PASS/FAIL line per criterion, informational lines
// prefixed with "info". Exit status is the number of failed criteria.

#include <rislocsync/bounds.hpp>
#include <rislocsync/cli.hpp>
#include <rislocsync/delay.hpp>
#include <rislocsync/estimators.hpp>
#include <rislocsync/montecarlo.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace rislocsync;
namespace fs = std::filesystem;

namespace
{

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds)
{
    std::printf("%s criterion %d: %s [%.2f s]\n", pass ? "PASS" : "FAIL", id, what.c_str(), seconds);
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

void info(const std::string& line)
{
    std::printf("info %s\n", line.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

scenario_config random_scenario(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    scenario_config s;
    s.rng_seed = seed;
    s.ris_position = {8.0 + 8.0 * u(rng), -6.0 + 14.0 * u(rng)};
    s.ms_position = {1.0 + (s.ris_position.x() - 2.0) * u(rng), -4.0 + 10.0 * u(rng)};
    s.subcarriers = 8 + static_cast<int>(24 * u(rng));
    s.transmissions = 2 + static_cast<int>(5 * u(rng));
    s.bs_antennas = 4 + static_cast<int>(20 * u(rng));
    s.ris_elements = 4 + static_cast<int>(30 * u(rng));
    s.beams = 1 + static_cast<int>((s.bs_antennas - 1) * u(rng));
    s.clock_offset_s = 200e-9 * u(rng);
    if (u(rng) < 0.5)
        s.ris_model = ris_amplitude_model::end_to_end;
    return with_snr(s, -10.0 + 20.0 * u(rng));
}

cplx sample(int g, int n, const channel_params& gamma, const known_ris_path& known, const precoding_config& pc,
            const scenario_config& s)
{
    return std::sqrt(s.power_w) * (composite_channel(n, gamma, known, pc.ris_phases[g], s) * pc.beamformer * pc.pilots[g].col(n)).value();
}

channel_fim fd_fim(const channel_params& gamma, const known_ris_path& known, const precoding_config& pc, const scenario_config& s)
{
    channel_params::vector_type h;
    h << 1e-13, 1e-6, 1e-4 * gamma.rho_bm, 1e-6, 1e-13, 1e-6, 1e-4 * gamma.rho_r, 1e-6;
    const auto v = gamma.to_vector();
    channel_fim j = channel_fim::Zero();
    for (int g = 0; g < s.transmissions; ++g)
        for (int n = 0; n < s.subcarriers; ++n) {
            signal_gradient_vector d;
            for (int i = 0; i < channel_params::size; ++i) {
                auto vp = v, vm = v;
                vp[i] += h[i];
                vm[i] -= h[i];
                d[i] = (sample(g, n, channel_params::from_vector(vp), known, pc, s) -
                        sample(g, n, channel_params::from_vector(vm), known, pc, s)) /
                       (2.0 * h[i]);
            }
            j += (d.conjugate() * d.transpose()).real();
        }
    return 2.0 / s.noise_variance * j;
}

// Relative Frobenius error after scaling every parameter to unit information,
// and the plain relative Frobenius error.
std::pair<double, double> fim_errors(const channel_fim& a, const channel_fim& b)
{
    const auto d = b.diagonal().cwiseSqrt().cwiseInverse().asDiagonal();
    return {(d * (a - b) * d).norm() / (d * b * d).norm(), (a - b).norm() / b.norm()};
}

void criterion_1()
{
    const auto t0 = std::chrono::steady_clock::now();
    double worst_scaled = 0.0, worst_plain = 0.0;
    for (std::uint64_t k = 0; k < 22; ++k) {
        scenario_config s;
        if (k == 0) {
            s.rng_seed = 1;
            s = with_snr(s, 0.0);
        } else if (k == 1) {
            s.rng_seed = 1;
            s.ris_model = ris_amplitude_model::end_to_end;
            s = with_snr(s, 0.0);
        } else {
            s = random_scenario(7000 + k);
        }
        const auto [gamma, known] = geometry_to_params(s);
        const precoding_config pc = default_precoding(s, known);
        const auto [scaled, plain] = fim_errors(fim_channel(gamma, known, pc, s), fd_fim(gamma, known, pc, s));
        worst_scaled = std::max(worst_scaled, scaled);
        worst_plain = std::max(worst_plain, plain);
    }
    const double t = elapsed(t0);
    report(1, worst_scaled <= 1e-4 && worst_plain <= 1e-4 && t < 10.0,
           fmt("FIM vs finite-difference FIM, baseline (both amplitude models) + 20 random scenarios: worst rel. Frobenius "
               "%.2e (unit-information scaling), %.2e (plain) <= 1e-4",
               worst_scaled, worst_plain),
           t);
}

void criterion_2()
{
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 21; ++k) {
        scenario_config s;
        if (k == 0)
            s.rng_seed = 1;
        else
            s = random_scenario(8000 + k);
        const location_params eta = true_location(s);
        const transform_matrix t = jacobian_t(s.ms_position, s);
        location_params::vector_type h;
        h << 1e-5, 1e-5, 1e-4 * eta.rho_bm, 1e-5, 1e-4 * eta.rho_r, 1e-5, 1e-11;
        const auto v = eta.to_vector();
        for (int i = 0; i < location_params::size; ++i) {
            auto vp = v, vm = v;
            vp[i] += h[i];
            vm[i] -= h[i];
            const channel_params::vector_type fd = (channel_from_location(location_params::from_vector(vp), s).to_vector() -
                                                    channel_from_location(location_params::from_vector(vm), s).to_vector()) /
                                                   (2.0 * h[i]);
            worst = std::max(worst, (t.row(i).transpose() - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff());
        }
    }
    const double t = elapsed(t0);
    report(2, worst <= 1e-6 && t < 1.0,
           fmt("T vs central differences of the geometry map, 21 scenarios: worst row-relative error %.2e <= 1e-6", worst), t);
}

double equilibrated_ratio(const Eigen::MatrixXd& j)
{
    const auto d = j.diagonal().cwiseSqrt().cwiseInverse().asDiagonal();
    const Eigen::MatrixXd c = d * j * d;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    return eig.eigenvalues()[0] / eig.eigenvalues()[c.rows() - 1];
}

void criterion_3()
{
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (auto model : {ris_amplitude_model::cascaded, ris_amplitude_model::end_to_end}) {
        scenario_config s;
        s.rng_seed = 1;
        s.ris_model = model;
        s = with_snr(s, 0.0);
        const precoding_config pc = default_precoding(s, make_known_ris_path(s));

        // LOS-only model: gamma' = [tau_BM, theta_BM, rho_BM, phi_BM], eta' = [p_x, p_y, rho_BM, phi_BM, delta]
        scenario_config no_ris = s;
        no_ris.ris_amplitude_scale = 0.0;
        const auto [gamma, known] = geometry_to_params(no_ris);
        const channel_fim jg = fim_channel(gamma, known, pc, no_ris);
        const transform_matrix t = jacobian_t(s.ms_position, s);
        const int rows[] = {0, 1, 2, 3, 6};
        Eigen::MatrixXd t_los(5, 4);
        for (int i = 0; i < 5; ++i)
            t_los.row(i) = t.row(rows[i]).head(4);
        const Eigen::MatrixXd j_los = t_los * jg.topLeftCorner(4, 4) * t_los.transpose();
        const double ratio = equilibrated_ratio(0.5 * (j_los + j_los.transpose()));

        bool full_singular = false;
        try {
            compute_bounds(no_ris, pc);
        } catch (const singular_fim&) {
            full_singular = true;
        }
        const bounds_report b = compute_bounds(s, pc);
        const bool finite = std::isfinite(b.peb) && std::isfinite(b.ceb) && b.peb > 0.0;
        ok = ok && std::abs(ratio) < 1e-12 && full_singular && finite;
        detail += fmt("%s: no-RIS eig ratio %.1e, full model singular=%s, with RIS PEB %.3g m CEB %.3g s; ",
                      to_string(model), std::abs(ratio), full_singular ? "yes" : "no", b.peb, b.ceb);
    }
    const double t = elapsed(t0);
    report(3, ok && t < 1.0, "singular FIM without the RIS path, finite bounds with it (" + detail.substr(0, detail.size() - 2) + ")", t);
}

void criterion_4()
{
    const auto t0 = std::chrono::steady_clock::now();
    double worst_p = 0.0, worst_d = 0.0;
    int count = 0;
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto model : {ris_amplitude_model::end_to_end, ris_amplitude_model::cascaded})
        for (int k = 0; k < 20; ++k) {
            scenario_config s;
            s.ris_model = model;
            s.rng_seed = 9000 + k;
            s.ris_position = {8.0 + 8.0 * u(rng), 3.0 + 7.0 * u(rng)};
            const vec2 r = s.ris_position;
            // p between the BS and the RIS along x, at least 1 m from both and 0.5 m off their line
            do {
                s.ms_position = {1.0 + (r.x() - 2.0) * u(rng), -3.0 + (r.y() + 6.0) * u(rng)};
            } while ((s.ms_position - r).norm() < 1.0 || s.ms_position.norm() < 1.0 ||
                     std::abs(r.x() * s.ms_position.y() - r.y() * s.ms_position.x()) / r.norm() < 0.5);
            s.clock_offset_s = 150e-9 * u(rng);
            s = with_snr(s, 0.0);
            const synthesis syn = synthesize(s, default_precoding(s, make_known_ris_path(s)), noise_mode::disabled);
            const signal_model m(syn.obs);
            const joint_estimate j = locate(m, default_search_region(s));
            worst_p = std::max(worst_p, (j.ml.p_hat - s.ms_position).norm());
            worst_d = std::max(worst_d, std::abs(j.ml.delta_hat - s.clock_offset_s));
            ++count;
        }
    const double t = elapsed(t0);
    report(4, worst_p <= 1e-3 && worst_d <= 1e-12 && t < 120.0,
           fmt("noise-free RML+ML on %d random geometries (20 per amplitude model, G=5 N=30 N_BS=N_R=20): "
               "worst |p err| %.2e m <= 1e-3, worst |delta err| %.2e s <= 1e-12",
               count, worst_p, worst_d),
           t);
}

const sweep_result& row(const sweep_output& out, double snr, estimator_tag tag, int g = -1, int nr = -1)
{
    for (const sweep_result& r : out.summary)
        if (r.snr_db == snr && r.estimator == tag && (g < 0 || r.transmissions == g) && (nr < 0 || r.ris_elements == nr))
            return r;
    throw std::logic_error("missing summary row");
}

experiment_config baseline_experiment(ris_amplitude_model model)
{
    experiment_config c;
    c.base.ris_model = model;
    c.trials = 50;
    c.master_seed = 1;
    return c;
}

void criteria_5_6()
{
    const auto t0 = std::chrono::steady_clock::now();
    experiment_config c = baseline_experiment(ris_amplitude_model::end_to_end);
    c.snr_grid_db = {-15.0, 0.0, 5.0, 10.0};
    const sweep_output out = sweep_snr(c);
    const double t = elapsed(t0);

    bool ok5 = true, ok6 = true;
    std::string d5, d6;
    for (double snr : c.snr_grid_db) {
        const sweep_result& ml = row(out, snr, estimator_tag::ml);
        const sweep_result& rml = row(out, snr, estimator_tag::rml);
        const double fp = ml.rmse_p / ml.peb;
        const double fd = ml.rmse_delta / ml.ceb;
        info(fmt("end_to_end snr %+5.1f dB: PEB %.4g m, ML %.4g m (x%.2f), RML %.4g m; CEB %.4g s, ML %.4g s (x%.2f); "
                 "ML flagged %d/%d",
                 snr, ml.peb, ml.rmse_p, fp, rml.rmse_p, ml.ceb, ml.rmse_delta, fd, ml.flagged, ml.trials_used));
        if (snr >= 0.0) {
            const bool pass = fp <= 2.0 && fd <= 2.0 && rml.rmse_p >= ml.rmse_p;
            ok5 = ok5 && pass;
            d5 += fmt("%g dB: x%.2f PEB, x%.2f CEB, RML/ML %.2f; ", snr, fp, fd, rml.rmse_p / ml.rmse_p);
            ok6 = ok6 && fp <= 2.0;
            if (ml.flagged * 20 >= ml.trials_used)
                info(fmt("flagged ML fraction at %g dB is %d/%d (>= 5%%)", snr, ml.flagged, ml.trials_used));
        }
    }
    const double f15 = row(out, -15.0, estimator_tag::ml).rmse_p / row(out, -15.0, estimator_tag::ml).peb;
    ok6 = ok6 && f15 >= 5.0;
    d6 = fmt("-15 dB: x%.2f PEB >= 5; >= 0 dB: <= 2x PEB as above", f15);

    report(5, ok5 && t < 900.0,
           "bound attainment, baseline scenario (end_to_end amplitude), 50 trials: " + d5.substr(0, d5.size() - 2), t);
    report(6, ok6 && t < 900.0, "threshold behaviour, same run: " + d6, t);

    const auto t1 = std::chrono::steady_clock::now();
    experiment_config lit = baseline_experiment(ris_amplitude_model::cascaded);
    lit.snr_grid_db = {-15.0, 0.0, 10.0};
    lit.trials = 20;
    const sweep_output cascaded = sweep_snr(lit);
    for (double snr : lit.snr_grid_db) {
        const sweep_result& ml = row(cascaded, snr, estimator_tag::ml);
        info(fmt("cascaded snr %+5.1f dB (20 trials): PEB %.4g m, ML %.4g m (x%.3f), CEB %.4g s, ML %.4g s", snr, ml.peb,
                 ml.rmse_p, ml.rmse_p / ml.peb, ml.ceb, ml.rmse_delta));
    }
    info(fmt("cascaded run took %.1f s", elapsed(t1)));
}

void criterion_7()
{
    const auto t0 = std::chrono::steady_clock::now();
    experiment_config c = baseline_experiment(ris_amplitude_model::end_to_end);
    c.g_grid = {2, 3, 4, 5, 6, 7};
    c.nr_grid = {20, 40};
    c.sweep_g_snr_db = -5.0;
    const sweep_output out = sweep_g(c);
    const double t = elapsed(t0);

    bool peb_ok = true;
    for (int g : c.g_grid) {
        const sweep_result& a = row(out, -5.0, estimator_tag::ml, g, 20);
        const sweep_result& b = row(out, -5.0, estimator_tag::ml, g, 40);
        info(fmt("G=%d: N_R=20 ML %.4g m / PEB %.4g m (x%.2f), N_R=40 ML %.4g m / PEB %.4g m (x%.2f)", g, a.rmse_p, a.peb,
                 a.rmse_p / a.peb, b.rmse_p, b.peb, b.rmse_p / b.peb));
        peb_ok = peb_ok && b.peb <= a.peb;
    }
    const sweep_result& g5 = row(out, -5.0, estimator_tag::ml, 5, 20);
    const sweep_result& g4 = row(out, -5.0, estimator_tag::ml, 4, 40);
    const double f5 = g5.rmse_p / g5.peb;
    const double f4 = g4.rmse_p / g4.peb;
    report(7, f5 <= 2.0 && f4 <= 2.0 && peb_ok && t < 1200.0,
           fmt("G sweep at -5 dB, 50 trials (end_to_end): (G=5, N_R=20) x%.2f PEB, (G=4, N_R=40) x%.2f PEB <= 2; "
               "PEB(N_R=40) <= PEB(N_R=20) at every G: %s",
               f5, f4, peb_ok ? "yes" : "no"),
           t);
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

int cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "rislocsync");
    std::vector<char*> argv;
    for (std::string& a : args)
        argv.push_back(a.data());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

void criterion_8()
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = fs::temp_directory_path() / ("rislocsync_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string base = "ris_amplitude_model = end_to_end\nsnr_grid_db = -5, 5\ng_grid = 1, 3, 5\nnr_grid = 20\n"
                             "trials = 4\nmaster_seed = 2024\n";
    std::ofstream(root / "one.cfg") << base << "workers = 1\n";
    std::ofstream(root / "many.cfg") << base << "workers = 4\n";

    bool ok = true;
    int files = 0;
    for (const char* cmd : {"bounds", "simulate", "sweep-g"}) {
        const bool ran = cli({cmd, (root / "one.cfg").string(), "--out", (root / "a").string()}) == 0 &&
                         cli({cmd, (root / "one.cfg").string(), "--out", (root / "b").string()}) == 0 &&
                         cli({cmd, (root / "many.cfg").string(), "--out", (root / "c").string()}) == 0;
        ok = ok && ran;
    }
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        if (entry.path().extension() != ".csv")
            continue;
        const std::string name = entry.path().filename().string();
        const std::string a = slurp(entry.path());
        ok = ok && !a.empty() && a == slurp(root / "b" / name) && a == slurp(root / "c" / name);
        ++files;
    }
    fs::remove_all(root);
    const double t = elapsed(t0);
    report(8, ok && files >= 6,
           fmt("bitwise-identical CSVs over repeated runs and worker counts 1 vs 4 (%d CSV files, bounds/simulate/sweep-g)", files), t);
}

void criterion_9()
{
    const auto t0 = std::chrono::steady_clock::now();
    const int n = 30;
    const double sampling = 1.0 / 40e6;
    const double period = n * sampling;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, period);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double tau = u(rng);
        cvector e(n);
        for (int k = 0; k < n; ++k)
            e[k] = std::polar(1.0, -2.0 * pi * k * tau / period);
        const double d = std::abs(delay_from_exponential(e, period) - tau);
        worst = std::max(worst, std::min(d, period - d));
    }
    const double t = elapsed(t0);
    report(9, worst <= 0.01 * sampling && t < 5.0,
           fmt("FFT + interpolation delay on 1000 off-grid exponentials (N=30): worst error %.2e T <= 0.01 T", worst / sampling), t);
}

} // namespace

int main()
{
    const struct
    {
        const char* name;
        std::function<void()> run;
    } steps[] = {{"1", criterion_1}, {"2", criterion_2}, {"3", criterion_3}, {"4", criterion_4}, {"5-6", criteria_5_6},
                 {"7", criterion_7}, {"8", criterion_8}, {"9", criterion_9}};
    for (const auto& step : steps) {
        try {
            step.run();
        } catch (const std::exception& e) {
            std::printf("FAIL criterion %s: exception %s\n", step.name, e.what());
            ++failures;
        }
    }
    std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", failures);
    return failures == 0 ? 0 : 1;
}
