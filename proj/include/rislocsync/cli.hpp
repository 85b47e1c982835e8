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

#include <rislocsync/config.hpp>
#include <rislocsync/montecarlo.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

// Command-line frontend: `bounds`, `simulate` and `sweep-g`. Each command
// writes CSV files plus a `<command>_manifest.json`; the first line of every
// CSV names its manifest. Exit codes: 0 success, 1 usage, 2 config error
// (nothing written), 3 runtime failure.

namespace rislocsync
{

inline constexpr const char* version = "0.1.0";

namespace cli_detail
{

inline std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

class csv_writer
{
public:
    csv_writer(const std::filesystem::path& path, const std::string& manifest, const std::vector<std::string>& header)
        : out_(path, std::ios::binary)
    {
        if (!out_)
            throw std::runtime_error("cannot open " + path.string());
        out_ << "# manifest: " << manifest << '\n';
        row(header);
    }

    void row(const std::vector<std::string>& fields)
    {
        for (std::size_t i = 0; i < fields.size(); ++i)
            out_ << (i ? "," : "") << fields[i];
        out_ << '\n';
    }

    void close()
    {
        out_.close();
        if (!out_)
            throw std::runtime_error("write failed");
    }

private:
    std::ofstream out_;
};

inline std::string num(double v) { return format_double(v); }
inline std::string num(int v) { return std::to_string(v); }

struct run_context
{
    std::string command;
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    experiment_config config;
    std::string started;
    nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
    std::vector<std::string> outputs;

    std::string manifest_name() const { return command + "_manifest.json"; }

    void write_manifest(const std::string& status, const std::string& note = {}) const
    {
        nlohmann::ordered_json m;
        m["command"] = command;
        m["code_version"] = version;
        m["config_path"] = config_path.string();
        m["master_seed"] = config.master_seed;
        m["started_utc"] = started;
        m["finished_utc"] = utc_now();
        m["status"] = status;
        if (!note.empty())
            m["note"] = note;
        m["parameters"] = parameters;
        m["randomness"] = "path phases, pilots, RIS profiles and noise are redrawn per trial from "
                          "substreams of master_seed keyed by trial index; bounds use one reference realization";
        m["outputs"] = outputs;
        m["config"] = serialize_config(config);
        std::ofstream f(out_dir / manifest_name(), std::ios::binary);
        f << m.dump(2) << '\n';
    }
};

inline std::vector<std::string> summary_header()
{
    return {"snr_db", "g", "n_r", "estimator", "rmse_p_m", "rmse_delta_s", "peb_m", "ceb_s", "trials_used",
            "flagged", "failed", "rmse_p_converged_m", "rmse_delta_converged_s", "status"};
}

inline std::vector<std::string> summary_row(const sweep_result& r)
{
    return {num(r.snr_db),           num(r.transmissions),          num(r.ris_elements),   to_string(r.estimator),
            num(r.rmse_p),           num(r.rmse_delta),             num(r.peb),            num(r.ceb),
            num(r.trials_used),      num(r.flagged),                num(r.failed),         num(r.rmse_p_converged),
            num(r.rmse_delta_converged), r.status};
}

inline void write_trials(run_context& ctx, const std::vector<trial_record>& trials, const std::string& name)
{
    csv_writer w(ctx.out_dir / name, ctx.manifest_name(),
                 {"trial", "snr_db", "estimator", "px_hat", "py_hat", "delta_hat_s", "p_err_m", "delta_err_s",
                  "converged", "cost", "g", "n_r", "status"});
    for (const trial_record& t : trials)
        w.row({num(t.trial), num(t.snr_db), to_string(t.estimator), num(t.p_hat.x()), num(t.p_hat.y()),
               num(t.delta_hat), num(t.p_err), num(t.delta_err), t.converged ? "1" : "0", num(t.cost),
               num(t.transmissions), num(t.ris_elements), t.status});
    w.close();
    ctx.outputs.push_back(name);
}

inline void write_summary(run_context& ctx, const std::vector<sweep_result>& summary, const std::string& name)
{
    csv_writer w(ctx.out_dir / name, ctx.manifest_name(), summary_header());
    for (const sweep_result& r : summary)
        w.row(summary_row(r));
    w.close();
    ctx.outputs.push_back(name);
}

inline progress_callback progress_line(std::ostream& err)
{
    return [&err](std::size_t done, std::size_t total) {
        if (done == total || done % 10 == 0)
            err << "\rtrials " << done << "/" << total << (done == total ? "\n" : "") << std::flush;
    };
}

inline void cmd_bounds(run_context& ctx)
{
    const experiment_config& c = ctx.config;
    ctx.parameters["snr_grid_db"] = c.snr_grid_db;
    ctx.parameters["transmissions"] = c.base.transmissions;
    ctx.parameters["ris_elements"] = c.base.ris_elements;
    csv_writer w(ctx.out_dir / "bounds.csv", ctx.manifest_name(), {"snr_db", "peb_m", "ceb_s", "status"});
    for (double snr : c.snr_grid_db) {
        const bound_point b = reference_bounds(c, snr);
        w.row({num(snr), num(b.peb), num(b.ceb), b.status});
    }
    w.close();
    ctx.outputs.push_back("bounds.csv");
}

inline void cmd_simulate(run_context& ctx, std::ostream& err)
{
    const experiment_config& c = ctx.config;
    ctx.parameters["snr_grid_db"] = c.snr_grid_db;
    ctx.parameters["trials"] = c.trials;
    ctx.parameters["transmissions"] = c.base.transmissions;
    ctx.parameters["ris_elements"] = c.base.ris_elements;
    const sweep_output out = sweep_snr(c, progress_line(err));
    write_trials(ctx, out.trials, "trials.csv");
    write_summary(ctx, out.summary, "summary.csv");
}

inline void cmd_sweep_g(run_context& ctx, std::ostream& err)
{
    const experiment_config& c = ctx.config;
    ctx.parameters["snr_db"] = c.sweep_g_snr_db;
    ctx.parameters["g_grid"] = c.g_grid;
    ctx.parameters["nr_grid"] = c.nr_grid;
    ctx.parameters["trials"] = c.trials;
    const sweep_output out = sweep_g(c, progress_line(err));

    // one row per (g, n_r): ML is the headline estimator, RML rides along
    csv_writer w(ctx.out_dir / "sweep_g.csv", ctx.manifest_name(),
                 {"g", "n_r", "rmse_p_m", "peb_m", "trials", "rmse_delta_s", "ceb_s", "rmse_p_rml_m", "flagged",
                  "status"});
    for (std::size_t i = 0; i + 1 < out.summary.size(); i += 2) {
        const sweep_result& rml = out.summary[i];
        const sweep_result& ml = out.summary[i + 1];
        w.row({num(ml.transmissions), num(ml.ris_elements), num(ml.rmse_p), num(ml.peb), num(ml.trials_used),
               num(ml.rmse_delta), num(ml.ceb), num(rml.rmse_p), num(ml.flagged), ml.status});
    }
    w.close();
    ctx.outputs.push_back("sweep_g.csv");
    write_trials(ctx, out.trials, "sweep_g_trials.csv");
    write_summary(ctx, out.summary, "sweep_g_summary.csv");
}

inline std::string read_file(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    if (!f)
        throw config_error(0, "", "cannot read " + p.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

} // namespace cli_detail

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"RIS-aided joint localization and synchronization simulator", "rislocsync"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);

    std::string config_path;
    std::string out_dir = "results";
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;

    std::vector<CLI::App*> commands;
    for (const char* name : {"bounds", "simulate", "sweep-g"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("config", config_path, "experiment config file")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--trials", trials, "override the trial count");
        sub->add_option("--seed", seed, "override master_seed");
        commands.push_back(sub);
    }
    commands[0]->description("PEB / CEB over the SNR grid");
    commands[1]->description("Monte Carlo RMSE versus SNR for RML and ML");
    commands[2]->description("Monte Carlo position RMSE versus G for each RIS size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    cli_detail::run_context ctx;
    for (CLI::App* sub : commands)
        if (sub->parsed())
            ctx.command = sub->get_name();
    ctx.config_path = config_path;
    ctx.out_dir = out_dir;
    ctx.started = cli_detail::utc_now();

    try {
        ctx.config = parse_config(cli_detail::read_file(config_path));
        if (trials) {
            if (*trials < 1)
                throw config_error(0, "--trials", "must be >= 1");
            ctx.config.trials = *trials;
        }
        if (seed)
            ctx.config.master_seed = *seed;
    } catch (const config_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        std::filesystem::create_directories(ctx.out_dir);
        if (ctx.command == "bounds")
            cli_detail::cmd_bounds(ctx);
        else if (ctx.command == "simulate")
            cli_detail::cmd_simulate(ctx, err);
        else
            cli_detail::cmd_sweep_g(ctx, err);
        ctx.write_manifest("ok");
    } catch (const std::exception& e) {
        std::string note = "partial results: ";
        note += ctx.outputs.empty() ? "none" : "";
        for (std::size_t i = 0; i < ctx.outputs.size(); ++i)
            note += (i ? ", " : "") + ctx.outputs[i];
        err << "error: " << e.what() << " (" << note << ")\n";
        try {
            ctx.write_manifest("failed", std::string(e.what()) + "; " + note);
        } catch (...) {
        }
        return 3;
    }
    for (const std::string& f : ctx.outputs)
        out << (ctx.out_dir / f).string() << '\n';
    out << (ctx.out_dir / ctx.manifest_name()).string() << '\n';
    return 0;
}

} // namespace rislocsync
