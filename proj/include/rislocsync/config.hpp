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

#include <rislocsync/estimators.hpp>
#include <rislocsync/model.hpp>
#include <rislocsync/montecarlo.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

// Experiment configuration files: one `key = value` per line, `#` starts a
// comment, lists are comma separated. Units are part of the key name and
// values are converted to SI while parsing. Serialization always emits the
// SI-named keys with shortest round-trip number formatting, so
// parse(serialize(c)) == c.

namespace rislocsync
{

class config_error : public std::runtime_error
{
public:
    config_error(int line, std::string key, const std::string& message)
        : std::runtime_error(format(line, key, message)), line(line), key(std::move(key))
    {
    }

    int line;
    std::string key;

private:
    static std::string format(int line, const std::string& key, const std::string& message)
    {
        std::string s = "config";
        if (line > 0)
            s += " line " + std::to_string(line);
        if (!key.empty())
            s += " field '" + key + "'";
        return s + ": " + message;
    }
};

// Locale-independent, shortest representation that parses back to the same double.
inline std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail
{

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return out;
}

struct entry
{
    std::string value;
    int line;
};

class reader
{
public:
    explicit reader(std::map<std::string, entry> entries) : entries_(std::move(entries)) {}

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    double number(const std::string& key) const
    {
        const entry& e = get(key);
        return parse_double(trim(e.value), e.line, key);
    }

    std::int64_t integer(const std::string& key) const
    {
        const entry& e = get(key);
        return parse_int(trim(e.value), e.line, key);
    }

    std::uint64_t unsigned_integer(const std::string& key) const
    {
        const entry& e = get(key);
        const std::string_view v = trim(e.value);
        std::uint64_t out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw config_error(e.line, key, "expected a non-negative integer, got '" + std::string(v) + "'");
        return out;
    }

    std::vector<double> numbers(const std::string& key, std::size_t expected = 0) const
    {
        const entry& e = get(key);
        std::vector<double> out;
        for (std::string_view item : split_list(e.value))
            out.push_back(parse_double(item, e.line, key));
        if (expected != 0 && out.size() != expected)
            throw config_error(e.line, key, "expected " + std::to_string(expected) + " values");
        return out;
    }

    std::vector<int> integers(const std::string& key) const
    {
        const entry& e = get(key);
        std::vector<int> out;
        for (std::string_view item : split_list(e.value))
            out.push_back(static_cast<int>(parse_int(item, e.line, key)));
        return out;
    }

    std::string text(const std::string& key) const { return std::string(trim(get(key).value)); }

    int line(const std::string& key) const { return get(key).line; }

private:
    const entry& get(const std::string& key) const { return entries_.at(key); }

    static double parse_double(std::string_view v, int line, const std::string& key)
    {
        double out = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
            throw config_error(line, key, "expected a finite number, got '" + std::string(v) + "'");
        return out;
    }

    static std::int64_t parse_int(std::string_view v, int line, const std::string& key)
    {
        std::int64_t out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw config_error(line, key, "expected an integer, got '" + std::string(v) + "'");
        return out;
    }

    std::map<std::string, entry> entries_;
};

// (canonical SI key, alternative key, factor to SI). Only one of a pair may appear.
struct unit_alias
{
    const char* si_key;
    const char* alt_key;
    double factor;
};

inline constexpr unit_alias unit_aliases[] = {
    {"carrier_hz", "carrier_ghz", 1e9},
    {"bandwidth_hz", "bandwidth_mhz", 1e6},
    {"clock_offset_s", "clock_offset_ns", 1e-9},
};

inline const std::set<std::string>& known_keys()
{
    static const std::set<std::string> keys = {
        "bs_position_m", "ris_position_m", "ms_position_m", "carrier_hz", "carrier_ghz", "bandwidth_hz",
        "bandwidth_mhz", "subcarriers", "transmissions", "bs_antennas", "ris_elements", "beams", "power_w",
        "noise_variance_w", "noise_psd_dbm_hz", "clock_offset_s", "clock_offset_ns", "ris_amplitude_model",
        "ris_amplitude_scale", "snr_grid_db", "g_grid", "nr_grid", "sweep_g_snr_db", "trials", "master_seed",
        "workers", "search_region_m",
    };
    return keys;
}

} // namespace detail

inline const char* to_string(ris_amplitude_model m)
{
    return m == ris_amplitude_model::cascaded ? "cascaded" : "end_to_end";
}

// Missing keys keep the experiment_config defaults (the baseline scenario).
inline experiment_config parse_config(std::string_view text)
{
    std::map<std::string, detail::entry> entries;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw config_error(line_no, "", "expected 'key = value'");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty())
            throw config_error(line_no, "", "empty key");
        if (detail::known_keys().count(key) == 0)
            throw config_error(line_no, key, "unknown key");
        if (entries.count(key) != 0)
            throw config_error(line_no, key, "duplicate key");
        if (value.empty())
            throw config_error(line_no, key, "missing value");
        entries.emplace(key, detail::entry{value, line_no});
    }
    for (const auto& a : detail::unit_aliases)
        if (entries.count(a.si_key) && entries.count(a.alt_key))
            throw config_error(entries.at(a.alt_key).line, a.alt_key, std::string("conflicts with ") + a.si_key);
    if (entries.count("noise_variance_w") && entries.count("noise_psd_dbm_hz"))
        throw config_error(entries.at("noise_psd_dbm_hz").line, "noise_psd_dbm_hz", "conflicts with noise_variance_w");

    const detail::reader r(std::move(entries));
    experiment_config c;
    scenario_config& s = c.base;

    auto position = [&](const char* key, vec2& out) {
        if (r.has(key)) {
            const auto v = r.numbers(key, 2);
            out = {v[0], v[1]};
        }
    };
    position("bs_position_m", s.bs_position);
    position("ris_position_m", s.ris_position);
    position("ms_position_m", s.ms_position);

    auto scaled = [&](const detail::unit_alias& a, double& out) {
        if (r.has(a.si_key))
            out = r.number(a.si_key);
        else if (r.has(a.alt_key))
            out = r.number(a.alt_key) * a.factor;
    };
    scaled(detail::unit_aliases[0], s.carrier_hz);
    scaled(detail::unit_aliases[1], s.bandwidth_hz);
    scaled(detail::unit_aliases[2], s.clock_offset_s);

    auto count = [&](const char* key, int& out) {
        if (r.has(key))
            out = static_cast<int>(r.integer(key));
    };
    count("subcarriers", s.subcarriers);
    count("transmissions", s.transmissions);
    count("bs_antennas", s.bs_antennas);
    count("ris_elements", s.ris_elements);
    count("beams", s.beams);
    count("trials", c.trials);
    count("workers", c.workers);

    if (r.has("power_w"))
        s.power_w = r.number("power_w");
    if (r.has("noise_variance_w"))
        s.noise_variance = r.number("noise_variance_w");
    else if (r.has("noise_psd_dbm_hz"))
        s.noise_variance = thermal_noise_variance(r.number("noise_psd_dbm_hz"), s.bandwidth_hz);
    else
        s.noise_variance = thermal_noise_variance(-174.0, s.bandwidth_hz);

    if (r.has("ris_amplitude_model")) {
        const std::string m = r.text("ris_amplitude_model");
        if (m == "cascaded")
            s.ris_model = ris_amplitude_model::cascaded;
        else if (m == "end_to_end")
            s.ris_model = ris_amplitude_model::end_to_end;
        else
            throw config_error(r.line("ris_amplitude_model"), "ris_amplitude_model",
                               "expected 'cascaded' or 'end_to_end', got '" + m + "'");
    }
    if (r.has("ris_amplitude_scale"))
        s.ris_amplitude_scale = r.number("ris_amplitude_scale");

    if (r.has("snr_grid_db"))
        c.snr_grid_db = r.numbers("snr_grid_db");
    if (r.has("g_grid"))
        c.g_grid = r.integers("g_grid");
    if (r.has("nr_grid"))
        c.nr_grid = r.integers("nr_grid");
    if (r.has("sweep_g_snr_db"))
        c.sweep_g_snr_db = r.number("sweep_g_snr_db");
    if (r.has("master_seed"))
        c.master_seed = r.unsigned_integer("master_seed");
    if (r.has("search_region_m")) {
        const auto v = r.numbers("search_region_m", 4);
        c.region = search_region{v[0], v[1], v[2], v[3]};
    }

    // the scenario seed is always derived per trial
    s.rng_seed = 0;

    auto check = [&](const char* key, bool ok, const char* message) {
        if (!ok)
            throw config_error(r.has(key) ? r.line(key) : 0, key, message);
    };
    check("subcarriers", s.subcarriers >= 2, "must be >= 2");
    check("transmissions", s.transmissions >= 1, "must be >= 1");
    check("bs_antennas", s.bs_antennas >= 1, "must be >= 1");
    check("ris_elements", s.ris_elements >= 1, "must be >= 1");
    check("beams", s.beams >= 1 && s.beams <= s.bs_antennas, "must be in [1, bs_antennas]");
    check(r.has("carrier_ghz") ? "carrier_ghz" : "carrier_hz", s.carrier_hz > 0.0, "must be > 0");
    check(r.has("bandwidth_mhz") ? "bandwidth_mhz" : "bandwidth_hz", s.bandwidth_hz > 0.0, "must be > 0");
    check("power_w", s.power_w > 0.0, "must be > 0");
    check(r.has("noise_psd_dbm_hz") ? "noise_psd_dbm_hz" : "noise_variance_w", s.noise_variance > 0.0, "must be > 0");
    check("ris_amplitude_scale", s.ris_amplitude_scale >= 0.0, "must be >= 0");
    check("trials", c.trials >= 1, "must be >= 1");
    check("workers", c.workers >= 0, "must be >= 0");
    check("snr_grid_db", !c.snr_grid_db.empty(), "must not be empty");
    check("g_grid", !c.g_grid.empty(), "must not be empty");
    check("nr_grid", !c.nr_grid.empty(), "must not be empty");
    for (int nr : c.nr_grid)
        check("nr_grid", nr >= 1, "entries must be >= 1");
    for (int g : c.g_grid)
        check("g_grid", g >= 1, "entries must be >= 1");
    check("search_region_m", !c.region || c.region->valid(), "must satisfy x_min < x_max and y_min < y_max");
    check("ms_position_m", (s.ms_position - s.bs_position).norm() > 0.0, "MS coincides with the BS");
    check("ms_position_m", (s.ms_position - s.ris_position).norm() > 0.0, "MS coincides with the RIS");
    check("ris_position_m", (s.ris_position - s.bs_position).norm() > 0.0, "RIS coincides with the BS");
    return c;
}

inline std::string serialize_config(const experiment_config& c)
{
    const scenario_config& s = c.base;
    std::ostringstream out;
    auto pair = [](const vec2& v) { return format_double(v.x()) + ", " + format_double(v.y()); };
    auto list = [](const auto& values) {
        std::string t;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i)
                t += ", ";
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(values[i])>>)
                t += format_double(values[i]);
            else
                t += std::to_string(values[i]);
        }
        return t;
    };
    out << "bs_position_m = " << pair(s.bs_position) << '\n';
    out << "ris_position_m = " << pair(s.ris_position) << '\n';
    out << "ms_position_m = " << pair(s.ms_position) << '\n';
    out << "carrier_hz = " << format_double(s.carrier_hz) << '\n';
    out << "bandwidth_hz = " << format_double(s.bandwidth_hz) << '\n';
    out << "subcarriers = " << s.subcarriers << '\n';
    out << "transmissions = " << s.transmissions << '\n';
    out << "bs_antennas = " << s.bs_antennas << '\n';
    out << "ris_elements = " << s.ris_elements << '\n';
    out << "beams = " << s.beams << '\n';
    out << "power_w = " << format_double(s.power_w) << '\n';
    out << "noise_variance_w = " << format_double(s.noise_variance) << '\n';
    out << "clock_offset_s = " << format_double(s.clock_offset_s) << '\n';
    out << "ris_amplitude_model = " << to_string(s.ris_model) << '\n';
    out << "ris_amplitude_scale = " << format_double(s.ris_amplitude_scale) << '\n';
    out << "snr_grid_db = " << list(c.snr_grid_db) << '\n';
    out << "g_grid = " << list(c.g_grid) << '\n';
    out << "nr_grid = " << list(c.nr_grid) << '\n';
    out << "sweep_g_snr_db = " << format_double(c.sweep_g_snr_db) << '\n';
    out << "trials = " << c.trials << '\n';
    out << "master_seed = " << c.master_seed << '\n';
    out << "workers = " << c.workers << '\n';
    if (c.region)
        out << "search_region_m = " << format_double(c.region->x_min) << ", " << format_double(c.region->x_max) << ", "
            << format_double(c.region->y_min) << ", " << format_double(c.region->y_max) << '\n';
    return out.str();
}

} // namespace rislocsync
