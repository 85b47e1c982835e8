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

#include <rislocsync/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rislocsync;
namespace fs = std::filesystem;

namespace
{

class Cli : public ::testing::Test
{
protected:
    void SetUp() override
    {
        root_ = fs::temp_directory_path() / ("rislocsync_cli_" + std::to_string(::getpid()) + "_" +
                                             ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }

    void TearDown() override { fs::remove_all(root_); }

    fs::path write_config(const std::string& name, const std::string& text)
    {
        const fs::path p = root_ / name;
        std::ofstream(p) << text;
        return p;
    }

    int run(std::vector<std::string> args)
    {
        args.insert(args.begin(), "rislocsync");
        std::vector<char*> argv;
        for (std::string& a : args)
            argv.push_back(a.data());
        out_.str("");
        err_.str("");
        return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
    }

    static std::string read(const fs::path& p)
    {
        std::ifstream f(p, std::ios::binary);
        std::stringstream s;
        s << f.rdbuf();
        return s.str();
    }

    static std::vector<std::string> lines(const fs::path& p)
    {
        std::vector<std::string> out;
        std::istringstream s(read(p));
        for (std::string l; std::getline(s, l);)
            out.push_back(l);
        return out;
    }

    fs::path root_;
    std::ostringstream out_, err_;
};

const char* quick = "ris_amplitude_model = end_to_end\nsnr_grid_db = 0, 10\ntrials = 1\nworkers = 1\n";

} // namespace

TEST_F(Cli, BoundsOneRowPerSnr)
{
    const fs::path cfg = write_config("a.cfg", "snr_grid_db = -15, -10, -5, 0, 5, 10\n");
    ASSERT_EQ(run({"bounds", cfg.string(), "--out", (root_ / "out").string()}), 0) << err_.str();
    const auto l = lines(root_ / "out" / "bounds.csv");
    ASSERT_EQ(l.size(), 8u);
    EXPECT_EQ(l[0], "# manifest: bounds_manifest.json");
    EXPECT_EQ(l[1], "snr_db,peb_m,ceb_s,status");
    EXPECT_EQ(l[2].rfind("-15,", 0), 0u);
    for (std::size_t i = 2; i < l.size(); ++i)
        EXPECT_NE(l[i].find(",ok"), std::string::npos);
    EXPECT_TRUE(fs::exists(root_ / "out" / "bounds_manifest.json"));
}

TEST_F(Cli, BoundsWithoutRisReportsSingularFim)
{
    const fs::path cfg = write_config("a.cfg", "ris_amplitude_scale = 0\nsnr_grid_db = 0, 5\n");
    ASSERT_EQ(run({"bounds", cfg.string(), "--out", (root_ / "out").string()}), 0) << err_.str();
    const auto l = lines(root_ / "out" / "bounds.csv");
    ASSERT_EQ(l.size(), 4u);
    EXPECT_EQ(l[2], "0,nan,nan,singular-fim");
    EXPECT_EQ(l[3], "5,nan,nan,singular-fim");
}

TEST_F(Cli, SimulateOneTrialOneSnrGivesTwoRows)
{
    const fs::path cfg = write_config("a.cfg", "ris_amplitude_model = end_to_end\nsnr_grid_db = 5\nworkers = 1\n");
    ASSERT_EQ(run({"simulate", cfg.string(), "--out", (root_ / "out").string(), "--trials", "1"}), 0) << err_.str();
    const auto t = lines(root_ / "out" / "trials.csv");
    ASSERT_EQ(t.size(), 4u);
    EXPECT_EQ(t[0], "# manifest: simulate_manifest.json");
    EXPECT_EQ(t[1].rfind("trial,snr_db,estimator,px_hat,py_hat,delta_hat_s,p_err_m,delta_err_s,converged,cost", 0), 0u);
    EXPECT_EQ(t[2].rfind("0,5,RML,", 0), 0u);
    EXPECT_EQ(t[3].rfind("0,5,ML,", 0), 0u);
    const auto s = lines(root_ / "out" / "summary.csv");
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s[1].rfind("snr_db,g,n_r,estimator,rmse_p_m,rmse_delta_s,peb_m,ceb_s,trials_used", 0), 0u);
}

TEST_F(Cli, MalformedConfigExitsTwoWithoutOutputs)
{
    const fs::path cfg = write_config("bad.cfg", "trials = 2\nbogus_key = 1\n");
    const fs::path out = root_ / "out";
    EXPECT_EQ(run({"simulate", cfg.string(), "--out", out.string()}), 2);
    EXPECT_NE(err_.str().find("line 2"), std::string::npos);
    EXPECT_NE(err_.str().find("bogus_key"), std::string::npos);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(run({"bounds", (root_ / "missing.cfg").string(), "--out", out.string()}), 2);
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, RuntimeFailureExitsThree)
{
    const fs::path cfg = write_config("a.cfg", quick);
    const fs::path blocker = root_ / "file";
    std::ofstream(blocker) << "x";
    EXPECT_EQ(run({"bounds", cfg.string(), "--out", (blocker / "sub").string()}), 3);
    EXPECT_NE(err_.str().find("partial results"), std::string::npos);
}

TEST_F(Cli, UsageErrors)
{
    EXPECT_EQ(run({}), 1);
    EXPECT_EQ(run({"bounds"}), 1);
    EXPECT_EQ(run({"simulate", "x.cfg", "--trials", "many"}), 1);
    EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(Cli, SweepGRowsAndInsufficientTransmissions)
{
    const fs::path cfg = write_config("a.cfg", std::string(quick) + "g_grid = 1, 2\nnr_grid = 8, 12\n");
    ASSERT_EQ(run({"sweep-g", cfg.string(), "--out", (root_ / "out").string()}), 0) << err_.str();
    const auto l = lines(root_ / "out" / "sweep_g.csv");
    ASSERT_EQ(l.size(), 6u);
    EXPECT_EQ(l[1].rfind("g,n_r,rmse_p_m,peb_m,trials", 0), 0u);
    EXPECT_EQ(l[2].rfind("1,8,nan,", 0), 0u);
    EXPECT_NE(l[2].find("insufficient-transmissions"), std::string::npos);
    EXPECT_EQ(l[3].rfind("2,8,", 0), 0u);
    EXPECT_EQ(l[5].rfind("2,12,", 0), 0u);
}

TEST_F(Cli, IdenticalRunsGiveIdenticalFiles)
{
    const fs::path cfg = write_config("a.cfg", quick);
    ASSERT_EQ(run({"simulate", cfg.string(), "--out", (root_ / "a").string()}), 0);
    ASSERT_EQ(run({"simulate", cfg.string(), "--out", (root_ / "b").string()}), 0);
    for (const char* f : {"trials.csv", "summary.csv"})
        EXPECT_EQ(read(root_ / "a" / f), read(root_ / "b" / f)) << f;
}

TEST_F(Cli, ManifestEchoReparsesToEffectiveConfig)
{
    const fs::path cfg = write_config("a.cfg", quick);
    ASSERT_EQ(run({"bounds", cfg.string(), "--out", (root_ / "out").string(), "--seed", "99", "--trials", "3"}), 0);
    const auto m = nlohmann::json::parse(read(root_ / "out" / "bounds_manifest.json"));
    experiment_config expected = parse_config(quick);
    expected.master_seed = 99;
    expected.trials = 3;
    EXPECT_EQ(parse_config(m.at("config").get<std::string>()), expected);
    EXPECT_EQ(m.at("master_seed").get<std::uint64_t>(), 99u);
    EXPECT_EQ(m.at("code_version").get<std::string>(), version);
    EXPECT_EQ(m.at("status").get<std::string>(), "ok");
    EXPECT_EQ(m.at("outputs").at(0).get<std::string>(), "bounds.csv");
    EXPECT_TRUE(m.contains("started_utc"));
    EXPECT_TRUE(m.contains("finished_utc"));
}

TEST_F(Cli, SeedOverrideChangesTrials)
{
    const fs::path cfg = write_config("a.cfg", quick);
    ASSERT_EQ(run({"simulate", cfg.string(), "--out", (root_ / "a").string(), "--seed", "1"}), 0);
    ASSERT_EQ(run({"simulate", cfg.string(), "--out", (root_ / "b").string(), "--seed", "2"}), 0);
    EXPECT_NE(read(root_ / "a" / "trials.csv"), read(root_ / "b" / "trials.csv"));
}
