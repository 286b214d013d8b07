#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("flownet_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Runs the binary with `args`; stdout is discarded, stderr captured.
    Result run(const std::string& args) const {
        const auto err_file = dir_ / "stderr.txt";
        const std::string cmd = std::string("\"") + FLOWNET_CLI_PATH + "\" " + args + " > /dev/null 2> \"" +
                                err_file.string() + "\"";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = slurp(err_file);
        return r;
    }

    std::string out(const std::string& name) const { return "--out \"" + (dir_ / name).string() + "\""; }

    json load(const std::string& rel) const { return json::parse(slurp(dir_ / rel)); }

    void pipeline(const std::string& name) const {
        const std::string common = out(name) + " --seed 3 --trials 2 --grid-k 40 --nmf-d 7 ";
        ASSERT_EQ(run(common + "synth --nodes 3000").code, 0);
        for (const char* c : {"ingest", "stats", "bowtie", "hodge", "communities", "nmf", "report"})
            ASSERT_EQ(run(common + c).code, 0) << c;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST_F(CliTest, MissingSubcommandIsAUsageError) { EXPECT_EQ(run("").code, 1); }

TEST_F(CliTest, InvalidFieldsNameTheFlag) {
    auto r = run(out("a") + " --grid-k 0 nmf");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--grid-k"), std::string::npos) << r.err;

    r = run(out("a") + " --weight volume hodge");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--weight"), std::string::npos) << r.err;

    r = run(out("a") + " --nmf-d-range 5:2 nmf");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--nmf-d-range"), std::string::npos) << r.err;

    r = run(out("a") + " --grid-bounds 1,2,3 nmf");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--grid-bounds"), std::string::npos) << r.err;

    r = run(out("a") + " synth --scenario lattice");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--scenario"), std::string::npos) << r.err;
}

TEST_F(CliTest, HodgeWithoutIngestNamesTheMissingStep) {
    const auto r = run(out("empty") + " hodge");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("links.csv"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("ingest"), std::string::npos) << r.err;
}

TEST_F(CliTest, IngestWithoutSynthOrInputNamesSynth) {
    const auto r = run(out("empty") + " ingest");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("synth"), std::string::npos) << r.err;
}

TEST_F(CliTest, ReportNamesTheFirstMissingArtifact) {
    ASSERT_EQ(run(out("p") + " synth --nodes 400 --scenario walnut").code, 0);
    ASSERT_EQ(run(out("p") + " ingest").code, 0);
    ASSERT_EQ(run(out("p") + " stats").code, 0);
    const auto r = run(out("p") + " report");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bowtie"), std::string::npos) << r.err;
}

TEST_F(CliTest, SynthThenBowtieGivesFourComponentCounts) {
    ASSERT_EQ(run(out("w") + " synth --scenario walnut --nodes 2000").code, 0);
    ASSERT_EQ(run(out("w") + " ingest").code, 0);
    ASSERT_EQ(run(out("w") + " bowtie").code, 0);
    const auto b = load("w/bowtie.json");
    std::size_t sum = 0;
    std::map<std::string, std::size_t> counts;
    for (const auto& c : b["components"]) counts[c["component"]] = c["accounts"];
    for (const char* name : {"GSCC", "IN", "OUT", "TE"}) {
        ASSERT_TRUE(counts.count(name)) << name;
        EXPECT_GT(counts[name], 0u) << name;
        sum += counts[name];
    }
    EXPECT_EQ(sum, b["gwcc"].get<std::size_t>());
    EXPECT_NEAR(double(counts["GSCC"]) / 2000.0, 0.382, 0.03);

    // bowtie.csv has one row per account
    std::istringstream csv(slurp(dir_ / "w/bowtie.csv"));
    std::string line;
    std::size_t rows = 0;
    std::getline(csv, line);
    EXPECT_EQ(line, "account_id,component");
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 2000u);
}

TEST_F(CliTest, IngestConservesAmountsAndFiltersNoise) {
    ASSERT_EQ(run(out("i") + " synth --scenario walnut --nodes 1500").code, 0);
    ASSERT_EQ(run(out("i") + " ingest").code, 0);
    const auto j = load("i/ingest.json");
    EXPECT_EQ(j["amount_total"], j["flow_total"]);
    EXPECT_EQ(j["kept_records"], j["frequency_total"]);
    EXPECT_GT(j["filtered_records"].get<std::size_t>(), 0u);
    EXPECT_EQ(j["nodes"].get<std::size_t>(), 1500u);
    EXPECT_EQ(j["rejected_lines"].get<std::size_t>(), 0u);

    ASSERT_EQ(run(out("i") + " --allow-households ingest").code, 1);  // flag belongs to the subcommand
    ASSERT_EQ(run(out("i") + " ingest --allow-households --allow-external").code, 0);
    const auto relaxed = load("i/ingest.json");
    EXPECT_LT(relaxed["filtered_records"].get<std::size_t>(), j["filtered_records"].get<std::size_t>());
    EXPECT_GT(relaxed["nodes"].get<std::size_t>(), 1500u);  // households and other-bank parties join
}

TEST_F(CliTest, IngestReadsAnExternalLogAndReportsRejects) {
    const auto log = dir_ / "log.csv";
    std::ofstream(log) << "2018-01-05T10:00:00,F1,F2,1000,firm,firm\n"
                          "not a record\n"
                          "2018-01-06T10:00:00,F2,F1,500,firm,firm\n";
    ASSERT_EQ(run(out("x") + " --input \"" + log.string() + "\" ingest").code, 0);
    const auto j = load("x/ingest.json");
    EXPECT_EQ(j["rejected_lines"].get<std::size_t>(), 1u);
    EXPECT_EQ(j["links"].get<std::size_t>(), 2u);
    EXPECT_NE(slurp(dir_ / "x/rejected.csv").find("2,"), std::string::npos);

    EXPECT_EQ(run(out("x") + " --strict --input \"" + log.string() + "\" ingest").code, 2);
    EXPECT_EQ(run(out("x") + " --input \"" + (dir_ / "nope.csv").string() + "\" ingest").code, 2);
}

TEST_F(CliTest, NmfWithoutCoordinatesIsADataError) {
    const auto log = dir_ / "log.csv";
    std::ofstream(log) << "2018-01-05T10:00:00,F1,F2,1000,firm,firm\n";
    ASSERT_EQ(run(out("n") + " --input \"" + log.string() + "\" ingest").code, 0);
    EXPECT_EQ(run(out("n") + " nmf").code, 2);
}

TEST_F(CliTest, FullPipelineWritesTheReportBundle) {
    pipeline("run");
    const auto r = load("run/report/report.json");
    for (const char* key :
         {"network", "link_statistics", "degree_correlation", "communities", "bowtie", "bowtie_distances", "hodge", "nmf", "figures"})
        EXPECT_TRUE(r.contains(key)) << key;
    EXPECT_EQ(r["network"]["nodes"].get<std::size_t>(), 3000u);
    EXPECT_EQ(r["nmf"]["factors"].size(), 7u);
    EXPECT_EQ(r["nmf"]["similarity"].size(), 7u);
    for (const char* c : {"GSCC", "IN", "OUT", "TE"}) EXPECT_TRUE(r["hodge"]["component_mean_potential"].contains(c)) << c;
    ASSERT_FALSE(r["communities"]["levels"].empty());
    EXPECT_EQ(r["communities"]["total_accounts"].get<std::size_t>(), 3000u);

    for (const char* fig : {"degree_ccdf.svg", "link_flow_ccdf.svg", "link_frequency_ccdf.svg", "potential_histogram.svg",
                            "community_rank_size.svg", "nmf_source_01.svg", "nmf_destination_07.svg"}) {
        const auto text = slurp(dir_ / "run/report" / fig);
        EXPECT_EQ(text.rfind("<svg", 0), 0u) << fig;
        EXPECT_NE(text.find("</svg>"), std::string::npos) << fig;
    }
    std::size_t listed = 0;
    for (const auto& f : r["figures"]) {
        EXPECT_TRUE(fs::exists(dir_ / "run/report" / f.get<std::string>())) << f;
        ++listed;
    }
    EXPECT_EQ(listed, 5u + 2u * 7u);

    // every manifest lists outputs whose hashes match the files on disk
    for (const char* c : {"synth", "ingest", "stats", "bowtie", "hodge", "communities", "nmf", "report"}) {
        const auto m = load(std::string("run/manifest_") + c + ".json");
        EXPECT_EQ(m["command"], c);
        EXPECT_TRUE(m.contains("config"));
        EXPECT_TRUE(m.contains("config_fnv1a64"));
        ASSERT_FALSE(m["outputs"].empty()) << c;
        for (const auto& o : m["outputs"])
            EXPECT_EQ(o["bytes"].get<std::size_t>(), fs::file_size(dir_ / "run" / o["file"].get<std::string>()));
        EXPECT_EQ(m.dump().find(dir_.string()), std::string::npos) << "manifest leaks a path";
    }
    EXPECT_EQ(load("run/manifest_hodge.json")["inputs"][0]["fnv1a64"],
              load("run/manifest_ingest.json")["outputs"][0]["fnv1a64"]);
}

TEST_F(CliTest, ManifestsAreByteIdenticalAcrossRuns) {
    pipeline("one");
    pipeline("two");
    for (const char* c : {"synth", "ingest", "stats", "bowtie", "hodge", "communities", "nmf", "report"}) {
        const std::string file = std::string("manifest_") + c + ".json";
        EXPECT_EQ(slurp(dir_ / "one" / file), slurp(dir_ / "two" / file)) << file;
    }
}

TEST_F(CliTest, SeedChangesTheSyntheticLog) {
    ASSERT_EQ(run(out("a") + " --seed 1 synth --nodes 500").code, 0);
    ASSERT_EQ(run(out("b") + " --seed 2 synth --nodes 500").code, 0);
    EXPECT_NE(load("a/manifest_synth.json")["outputs"], load("b/manifest_synth.json")["outputs"]);
}

TEST_F(CliTest, NmfSweepWritesOneRowPerFactorCount) {
    ASSERT_EQ(run(out("s") + " synth --nodes 1500").code, 0);
    ASSERT_EQ(run(out("s") + " ingest").code, 0);
    ASSERT_EQ(run(out("s") + " --grid-k 30 --nmf-d 3 --nmf-d-range 2:4 nmf").code, 0);
    std::istringstream csv(slurp(dir_ / "s/sweep.csv"));
    std::string line;
    std::size_t rows = 0;
    std::getline(csv, line);
    EXPECT_EQ(line.rfind("d,", 0), 0u);
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 3u);
    const auto j = load("s/nmf.json");
    EXPECT_EQ(j["grid"]["k"].get<std::size_t>(), 30u);
}

TEST_F(CliTest, GridBoundsOverrideTheBoundingSquare) {
    ASSERT_EQ(run(out("g") + " synth --nodes 800").code, 0);
    ASSERT_EQ(run(out("g") + " ingest").code, 0);
    ASSERT_EQ(run(out("g") + " --grid-k 20 --nmf-d 2 --grid-bounds 35.5,36.5,137.5,138.5 nmf").code, 0);
    const auto j = load("g/nmf.json");
    EXPECT_DOUBLE_EQ(j["grid"]["lat_min"].get<double>(), 35.5);
    EXPECT_DOUBLE_EQ(j["grid"]["lon_max"].get<double>(), 138.5);
    EXPECT_GT(j["links_out_of_bounds"].get<std::size_t>(), 0u);
}
