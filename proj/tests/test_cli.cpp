#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "phpoisson/cli.hpp"
#include "support.hpp"

using namespace phpoisson;
using namespace testing_support;

namespace {

namespace fs = std::filesystem;

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "phpoisson");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string model_path(const std::string& name) { return std::string(PHPOISSON_MODELS_DIR) + "/" + name; }

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() / ("phpoisson_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string write(const std::string& name, const std::string& text) const {
        const auto p = path_ / name;
        std::ofstream(p) << text;
        return p.string();
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

/// Non-comment CSV rows split into fields.
std::vector<std::vector<std::string>> csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        rows.push_back(f);
    }
    return rows;
}

std::string footer_line(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string last;
    while (std::getline(in, line))
        if (line.rfind("# tail_bound=", 0) == 0) last = line;
    return last;
}

}  // namespace

TEST(Cli, MomentsExample3) {
    const auto r = run_cli({"moments", "--model", model_path("example3.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::map<std::string, double> q;
    for (const auto& row : csv(r.out))
        if (row.size() == 2 && row[0] != "quantity") q[row[0]] = std::stod(row[1]);
    EXPECT_NEAR(q.at("mean"), 13.84, 0.01);
    EXPECT_NEAR(q.at("variance"), 47.31, 0.02);
    EXPECT_TRUE(q.count("factorial_moment_4"));
    EXPECT_FALSE(footer_line(r.out).empty());
    const auto pretty = run_cli({"moments", "--model", model_path("example3.json"), "--pretty"});
    EXPECT_NE(pretty.out.find("variance"), std::string::npos);
    EXPECT_EQ(pretty.out.find("quantity,value"), std::string::npos);
}

TEST(Cli, MomentsGenab0) {
    const auto r = run_cli({"moments", "--model", model_path("negbin.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    // Negative binomial r = 3, q = 0.4: mean r q / (1 - q) = 2.
    for (const auto& row : csv(r.out))
        if (row[0] == "mean") EXPECT_NEAR(std::stod(row[1]), 2.0, 1e-10);
}

TEST(Cli, ConvertExample3) {
    const auto r = run_cli({"convert", "--model", model_path("example3.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto phys = std::get<PhysicalRep>(io::parse_model(r.out));
    EXPECT_EQ(phys.nu, 0.05 + 21.0);
    EXPECT_NEAR(phys.nu, 21.05, 1e-12);
}

TEST(Cli, ConvertRoundTripPmfIdentical) {
    TempDir dir;
    const auto phys = dir.file("phys.json");
    const auto back = dir.file("back.json");
    ASSERT_EQ(run_cli({"convert", "--model", model_path("example3.json"), "--out", phys}).code, 0);
    ASSERT_EQ(run_cli({"convert", "--model", phys, "--out", back}).code, 0);
    const auto a = run_cli({"pmf", "--model", model_path("example3.json"), "--n-max", "50", "--digits", "12"});
    const auto b = run_cli({"pmf", "--model", back, "--n-max", "50", "--digits", "12"});
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(csv(a.out), csv(b.out));
}

TEST(Cli, PmfDegenerate) {
    TempDir dir;
    const auto m = dir.write("zero.json", R"({"kind":"ph-poisson","beta":[1.0],"B":[[0.0]]})");
    const auto r = run_cli({"pmf", "--model", m});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv(r.out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"n", "p"}));
    EXPECT_EQ(rows[1], (std::vector<std::string>{"0", "1.0"}));
    EXPECT_EQ(footer_line(r.out), "# tail_bound=0.0");
}

TEST(Cli, PmfHonorsTolAndNMax) {
    const auto loose = run_cli({"pmf", "--model", model_path("example3.json"), "--tol", "1e-4"});
    const auto tight = run_cli({"pmf", "--model", model_path("example3.json"), "--tol", "1e-14"});
    ASSERT_EQ(loose.code, 0);
    ASSERT_EQ(tight.code, 0);
    EXPECT_LT(csv(loose.out).size(), csv(tight.out).size());
    const double tail = std::stod(footer_line(tight.out).substr(13));
    EXPECT_LE(tail, 1e-14);
    const auto fixed = run_cli({"pmf", "--model", model_path("example3.json"), "--n-max", "10"});
    EXPECT_EQ(csv(fixed.out).size(), 12u);
}

TEST(Cli, Reduce) {
    const auto r = run_cli({"reduce", "--model", model_path("reducible.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto red = std::get<GenAB0Rep>(io::parse_model(r.out));
    EXPECT_EQ(red.order(), 1);
    EXPECT_NE(r.out.find("order=2->1"), std::string::npos);
}

TEST(Cli, Compound) {
    const auto r = run_cli({"compound", "--model", model_path("example3.json"), "--severity", model_path("severity.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv(r.out);
    double mass = 0.0;
    double mean = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const double g = std::stod(rows[k][1]);
        mass += g;
        mean += std::stod(rows[k][0]) * g;
    }
    EXPECT_NEAR(mass, 1.0, 1e-8);
    EXPECT_NEAR(mean, moments(tridiagonal5()).mean * 1.7, 1e-6);
    const auto fixed = run_cli({"compound", "--model", model_path("negbin.json"), "--severity",
                                model_path("severity.csv"), "--n-max", "5"});
    ASSERT_EQ(fixed.code, 0) << fixed.err;
    EXPECT_EQ(csv(fixed.out).size(), 7u);
}

TEST(Cli, SimulateDeterministic) {
    TempDir dir;
    const auto m = dir.write("phys.json", R"({"kind":"physical","nu":3,"alpha":[0.5,0.5],"P":[[0.6,0.3],[0.1,0.8]]})");
    const auto a = run_cli({"simulate", "--model", m, "--n-samples", "500", "--seed", "9"});
    const auto b = run_cli({"simulate", "--model", m, "--n-samples", "500", "--seed", "9", "--threads", "3"});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(csv(a.out).size(), 500u);
    EXPECT_NE(a.out.find("acceptance_rate="), std::string::npos);
    const auto h = run_cli({"simulate", "--model", m, "--n-samples", "500", "--seed", "9", "--histogram"});
    const auto rows = csv(h.out);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"value", "count"}));
    std::size_t total = 0;
    for (std::size_t k = 1; k < rows.size(); ++k) total += std::stoul(rows[k][1]);
    EXPECT_EQ(total, 500u);
    const auto c = run_cli({"simulate", "--model", model_path("example3.json"), "--n-samples", "100", "--method",
                            "conditioned"});
    ASSERT_EQ(c.code, 0) << c.err;
    EXPECT_EQ(run_cli({"simulate", "--model", m, "--method", "other"}).code, 2);
}

TEST(Cli, SimulateExhaustedRejections) {
    const auto r = run_cli({"simulate", "--model", model_path("example3.json"), "--n-samples", "5",
                            "--max-rejections", "10"});
    EXPECT_EQ(r.code, 5);
    EXPECT_EQ(r.err.rfind("error\tnumerical\t", 0), 0u);
    EXPECT_NE(r.err.find("6.44"), std::string::npos);
}

TEST(Cli, FitAndKkt) {
    TempDir dir;
    const auto m = dir.write("phys.json", R"({"kind":"physical","nu":4,"alpha":[1],"P":[[1]]})");
    const auto sample = dir.file("sample.csv");
    ASSERT_EQ(run_cli({"simulate", "--model", m, "--n-samples", "300", "--seed", "4", "--out", sample}).code, 0);
    const auto model_out = dir.file("fitted.json");
    const auto r = run_cli({"fit", "--sample", sample, "--phases", "1", "--model-out", model_out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv(r.out);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"iter", "loglik", "nu", "alpha_1", "p_1_1", "m_status", "p_stochastic"}));
    EXPECT_NE(footer_line(r.out).find("converged=1"), std::string::npos);
    const auto y = io::read_sample(sample);
    const auto fitted = std::get<PhysicalRep>(io::read_model(model_out));
    EXPECT_NEAR(fitted.nu * fitted.P(0, 0), y.mean(), 1e-6);

    const auto k = run_cli({"kkt", "--model", model_out, "--sample", sample});
    ASSERT_EQ(k.code, 0) << k.err;
    std::map<std::string, double> q;
    for (const auto& row : csv(k.out))
        if (row[0] != "quantity" && row[3] != "inactive") q[row[0] + row[1] + row[2]] = std::stod(row[3]);
    EXPECT_LT(std::abs(q.at("r_alpha")), 1e-12);
    EXPECT_LT(std::abs(q.at("stochastic_form11")), 1e-6);

    const auto cfg = dir.write("cfg.json", R"({"theta0":{"nu":3,"alpha":[0.5,0.5],"P":[[0.9,0],[0,0.5]]},"max_iter":5})");
    const auto r2 = run_cli({"fit", "--sample", sample, "--config", cfg});
    ASSERT_EQ(r2.code, 0) << r2.err;
    EXPECT_EQ(csv(r2.out).size(), 7u);  // header, start and 5 iterations
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"bogus"}).code, 2);
    EXPECT_EQ(run_cli({"pmf"}).code, 2);
    EXPECT_EQ(run_cli({"pmf", "--model", dir.write("bad.json", "{")}).code, 2);
    EXPECT_EQ(run_cli({"pmf", "--model", model_path("example3.json"), "--tol", "abc"}).code, 2);
    const auto bad = run_cli({"pmf", "--model", dir.write("neg.json", R"({"kind":"physical","nu":-1,"alpha":[1],"P":[[1]]})")});
    EXPECT_EQ(bad.code, 3);
    EXPECT_EQ(bad.err.rfind("error\tvalidation\t", 0), 0u);
    EXPECT_EQ(std::count(bad.err.begin(), bad.err.end(), '\n'), 1);
    const auto div = run_cli({"pmf", "--model", dir.write("div.json", R"({"kind":"genab0","beta":[1],"A":[[1.5]],"B":[[0]]})")});
    EXPECT_EQ(div.code, 4);
    EXPECT_EQ(div.err.rfind("error\tdivergence\t", 0), 0u);
    EXPECT_EQ(run_cli({"reduce", "--model", model_path("example3.json")}).code, 3);
    EXPECT_EQ(run_cli({"fit", "--sample", dir.write("empty.csv", "")}).code, 3);
}

TEST(Cli, Help) {
    const auto r = run_cli({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("simulate"), std::string::npos);
    const auto s = run_cli({"fit", "--help"});
    EXPECT_EQ(s.code, 0);
    EXPECT_NE(s.out.find("--sample"), std::string::npos);
}

TEST(Cli, Binary) {
    const std::string cmd = std::string(PHPOISSON_CLI_PATH) + " moments --model " + model_path("example3.json") + " > /dev/null";
    EXPECT_EQ(std::system(cmd.c_str()), 0);
    const std::string bad = std::string(PHPOISSON_CLI_PATH) + " pmf 2> /dev/null";
    const int status = std::system(bad.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 2);
}
