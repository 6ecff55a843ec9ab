#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr together
};

class Sandbox {
public:
    Sandbox() {
        std::random_device rd;
        dir_ = fs::temp_directory_path() / ("mixforge_cli_" + std::to_string(rd()));
        fs::create_directories(dir_);
    }
    ~Sandbox() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path write(const std::string& name, const std::string& content) const {
        std::ofstream(path(name), std::ios::binary) << content;
        return path(name);
    }

    std::string read(const std::string& name) const {
        std::ifstream in(path(name), std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    }

    Run run(const std::string& args) const {
        const auto log = path("log.txt");
        const std::string cmd = std::string("'") + MIXFORGE_CLI + "' " + args + " > '" + log.string() + "' 2>&1";
        const int status = std::system(cmd.c_str());
        Run r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.output = read("log.txt");
        return r;
    }

private:
    fs::path dir_;
};

const std::string kData = std::string("--data '") + MIXFORGE_DATA_FILE + "'";

}  // namespace

TEST_CASE("help for every command") {
    Sandbox box;
    const auto top = box.run("--help");
    CHECK(top.code == 0);
    for (const char* flag : {"--data", "--seed", "--out", "--plots", "MIXFORGE_THREADS"}) {
        CHECK(top.output.find(flag) != std::string::npos);
    }
    const std::pair<const char*, const char*> commands[] = {
        {"correlate", "--method"}, {"crossval", "--model"}, {"tune", "--grid"},        {"design", "--criteria"},
        {"predict", "--input"},    {"carbfit", "--series"}, {"props", "--cement-type"},
    };
    for (const auto& [cmd, flag] : commands) {
        CAPTURE(cmd);
        const auto r = box.run(std::string(cmd) + " --help");
        CHECK(r.code == 0);
        CHECK(r.output.find(flag) != std::string::npos);
    }
}

TEST_CASE("argument errors fail fast") {
    Sandbox box;
    CHECK(box.run("").code != 0);
    CHECK(box.run("frobnicate").code != 0);
    CHECK(box.run("correlate --bogus " + kData).code != 0);
    CHECK(box.run("--seed notanumber correlate " + kData).code != 0);
    CHECK(box.run("correlate --method kendall " + kData).code != 0);
    const auto r = box.run("correlate");
    CHECK(r.code != 0);
    CHECK(r.output.find("--data") != std::string::npos);
}

TEST_CASE("correlate") {
    Sandbox box;
    const auto out = box.path("out").string();
    const auto r = box.run(kData + " --out '" + out + "' --plots correlate --method spearman");
    REQUIRE(r.code == 0);
    const auto csv = box.read("out/correlation_spearman.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 15);
    CHECK(fs::exists(box.path("out/correlation_spearman.svg")));

    const auto empty = box.write("empty.csv",
                                 "mix,cement_type,cement_pct,gravel_pct,sand_pct,water_pct,est_mass_per_m3,precond_days,"
                                 "k4,env_impact,strength,density,cost\n");
    const auto e = box.run("--data '" + empty.string() + "' --out '" + out + "' correlate");
    CHECK(e.code != 0);
    CHECK(e.output.find("no records") != std::string::npos);
}

TEST_CASE("crossval is byte-identical across runs") {
    Sandbox box;
    const std::string args = kData + " --seed 42 crossval --model two_layer --n-trees 48";
    REQUIRE(box.run("--out '" + box.path("a").string() + "' " + args).code == 0);
    REQUIRE(box.run("--out '" + box.path("b").string() + "' " + args).code == 0);
    for (const char* f : {"crossval.json", "crossval.csv", "crossval_folds.csv"}) {
        CAPTURE(f);
        const auto a = box.read(std::string("a/") + f);
        CHECK(!a.empty());
        CHECK(a == box.read(std::string("b/") + f));
    }
    const auto other = box.run("--out '" + box.path("c").string() + "' " + kData +
                               " --seed 43 crossval --model two_layer --n-trees 48");
    REQUIRE(other.code == 0);
    CHECK(box.read("a/crossval_folds.csv") != box.read("c/crossval_folds.csv"));

    const auto lin = box.run("--out '" + box.path("d").string() + "' " + kData + " crossval --model linear --target density");
    REQUIRE(lin.code == 0);
    CHECK(box.read("d/crossval.json").find("\"density\"") != std::string::npos);
    CHECK(box.run(kData + " crossval --n-trees 10").code != 0);
}

TEST_CASE("design") {
    Sandbox box;
    const auto crit = box.write("low_e.json", R"({"name": "Low-E", "bounds": [
        {"target": "k4", "op": "<", "value": 2.4}, {"target": "env_impact", "op": "<", "value": 0.108},
        {"target": "strength", "op": ">", "value": 20}, {"target": "density", "op": "<", "value": 2350},
        {"target": "cost", "op": "<", "value": 0.028}]})");
    const auto out = box.path("out").string();
    const auto r = box.run(kData + " --seed 42 --out '" + out + "' --plots design --n-trees 48 --criteria '" +
                           crit.string() + "'");
    REQUIRE(r.code == 0);
    const auto scan = box.read("out/design_scan.csv");
    CHECK(std::count(scan.begin(), scan.end(), '\n') == 13);
    CHECK(box.read("out/design_selected.json").find("\"wc\"") != std::string::npos);
    CHECK(fs::exists(box.path("out/design.svg")));

    const auto bad = box.write("bad.json", R"({"bounds": [{"target": "slump", "op": "<", "value": 1}]})");
    const auto e = box.run(kData + " --out '" + box.path("bad").string() + "' design --criteria '" + bad.string() + "'");
    CHECK(e.code != 0);
    CHECK(e.output.find("slump") != std::string::npos);
    CHECK(!fs::exists(box.path("bad/design_scan.csv")));
}

TEST_CASE("predict") {
    Sandbox box;
    const auto in = box.write("mixes.csv",
                              "mix,cement_type,cement_pct,gravel_pct,sand_pct,water_pct,est_mass_per_m3,precond_days,"
                              "k4,env_impact,strength,density,cost\n"
                              "NC0.6,I 52.5 N,14.2,48.9,28.4,8.5,2412,17,-,-,-,-,-\n");
    const auto r = box.run(kData + " --out '" + box.path("o").string() + "' predict --n-trees 32 --input '" +
                           in.string() + "'");
    REQUIRE(r.code == 0);
    const auto csv = box.read("o/predictions.csv");
    CHECK(csv.rfind("mix,mean_k4", 0) == 0);
    CHECK(csv.find("\nNC0.6,") != std::string::npos);
}

TEST_CASE("carbfit") {
    Sandbox box;
    const auto s = box.write("series.csv", "t_days,x_mm,sigma_mm\n1,2,0\n4,4,0\n9,6,0\n16,8,0\n");
    const auto r = box.run("--out '" + box.path("o").string() + "' carbfit --series '" + s.string() + "'");
    REQUIRE(r.code == 0);
    const auto json = box.read("o/carbfit.json");
    CHECK(json.find("\"k\": 2.0") != std::string::npos);
    CHECK(json.find("\"k_err\": 0.0") != std::string::npos);

    const auto noisy = box.write("noisy.csv", "t_days,x_mm,sigma_mm\n1,2,0.3\n4,4,0.3\n9,6,0.3\n16,8,0.3\n");
    REQUIRE(box.run("--out '" + box.path("n").string() + "' carbfit --series '" + noisy.string() + "'").code == 0);
    CHECK(box.read("n/carbfit.json").find("\"k_err\": 0.0,") == std::string::npos);
}

TEST_CASE("props") {
    Sandbox box;
    const auto r = box.run("--out '" + box.path("o").string() +
                           "' props --cement 14.2 --gravel 48.9 --sand 28.4 --water 8.5 --cement-type I");
    REQUIRE(r.code == 0);
    CHECK(r.output.find("\"env_impact\": 0.134983") != std::string::npos);
    CHECK(r.output.find("\"cost\": 0.02714") != std::string::npos);
    const auto z = box.run("--out '" + box.path("z").string() + "' props --cement 0 --gravel 0 --sand 0 --water 0");
    CHECK(z.code != 0);
    CHECK(z.output.find("validation error") != std::string::npos);
    CHECK(!fs::exists(box.path("z/props.json")));
}

TEST_CASE("tune") {
    Sandbox box;
    const auto grid = box.write("grid.json", R"([{"n_trees": 12, "max_features": 3, "min_samples_split": 2}])");
    const auto r = box.run(kData + " --out '" + box.path("o").string() + "' tune --model single_rf --grid '" +
                           grid.string() + "'");
    REQUIRE(r.code == 0);
    CHECK(box.read("o/tune.json").find("\"n_trees\": 12") != std::string::npos);

    const auto lin = box.run(kData + " --out '" + box.path("l").string() + "' tune --model linear");
    REQUIRE(lin.code == 0);
    CHECK(box.read("l/tune.json").find("\"best\"") != std::string::npos);

    const auto empty = box.write("empty.json", "[]");
    const auto e = box.run(kData + " --out '" + box.path("e").string() + "' tune --grid '" + empty.string() + "'");
    CHECK(e.code != 0);
    CHECK(e.output.find("empty") != std::string::npos);
}
