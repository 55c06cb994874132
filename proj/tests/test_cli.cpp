#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "advface_cli_test";

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(const std::string& args) {
    const fs::path o = kRoot / "stdout.txt";
    const fs::path e = kRoot / "stderr.txt";
    const std::string cmd = std::string(ADVFACE_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::string p(const std::string& rel) { return (kRoot / rel).string(); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
    return n;
}

// Fresh scratch directory with a small dataset and spec files.
void setup() {
    static bool done = false;
    if (done) return;
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write_file(kRoot / "grids.json", R"({"kind":"grids","rho_grids":10,"seed":3})");
    write_file(kRoot / "xmsb.json", R"({"kind":"xmsb","phi":[0.03,0.05,0.10],"seed":42})");
    REQUIRE(cli("gen-data --subjects 4 --samples 3 --size 64 --seed 7 --out " + p("small")).code == 0);
    done = true;
}

}  // namespace

TEST_CASE("gen-data writes one PGM per image plus a manifest") {
    setup();
    const auto r = cli("gen-data --subjects 40 --samples 10 --size 64 --seed 7 --out " + p("d"));
    REQUIRE(r.code == 0);
    CHECK(count_ext(kRoot / "d", ".pgm") == 400);
    CHECK(fs::exists(kRoot / "d" / "manifest.json"));
}

TEST_CASE("distort writes N images and records.json without touching the input") {
    setup();
    const std::string before = read_file(kRoot / "small" / "manifest.json");
    const auto r = cli("distort --spec " + p("xmsb.json") + " --in " + p("small") + " --out " + p("dx"));
    REQUIRE(r.code == 0);
    CHECK(count_ext(kRoot / "dx", ".pgm") == 12);
    CHECK(fs::exists(kRoot / "dx" / "records.json"));
    CHECK(read_file(kRoot / "small" / "manifest.json") == before);
}

TEST_CASE("exit codes: usage errors are 1, data errors are 2") {
    setup();
    CHECK(cli("gen-data --subjects 4 --bogus 1 --out " + p("x")).code == 1);
    CHECK(cli("distort --spec " + p("missing.json") + " --in " + p("small") + " --out " + p("x")).code == 1);
    const auto missing = cli("distort --spec " + p("grids.json") + " --in " + p("small"));
    CHECK(missing.code == 1);
    CHECK(missing.err.find("--out") != std::string::npos);
    CHECK(cli("no-such-command").code == 1);

    fs::create_directories(kRoot / "broken");
    fs::copy_file(kRoot / "small" / "manifest.json", kRoot / "broken" / "manifest.json", fs::copy_options::overwrite_existing);
    for (const auto& e : fs::directory_iterator(kRoot / "small"))
        if (e.path().extension() == ".pgm")
            fs::copy_file(e.path(), kRoot / "broken" / e.path().filename(), fs::copy_options::overwrite_existing);
    fs::resize_file(kRoot / "broken" / "s0000_000.pgm", 20);
    CHECK(cli("extract --in " + p("broken") + " --out " + p("x")).code == 2);

    // An unknown kind is a bad parameter; unparseable JSON is a format error.
    write_file(kRoot / "bad_spec.json", R"({"kind":"blur"})");
    CHECK(cli("distort --spec " + p("bad_spec.json") + " --in " + p("small") + " --out " + p("x")).code == 1);
    write_file(kRoot / "bad_json.json", R"({"kind":"grids",)");
    CHECK(cli("distort --spec " + p("bad_json.json") + " --in " + p("small") + " --out " + p("x")).code == 2);
}

TEST_CASE("config file supplies defaults and flags win") {
    setup();
    write_file(kRoot / "gen.json", R"({"subjects": 3, "samples": 2, "seed": 7})");
    REQUIRE(cli("gen-data --config " + p("gen.json") + " --out " + p("cfg_a")).code == 0);
    CHECK(count_ext(kRoot / "cfg_a", ".pgm") == 6);
    REQUIRE(cli("gen-data --config " + p("gen.json") + " --samples 3 --out " + p("cfg_b")).code == 0);
    CHECK(count_ext(kRoot / "cfg_b", ".pgm") == 9);
    write_file(kRoot / "gen_bad.json", R"({"subjectz": 3})");
    CHECK(cli("gen-data --config " + p("gen_bad.json") + " --out " + p("cfg_c")).code == 1);
}

TEST_CASE("full pipeline: evaluate gives three rows and reruns are byte-identical") {
    setup();
    REQUIRE(cli("distort --spec " + p("grids.json") + " --in " + p("small") + " --out " + p("dg")).code == 0);
    REQUIRE(cli("train-detector --clean " + p("small") + " --distorted " + p("dg") + " --seed 5 --out " + p("det")).code == 0);
    REQUIRE(cli("detect --detector " + p("det/detector.json") + " --in " + p("dg") + " --out " + p("verd")).code == 0);
    const std::string verdicts = read_file(kRoot / "verd" / "verdicts.csv");
    CHECK(verdicts.rfind("path,score,verdict\n", 0) == 0);
    REQUIRE(cli("sensitivity --clean " + p("small") + " --distorted " + p("dg") + " --out " + p("sens")).code == 0);
    REQUIRE(cli("build-plan --sensitivity " + p("sens/sensitivity.json") + " --eta 2 --kappa 0.25 --out " + p("plan")).code == 0);
    REQUIRE(cli("mitigate --plan " + p("plan/plan.json") + " --detector " + p("det/detector.json") + " --in " + p("dg") +
                " --out " + p("mit"))
                .code == 0);
    CHECK(fs::exists(kRoot / "mit" / "embeddings.csv"));

    const std::string eval = "evaluate --dataset " + p("small") + " --distortion " + p("grids.json") + " --detector " +
                             p("det/detector.json") + " --plan " + p("plan/plan.json") + " --far 0.01 --seed 9 --out ";
    const auto r1 = cli(eval + p("ev1"));
    REQUIRE(r1.code == 0);
    const std::string csv = read_file(kRoot / "ev1" / "report.csv");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "condition,distortion,gar_at_far,far_target,n_genuine,n_impostor,seed");
    int rows = 0;
    for (const char* cond : {"original,", "distorted,", "corrected,"}) {
        REQUIRE(std::getline(lines, line));
        CHECK(line.rfind(cond, 0) == 0);
        ++rows;
    }
    CHECK_FALSE(std::getline(lines, line));
    CHECK(rows == 3);
    CHECK(r1.out == csv);

    const auto r2 = cli(eval + p("ev2"));
    REQUIRE(r2.code == 0);
    CHECK(read_file(kRoot / "ev2" / "report.csv") == csv);

    // Without detector and plan only two rows.
    const auto r3 = cli("evaluate --dataset " + p("small") + " --distortion " + p("grids.json") + " --out " + p("ev3"));
    REQUIRE(r3.code == 0);
    CHECK(std::count(r3.out.begin(), r3.out.end(), '\n') == 3);
    CHECK(cli("evaluate --dataset " + p("small") + " --distortion " + p("grids.json") + " --plan " + p("plan/plan.json") +
              " --out " + p("ev4"))
              .code == 1);
}

TEST_CASE("gen-data and distort are byte-reproducible") {
    setup();
    REQUIRE(cli("gen-data --subjects 3 --samples 2 --seed 11 --out " + p("r1")).code == 0);
    REQUIRE(cli("gen-data --subjects 3 --samples 2 --seed 11 --out " + p("r2")).code == 0);
    for (const auto& e : fs::directory_iterator(kRoot / "r1")) CHECK(read_file(e.path()) == read_file(kRoot / "r2" / e.path().filename()));
    REQUIRE(cli("distort --spec " + p("xmsb.json") + " --in " + p("r1") + " --out " + p("rx1")).code == 0);
    REQUIRE(cli("distort --spec " + p("xmsb.json") + " --in " + p("r1") + " --out " + p("rx2")).code == 0);
    for (const auto& e : fs::directory_iterator(kRoot / "rx1")) CHECK(read_file(e.path()) == read_file(kRoot / "rx2" / e.path().filename()));
}
