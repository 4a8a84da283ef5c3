// End-to-end exercises of the mdsvm command-line tool in a scratch directory.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#ifndef MDSVM_CLI_PATH
#define MDSVM_CLI_PATH "./mdsvm"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const std::string out_file = "cli_out_" + std::to_string(counter++) + ".txt";
    const std::string cmd = std::string(MDSVM_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    std::remove(out_file.c_str());
#ifdef _WIN32
    const int code = status;
#else
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#endif
    return {code, ss.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

const std::string kToyNet = "--ladder 2 4 --cmax 2 --nstate 3 --coarse 16 16 16 --block-side 16";

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("mdsvm_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        fs::current_path(dir);
    }
    ~Scratch() {
        std::error_code ec;
        fs::current_path(fs::temp_directory_path(), ec);
        fs::remove_all(dir, ec);
    }
};

}  // namespace

TEST_CASE("cli end to end") {
    Scratch scratch;

    SUBCASE("synth writes paired volumes plus manifest; seeds reproduce") {
        auto r = run_cli("synth --seed 3 --shape 24 24 24 --count 3 --tubes 1 "
                         "--radius-min 1.2 --radius-max 2.0 --out data");
        CHECK(r.exit_code == 0);
        for (int i = 0; i < 3; ++i) {
            char img[64], lbl[64];
            std::snprintf(img, sizeof(img), "data/case_%04d.img.mdsv", i);
            std::snprintf(lbl, sizeof(lbl), "data/case_%04d.lbl.mdsv", i);
            CHECK(fs::exists(img));
            CHECK(fs::exists(lbl));
        }
        CHECK(fs::exists("data/manifest.json"));
        const std::string manifest = slurp("data/manifest.json");
        CHECK(manifest.find("\"command\": \"synth\"") != std::string::npos);
        CHECK(manifest.find("\"seed\": 3") != std::string::npos);

        auto r2 = run_cli("synth --seed 3 --shape 24 24 24 --count 3 --tubes 1 "
                          "--radius-min 1.2 --radius-max 2.0 --out data2");
        CHECK(r2.exit_code == 0);
        CHECK(slurp("data/case_0000.img.mdsv") == slurp("data2/case_0000.img.mdsv"));
        CHECK(slurp("data/case_0002.lbl.mdsv") == slurp("data2/case_0002.lbl.mdsv"));
    }

    SUBCASE("invalid shape is a usage error") {
        auto r = run_cli("synth --shape 0 16 16 --out bad");
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("--shape") != std::string::npos);
    }

    SUBCASE("train, segment, eval round trip on a toy configuration") {
        REQUIRE(run_cli("synth --seed 5 --shape 32 32 32 --count 2 --tubes 1 "
                        "--radius-min 1.3 --radius-max 2.2 --out data").exit_code == 0);

        auto t1 = run_cli("train --stage 1 --data data --epochs 2 --seed 2 " + kToyNet + " --out run1");
        CHECK(t1.exit_code == 0);
        CHECK(fs::exists("run1/model_stage1.mdsvckpt"));
        CHECK(fs::exists("run1/loss_trace.tsv"));
        CHECK(fs::exists("run1/manifest.json"));
        const std::string trace = slurp("run1/loss_trace.tsv");
        CHECK(trace.find("epoch\tloss\tlr") != std::string::npos);

        auto t2 = run_cli("train --stage 2 --data data --epochs 2 --seed 2 --guidance gt " + kToyNet +
                          " --out run2");
        CHECK(t2.exit_code == 0);
        CHECK(fs::exists("run2/model_stage2.mdsvckpt"));

        auto seg = run_cli("segment --model1 run1/model_stage1.mdsvckpt "
                           "--model2 run2/model_stage2.mdsvckpt --input data/case_0000.img.mdsv "
                           "--output pred.mdsv --export-slices slices " + kToyNet);
        CHECK(seg.exit_code == 0);
        CHECK(fs::exists("pred.mdsv"));
        CHECK(fs::exists("pred.mdsv.manifest.json"));
        int slice_count = 0;
        for (const auto& e : fs::directory_iterator("slices")) {
            (void)e;
            ++slice_count;
        }
        CHECK(slice_count == 32);  // one PGM per axial slice

        auto self_eval = run_cli("eval --pred data/case_0000.lbl.mdsv --gt data/case_0000.lbl.mdsv");
        CHECK(self_eval.exit_code == 0);
        CHECK(self_eval.output.find("DSC 1.0000") != std::string::npos);
        CHECK(self_eval.output.find("HD 0.0000") != std::string::npos);
        CHECK(self_eval.output.find("AHD 0.0000") != std::string::npos);
        CHECK(self_eval.output.find("MEAN") != std::string::npos);
        CHECK(self_eval.output.find("# units: voxels") != std::string::npos);
    }

    SUBCASE("corrupted checkpoint magic is a usage error") {
        REQUIRE(run_cli("synth --seed 6 --shape 16 16 16 --count 1 --tubes 1 --radius-min 1.2 "
                        "--radius-max 1.8 --out data3").exit_code == 0);
        {
            std::ofstream os("bad.mdsvckpt", std::ios::binary);
            os << "NOTMAGIC whatever";
        }
        auto r = run_cli("segment --model1 bad.mdsvckpt --model2 bad.mdsvckpt "
                         "--input data3/case_0000.img.mdsv --output p.mdsv " + kToyNet);
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("bad checkpoint magic") != std::string::npos);
    }

    SUBCASE("missing data directory is a usage error") {
        auto r = run_cli("train --stage 1 --data nowhere " + kToyNet + " --out runx");
        CHECK(r.exit_code == 2);
    }

    SUBCASE("empty ground truth is an undefined-metric error (exit 4)") {
        REQUIRE(run_cli("synth --seed 7 --shape 16 16 16 --count 1 --tubes 1 --radius-min 1.2 "
                        "--radius-max 1.8 --out data4").exit_code == 0);
        // all-background label of the same shape (payload starts after the
        // 32-byte header)
        std::string src = slurp("data4/case_0000.lbl.mdsv");
        for (std::size_t i = 32; i < src.size(); ++i) src[i] = 0;
        std::ofstream os("empty.lbl.mdsv", std::ios::binary);
        os.write(src.data(), static_cast<std::streamsize>(src.size()));
        os.close();
        auto r = run_cli("eval --pred data4/case_0000.lbl.mdsv --gt empty.lbl.mdsv");
        CHECK(r.exit_code == 4);
        CHECK(r.output.find("undefined") != std::string::npos);
    }

    SUBCASE("verify rejects unknown suites and accepts known ones") {
        auto bad = run_cli("verify --suite nonsense");
        CHECK(bad.exit_code == 2);
        auto ok = run_cli("verify --suite oracle");
        CHECK(ok.exit_code == 0);
        CHECK(ok.output.find("PASS") != std::string::npos);
        CHECK(ok.output.find("all checks passed") != std::string::npos);
    }

    SUBCASE("config file values are used and flags win") {
        {
            std::ofstream os("synth.cfg");
            os << "# toy synthesis profile\n"
               << "seed=9\n"
               << "shape=20 20 20\n"
               << "count=1\n"
               << "tubes=1\n"
               << "radius-min=1.2\n"
               << "radius-max=1.9\n"
               << "out=cfg_data\n";
        }
        auto r = run_cli("synth --config synth.cfg --count 2");
        CHECK(r.exit_code == 0);
        CHECK(fs::exists("cfg_data/case_0000.img.mdsv"));
        CHECK(fs::exists("cfg_data/case_0001.img.mdsv"));  // flag overrode count=1
    }
}
