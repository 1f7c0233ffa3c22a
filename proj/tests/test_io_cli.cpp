// Image formats, run-config parsing, and the full CLI surface driven
// in-process through run_cli(), including exit-code mapping.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "nusr/checkpoint.hpp"
#include "nusr/cli.hpp"
#include "nusr/image_io.hpp"
#include "nusr/ops.hpp"
#include "nusr/run_config.hpp"
#include "test_util.hpp"

using namespace nusr;
using namespace nusr::testutil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag)
        : path(fs::temp_directory_path() / (std::string("nusr_cli_") + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const char* name) const { return path / name; }
};

// run_cli writes user-facing output to std::cout; capture it for assertions.
struct CaptureStdout {
    std::ostringstream buffer;
    std::streambuf* saved;
    CaptureStdout() : saved(std::cout.rdbuf(buffer.rdbuf())) {}
    ~CaptureStdout() { std::cout.rdbuf(saved); }
    std::string str() const { return buffer.str(); }
};

std::vector<std::uint8_t> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

Tensor random_image(std::int64_t h, std::int64_t w, std::uint64_t seed, double lo = -2.0,
                    double hi = 2.0) {
    std::mt19937_64 rng(seed);
    return random_tensor({1, 1, h, w}, rng, lo, hi);
}

}  // namespace

TEST_CASE("fgrd round-trips awkward float values bit-exactly") {
    TempDir dir("fgrd_roundtrip");
    std::vector<scalar> values(8 * 8, scalar(0));
    values[0] = scalar(-0.0f);
    values[1] = std::numeric_limits<scalar>::min();     // smallest normal
    values[2] = std::numeric_limits<scalar>::denorm_min();
    values[3] = scalar(-3.25f);
    values[4] = scalar(1e38f);
    values[5] = scalar(-1e-38f);
    values[6] = std::numeric_limits<scalar>::max();
    values[7] = scalar(0.1f);  // not exactly representable
    Tensor img = Tensor::from_data({1, 1, 8, 8}, values);
    const fs::path path = dir / "img.fgrd";
    write_fgrd(img, path);
    Tensor back = read_fgrd(path);
    REQUIRE(back.shape() == img.shape());
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        // Compare representations, not values, so -0.0 and denormals count.
        CHECK(std::memcmp(&back.data()[u], &img.data()[u], sizeof(scalar)) == 0);
    }
}

TEST_CASE("fgrd rejects bad magic, truncation, and undersized dims") {
    TempDir dir("fgrd_bad");
    Tensor img = random_image(8, 8, 3);
    const fs::path good = dir / "good.fgrd";
    write_fgrd(img, good);
    auto bytes = slurp(good);

    auto corrupted = bytes;
    corrupted[0] = 'X';
    spit(dir / "magic.fgrd", corrupted);
    CHECK_THROWS_AS(read_fgrd(dir / "magic.fgrd"), FormatError);

    auto cut = bytes;
    cut.resize(bytes.size() - 17);
    spit(dir / "cut.fgrd", cut);
    CHECK_THROWS_AS(read_fgrd(dir / "cut.fgrd"), FormatError);

    auto tiny = bytes;
    tiny.resize(9);
    spit(dir / "tiny.fgrd", tiny);
    CHECK_THROWS_AS(read_fgrd(dir / "tiny.fgrd"), FormatError);

    // A 4x4 header fails the >= 8x8 floor even with a matching payload.
    std::vector<std::uint8_t> small = {'F', 'G', 'R', 'D', 4, 0, 0, 0, 4, 0, 0, 0};
    small.resize(12 + 4 * 4 * 4, 0);
    spit(dir / "small.fgrd", small);
    CHECK_THROWS_AS(read_fgrd(dir / "small.fgrd"), FormatError);

    CHECK_THROWS_AS(read_fgrd(dir / "absent.fgrd"), IoError);
    CHECK_THROWS_AS(write_fgrd(Tensor::zeros({1, 1, 4, 4}), dir / "reject.fgrd"),
                    DimensionError);
}

TEST_CASE("png 16-bit round-trip stays within one quantization step") {
    TempDir dir("png16");
    Tensor img = random_image(12, 9, 5, 0.0, 1.0);
    const fs::path path = dir / "img.png";
    write_png(img, path, 16);
    Tensor back = read_png(path);
    REQUIRE(back.shape() == img.shape());
    CHECK(max_abs_diff(img, back) <= 0.5 / 65535.0 + 1e-9);
}

TEST_CASE("png 8-bit quantizes to v/255 and clamps out-of-range input") {
    TempDir dir("png8");
    std::vector<scalar> values = {scalar(-0.5), scalar(0.0),   scalar(64.0 / 255.0),
                                  scalar(0.25), scalar(1.0),   scalar(1.75),
                                  scalar(0.5),  scalar(0.999), scalar(0.001)};
    std::vector<scalar> grid(8 * 8, scalar(0.5));
    std::copy(values.begin(), values.end(), grid.begin());
    Tensor img = Tensor::from_data({1, 1, 8, 8}, grid);
    const fs::path path = dir / "img.png";
    write_png(img, path, 8);
    Tensor back = read_png(path);
    CHECK(back.data()[0] == scalar(0));               // clamped below
    CHECK(back.data()[1] == scalar(0));
    CHECK(back.data()[2] == doctest::Approx(64.0 / 255.0).epsilon(1e-7));
    CHECK(back.data()[4] == scalar(1));
    CHECK(back.data()[5] == scalar(1));               // clamped above
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        const double v = std::clamp(static_cast<double>(img.data()[static_cast<std::size_t>(i)]),
                                    0.0, 1.0);
        CHECK(std::abs(static_cast<double>(back.data()[static_cast<std::size_t>(i)]) - v) <=
              0.5 / 255.0 + 1e-9);
    }
    CHECK_THROWS_AS(write_png(img, dir / "bad.png", 12), UsageError);
}

TEST_CASE("image dispatch follows the extension case-insensitively") {
    TempDir dir("dispatch");
    Tensor img = random_image(8, 8, 7, 0.0, 1.0);
    write_image(img, dir / "a.FGRD");
    Tensor back = read_image(dir / "a.FGRD");
    CHECK(max_abs_diff(img, back) == 0.0);
    write_image(img, dir / "b.PnG");
    CHECK(read_image(dir / "b.PnG").shape() == img.shape());
    CHECK_THROWS_AS(write_image(img, dir / "c.jpg"), UsageError);
    CHECK_THROWS_AS(read_image(dir / "c.jpg"), UsageError);
}

TEST_CASE("the config template parses back to pure defaults") {
    const RunConfig cfg = parse_run_config(run_config_template());
    CHECK(cfg.degrade.factor_horizontal == 1.5);
    CHECK(cfg.degrade.factor_vertical == 5.0);
    CHECK(cfg.degrade.output_width == 256);
    CHECK(cfg.model.levels == 5);
    CHECK(cfg.model.channels == std::vector<std::int64_t>{32, 64, 128, 256, 512});
    CHECK(cfg.model.nested == true);
    CHECK(cfg.train.loss == LossKind::NLMSE);
    CHECK(cfg.train.learning_rate == 1e-4);
    CHECK(cfg.train.weight_decay == 5e-4);
    CHECK(cfg.train.steps == 60000);
    CHECK(cfg.seed == 0);
}

TEST_CASE("config errors carry the offending line number") {
    try {
        parse_run_config("seed = 1\nnot.a.key = 2\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("not.a.key") != std::string::npos);
    }
    try {
        parse_run_config("model.levels = 3\n# comment\nmodel.levels = 4\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
    try {
        parse_run_config("train.steps = soon\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 1);
    }
    CHECK_THROWS_AS(parse_run_config("train.learning_rate = -5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("gibberish line\n"), ConfigError);
    // Values that survive parsing are applied.
    const RunConfig cfg = parse_run_config(
        "seed = 9\nmodel.levels = 3\nmodel.channels = 8, 16, 32\ntrain.loss = mse\n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.model.levels == 3);
    CHECK(cfg.model.channels == std::vector<std::int64_t>{8, 16, 32});
    CHECK(cfg.train.loss == LossKind::MSE);
}

TEST_CASE("phantom command writes deterministic fgrd/png pairs") {
    TempDir dir("cmd_phantom");
    const std::string out = (dir / "set").string();
    CaptureStdout cap;
    const int rc = run_cli({"phantom", "--count", "2", "--size", "32", "--seed", "11",
                            "--out", out});
    CHECK(rc == 0);
    CHECK(cap.str().find("wrote 2 phantom(s)") != std::string::npos);
    CHECK(fs::exists(dir / "set/phantom_0000.fgrd"));
    CHECK(fs::exists(dir / "set/phantom_0000.png"));
    CHECK(fs::exists(dir / "set/phantom_0001.fgrd"));
    CHECK(fs::exists(dir / "set/phantom_0001.png"));

    // Same seed, same bytes; the generator is pure in (seed, index).
    const auto first = slurp(dir / "set/phantom_0001.fgrd");
    const std::string out2 = (dir / "again").string();
    CHECK(run_cli({"phantom", "--count", "2", "--size", "32", "--seed", "11", "--out", out2}) ==
          0);
    CHECK(slurp(dir / "again/phantom_0001.fgrd") == first);

    // Content is an actual image, not a constant.
    Tensor img = read_fgrd(dir / "set/phantom_0000.fgrd");
    scalar lo = img.data()[0], hi = img.data()[0];
    for (const scalar v : img.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi > lo);
}

TEST_CASE("degrade command emits aligned triples, a manifest, and the dim log") {
    TempDir dir("cmd_degrade");
    const std::string hf_dir = (dir / "hf").string();
    REQUIRE(run_cli({"phantom", "--count", "3", "--size", "64", "--seed", "3", "--out",
                     hf_dir}) == 0);
    const std::string pair_dir = (dir / "pairs").string();
    CaptureStdout cap;
    const int rc = run_cli({"degrade", "--in", hf_dir, "--out", pair_dir, "--output-width",
                            "64", "--output-height", "64"});
    CHECK(rc == 0);
    CHECK(cap.str().find("intermediate dims: 44x14") != std::string::npos);

    for (const char* stem : {"phantom_0000", "phantom_0001", "phantom_0002"}) {
        const Tensor hf = read_fgrd(dir.path / "pairs" / (std::string(stem) + ".hf.fgrd"));
        const Tensor lf = read_fgrd(dir.path / "pairs" / (std::string(stem) + ".lf.fgrd"));
        const Tensor res = read_fgrd(dir.path / "pairs" / (std::string(stem) + ".res.fgrd"));
        REQUIRE(hf.shape() == lf.shape());
        REQUIRE(hf.shape() == res.shape());
        // The residual identity survives the file round-trip bit-exactly.
        for (std::int64_t i = 0; i < hf.numel(); ++i) {
            const std::size_t u = static_cast<std::size_t>(i);
            CHECK(lf.data()[u] + res.data()[u] == hf.data()[u]);
        }
    }
    std::ifstream manifest(dir.path / "pairs/manifest.csv");
    REQUIRE(manifest.good());
    std::string line;
    std::getline(manifest, line);
    CHECK(line == "name,status,detail");
    int ok_rows = 0;
    while (std::getline(manifest, line)) {
        if (line.find(",ok,") != std::string::npos) ++ok_rows;
    }
    CHECK(ok_rows == 3);
}

TEST_CASE("degrade command logs 172x52 for a 256x256 input at default factors") {
    TempDir dir("cmd_degrade_full");
    const fs::path hf_dir = dir / "hf";
    fs::create_directories(hf_dir);
    write_fgrd(random_image(256, 256, 13, 0.0, 1.0), hf_dir / "scan.fgrd");
    CaptureStdout cap;
    const int rc =
        run_cli({"degrade", "--in", hf_dir.string(), "--out", (dir / "pairs").string()});
    CHECK(rc == 0);
    CHECK(cap.str().find("intermediate dims: 172x52") != std::string::npos);
}

TEST_CASE("degrade maps a constant input to itself with a zero residual") {
    TempDir dir("cmd_degrade_const");
    const fs::path hf_dir = dir / "hf";
    fs::create_directories(hf_dir);
    write_fgrd(Tensor::full({1, 1, 64, 64}, scalar(3)), hf_dir / "flat.fgrd");
    CaptureStdout cap;
    REQUIRE(run_cli({"degrade", "--in", hf_dir.string(), "--out", (dir / "pairs").string(),
                     "--output-width", "64", "--output-height", "64"}) == 0);
    const Tensor res = read_fgrd(dir.path / "pairs/flat.res.fgrd");
    for (std::int64_t i = 0; i < res.numel(); ++i) {
        CHECK(res.data()[static_cast<std::size_t>(i)] == scalar(0));
    }
}

TEST_CASE("train command with zero steps snapshots the seeded model deterministically") {
    TempDir dir("cmd_train0");
    REQUIRE(run_cli({"phantom", "--count", "4", "--size", "16", "--divisor", "2", "--seed",
                     "5", "--out", (dir / "hf").string()}) == 0);
    REQUIRE(run_cli({"degrade", "--in", (dir / "hf").string(), "--out",
                     (dir / "pairs").string(), "--output-width", "16", "--output-height", "16",
                     "--factor-vertical", "2"}) == 0);
    const std::string cfg_text =
        "model.levels = 2\nmodel.channels = 4, 8\ntrain.steps = 0\nseed = 21\n";
    std::ofstream(dir / "run.cfg") << cfg_text;

    auto run_once = [&](const char* out_name) {
        CaptureStdout cap;
        return run_cli({"train", "--config", (dir / "run.cfg").string(), "--in",
                        (dir / "pairs").string(), "--out", (dir.path / out_name).string()});
    };
    REQUIRE(run_once("run_a") == 0);
    REQUIRE(run_once("run_b") == 0);
    CHECK(fs::exists(dir.path / "run_a/checkpoint_final.nusr"));
    CHECK(fs::exists(dir.path / "run_a/report.csv"));
    CHECK(slurp(dir.path / "run_a/checkpoint_final.nusr") ==
          slurp(dir.path / "run_b/checkpoint_final.nusr"));

    std::ifstream report(dir.path / "run_a/report.csv");
    std::string header, row;
    std::getline(report, header);
    CHECK(header == "method,n,psnr_mean,psnr_std,ssim_mean,ssim_std");
    std::getline(report, row);
    CHECK(row.substr(0, 7) == "LF MRI,");
}

TEST_CASE("infer through a zero-head checkpoint reproduces its input") {
    TempDir dir("cmd_infer");
    UNetPPConfig mcfg;
    mcfg.levels = 2;
    mcfg.channels = {4, 8};
    UNetPPModel model = UNetPPModel::create(mcfg, 31);
    std::fill(model.head.weight.data_mut().begin(), model.head.weight.data_mut().end(),
              scalar(0));
    std::fill(model.head.bias.data_mut().begin(), model.head.bias.data_mut().end(), scalar(0));
    TrainState state;
    TrainConfig tcfg;
    const fs::path ckpt = dir / "zero_head.nusr";
    save_checkpoint(model, state, tcfg, ckpt);

    Tensor input = random_image(16, 16, 17, 0.0, 2.0);
    write_fgrd(input, dir / "in.fgrd");
    CaptureStdout cap;
    const int rc = run_cli({"infer", "--checkpoint", ckpt.string(), "--in",
                            (dir / "in.fgrd").string(), "--out", (dir / "out.fgrd").string()});
    CHECK(rc == 0);
    const Tensor out = read_fgrd(dir / "out.fgrd");
    REQUIRE(out.shape() == input.shape());
    CHECK(max_abs_diff(out, input) <= 1e-6);

    // The optional pre-upsample resizes before the network runs.
    write_fgrd(random_image(8, 8, 19, 0.0, 1.0), dir / "small.fgrd");
    REQUIRE(run_cli({"infer", "--checkpoint", ckpt.string(), "--in",
                     (dir / "small.fgrd").string(), "--out", (dir / "up.fgrd").string(),
                     "--width", "16", "--height", "16"}) == 0);
    CHECK(read_fgrd(dir / "up.fgrd").dim(2) == 16);
    CHECK(read_fgrd(dir / "up.fgrd").dim(3) == 16);
}

TEST_CASE("eval of a directory against itself reports a perfect row") {
    TempDir dir("cmd_eval_perfect");
    const fs::path imgs = dir / "imgs";
    fs::create_directories(imgs);
    write_fgrd(random_image(16, 16, 23, 0.0, 1.0), imgs / "a.fgrd");
    write_fgrd(random_image(16, 16, 29, 0.0, 1.0), imgs / "b.fgrd");
    CaptureStdout cap;
    const int rc = run_cli({"eval", "--pred", imgs.string(), "--gt", imgs.string(), "--label",
                            "self", "--out", (dir / "report.csv").string()});
    CHECK(rc == 0);
    CHECK(cap.str().find("self,2,inf,") != std::string::npos);
    CHECK(cap.str().find(",1.000000,0.000000") != std::string::npos);  // ssim columns
    CHECK(fs::exists(dir / "report.csv"));
}

TEST_CASE("eval matches the closed-form psnr for a constant offset") {
    TempDir dir("cmd_eval_offset");
    const fs::path gt = dir / "gt";
    const fs::path pred = dir / "pred";
    fs::create_directories(gt);
    fs::create_directories(pred);
    Tensor base = random_image(16, 16, 31, 0.0, 1.0);
    write_fgrd(base, gt / "x.fgrd");
    write_fgrd(add(base, Tensor::full(base.shape(), scalar(0.1))), pred / "x.fgrd");
    CaptureStdout cap;
    const int rc = run_cli({"eval", "--pred", pred.string(), "--gt", gt.string(), "--label",
                            "offset", "--peak", "1.0", "--out", (dir / "r.csv").string()});
    CHECK(rc == 0);
    // MSE = 0.01 at peak 1 -> exactly 20 dB.
    CHECK(cap.str().find("offset,1,20.000") != std::string::npos);
}

TEST_CASE("eval refuses directories whose filenames do not line up") {
    TempDir dir("cmd_eval_mismatch");
    const fs::path gt = dir / "gt";
    const fs::path pred = dir / "pred";
    fs::create_directories(gt);
    fs::create_directories(pred);
    write_fgrd(random_image(16, 16, 37, 0.0, 1.0), gt / "one.fgrd");
    write_fgrd(random_image(16, 16, 41, 0.0, 1.0), pred / "two.fgrd");
    CHECK(run_cli({"eval", "--pred", pred.string(), "--gt", gt.string()}) == 2);
}

TEST_CASE("exit codes map usage, data, and config failures") {
    TempDir dir("exit_codes");
    // Unknown subcommand / missing required option -> 1.
    CHECK(run_cli({"resample"}) == 1);
    CHECK(run_cli({"degrade"}) == 1);
    // Empty input directory -> UsageError -> 1.
    fs::create_directories(dir / "empty");
    CHECK(run_cli({"degrade", "--in", (dir / "empty").string(), "--out",
                   (dir / "out").string()}) == 1);
    // Unknown config key -> ConfigError -> 1.
    std::ofstream(dir / "bad.cfg") << "no.such.key = 1\n";
    CHECK(run_cli({"train", "--config", (dir / "bad.cfg").string(), "--in",
                   (dir / "empty").string(), "--out", (dir / "out").string()}) == 1);
    // Corrupt checkpoint -> FormatError -> 2.
    std::ofstream(dir / "junk.nusr") << "not a checkpoint";
    write_fgrd(random_image(16, 16, 43, 0.0, 1.0), dir / "in.fgrd");
    CHECK(run_cli({"infer", "--checkpoint", (dir / "junk.nusr").string(), "--in",
                   (dir / "in.fgrd").string(), "--out", (dir / "o.fgrd").string()}) == 2);
    // Truncated image file -> FormatError -> 2 (read side, via eval).
    fs::create_directories(dir / "shorts");
    std::ofstream(dir.path / "shorts/short.fgrd") << "FGRD";
    CHECK(run_cli({"eval", "--pred", (dir / "shorts").string(), "--gt",
                   (dir / "shorts").string()}) == 2);
}
