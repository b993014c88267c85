#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "sarfah/cli.hpp"
#include "sarfah/image.hpp"
#include "sarfah/model.hpp"
#include "sarfah/rng.hpp"

using namespace sarfah;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(std::initializer_list<std::string> args, std::string* out = nullptr) {
    std::vector<std::string> argv_s{"sarfah"};
    argv_s.insert(argv_s.end(), args);
    std::vector<const char*> argv;
    for (const auto& a : argv_s) argv.push_back(a.c_str());

    std::ostringstream captured;
    std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
    const int rc = cli_main(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old);
    if (out) *out = captured.str();
    return rc;
}

Image test_image(int64_t h, int64_t w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            img.at(y, x) =
                std::clamp(100.0 + 50.0 * std::sin(0.2 * y) + 20.0 * rng.normal(), 10.0, 245.0);
    return img;
}

// minimal 8-bit grayscale PNG encoder (filter 0 rows, single IDAT)
void write_test_png(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    auto be32 = [](uint32_t v) {
        return std::string{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    };
    auto chunk = [&](const std::string& type, const std::string& body) {
        os << be32(static_cast<uint32_t>(body.size())) << type << body;
        uLong crc = crc32(0, nullptr, 0);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(type.data()), 4);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(body.data()),
                    static_cast<uInt>(body.size()));
        os << be32(static_cast<uint32_t>(crc));
    };
    os.write("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr = be32(static_cast<uint32_t>(img.w)) + be32(static_cast<uint32_t>(img.h));
    ihdr += std::string{8, 0, 0, 0, 0};  // depth 8, gray, deflate, adaptive, no interlace
    chunk("IHDR", ihdr);

    std::string raw;
    raw.reserve(static_cast<size_t>(img.h * (img.w + 1)));
    for (int64_t y = 0; y < img.h; ++y) {
        raw.push_back('\0');
        for (int64_t x = 0; x < img.w; ++x)
            raw.push_back(static_cast<char>(
                std::clamp<int>(static_cast<int>(std::round(img.at(y, x))), 0, 255)));
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::string comp(comp_len, '\0');
    REQUIRE(compress2(reinterpret_cast<Bytef*>(comp.data()), &comp_len,
                      reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                      9) == Z_OK);
    comp.resize(comp_len);
    chunk("IDAT", comp);
    chunk("IEND", "");
}

}  // namespace

TEST_CASE("png ingest: encoded image decodes to the same pixels") {
    TempDir dir("sarfah_cli_png");
    Image img = test_image(20, 28, 1);
    for (auto& v : img.px) v = std::round(v);
    const std::string path = (dir.path / "x.png").string();
    write_test_png(path, img);
    Image back = read_png_gray8(path);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (int64_t i = 0; i < img.size(); ++i) CHECK(back.px[i] == img.px[i]);
}

TEST_CASE("synthesize: writes a speckled image of matching size") {
    TempDir dir("sarfah_cli_syn");
    const std::string in = (dir.path / "clean.pgm").string();
    const std::string out = (dir.path / "noisy.pgm").string();
    write_pgm(in, test_image(32, 24, 2));
    CHECK(run_cli({"synthesize", "--input", in, "--output", out, "--looks", "1", "--seed", "3"}) ==
          0);
    Image noisy = read_pgm(out);
    CHECK(noisy.h == 32);
    CHECK(noisy.w == 24);
}

TEST_CASE("fit-dist emits metric,value rows") {
    TempDir dir("sarfah_cli_fit");
    const std::string in = (dir.path / "img.pgm").string();
    const std::string noisy = (dir.path / "noisy.pgm").string();
    write_pgm(in, test_image(64, 64, 4));
    REQUIRE(run_cli({"synthesize", "--input", in, "--output", noisy}) == 0);
    std::string out;
    CHECK(run_cli({"fit-dist", "--input", noisy, "--dist", "gamma"}, &out) == 0);
    CHECK(out.find("gamma_shape,") != std::string::npos);
    CHECK(out.find("gamma_scale,") != std::string::npos);

    std::string out2;
    CHECK(run_cli({"fit-dist", "--input", noisy, "--dist", "ggd", "--band", "hh"}, &out2) == 0);
    CHECK(out2.find("ggd_beta,") != std::string::npos);
}

TEST_CASE("theorem-check prints the report CSV and exits 0") {
    std::string out;
    CHECK(run_cli({"theorem-check", "--shape", "1", "--scale", "1", "--level", "2", "--size",
                   "256", "--min-samples", "200000"},
                  &out) == 0);
    CHECK(out.find("ll_moment_error,") != std::string::npos);
    CHECK(out.find("pass,1") != std::string::npos);
}

TEST_CASE("despeckle: checkpointed model runs end to end, dumps sub-bands") {
    TempDir dir("sarfah_cli_dsp");
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.ode = {1.0, 1, true};
    cfg.state_dim = 2;
    cfg.experts = 2;
    cfg.pos_resolution = 16;
    SarFahModel model(cfg, 7);
    const std::string ckpt = (dir.path / "model.ckpt").string();
    model.save_checkpoint(ckpt);

    const std::string in = (dir.path / "noisy.pgm").string();
    const std::string out = (dir.path / "out.pgm").string();
    write_pgm(in, test_image(16, 16, 5));
    const std::string prefix = (dir.path / "bands").string();
    CHECK(run_cli({"despeckle", "--model", ckpt, "--input", in, "--output", out,
                   "--dump-subbands", prefix}) == 0);
    Image res = read_pgm(out);
    CHECK(res.h == 16);
    CHECK(res.w == 16);
    for (const char* band : {"_ll.pgm", "_lh.pgm", "_hl.pgm", "_hh.pgm"})
        CHECK(fs::exists(prefix + band));

    const std::string odd = (dir.path / "odd.pgm").string();
    write_pgm(odd, test_image(18, 16, 6));
    CHECK(run_cli({"despeckle", "--model", ckpt, "--input", odd, "--output", out}) == 1);
}

TEST_CASE("evaluate: identical images give PSNR inf and SSIM 1") {
    TempDir dir("sarfah_cli_eval");
    const std::string a = (dir.path / "a.pgm").string();
    write_pgm(a, test_image(32, 32, 8));
    std::string out;
    CHECK(run_cli({"evaluate", "--clean", a, "--denoised", a}, &out) == 0);
    CHECK(out.find("image,metric,region,value") != std::string::npos);
    CHECK(out.find(",psnr,,inf") != std::string::npos);
    CHECK(out.find(",ssim,,1") != std::string::npos);

    const std::string noisy = (dir.path / "n.pgm").string();
    REQUIRE(run_cli({"synthesize", "--input", a, "--output", noisy}) == 0);
    std::string out2;
    CHECK(run_cli({"evaluate", "--clean", a, "--denoised", a, "--noisy", noisy, "--region",
                   "4,4,16,16"},
                  &out2) == 0);
    CHECK(out2.find(",moi,4,4,16,16,") != std::string::npos);
    CHECK(out2.find(",epd_roa_hd,") != std::string::npos);
}

TEST_CASE("param-count prints a positive integer; flags change it") {
    std::string out;
    CHECK(run_cli({"param-count", "--channels", "4", "--state-dim", "2", "--experts", "2"},
                  &out) == 0);
    const long long full = std::stoll(out);
    CHECK(full > 0);
    std::string out2;
    CHECK(run_cli({"param-count", "--channels", "4", "--state-dim", "2", "--experts", "2",
                   "--shared-hfde", "1"},
                  &out2) == 0);
    CHECK(std::stoll(out2) < full);
}

TEST_CASE("train subcommand: config file plus flag override") {
    TempDir corpus("sarfah_cli_corpus");
    TempDir out("sarfah_cli_out");
    write_pgm((corpus.path / "a.pgm").string(), test_image(64, 64, 9));

    const std::string cfg_path = (out.path / "run.cfg").string();
    std::ofstream(cfg_path) << "epochs=3\nchannels=4\nstate_dim=2\nexperts=2\n"
                            << "patch_size=16\nbatch_size=4\npos_resolution=16\node_steps=1\n";

    std::string log;
    CHECK(run_cli({"train", "--corpus", corpus.path.string(), "--out", out.path.string(),
                   "--config", cfg_path, "--epochs", "1", "--seed", "3"},
                  &log) == 0);
    CHECK(fs::exists(out.path / "best.ckpt"));
    CHECK(fs::exists(out.path / "final.ckpt"));
    // the flag beat the config file: exactly one epoch of log lines (epoch id 0)
    CHECK(log.find("\n1,") == std::string::npos);
    CHECK(log.find("best_checkpoint,") != std::string::npos);

    // the checkpoint carries the effective config
    ModelConfig mc = model_config_from_text(ParamTree::read_config((out.path / "final.ckpt").string()));
    CHECK(mc.channels == 4);
}

TEST_CASE("unknown flags exit 1 with usage; --help exits 0") {
    CHECK(run_cli({"theorem-check", "--no-such-flag"}) == 1);
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"evaluate", "--denoised", "/nonexistent/file.pgm"}) == 1);
}
