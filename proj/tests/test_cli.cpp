#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "milasc/cli.hpp"
#include "milasc/container.hpp"
#include "milasc/data.hpp"
#include "milasc/errors.hpp"
#include "milasc/rng.hpp"

using namespace milasc;
namespace fs = std::filesystem;

namespace {

struct CoutCapture {
    CoutCapture() : old(std::cout.rdbuf(buffer.rdbuf())) {}
    ~CoutCapture() { std::cout.rdbuf(old); }
    std::string text() const { return buffer.str(); }
    std::ostringstream buffer;
    std::streambuf* old;
};

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "milasc_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out << text;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// 16-bit mono WAV of a sinusoid mixed with a little seeded noise.
void write_tone_wav(const fs::path& path, double freq, int seconds, std::uint64_t seed) {
    const int rate = 44100;
    const int n = rate * seconds;
    std::vector<std::int16_t> samples(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double v = 0.4 * std::sin(2.0 * 3.141592653589793 * freq * t) +
                         0.05 * (rng.uniform() - 0.5);
        samples[static_cast<std::size_t>(i)] = static_cast<std::int16_t>(std::lround(v * 32000.0));
    }
    std::vector<unsigned char> wav;
    auto u32 = [&wav](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) wav.push_back((v >> (8 * i)) & 0xFF);
    };
    auto u16 = [&wav](std::uint16_t v) {
        wav.push_back(v & 0xFF);
        wav.push_back((v >> 8) & 0xFF);
    };
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
    wav.insert(wav.end(), {'R', 'I', 'F', 'F'});
    u32(36 + data_len);
    wav.insert(wav.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    u32(16);
    u16(1);
    u16(1);
    u32(rate);
    u32(rate * 2);
    u16(2);
    u16(16);
    wav.insert(wav.end(), {'d', 'a', 't', 'a'});
    u32(data_len);
    for (std::int16_t s : samples) u16(static_cast<std::uint16_t>(s));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(wav.data()), static_cast<std::streamsize>(wav.size()));
}

const std::string kTinySynthSpec =
    "synth.classes = 4\nsynth.frames = 100\nsynth.train_clips_per_class = 12\n"
    "synth.val_clips_per_class = 4\nsynth.seed = 21\n";

const std::string kTinyModel =
    "model.classes = 4\nmodel.channels = 2,4,8\nmodel.instance_dim = 8\nmodel.frames = 100\n";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("synth is deterministic and rejects degenerate class counts") {
    const fs::path dir = fresh_dir("synth");
    write_file(dir / "spec.cfg", kTinySynthSpec);

    {
        CoutCapture cap;
        CHECK(run_cli({"synth", "--spec", (dir / "spec.cfg").string(),
                       "--out", (dir / "a").string()}) == 0);
        CHECK(run_cli({"synth", "--spec", (dir / "spec.cfg").string(),
                       "--out", (dir / "b").string()}) == 0);
    }
    CHECK(read_file(dir / "a" / "train" / "features.milt") ==
          read_file(dir / "b" / "train" / "features.milt"));
    CHECK(read_file(dir / "a" / "val" / "groundtruth.csv") ==
          read_file(dir / "b" / "val" / "groundtruth.csv"));
    CHECK(fs::exists(dir / "a" / "spec.resolved"));

    // one class is not a classification task
    write_file(dir / "one.cfg", "synth.classes = 1\n");
    CHECK(run_cli({"synth", "--spec", (dir / "one.cfg").string(),
                   "--out", (dir / "c").string()}) == 1);
}

TEST_CASE("train, evaluate and checkpoint round-trip") {
    const fs::path dir = fresh_dir("train");
    write_file(dir / "spec.cfg", kTinySynthSpec);
    {
        CoutCapture cap;
        REQUIRE(run_cli({"synth", "--spec", (dir / "spec.cfg").string(),
                         "--out", (dir / "data").string()}) == 0);
    }

    write_file(dir / "run.cfg", kTinyModel +
                                    "train.epochs = 2\ntrain.batch = 16\ntrain.seed = 4\n"
                                    "data.train = " + (dir / "data" / "train").string() + "\n" +
                                    "data.val = " + (dir / "data" / "val").string() + "\n" +
                                    "out.dir = " + (dir / "run").string() + "\n");
    {
        CoutCapture cap;
        REQUIRE(run_cli({"train", "--config", (dir / "run.cfg").string()}) == 0);
        CHECK(cap.text().find("best epoch") != std::string::npos);
    }
    CHECK(fs::exists(dir / "run" / "best.ckpt"));
    CHECK(fs::exists(dir / "run" / "config.resolved"));
    const std::string log = read_file(dir / "run" / "train_log.tsv");
    CHECK(log.find("epoch\ttrain_loss\tval_accuracy\tlearning_rate") == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 3); // header + 2 epochs

    // same config, same seed: bit-identical log and checkpoint
    write_file(dir / "run2.cfg", kTinyModel +
                                     "train.epochs = 2\ntrain.batch = 16\ntrain.seed = 4\n"
                                     "data.train = " + (dir / "data" / "train").string() + "\n" +
                                     "data.val = " + (dir / "data" / "val").string() + "\n" +
                                     "out.dir = " + (dir / "run_again").string() + "\n");
    {
        CoutCapture cap;
        REQUIRE(run_cli({"train", "--config", (dir / "run2.cfg").string()}) == 0);
    }
    CHECK(read_file(dir / "run" / "train_log.tsv") == read_file(dir / "run_again" / "train_log.tsv"));
    // checkpoints differ only in the embedded out.dir line of the config; the
    // tensor blobs must match, so compare restored states
    const auto a = load_checkpoint((dir / "run" / "best.ckpt").string());
    const auto b = load_checkpoint((dir / "run_again" / "best.ckpt").string());
    REQUIRE(a.state.size() == b.state.size());
    for (std::size_t i = 0; i < a.state.size(); ++i) {
        CHECK(a.state[i].first == b.state[i].first);
        CHECK(std::memcmp(a.state[i].second.data(), b.state[i].second.data(),
                          static_cast<std::size_t>(a.state[i].second.size()) * sizeof(double)) == 0);
    }

    // evaluate twice: identical printed accuracy and identical confusion bytes
    std::string eval1, eval2;
    {
        CoutCapture cap;
        REQUIRE(run_cli({"evaluate", "--checkpoint", (dir / "run" / "best.ckpt").string(),
                         "--data", (dir / "data" / "val").string(),
                         "--out", (dir / "eval1").string()}) == 0);
        eval1 = cap.text();
    }
    {
        CoutCapture cap;
        REQUIRE(run_cli({"evaluate", "--checkpoint", (dir / "run" / "best.ckpt").string(),
                         "--data", (dir / "data" / "val").string(),
                         "--out", (dir / "eval2").string()}) == 0);
        eval2 = cap.text();
    }
    CHECK(eval1 == eval2);
    CHECK(eval1.find("accuracy") == 0);
    CHECK(read_file(dir / "eval1" / "confusion.csv") == read_file(dir / "eval2" / "confusion.csv"));
    CHECK(read_file(dir / "eval1" / "confusion.svg").find("<svg") == 0);

    // printed accuracy equals trace/total of the emitted confusion matrix
    const std::string csv = read_file(dir / "eval1" / "confusion.csv");
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line); // header
    long long trace = 0, total = 0;
    int r = 0;
    while (std::getline(rows, line)) {
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ','); // class name
        for (int c = 0; c < 4; ++c) {
            std::getline(cells, cell, ',');
            const long long v = std::stoll(cell);
            total += v;
            if (c == r) trace += v;
        }
        ++r;
    }
    const double printed = std::stod(eval1.substr(std::strlen("accuracy ")));
    CHECK(printed == doctest::Approx(static_cast<double>(trace) / total).epsilon(1e-9));
}

TEST_CASE("featurize extracts (40,500) maps and is idempotent by content hash") {
    const fs::path dir = fresh_dir("featurize");
    fs::create_directories(dir / "audio" / "clips");
    write_tone_wav(dir / "audio" / "clips" / "one-a.wav", 440.0, 10, 1);
    write_tone_wav(dir / "audio" / "clips" / "two-a.wav", 880.0, 10, 2);
    write_file(dir / "meta.tsv", "clips/one-a.wav\tpark\nclips/two-a.wav\tbus\n");

    std::string first;
    {
        CoutCapture cap;
        REQUIRE(run_cli({"featurize", "--meta", (dir / "meta.tsv").string(),
                         "--audio-root", (dir / "audio").string(),
                         "--out", (dir / "features").string()}) == 0);
        first = cap.text();
    }
    CHECK(first.find("2 extracted") != std::string::npos);

    const ArrayContainer c = ArrayContainer::load((dir / "features" / "features.milt").string());
    REQUIRE(c.count() == 2);
    CHECK(c.entries()[0].second.shape() == std::vector<int>{40, 500});

    // rerun: nothing to extract
    std::string second;
    {
        CoutCapture cap;
        REQUIRE(run_cli({"featurize", "--meta", (dir / "meta.tsv").string(),
                         "--audio-root", (dir / "audio").string(),
                         "--out", (dir / "features").string()}) == 0);
        second = cap.text();
    }
    CHECK(second.find("0 extracted") != std::string::npos);
    CHECK(second.find("2 unchanged") != std::string::npos);

    // loading the fold works end to end
    const SceneDataset ds = load_feature_dir((dir / "features").string());
    CHECK(ds.items.size() == 2);
    CHECK(ds.class_names == std::vector<std::string>{"bus", "park"});

    // an empty meta file is an error
    write_file(dir / "empty.tsv", "");
    CHECK(run_cli({"featurize", "--meta", (dir / "empty.tsv").string(),
                   "--audio-root", (dir / "audio").string(),
                   "--out", (dir / "f2").string()}) == 1);

    // a missing/unreadable clip is a per-file failure with exit 1
    write_file(dir / "missing.tsv", "clips/one-a.wav\tpark\nclips/ghost-a.wav\tbus\n");
    {
        CoutCapture cap;
        CHECK(run_cli({"featurize", "--meta", (dir / "missing.tsv").string(),
                       "--audio-root", (dir / "audio").string(),
                       "--out", (dir / "f3").string()}) == 1);
        CHECK(cap.text().find("1 failed") != std::string::npos);
    }
}

TEST_CASE("gradcheck exits zero when every layer is below tolerance") {
    CoutCapture cap;
    CHECK(run_cli({"gradcheck", "--scale", "small", "--seed", "2"}) == 0);
    CHECK(cap.text().find("all gradient checks passed") != std::string::npos);
    CHECK(cap.text().find("conv2d") != std::string::npos);
    CHECK(cap.text().find("weighted_bce") != std::string::npos);
}

TEST_CASE("inspect prints bag scores, the instance matrix and argmax windows") {
    const fs::path dir = fresh_dir("inspect");
    write_file(dir / "spec.cfg", kTinySynthSpec);
    {
        CoutCapture cap;
        REQUIRE(run_cli({"synth", "--spec", (dir / "spec.cfg").string(),
                         "--out", (dir / "data").string()}) == 0);
    }
    write_file(dir / "run.cfg", kTinyModel +
                                    "model.head = md\nmodel.k = 2\n"
                                    "train.epochs = 2\ntrain.batch = 16\ntrain.seed = 8\n"
                                    "data.train = " + (dir / "data" / "train").string() + "\n" +
                                    "data.val = " + (dir / "data" / "val").string() + "\n" +
                                    "out.dir = " + (dir / "run").string() + "\n");
    {
        CoutCapture cap;
        REQUIRE(run_cli({"train", "--config", (dir / "run.cfg").string()}) == 0);
    }

    std::string text;
    {
        CoutCapture cap;
        REQUIRE(run_cli({"inspect", "--checkpoint", (dir / "run" / "best.ckpt").string(),
                         "--data", (dir / "data" / "val").string(),
                         "--clip", "val-c1-0",
                         "--svg", (dir / "clip.svg").string()}) == 0);
        text = cap.text();
    }
    CHECK(text.find("clip val-c1-0") != std::string::npos);
    CHECK(text.find("bag scores") != std::string::npos);
    CHECK(text.find("argmax instance") != std::string::npos);
    CHECK(text.find("instance scores") != std::string::npos);
    CHECK(read_file(dir / "clip.svg").find("<svg") == 0);

    // MD head: the printed instance-score columns sum to one per instance
    const SceneDataset val = load_feature_dir((dir / "data" / "val").string());
    const auto ckpt = load_checkpoint((dir / "run" / "best.ckpt").string());
    MilModel model = restore_model(ckpt);
    Tensor x({1, 1, 40, 100});
    std::copy_n(val.items[0].features.data(), val.items[0].features.size(), x.data());
    const auto out = model.forward(x, Mode::eval);
    for (int j = 0; j < 12; ++j) {
        double sum = 0.0;
        for (int c = 0; c < 4; ++c) sum += out.instance_scores.at(0, c, j);
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }

    // unknown clip id
    CHECK(run_cli({"inspect", "--checkpoint", (dir / "run" / "best.ckpt").string(),
                   "--data", (dir / "data" / "val").string(),
                   "--clip", "no-such-clip"}) == 1);
}

TEST_CASE("sweep-k writes one row per K and a plot") {
    const fs::path dir = fresh_dir("sweep");
    write_file(dir / "spec.cfg",
               "synth.classes = 4\nsynth.frames = 100\nsynth.train_clips_per_class = 8\n"
               "synth.val_clips_per_class = 3\nsynth.seed = 5\n");
    {
        CoutCapture cap;
        REQUIRE(run_cli({"synth", "--spec", (dir / "spec.cfg").string(),
                         "--out", (dir / "data").string()}) == 0);
    }
    write_file(dir / "run.cfg", kTinyModel +
                                    "train.epochs = 1\ntrain.batch = 16\ntrain.seed = 2\n"
                                    "data.train = " + (dir / "data" / "train").string() + "\n" +
                                    "data.val = " + (dir / "data" / "val").string() + "\n" +
                                    "out.dir = " + (dir / "sweep").string() + "\n");
    {
        CoutCapture cap;
        REQUIRE(run_cli({"sweep-k", "--config", (dir / "run.cfg").string(),
                         "--k-list", "1,2,4"}) == 0);
    }
    const std::string csv = read_file(dir / "sweep" / "sweep_k.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4); // header + 3 rows
    CHECK(csv.find("k,val_accuracy,best_epoch") == 0);
    CHECK(read_file(dir / "sweep" / "sweep_k.svg").find("<svg") == 0);
}

TEST_CASE("usage and validation errors exit with code 1") {
    CoutCapture cap;
    CHECK(run_cli({"no-such-command"}) == 1);
    CHECK(run_cli({"train"}) == 1);                               // missing --config
    CHECK(run_cli({"train", "--config", "/no/such/file.cfg"}) == 1);
    CHECK(run_cli({"evaluate", "--checkpoint", "/missing.ckpt", "--data", "/missing"}) == 1);
}

} // TEST_SUITE
