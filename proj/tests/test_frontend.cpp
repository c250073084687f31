#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <vector>

#include "milasc/errors.hpp"
#include "milasc/fft.hpp"
#include "milasc/frontend.hpp"
#include "milasc/rng.hpp"

using namespace milasc;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// O(N^2) oracle for the transform
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * kPi * static_cast<double>(j * k % n) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

// Minimal PCM WAV writer for test fixtures.
std::vector<unsigned char> make_wav(const std::vector<std::vector<double>>& channels, int rate,
                                    int bits, bool float_format = false) {
    const std::size_t frames = channels[0].size();
    const std::size_t nch = channels.size();
    const std::size_t bytes_per = static_cast<std::size_t>(bits) / 8;
    const std::size_t data_len = frames * nch * bytes_per;

    std::vector<unsigned char> out;
    auto push_u32 = [&out](std::uint32_t v) {
        out.push_back(v & 0xFF);
        out.push_back((v >> 8) & 0xFF);
        out.push_back((v >> 16) & 0xFF);
        out.push_back((v >> 24) & 0xFF);
    };
    auto push_u16 = [&out](std::uint16_t v) {
        out.push_back(v & 0xFF);
        out.push_back((v >> 8) & 0xFF);
    };
    auto push_tag = [&out](const char* tag) { out.insert(out.end(), tag, tag + 4); };

    push_tag("RIFF");
    push_u32(static_cast<std::uint32_t>(36 + data_len));
    push_tag("WAVE");
    push_tag("fmt ");
    push_u32(16);
    push_u16(float_format ? 3 : 1);
    push_u16(static_cast<std::uint16_t>(nch));
    push_u32(static_cast<std::uint32_t>(rate));
    push_u32(static_cast<std::uint32_t>(rate * nch * bytes_per));
    push_u16(static_cast<std::uint16_t>(nch * bytes_per));
    push_u16(static_cast<std::uint16_t>(bits));
    push_tag("data");
    push_u32(static_cast<std::uint32_t>(data_len));

    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < nch; ++c) {
            const double v = channels[c][f];
            if (float_format) {
                const float fv = static_cast<float>(v);
                unsigned char b[4];
                std::memcpy(b, &fv, 4);
                out.insert(out.end(), b, b + 4);
            } else if (bits == 16) {
                const auto s = static_cast<std::int16_t>(std::lround(v * 32767.0));
                push_u16(static_cast<std::uint16_t>(s));
            } else if (bits == 24) {
                const auto s = static_cast<std::int32_t>(std::lround(v * 8388607.0));
                out.push_back(s & 0xFF);
                out.push_back((s >> 8) & 0xFF);
                out.push_back((s >> 16) & 0xFF);
            } else {
                const auto s = static_cast<std::int32_t>(std::llround(v * 2147483647.0));
                push_u32(static_cast<std::uint32_t>(s));
            }
        }
    }
    return out;
}

// 16-bit mono fixture with exact integer sample values.
std::vector<unsigned char> make_wav_raw16(const std::vector<std::int16_t>& samples, int rate) {
    auto wav = make_wav({{0.0}}, rate, 16);
    wav.resize(44); // keep the header, rewrite the data section
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
    const std::uint32_t riff_len = 36 + data_len;
    for (int i = 0; i < 4; ++i) {
        wav[4 + static_cast<std::size_t>(i)] = static_cast<unsigned char>((riff_len >> (8 * i)) & 0xFF);
        wav[40 + static_cast<std::size_t>(i)] = static_cast<unsigned char>((data_len >> (8 * i)) & 0xFF);
    }
    for (std::int16_t s : samples) {
        wav.push_back(static_cast<unsigned char>(s & 0xFF));
        wav.push_back(static_cast<unsigned char>((s >> 8) & 0xFF));
    }
    return wav;
}

} // namespace

TEST_SUITE("frontend") {

// ---------------------------------------------------------------------------
// FFT against the naive oracle
// ---------------------------------------------------------------------------

TEST_CASE("dft matches the naive oracle at power-of-two and awkward sizes") {
    Rng rng(21);
    for (std::size_t n : std::vector<std::size_t>{4, 13, 16, 100, 441}) {
        std::vector<std::complex<double>> x(n);
        for (auto& v : x) v = std::complex<double>(rng.uniform(-1, 1), rng.uniform(-1, 1));
        const auto fast = fft::dft(x);
        const auto slow = naive_dft(x);
        double scale = 0.0;
        for (const auto& v : slow) scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(std::abs(fast[k] - slow[k]) / scale < 1e-10);
        }
    }
}

TEST_CASE("inverse dft round-trips at the production frame length") {
    Rng rng(22);
    std::vector<std::complex<double>> x(1764);
    for (auto& v : x) v = std::complex<double>(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto back = fft::dft(fft::dft(x), true);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::abs(back[i] - x[i]) < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// STFT
// ---------------------------------------------------------------------------

TEST_CASE("a 10 s clip at 44.1 kHz yields 500 frames of 883 bins") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(441000, 0.25);
    const Tensor p = stft_power(clip, 1764, 882);
    CHECK(p.shape() == std::vector<int>{500, 883});
}

TEST_CASE("the all-zero clip has an all-zero power spectrogram") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(44100, 0.0);
    const Tensor p = stft_power(clip, 1764, 882);
    for (int i = 0; i < p.size(); ++i) CHECK(p[i] == 0.0);
}

TEST_CASE("a clip shorter than one hop is rejected") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(881, 0.1);
    CHECK_THROWS_AS(stft_power(clip, 1764, 882), ValidationError);
}

TEST_CASE("an exact-bin sinusoid concentrates its energy within one bin") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(44100);
    // bin 40 of a 1764-point frame: f = 40 * 44100 / 1764 = 1000 Hz exactly
    const double freq = 40.0 * 44100.0 / 1764.0;
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = 0.8 * std::sin(2.0 * kPi * freq * static_cast<double>(i) / 44100.0);
    }
    const Tensor p = stft_power(clip, 1764, 882);
    const int frames = p.dim(0), bins = p.dim(1);
    for (int f = 0; f + 1 < frames; ++f) { // the zero-padded tail frame leaks by construction
        double total = 0.0, near = 0.0;
        for (int k = 0; k < bins; ++k) total += p.at(f, k);
        for (int k = 39; k <= 41; ++k) near += p.at(f, k);
        CHECK(near >= 0.9 * total);
    }
}

// ---------------------------------------------------------------------------
// Mel filterbank
// ---------------------------------------------------------------------------

TEST_CASE("mel scale fixed points") {
    CHECK(hz_to_mel(0.0) == 0.0);
    // 2595 * log10(2), evaluated directly
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-14));
    CHECK(hz_to_mel(700.0) == doctest::Approx(781.17283821).epsilon(1e-9));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
}

TEST_CASE("each filter peaks at its center and decays linearly to its neighbours") {
    const int bins = 883, bands = 40;
    const double rate = 44100.0;
    const Tensor fb = mel_filterbank(bins, bands, rate);
    CHECK(fb.shape() == std::vector<int>{bands, bins});

    const double mel_max = hz_to_mel(rate / 2.0);
    for (int b = 0; b < bands; ++b) {
        const double lo = mel_to_hz(mel_max * b / (bands + 1));
        const double center = mel_to_hz(mel_max * (b + 1) / (bands + 1));
        const double hi = mel_to_hz(mel_max * (b + 2) / (bands + 1));

        int argmax = 0;
        double best = -1.0;
        for (int k = 0; k < bins; ++k) {
            const double w = fb.at(b, k);
            CHECK(w >= 0.0);
            if (w > best) {
                best = w;
                argmax = k;
            }
            const double f = k * rate / 1764.0;
            if (f <= lo || f >= hi) CHECK(w == 0.0);               // zero outside the triangle
            if (f > lo && f <= center) {                            // linear rise
                CHECK(w == doctest::Approx((f - lo) / (center - lo)).epsilon(1e-12));
            }
            if (f > center && f < hi) {                             // linear fall
                CHECK(w == doctest::Approx((hi - f) / (hi - center)).epsilon(1e-12));
            }
        }
        CHECK(best > 0.0);
        // peak bin is the bin nearest the center frequency
        const double f_of_peak = argmax * rate / 1764.0;
        CHECK(std::fabs(f_of_peak - center) <= rate / 1764.0);
    }
}

TEST_CASE("too many bands for the bin resolution is an error") {
    CHECK_THROWS_AS(mel_filterbank(16, 40, 44100.0), ValidationError);
    CHECK_THROWS_AS(mel_filterbank(100, 0, 44100.0), ValidationError);
}

// ---------------------------------------------------------------------------
// log-mel
// ---------------------------------------------------------------------------

TEST_CASE("10 s clip maps to a (40, 500) log-mel feature") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(441000);
    Rng rng(23);
    for (auto& s : clip.samples) s = 0.1 * rng.uniform(-1, 1);
    const LogMelSpectrogram mel = log_mel(clip);
    CHECK(mel.values.shape() == std::vector<int>{40, 500});
    CHECK(mel.values.all_finite());
    CHECK(mel.frame_len == 1764);
    CHECK(mel.hop == 882);
}

TEST_CASE("the all-zero clip maps to the constant log floor") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(88200, 0.0);
    const LogMelSpectrogram mel = log_mel(clip);
    const double expected = std::log(1e-10);
    for (int i = 0; i < mel.values.size(); ++i) {
        CHECK(mel.values[i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("doubling the amplitude shifts log-mel by exactly log 4 where power dominates the floor") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(44100);
    Rng rng(24);
    for (auto& s : clip.samples) s = 0.2 * rng.uniform(-1, 1);
    AudioClip doubled = clip;
    for (auto& s : doubled.samples) s *= 2.0;

    const Tensor a = log_mel(clip).values;
    const Tensor b = log_mel(doubled).values;
    const double log4 = std::log(4.0);
    int checked = 0;
    for (int i = 0; i < a.size(); ++i) {
        if (a[i] > std::log(1e-4)) { // mel power well above the 1e-10 floor
            CHECK(std::fabs((b[i] - a[i]) - log4) < 1e-6);
            ++checked;
        }
    }
    CHECK(checked > a.size() / 2);
}

TEST_CASE("mel-domain power is monotone in clip energy") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(44100);
    Rng rng(25);
    for (auto& s : clip.samples) s = 0.3 * rng.uniform(-1, 1);

    double prev = -1e300;
    for (double gain : {0.25, 0.5, 1.0, 2.0}) {
        AudioClip scaled = clip;
        for (auto& s : scaled.samples) s *= gain;
        const Tensor mel = log_mel(scaled).values;
        double total = 0.0;
        for (int i = 0; i < mel.size(); ++i) total += std::exp(mel[i]); // back to power
        CHECK(total > prev);
        prev = total;
    }
}

TEST_CASE("feature extraction is bit-deterministic") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(22050);
    Rng rng(26);
    for (auto& s : clip.samples) s = rng.uniform(-1, 1);
    const Tensor a = log_mel(clip).values;
    const Tensor b = log_mel(clip).values;
    CHECK(std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0);
}

// ---------------------------------------------------------------------------
// WAV decoding
// ---------------------------------------------------------------------------

TEST_CASE("16-bit samples scale by 1/32768") {
    const auto wav = make_wav_raw16({32767, 0, -32768, -16384}, 44100);
    const AudioClip clip = decode_wav(wav);
    CHECK(clip.sample_rate == 44100);
    REQUIRE(clip.samples.size() == 4);
    CHECK(clip.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-15));
    CHECK(clip.samples[1] == 0.0);
    CHECK(clip.samples[2] == -1.0);
    CHECK(clip.samples[3] == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("stereo channels are averaged to mono") {
    const auto wav = make_wav({{0.5, 0.25}, {-0.5, 0.25}}, 48000, 16);
    const AudioClip clip = decode_wav(wav);
    CHECK(clip.sample_rate == 48000);
    REQUIRE(clip.samples.size() == 2);
    CHECK(std::fabs(clip.samples[0]) < 1e-4); // (L + R) / 2 = 0 up to 16-bit quantization
    CHECK(clip.samples[1] == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("24-bit, 32-bit int and 32-bit float decode consistently") {
    const std::vector<double> ref = {0.5, -0.25, 0.125, -0.9};
    for (int bits : {24, 32}) {
        const AudioClip clip = decode_wav(make_wav({ref}, 44100, bits));
        REQUIRE(clip.samples.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(clip.samples[i] == doctest::Approx(ref[i]).epsilon(1e-5));
        }
    }
    const AudioClip fclip = decode_wav(make_wav({ref}, 44100, 32, true));
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(fclip.samples[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    }
}

TEST_CASE("malformed and unsupported WAVs are rejected") {
    // truncated / wrong magic
    CHECK_THROWS_AS(decode_wav({'R', 'I', 'F', 'F'}), ValidationError);
    std::vector<unsigned char> junk(64, 0);
    CHECK_THROWS_AS(decode_wav(junk), ValidationError);

    // unsupported encoding: format tag 6 (a-law)
    auto alaw = make_wav({{0.1, 0.2}}, 44100, 16);
    alaw[20] = 6;
    CHECK_THROWS_WITH_AS(decode_wav(alaw), doctest::Contains("unsupported"), ValidationError);

    // zero-length data chunk
    auto empty = make_wav({{0.1}}, 44100, 16);
    empty.resize(44);
    empty[4] = 36;
    empty[5] = empty[6] = empty[7] = 0;
    empty[40] = empty[41] = empty[42] = empty[43] = 0;
    CHECK_THROWS_WITH_AS(decode_wav(empty), doctest::Contains("zero-length"), ValidationError);
}

} // TEST_SUITE
