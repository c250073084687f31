#include "milasc/frontend.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "milasc/errors.hpp"
#include "milasc/fft.hpp"

namespace milasc {

// ---------------------------------------------------------------------------
// WAV decoding
// ---------------------------------------------------------------------------

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

} // namespace

AudioClip decode_wav(const std::vector<unsigned char>& bytes, const std::string& origin) {
    auto fail = [&origin](const std::string& why) -> void {
        throw ValidationError("wav: " + origin + ": " + why);
    };

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        fail("malformed RIFF header");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = read_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + len > bytes.size()) fail("chunk overruns file");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) fail("fmt chunk too short");
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            rate = read_u32(bytes.data() + body + 4);
            bits = read_u16(bytes.data() + body + 14);
            if (format == 0xFFFE) {
                // WAVE_FORMAT_EXTENSIBLE: actual format is the first word of the GUID
                if (len < 40) fail("extensible fmt chunk too short");
                format = read_u16(bytes.data() + body + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = len;
        }
        pos = body + len + (len & 1); // chunks are word-aligned
    }

    if (!have_fmt) fail("missing fmt chunk");
    if (data == nullptr) fail("missing data chunk");
    if (data_len == 0) fail("zero-length data chunk");
    if (channels == 0 || rate == 0) fail("invalid channel count or sample rate");

    const bool pcm_int = format == 1;
    const bool pcm_float = format == 3;
    if (!pcm_int && !pcm_float) {
        fail("unsupported encoding (format tag " + std::to_string(format) + ")");
    }
    if (pcm_int && bits != 16 && bits != 24 && bits != 32) {
        fail("unsupported integer depth " + std::to_string(bits));
    }
    if (pcm_float && bits != 32) fail("unsupported float depth " + std::to_string(bits));

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    if (frame_bytes == 0 || data_len % frame_bytes != 0) fail("data chunk not frame-aligned");
    const std::size_t frames = data_len / frame_bytes;

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.samples.resize(frames);
    const double inv_channels = 1.0 / channels;
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const unsigned char* s = data + f * frame_bytes + c * bytes_per_sample;
            double v = 0.0;
            if (pcm_float) {
                float raw;
                std::memcpy(&raw, s, 4);
                v = static_cast<double>(raw);
            } else if (bits == 16) {
                const std::int16_t raw = static_cast<std::int16_t>(s[0] | (s[1] << 8));
                v = raw / 32768.0;
            } else if (bits == 24) {
                std::int32_t raw = s[0] | (s[1] << 8) | (s[2] << 16);
                if (raw & 0x800000) raw |= ~0xFFFFFF; // sign extend
                v = raw / 8388608.0;
            } else { // 32-bit int
                std::int32_t raw;
                std::memcpy(&raw, s, 4);
                v = raw / 2147483648.0;
            }
            acc += v;
        }
        clip.samples[f] = acc * inv_channels;
    }
    return clip;
}

AudioClip read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("wav: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return decode_wav(bytes, path);
}

// ---------------------------------------------------------------------------
// Spectrogram
// ---------------------------------------------------------------------------

Tensor stft_power(const AudioClip& clip, int frame_len, int hop) {
    if (frame_len <= 0 || hop <= 0) throw ValidationError("stft: frame and hop must be positive");
    const int n = static_cast<int>(clip.samples.size());
    if (n < hop) {
        throw ValidationError("stft: clip of " + std::to_string(n) +
                              " samples is shorter than one hop (" + std::to_string(hop) + ")");
    }
    const int frames = n / hop;
    const int bins = frame_len / 2 + 1;

    // periodic Hann; at an exact-bin frequency its spectrum has no leakage
    // beyond the two neighbouring bins
    std::vector<double> window(static_cast<std::size_t>(frame_len));
    for (int i = 0; i < frame_len; ++i) {
        window[static_cast<std::size_t>(i)] =
            0.5 * (1.0 - std::cos(2.0 * kPi * i / static_cast<double>(frame_len)));
    }

    Tensor out({frames, bins});
    std::vector<double> frame(static_cast<std::size_t>(frame_len));
    for (int f = 0; f < frames; ++f) {
        const int start = f * hop;
        for (int i = 0; i < frame_len; ++i) {
            const int j = start + i;
            const double s = j < n ? clip.samples[static_cast<std::size_t>(j)] : 0.0; // zero-padded tail
            frame[static_cast<std::size_t>(i)] = s * window[static_cast<std::size_t>(i)];
        }
        const auto power = fft::power_spectrum(frame);
        double* row = out.data() + static_cast<std::size_t>(f) * bins;
        for (int k = 0; k < bins; ++k) row[k] = power[static_cast<std::size_t>(k)];
    }
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(int bins, int bands, double sample_rate) {
    if (bands < 1) throw ValidationError("mel: need at least one band");
    if (bins < bands) {
        throw ValidationError("mel: " + std::to_string(bands) + " bands need at least as many bins, got " +
                              std::to_string(bins));
    }
    const int frame_len = 2 * (bins - 1);
    const double mel_max = hz_to_mel(sample_rate / 2.0);

    // band b rises from edge b to edge b+1 and falls to edge b+2
    std::vector<double> edges(static_cast<std::size_t>(bands) + 2);
    for (int i = 0; i < bands + 2; ++i) {
        edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (bands + 1));
    }

    Tensor fb({bands, bins});
    for (int b = 0; b < bands; ++b) {
        const double lo = edges[static_cast<std::size_t>(b)];
        const double center = edges[static_cast<std::size_t>(b) + 1];
        const double hi = edges[static_cast<std::size_t>(b) + 2];
        bool any = false;
        for (int k = 0; k < bins; ++k) {
            const double f = k * sample_rate / frame_len;
            double w = 0.0;
            if (f > lo && f < hi) {
                w = f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
            }
            if (w > 0.0) any = true;
            fb.at(b, k) = w;
        }
        if (!any) {
            throw ValidationError("mel: band " + std::to_string(b) +
                                  " is narrower than the bin resolution; reduce the band count");
        }
    }
    return fb;
}

LogMelSpectrogram log_mel(const AudioClip& clip, int bands) {
    if (clip.sample_rate <= 0) throw ValidationError("log_mel: clip has no sample rate");
    const int frame_len = static_cast<int>(std::lround(0.040 * clip.sample_rate));
    const int hop = frame_len / 2;

    const Tensor power = stft_power(clip, frame_len, hop);  // (frames, bins)
    const int frames = power.dim(0), bins = power.dim(1);
    const Tensor fb = mel_filterbank(bins, bands, clip.sample_rate);

    LogMelSpectrogram result;
    result.frame_len = frame_len;
    result.hop = hop;
    result.values = Tensor({bands, frames});
    for (int b = 0; b < bands; ++b) {
        const double* fbrow = fb.data() + static_cast<std::size_t>(b) * bins;
        for (int t = 0; t < frames; ++t) {
            const double* prow = power.data() + static_cast<std::size_t>(t) * bins;
            double acc = 0.0;
            for (int k = 0; k < bins; ++k) acc += fbrow[k] * prow[k];
            result.values.at(b, t) = std::log(acc + kLogFloor);
        }
    }
    return result;
}

} // namespace milasc
