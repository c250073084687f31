#pragma once

#include <string>
#include <vector>

#include "milasc/tensor.hpp"

namespace milasc {

struct AudioClip {
    std::vector<double> samples; // mono, in [-1, 1]
    int sample_rate = 0;
};

/// PCM WAV reader: 16/24/32-bit integer or 32-bit float, any channel count
/// (channels are averaged to mono). The sample rate is taken from the header
/// verbatim; no resampling happens here.
AudioClip read_wav(const std::string& path);

/// Same decoder over an in-memory byte buffer.
AudioClip decode_wav(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

/// Hann-windowed power spectrogram. Frames start every `hop` samples; the
/// frame count is floor(N / hop) and the tail is zero-padded so the last
/// frame is complete. Output is (frames, frame_len/2 + 1).
Tensor stft_power(const AudioClip& clip, int frame_len, int hop);

/// Triangular mel filterbank, (bands, bins). Centers are equally spaced on
/// the mel scale mel(f) = 2595 log10(1 + f/700) between 0 and sample_rate/2.
/// A band too narrow to touch any bin is an error.
Tensor mel_filterbank(int bins, int bands, double sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

inline constexpr double kLogFloor = 1e-10;

struct LogMelSpectrogram {
    Tensor values;   // (bands, frames)
    int frame_len = 0;
    int hop = 0;
};

/// log(mel . power + 1e-10), shaped (bands, frames). Frame length is 40 ms of
/// the clip's sample rate, hop is half a frame; a 10 s clip at 44.1 kHz
/// yields (40, 500).
LogMelSpectrogram log_mel(const AudioClip& clip, int bands = 40);

} // namespace milasc
