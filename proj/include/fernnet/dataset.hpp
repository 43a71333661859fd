#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fernnet/common.hpp"

namespace fernnet {

// In-memory two-class image dataset, sample-major f32.
struct Dataset {
    std::uint32_t n = 0, c = 0, h = 0, w = 0;
    std::vector<std::uint8_t> labels;  // n entries, each 0 or 1
    std::vector<float> data;           // n * c * h * w

    std::size_t sample_size() const {
        return static_cast<std::size_t>(c) * h * w;
    }

    void validate() const;
};

// Binary dataset file: magic "FDS1", N/C/H/W as u32 LE, N label bytes, then
// N*C*H*W f32 LE values.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Two-class synthetic texture patches, 3x64x64: class 0 is a low-frequency
// blob field, class 1 a high-frequency stripe pattern, both plus noise.
// Labels alternate, so counts are balanced within one sample.
Dataset synth_dataset(std::size_t n, std::uint64_t seed);

// IDX-format digit images filtered down to two classes (class_a -> 0,
// class_b -> 1), standardized to zero mean / unit variance over the subset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int class_a,
                 int class_b);

}  // namespace fernnet
