#include "fernnet/dataset.hpp"

#include <cmath>
#include <cstring>

#include "fernnet/rng.hpp"
#include "fernnet/serialize.hpp"

namespace fernnet {

void Dataset::validate() const {
    if (n == 0) throw DataError("dataset: empty");
    if (labels.size() != n) {
        throw DataError("dataset: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " samples");
    }
    if (data.size() != static_cast<std::size_t>(n) * sample_size()) {
        throw DataError("dataset: data size does not match header extents");
    }
    for (auto l : labels) {
        if (l > 1) throw DataError("dataset: label " + std::to_string(l) + " is not binary");
    }
}

void save_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    std::string out;
    out.reserve(16 + ds.labels.size() + ds.data.size() * 4);
    out += "FDS1";
    for (std::uint32_t v : {ds.n, ds.c, ds.h, ds.w})
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    out.append(reinterpret_cast<const char*>(ds.labels.data()), ds.labels.size());
    for (float f : ds.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    write_file_atomic(path, out);
}

Dataset load_dataset(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 20 || bytes.compare(0, 4, "FDS1") != 0) {
        throw IoError("'" + path + "' is not a dataset file (bad magic)");
    }
    auto u32_at = [&](std::size_t off) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + i])) << (8 * i);
        return v;
    };
    Dataset ds;
    ds.n = u32_at(4);
    ds.c = u32_at(8);
    ds.h = u32_at(12);
    ds.w = u32_at(16);
    const std::size_t values = static_cast<std::size_t>(ds.n) * ds.sample_size();
    const std::size_t expected = 20 + ds.n + values * 4;
    if (bytes.size() != expected) {
        throw IoError("dataset '" + path + "': expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
    }
    ds.labels.assign(bytes.begin() + 20, bytes.begin() + 20 + ds.n);
    ds.data.resize(values);
    const std::size_t base = 20 + ds.n;
    for (std::size_t i = 0; i < values; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[base + i * 4 + b]))
                    << (8 * b);
        std::memcpy(&ds.data[i], &bits, 4);
    }
    ds.validate();
    return ds;
}

namespace {

constexpr std::size_t kSide = 64;
constexpr double kPi = 3.14159265358979323846;

// Smooth field: a few random low-frequency plane waves.
void blob_field(Rng& rng, std::vector<double>& field) {
    std::fill(field.begin(), field.end(), 0.0);
    for (int g = 0; g < 3; ++g) {
        double fx = 0, fy = 0;
        do {
            fx = static_cast<double>(rng.uniform_int(-2, 3));
            fy = static_cast<double>(rng.uniform_int(-2, 3));
        } while (fx == 0 && fy == 0);
        const double amp = 0.5 + 0.5 * rng.uniform();
        const double phase = 2 * kPi * rng.uniform();
        for (std::size_t y = 0; y < kSide; ++y)
            for (std::size_t x = 0; x < kSide; ++x)
                field[y * kSide + x] +=
                    amp * std::cos(2 * kPi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                                       static_cast<double>(kSide) +
                                   phase);
    }
}

// High-frequency stripes: wavelength 4px, orientation near one of four axes.
void stripe_field(Rng& rng, std::vector<double>& field) {
    const double theta = (kPi / 4.0) * static_cast<double>(rng.uniform_int(0, 4)) +
                         0.1 * (rng.uniform() - 0.5);
    const double phase = 2 * kPi * rng.uniform();
    const double freq = 2 * kPi / 4.0;
    const double cx = std::cos(theta), sy = std::sin(theta);
    for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t x = 0; x < kSide; ++x)
            field[y * kSide + x] =
                std::cos(freq * (cx * static_cast<double>(x) + sy * static_cast<double>(y)) + phase);
}

void normalize(std::vector<double>& field) {
    double mean = 0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    double var = 0;
    for (double v : field) var += (v - mean) * (v - mean);
    var /= static_cast<double>(field.size());
    const double scale = 1.0 / std::sqrt(var + 1e-8);
    for (double& v : field) v = (v - mean) * scale;
}

}  // namespace

Dataset synth_dataset(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("synth_dataset: need at least 2 samples");
    Dataset ds;
    ds.n = static_cast<std::uint32_t>(n);
    ds.c = 3;
    ds.h = ds.w = kSide;
    ds.labels.resize(n);
    ds.data.resize(n * ds.sample_size());
    Rng rng(seed);
    std::vector<double> field(kSide * kSide);
    const double channel_scale[3] = {1.0, 0.8, 0.6};
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t label = static_cast<std::uint8_t>(i % 2);
        ds.labels[i] = label;
        if (label == 0) {
            blob_field(rng, field);
        } else {
            stripe_field(rng, field);
        }
        normalize(field);
        float* sample = ds.data.data() + i * ds.sample_size();
        for (std::size_t c = 0; c < 3; ++c) {
            float* plane = sample + c * kSide * kSide;
            for (std::size_t p = 0; p < kSide * kSide; ++p)
                plane[p] = static_cast<float>(channel_scale[c] * field[p] + 0.3 * rng.normal());
        }
    }
    return ds;
}

namespace {

std::uint32_t be_u32(const std::string& bytes, std::size_t off, const std::string& path) {
    if (off + 4 > bytes.size()) throw IoError("IDX file '" + path + "' is truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v = (v << 8) | static_cast<std::uint8_t>(bytes[off + static_cast<std::size_t>(i)]);
    return v;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int class_a,
                 int class_b) {
    const std::string img = read_file(images_path);
    const std::string lab = read_file(labels_path);
    if (be_u32(img, 0, images_path) != 0x803) {
        throw IoError("'" + images_path + "' is not an IDX image file");
    }
    if (be_u32(lab, 0, labels_path) != 0x801) {
        throw IoError("'" + labels_path + "' is not an IDX label file");
    }
    const std::uint32_t count = be_u32(img, 4, images_path);
    const std::uint32_t rows = be_u32(img, 8, images_path);
    const std::uint32_t cols = be_u32(img, 12, images_path);
    if (be_u32(lab, 4, labels_path) != count) {
        throw IoError("IDX image/label counts disagree");
    }
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (img.size() != 16 + count * pixels || lab.size() != 8 + count) {
        throw IoError("IDX file sizes do not match their headers");
    }
    Dataset ds;
    ds.c = 1;
    ds.h = rows;
    ds.w = cols;
    for (std::uint32_t i = 0; i < count; ++i) {
        const int y = static_cast<std::uint8_t>(lab[8 + i]);
        if (y != class_a && y != class_b) continue;
        ds.labels.push_back(y == class_b ? 1 : 0);
        const char* src = img.data() + 16 + static_cast<std::size_t>(i) * pixels;
        for (std::size_t p = 0; p < pixels; ++p)
            ds.data.push_back(static_cast<float>(static_cast<std::uint8_t>(src[p])) / 255.0f);
    }
    ds.n = static_cast<std::uint32_t>(ds.labels.size());
    if (ds.n == 0) {
        throw DataError("IDX filter kept no samples for classes " + std::to_string(class_a) + "/" +
                        std::to_string(class_b));
    }
    // Standardize over the kept subset so downstream thresholds see roughly
    // unit-scale inputs.
    double mean = 0;
    for (float v : ds.data) mean += v;
    mean /= static_cast<double>(ds.data.size());
    double var = 0;
    for (float v : ds.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ds.data.size());
    const float scale = static_cast<float>(1.0 / std::sqrt(var + 1e-8));
    for (float& v : ds.data) v = (v - static_cast<float>(mean)) * scale;
    ds.validate();
    return ds;
}

}  // namespace fernnet
