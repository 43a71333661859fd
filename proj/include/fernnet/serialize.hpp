#pragma once

#include <bit>
#include <cstring>

#include "fernnet/config.hpp"

namespace fernnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// One named array in a checkpoint: dtype code, extents, little-endian raw
// values. Covers the float parameters and the integer fern structure (split
// dimensions, offsets).
struct TensorRecord {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::uint64_t> extents;
    std::vector<std::uint8_t> raw;

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto e : extents) n *= static_cast<std::size_t>(e);
        return n;
    }
};

struct Checkpoint {
    std::vector<TensorRecord> records;
    std::string config_text;
};

// Layout: "FERN" magic, version u32, record count u64, records (name length
// u32 + bytes, dtype u8, rank u8, extents u64 each, raw values), then the
// embedded config text (length u64 + bytes). Everything little-endian.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Write-temp-then-rename.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// ---------------------------------------------------------------------------
// Typed encode / decode
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i)
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const std::uint8_t* p) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

template <typename T>
TensorRecord encode_tensor(const std::string& name, const TensorPtr<T>& t) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = Tensor<T>::dtype();
    for (auto e : t->shape) rec.extents.push_back(e);
    rec.raw.reserve(t->numel() * sizeof(T));
    for (auto v : t->data) detail::append_le(rec.raw, v);
    return rec;
}

inline TensorRecord encode_i64(const std::string& name, const std::vector<std::int64_t>& values,
                               std::vector<std::uint64_t> extents) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = DType::I64;
    rec.extents = std::move(extents);
    rec.raw.reserve(values.size() * 8);
    for (auto v : values) detail::append_le(rec.raw, v);
    return rec;
}

template <typename T>
void decode_tensor(const TensorRecord& rec, const TensorPtr<T>& into) {
    if (rec.dtype != Tensor<T>::dtype()) {
        throw IoError("checkpoint entry '" + rec.name + "' has dtype " + dtype_name(rec.dtype) +
                      ", expected " + dtype_name(Tensor<T>::dtype()));
    }
    Shape shape(rec.extents.begin(), rec.extents.end());
    if (shape != into->shape) {
        throw IoError("checkpoint entry '" + rec.name + "' has shape " + shape_str(shape) +
                      ", expected " + shape_str(into->shape));
    }
    for (std::size_t i = 0; i < into->numel(); ++i)
        into->data[i] = detail::read_le<T>(rec.raw.data() + i * sizeof(T));
}

inline std::vector<std::int64_t> decode_i64(const TensorRecord& rec) {
    if (rec.dtype != DType::I64) {
        throw IoError("checkpoint entry '" + rec.name + "' has dtype " + dtype_name(rec.dtype) +
                      ", expected i64");
    }
    std::vector<std::int64_t> out(rec.numel());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = detail::read_le<std::int64_t>(rec.raw.data() + i * 8);
    return out;
}

// ---------------------------------------------------------------------------
// Model <-> records
// ---------------------------------------------------------------------------

template <typename T>
std::vector<TensorRecord> model_records(Model<T>& model) {
    std::vector<TensorRecord> recs;
    for (std::size_t i = 0; i < model.stages.size(); ++i) {
        auto& s = model.stages[i];
        const std::string p = "layer" + std::to_string(i + 1) + ".";
        if (s.fern) {
            recs.push_back(encode_tensor(p + "lut", s.fern->lut));
            recs.push_back(encode_tensor(p + "thresholds", s.fern->thresholds));
            recs.push_back(encode_i64(p + "dims", s.fern->dims,
                                      {static_cast<std::uint64_t>(s.fern->config.ferns),
                                       static_cast<std::uint64_t>(s.fern->config.depth)}));
            recs.push_back(encode_i64(p + "offsets", s.fern->offsets,
                                      {static_cast<std::uint64_t>(s.fern->config.ferns)}));
        }
        if (s.conv) {
            recs.push_back(encode_tensor(p + "weight", s.conv->weight));
            if (s.conv->bias) recs.push_back(encode_tensor(p + "bias", s.conv->bias));
        }
        if (s.binconv) {
            recs.push_back(encode_tensor(p + "weight", s.binconv->real_weight));
            if (s.binconv->bias) recs.push_back(encode_tensor(p + "bias", s.binconv->bias));
        }
        if (s.bn) {
            recs.push_back(encode_tensor(p + "bn.gamma", s.bn->gamma));
            recs.push_back(encode_tensor(p + "bn.beta", s.bn->beta));
            auto rm = make_tensor<T>({s.bn->running_mean.size()}, s.bn->running_mean);
            auto rv = make_tensor<T>({s.bn->running_var.size()}, s.bn->running_var);
            recs.push_back(encode_tensor(p + "bn.running_mean", rm));
            recs.push_back(encode_tensor(p + "bn.running_var", rv));
        }
    }
    return recs;
}

template <typename T>
void load_model_records(Model<T>& model, const std::vector<TensorRecord>& recs) {
    auto find = [&recs](const std::string& name) -> const TensorRecord& {
        for (const auto& r : recs)
            if (r.name == name) return r;
        throw IoError("checkpoint is missing entry '" + name + "'");
    };
    for (std::size_t i = 0; i < model.stages.size(); ++i) {
        auto& s = model.stages[i];
        const std::string p = "layer" + std::to_string(i + 1) + ".";
        if (s.fern) {
            decode_tensor(find(p + "lut"), s.fern->lut);
            decode_tensor(find(p + "thresholds"), s.fern->thresholds);
            s.fern->dims = decode_i64(find(p + "dims"));
            s.fern->offsets = decode_i64(find(p + "offsets"));
        }
        if (s.conv) {
            decode_tensor(find(p + "weight"), s.conv->weight);
            if (s.conv->bias) decode_tensor(find(p + "bias"), s.conv->bias);
        }
        if (s.binconv) {
            decode_tensor(find(p + "weight"), s.binconv->real_weight);
            if (s.binconv->bias) decode_tensor(find(p + "bias"), s.binconv->bias);
        }
        if (s.bn) {
            decode_tensor(find(p + "bn.gamma"), s.bn->gamma);
            decode_tensor(find(p + "bn.beta"), s.bn->beta);
            auto rm = make_tensor<T>({s.bn->running_mean.size()});
            auto rv = make_tensor<T>({s.bn->running_var.size()});
            decode_tensor(find(p + "bn.running_mean"), rm);
            decode_tensor(find(p + "bn.running_var"), rv);
            s.bn->running_mean = rm->data;
            s.bn->running_var = rv->data;
        }
    }
}

template <typename T>
void save_model(const std::string& path, Model<T>& model) {
    Checkpoint ckpt;
    ckpt.records = model_records(model);
    ckpt.config_text = model_config_to_text(model.config);
    save_checkpoint(path, ckpt);
}

template <typename T>
Model<T> load_model_as(const Checkpoint& ckpt) {
    auto cfg = model_config_from_kv(KvFile::parse(ckpt.config_text, "<checkpoint>"));
    auto model = build_model<T>(cfg);
    load_model_records(model, ckpt.records);
    return model;
}

}  // namespace fernnet
