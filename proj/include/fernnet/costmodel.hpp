#pragma once

#include <array>
#include <optional>

#include "fernnet/model.hpp"

namespace fernnet {

// Per-operation-kind tallies for one inference pass. Memory traffic is
// counted in words (one word per stored value, packed sign bits count as
// 1/32 word, rounded up per row).
struct OpCounts {
    std::uint64_t float_mul = 0;
    std::uint64_t float_add = 0;
    std::uint64_t float_div = 0;
    std::uint64_t special_fn = 0;  // tanh, sqrt, exp
    std::uint64_t compare = 0;
    std::uint64_t int_add_shift = 0;
    std::uint64_t mem_read_words = 0;
    std::uint64_t mem_write_words = 0;

    OpCounts& operator+=(const OpCounts& o);
};

// A fern layer's counts split by pipeline step. The indexing phase is the
// path the multiplication-free claim is about: comparisons plus integer
// shift/adds, no floating point multiplications at all.
struct FernPhaseCounts {
    OpCounts response;      // gather selected dims, subtract thresholds, tanh
    OpCounts indexing;      // sign tests and bit assembly
    OpCounts weight;        // instance weight from the responses
    OpCounts gather;        // LUT row reads
    OpCounts weighted_sum;  // scale and accumulate the gathered rows

    OpCounts total() const;
};

struct LayerCounts {
    std::string name;   // layer1, layer2, ...
    std::string kind;   // fern / conv / binconv / pool, "+bn"/"+relu" suffixes
    std::uint64_t out_elements = 0;
    OpCounts counts;  // whole stage including norm/activation
    std::optional<FernPhaseCounts> fern_phases;
    std::uint64_t backbone_float_mul = 0;      // backbone part only
    std::uint64_t matched_conv_float_mul = 0;  // a same-geometry conv's muls
};

struct OpReport {
    std::vector<LayerCounts> layers;
    OpCounts total;
};

// Exact trainable-parameter total from the closed-form per-layer sums. A
// fern layer contributes K*2^m*c_out for the LUT plus K*m thresholds when
// they train (include_frozen counts them regardless); conv layers contribute
// C_out*C_in*k^2 + C_out; batch norm 2*C.
std::size_t count_params(const ModelConfig& cfg, bool include_frozen = false);

// Inference-op tallies for a single image of the given C/H/W extent.
// Batch norm is folded to an affine map (2 mul + 1 add per element).
OpReport count_ops(const ModelConfig& cfg, std::array<std::size_t, 3> input_chw);

// Joules per operation. Defaults are order-of-magnitude CMOS estimates (a
// float multiply costs several float adds; on-chip SRAM access costs a few
// pJ per word); they are inputs to the model, not measurements, and can be
// replaced wholesale from a key = value file.
struct EnergyTable {
    std::optional<double> float_mul, float_add, float_div, special_fn, compare, int_add_shift,
        mem_read_words, mem_write_words;

    static EnergyTable defaults();
};

EnergyTable load_energy_table(const std::string& path);

// Dot product of tallies and per-op energies. A nonzero tally whose kind is
// missing from the table is an error.
double estimate_energy(const OpCounts& counts, const EnergyTable& table);

// Human-readable (or key = value when `machine`) report combining parameter
// counts, per-layer op counts and the energy estimate.
std::string op_report_text(const ModelConfig& cfg, const OpReport& report, const EnergyTable& table,
                           const std::string& table_name, bool machine);

}  // namespace fernnet
