#include "fernnet/costmodel.hpp"

#include <iomanip>
#include <sstream>

#include "fernnet/config.hpp"
#include "fernnet/spatial.hpp"

namespace fernnet {

OpCounts& OpCounts::operator+=(const OpCounts& o) {
    float_mul += o.float_mul;
    float_add += o.float_add;
    float_div += o.float_div;
    special_fn += o.special_fn;
    compare += o.compare;
    int_add_shift += o.int_add_shift;
    mem_read_words += o.mem_read_words;
    mem_write_words += o.mem_write_words;
    return *this;
}

OpCounts FernPhaseCounts::total() const {
    OpCounts t;
    t += response;
    t += indexing;
    t += weight;
    t += gather;
    t += weighted_sum;
    return t;
}

std::size_t count_params(const ModelConfig& cfg, bool include_frozen) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        if (l.kind == LayerSpec::Kind::Pool) continue;
        const std::size_t fan_in = l.c_in * l.k * l.k;
        switch (cfg.layer_backbone(i)) {
            case Backbone::Fern:
                total += cfg.ferns * (std::size_t{1} << cfg.depth) * l.c_out;  // LUT
                if (cfg.thresholds_trainable || include_frozen) total += cfg.ferns * cfg.depth;
                break;
            case Backbone::Conv:
            case Backbone::BinConv:
                total += l.c_out * fan_in + l.c_out;  // weight + bias
                break;
        }
        if (l.norm == NormKind::BatchNorm) total += 2 * l.c_out;
    }
    return total;
}

namespace {

// Per-UFM-row tallies of one fern ensemble pass, split by phase.
FernPhaseCounts fern_row_counts(const ModelConfig& cfg, std::size_t c_out) {
    const std::uint64_t K = cfg.ferns, m = cfg.depth, C = c_out;
    FernPhaseCounts p;
    p.response.mem_read_words = K * m;
    p.response.float_add = K * m;  // threshold subtraction
    p.response.special_fn = K * m;  // tanh
    p.indexing.compare = K * m;
    p.indexing.int_add_shift = K * m;  // bit shifts plus the fern offset add
    switch (cfg.weight_mode) {
        case WeightMode::LiteralL2:
        case WeightMode::NormalizedProximity:
            p.weight.float_mul = K * m;  // squarings
            p.weight.special_fn = K;     // sqrt
            break;
        case WeightMode::MeanL1Proximity:
            p.weight.float_add = K * m;
            break;
    }
    p.gather.mem_read_words = K * C;
    p.weighted_sum.float_mul = K * C;
    p.weighted_sum.float_add = K * C;
    p.weighted_sum.mem_write_words = C;
    return p;
}

OpCounts scale_counts(const OpCounts& c, std::uint64_t factor) {
    OpCounts out;
    out.float_mul = c.float_mul * factor;
    out.float_add = c.float_add * factor;
    out.float_div = c.float_div * factor;
    out.special_fn = c.special_fn * factor;
    out.compare = c.compare * factor;
    out.int_add_shift = c.int_add_shift * factor;
    out.mem_read_words = c.mem_read_words * factor;
    out.mem_write_words = c.mem_write_words * factor;
    return out;
}

}  // namespace

OpReport count_ops(const ModelConfig& cfg, std::array<std::size_t, 3> input_chw) {
    cfg.validate();
    OpReport report;
    std::size_t h = input_chw[1], w = input_chw[2];
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        LayerCounts lc;
        lc.name = "layer" + std::to_string(i + 1);
        if (l.kind == LayerSpec::Kind::Pool) {
            const std::size_t channels = i > 0 ? cfg.layers[i - 1].c_out : input_chw[0];
            lc.kind = "pool";
            lc.out_elements = channels;
            lc.counts.float_add = channels * h * w;
            lc.counts.float_div = channels;
            lc.counts.mem_read_words = channels * h * w;
            lc.counts.mem_write_words = channels;
            h = w = 1;
            report.total += lc.counts;
            report.layers.push_back(std::move(lc));
            continue;
        }
        const Geometry g = make_geometry(1, l.c_in, h, w, l.k, l.stride, l.padding);
        const std::uint64_t rows = g.rows();
        const std::uint64_t D = g.cols();
        const std::uint64_t out_el = rows * l.c_out;
        lc.out_elements = out_el;
        lc.matched_conv_float_mul = out_el * D;
        switch (cfg.layer_backbone(i)) {
            case Backbone::Fern: {
                lc.kind = "fern";
                FernPhaseCounts phases;
                const FernPhaseCounts per_row = fern_row_counts(cfg, l.c_out);
                phases.response = scale_counts(per_row.response, rows);
                phases.indexing = scale_counts(per_row.indexing, rows);
                phases.weight = scale_counts(per_row.weight, rows);
                phases.gather = scale_counts(per_row.gather, rows);
                phases.weighted_sum = scale_counts(per_row.weighted_sum, rows);
                lc.counts = phases.total();
                lc.backbone_float_mul = lc.counts.float_mul;
                lc.fern_phases = phases;
                break;
            }
            case Backbone::Conv: {
                lc.kind = "conv";
                lc.counts.float_mul = out_el * D;
                lc.counts.float_add = out_el * D;  // accumulate + bias
                lc.counts.mem_read_words = out_el * 2 * D;
                lc.counts.mem_write_words = out_el;
                lc.backbone_float_mul = lc.counts.float_mul;
                break;
            }
            case Backbone::BinConv: {
                lc.kind = "binconv";
                lc.counts.float_mul = out_el;  // per-channel alpha scale
                lc.counts.float_add = out_el * D;
                lc.counts.mem_read_words = out_el * (D + (D + 31) / 32);  // float inputs + packed signs
                lc.counts.mem_write_words = out_el;
                lc.backbone_float_mul = lc.counts.float_mul;
                break;
            }
        }
        if (l.norm == NormKind::BatchNorm) {
            lc.kind += "+bn";
            lc.counts.float_mul += 2 * out_el;  // folded affine
            lc.counts.float_add += out_el;
            lc.counts.mem_read_words += out_el;
            lc.counts.mem_write_words += out_el;
        }
        if (cfg.relu_after(i)) {
            lc.kind += "+relu";
            lc.counts.compare += out_el;
        }
        h = g.h_out;
        w = g.w_out;
        report.total += lc.counts;
        report.layers.push_back(std::move(lc));
    }
    return report;
}

EnergyTable EnergyTable::defaults() {
    EnergyTable t;
    t.float_mul = 3.7e-12;
    t.float_add = 0.9e-12;
    t.float_div = 9.0e-12;
    t.special_fn = 1.0e-11;
    t.compare = 3.0e-13;
    t.int_add_shift = 1.0e-13;
    t.mem_read_words = 5.0e-12;
    t.mem_write_words = 5.0e-12;
    return t;
}

EnergyTable load_energy_table(const std::string& path) {
    const KvFile kv = KvFile::parse_file(path);
    EnergyTable t;
    for (const auto& sec : kv.sections) {
        if (!sec.name.empty() && sec.name != "energy") {
            throw ConfigError("energy table '" + path + "': unexpected section [" + sec.name + "]");
        }
        for (const auto& e : sec.entries) {
            double v = 0;
            try {
                std::size_t pos = 0;
                v = std::stod(e.value, &pos);
                if (pos != e.value.size()) throw std::invalid_argument(e.value);
            } catch (const std::exception&) {
                throw ConfigError("energy table '" + path + "': bad value for '" + e.key + "'");
            }
            if (v < 0) throw ConfigError("energy table '" + path + "': negative energy for '" + e.key + "'");
            if (e.key == "float_mul") {
                t.float_mul = v;
            } else if (e.key == "float_add") {
                t.float_add = v;
            } else if (e.key == "float_div") {
                t.float_div = v;
            } else if (e.key == "special_fn") {
                t.special_fn = v;
            } else if (e.key == "compare") {
                t.compare = v;
            } else if (e.key == "int_add_shift") {
                t.int_add_shift = v;
            } else if (e.key == "mem_read_words") {
                t.mem_read_words = v;
            } else if (e.key == "mem_write_words") {
                t.mem_write_words = v;
            } else {
                throw ConfigError("energy table '" + path + "': unknown op kind '" + e.key + "'");
            }
        }
    }
    return t;
}

double estimate_energy(const OpCounts& counts, const EnergyTable& table) {
    double joules = 0;
    auto add = [&joules](std::uint64_t tally, const std::optional<double>& per_op, const char* kind) {
        if (tally == 0) return;
        if (!per_op) {
            throw ConfigError(std::string("energy table has no entry for '") + kind +
                              "' but the model uses it");
        }
        joules += static_cast<double>(tally) * *per_op;
    };
    add(counts.float_mul, table.float_mul, "float_mul");
    add(counts.float_add, table.float_add, "float_add");
    add(counts.float_div, table.float_div, "float_div");
    add(counts.special_fn, table.special_fn, "special_fn");
    add(counts.compare, table.compare, "compare");
    add(counts.int_add_shift, table.int_add_shift, "int_add_shift");
    add(counts.mem_read_words, table.mem_read_words, "mem_read_words");
    add(counts.mem_write_words, table.mem_write_words, "mem_write_words");
    return joules;
}

namespace {

bool has_fern_layer(const ModelConfig& cfg) {
    for (std::size_t i = 0; i < cfg.layers.size(); ++i)
        if (cfg.layers[i].kind == LayerSpec::Kind::Backbone &&
            cfg.layer_backbone(i) == Backbone::Fern)
            return true;
    return false;
}

void emit_counts_kv(std::ostringstream& out, const std::string& prefix, const OpCounts& c) {
    out << prefix << ".float_mul = " << c.float_mul << '\n';
    out << prefix << ".float_add = " << c.float_add << '\n';
    out << prefix << ".float_div = " << c.float_div << '\n';
    out << prefix << ".special_fn = " << c.special_fn << '\n';
    out << prefix << ".compare = " << c.compare << '\n';
    out << prefix << ".int_add_shift = " << c.int_add_shift << '\n';
    out << prefix << ".mem_read_words = " << c.mem_read_words << '\n';
    out << prefix << ".mem_write_words = " << c.mem_write_words << '\n';
}

}  // namespace

std::string op_report_text(const ModelConfig& cfg, const OpReport& report, const EnergyTable& table,
                           const std::string& table_name, bool machine) {
    std::ostringstream out;
    ModelConfig trainable = cfg;
    trainable.thresholds_trainable = true;
    ModelConfig frozen = cfg;
    frozen.thresholds_trainable = false;
    const double joules = estimate_energy(report.total, table);

    if (machine) {
        out << "backbone = " << backbone_name(cfg.backbone) << '\n';
        out << "params.trainable = " << count_params(trainable) << '\n';
        out << "params.thresholds_frozen = " << count_params(frozen) << '\n';
        for (const auto& l : report.layers) {
            out << l.name << ".kind = " << l.kind << '\n';
            out << l.name << ".out_elements = " << l.out_elements << '\n';
            emit_counts_kv(out, l.name, l.counts);
            if (l.fern_phases) {
                emit_counts_kv(out, l.name + ".indexing", l.fern_phases->indexing);
                out << l.name << ".matched_conv_float_mul = " << l.matched_conv_float_mul << '\n';
            }
        }
        emit_counts_kv(out, "total", report.total);
        out << "energy.table = " << table_name << '\n';
        out << "energy.joules = " << std::scientific << std::setprecision(6) << joules << '\n';
        return out.str();
    }

    out << "backbone: " << backbone_name(cfg.backbone) << '\n';
    if (has_fern_layer(cfg)) {
        out << "parameters (thresholds trainable): " << count_params(trainable) << '\n';
        out << "parameters (thresholds frozen):    " << count_params(frozen) << '\n';
    } else {
        out << "parameters: " << count_params(cfg) << '\n';
    }
    out << '\n';
    out << std::left << std::setw(9) << "layer" << std::setw(14) << "kind" << std::right
        << std::setw(12) << "out_elems" << std::setw(14) << "float_mul" << std::setw(14)
        << "float_add" << std::setw(12) << "special" << std::setw(12) << "compare" << std::setw(12)
        << "int_ops" << std::setw(14) << "mem_words" << '\n';
    for (const auto& l : report.layers) {
        out << std::left << std::setw(9) << l.name << std::setw(14) << l.kind << std::right
            << std::setw(12) << l.out_elements << std::setw(14) << l.counts.float_mul << std::setw(14)
            << l.counts.float_add << std::setw(12) << l.counts.special_fn << std::setw(12)
            << l.counts.compare << std::setw(12) << l.counts.int_add_shift << std::setw(14)
            << (l.counts.mem_read_words + l.counts.mem_write_words) << '\n';
    }
    out << std::left << std::setw(23) << "total" << std::right << std::setw(12) << ' ' << std::setw(14)
        << report.total.float_mul << std::setw(14) << report.total.float_add << std::setw(12)
        << report.total.special_fn << std::setw(12) << report.total.compare << std::setw(12)
        << report.total.int_add_shift << std::setw(14)
        << (report.total.mem_read_words + report.total.mem_write_words) << '\n';
    out << '\n';
    for (const auto& l : report.layers) {
        if (!l.fern_phases) continue;
        const double ratio = l.matched_conv_float_mul
                                 ? static_cast<double>(l.backbone_float_mul) /
                                       static_cast<double>(l.matched_conv_float_mul)
                                 : 0.0;
        out << l.name << ": indexing float_mul = " << l.fern_phases->indexing.float_mul
            << ", fern/conv float_mul ratio = " << std::fixed << std::setprecision(4) << ratio
            << std::defaultfloat << '\n';
    }
    out << "energy (" << table_name << "): " << std::scientific << std::setprecision(4) << joules
        << " J" << std::defaultfloat << '\n';
    return out.str();
}

}  // namespace fernnet
