#include "fernnet/serialize.hpp"

#include <filesystem>
#include <fstream>

namespace fernnet {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(uint_n(4)); }
    std::uint64_t u64() { return uint_n(8); }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<std::uint8_t> blob(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> v(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                    bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return v;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::uint64_t uint_n(std::size_t n) {
        need(n);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        pos_ += n;
        return v;
    }

    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw IoError("checkpoint '" + path_ + "' is truncated");
        }
    }

    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out;
    out += "FERN";
    put_u32(out, kCheckpointVersion);
    put_u64(out, ckpt.records.size());
    for (const auto& rec : ckpt.records) {
        put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
        out += rec.name;
        out.push_back(static_cast<char>(rec.dtype));
        out.push_back(static_cast<char>(rec.extents.size()));
        for (auto e : rec.extents) put_u64(out, e);
        if (rec.raw.size() != rec.numel() * dtype_size(rec.dtype)) {
            throw ContractError("record '" + rec.name + "' raw size does not match extents");
        }
        out.append(reinterpret_cast<const char*>(rec.raw.data()), rec.raw.size());
    }
    put_u64(out, ckpt.config_text.size());
    out += ckpt.config_text;
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string bytes = read_file(path);
    Reader r(bytes, path);
    if (r.str(4) != "FERN") {
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kCheckpointVersion));
    }
    Checkpoint ckpt;
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        TensorRecord rec;
        rec.name = r.str(r.u32());
        const auto code = r.blob(1)[0];
        if (code > 2) throw IoError("checkpoint '" + path + "': unknown dtype code");
        rec.dtype = static_cast<DType>(code);
        const auto rank = r.blob(1)[0];
        for (std::uint8_t d = 0; d < rank; ++d) rec.extents.push_back(r.u64());
        rec.raw = r.blob(rec.numel() * dtype_size(rec.dtype));
        ckpt.records.push_back(std::move(rec));
    }
    ckpt.config_text = r.str(r.u64());
    if (!r.done()) throw IoError("checkpoint '" + path + "' has trailing bytes");
    return ckpt;
}

}  // namespace fernnet
