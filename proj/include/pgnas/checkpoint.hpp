#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/serialize.hpp"
#include "pgnas/tensor.hpp"

namespace pgnas {

inline constexpr char kCheckpointMagic[8] = {'P', 'G', 'N', 'A', 'S', 'C', 'K', 'P'};
inline constexpr uint32_t kCheckpointVersion = 1;

// On-disk model state. Layout (all little-endian):
//   magic "PGNASCKP", u32 version, u64 space digest,
//   u32 tensor count,     records of (name, u8 dtype, u32 rank, dims, payload),
//   u32 keep-logit count, records of (name, f64),
//   u32 aux count,        records of (name, u64)   -- trainer bookkeeping.
// dtype 0 stores f64 payloads bit-exactly; dtype 1 is a narrowed f32 mode for
// smaller checkpoint files only and does not round-trip exactly.
struct CheckpointData {
    uint32_t version = kCheckpointVersion;
    uint64_t space_digest = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, double>> keep_logits;
    std::vector<std::pair<std::string, uint64_t>> aux;

    const Tensor* find_tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
    const double* find_keep_logit(const std::string& name) const {
        for (const auto& [n, v] : keep_logits)
            if (n == name) return &v;
        return nullptr;
    }
    const uint64_t* find_aux(const std::string& name) const {
        for (const auto& [n, v] : aux)
            if (n == name) return &v;
        return nullptr;
    }
};

inline std::vector<uint8_t> encode_checkpoint(const CheckpointData& ck, bool narrow_f32 = false) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
    wire::put_u32(out, ck.version);
    wire::put_u64(out, ck.space_digest);
    wire::put_u32(out, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        wire::put_str(out, name);
        wire::put_u8(out, narrow_f32 ? 1 : 0);
        wire::put_u32(out, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) wire::put_u32(out, static_cast<uint32_t>(d));
        if (narrow_f32) {
            for (double v : t.values()) wire::put_f32(out, static_cast<float>(v));
        } else {
            for (double v : t.values()) wire::put_f64(out, v);
        }
    }
    wire::put_u32(out, static_cast<uint32_t>(ck.keep_logits.size()));
    for (const auto& [name, v] : ck.keep_logits) {
        wire::put_str(out, name);
        wire::put_f64(out, v);
    }
    wire::put_u32(out, static_cast<uint32_t>(ck.aux.size()));
    for (const auto& [name, v] : ck.aux) {
        wire::put_str(out, name);
        wire::put_u64(out, v);
    }
    return out;
}

inline CheckpointData decode_checkpoint(const std::vector<uint8_t>& bytes) {
    wire::Reader r(bytes.data(), bytes.size());
    for (char c : kCheckpointMagic) {
        if (r.u8() != static_cast<uint8_t>(c)) throw DataError("checkpoint: bad magic");
    }
    CheckpointData ck;
    ck.version = r.u32();
    if (ck.version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported format version " + std::to_string(ck.version));
    }
    ck.space_digest = r.u64();
    const uint32_t nt = r.u32();
    for (uint32_t i = 0; i < nt; ++i) {
        std::string name = r.str();
        const uint8_t dtype = r.u8();
        if (dtype > 1) throw DataError("checkpoint: unknown dtype tag " + std::to_string(dtype));
        const uint32_t rank = r.u32();
        std::vector<int> shape(rank);
        size_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int>(r.u32());
            if (shape[d] <= 0) throw DataError("checkpoint: bad dimension in tensor '" + name + "'");
            n *= static_cast<size_t>(shape[d]);
        }
        std::vector<double> values(n);
        for (size_t j = 0; j < n; ++j) values[j] = dtype == 0 ? r.f64() : static_cast<double>(r.f32());
        ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    const uint32_t nk = r.u32();
    for (uint32_t i = 0; i < nk; ++i) {
        std::string name = r.str();
        ck.keep_logits.emplace_back(std::move(name), r.f64());
    }
    const uint32_t na = r.u32();
    for (uint32_t i = 0; i < na; ++i) {
        std::string name = r.str();
        ck.aux.emplace_back(std::move(name), r.u64());
    }
    if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
    return ck;
}

// Atomic write: temp file in the same directory, then rename.
inline void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& ck,
                                  bool narrow_f32 = false) {
    const auto bytes = encode_checkpoint(ck, narrow_f32);
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open '" + tmp.string() + "' for writing");
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
        if (!os) throw DataError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path.string() + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace pgnas
