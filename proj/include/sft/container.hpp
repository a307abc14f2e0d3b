#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/param_tree.hpp"

namespace sft {

// On-disk container shared by checkpoints (.sft), masks (.sftm) and datasets
// (.sftd): magic "SFT1", an 8-byte little-endian header length, a UTF-8 JSON
// header {format_version, model_kind, config, entries, payload_digest}, then
// the raw payload. Entry dtypes: "f32" (LE float), "i32" (LE int32), "bit"
// (bit-packed, LSB-first within bytes). The digest is 64-bit FNV-1a over the
// whole payload.

struct ContainerEntry {
    std::string path;
    std::string dtype;
    std::vector<int64_t> shape;
    uint64_t byte_offset = 0;
    uint64_t byte_len = 0;
    int64_t numel() const;
};

class ContainerWriter {
public:
    ContainerWriter(std::string model_kind, std::string config_json);
    void add_f32(const std::string& path, const std::vector<int64_t>& shape,
                 const std::vector<double>& vals);
    void add_i32(const std::string& path, const std::vector<int64_t>& shape,
                 const std::vector<int32_t>& vals);
    // packed must hold ceil(nbits / 8) bytes, LSB-first.
    void add_bits(const std::string& path, const std::vector<int64_t>& shape,
                  const std::vector<uint8_t>& packed, int64_t nbits);
    void save(const std::string& file) const;

private:
    std::string model_kind_;
    std::string config_json_;
    std::vector<ContainerEntry> entries_;
    std::vector<uint8_t> payload_;
};

class Container {
public:
    // Loads and verifies magic, version and payload digest.
    static Container load(const std::string& file);

    const std::string& model_kind() const { return model_kind_; }
    const std::string& config_json() const { return config_json_; }
    const std::vector<ContainerEntry>& entries() const { return entries_; }
    const ContainerEntry& entry(const std::string& path) const;
    bool has(const std::string& path) const;

    std::vector<double> read_f32(const ContainerEntry& e) const;
    std::vector<int32_t> read_i32(const ContainerEntry& e) const;
    std::vector<uint8_t> read_bits(const ContainerEntry& e) const;  // packed bytes

private:
    std::string model_kind_;
    std::string config_json_;
    std::vector<ContainerEntry> entries_;
    std::vector<uint8_t> payload_;
};

// Parameter-tree convenience wrappers (model_kind "transformer"/"rnnt").
void save_checkpoint(const ParamTree& params, const std::string& model_kind,
                     const std::string& config_json, const std::string& file);

struct LoadedCheckpoint {
    std::string model_kind;
    std::string config_json;
    ParamTree params;
};

LoadedCheckpoint load_checkpoint(const std::string& file);

// Copies values from `src` into `dst`, requiring identical layout. Throws
// ShapeDiffError listing the first 10 path/shape mismatches.
void apply_tree(ParamTree& dst, const ParamTree& src);

}  // namespace sft
