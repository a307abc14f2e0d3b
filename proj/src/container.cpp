#include "sft/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sft/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian");

namespace sft {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'S', 'F', 'T', '1'};
constexpr int kFormatVersion = 1;

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}
}  // namespace

int64_t ContainerEntry::numel() const { return shape_numel(shape); }

ContainerWriter::ContainerWriter(std::string model_kind, std::string config_json)
    : model_kind_(std::move(model_kind)), config_json_(std::move(config_json)) {}

void ContainerWriter::add_f32(const std::string& path, const std::vector<int64_t>& shape,
                              const std::vector<double>& vals) {
    if (shape_numel(shape) != static_cast<int64_t>(vals.size()))
        throw ContractError("container: value count mismatch for " + path);
    ContainerEntry e{path, "f32", shape, payload_.size(), vals.size() * 4};
    size_t off = payload_.size();
    payload_.resize(off + e.byte_len);
    for (size_t i = 0; i < vals.size(); ++i) {
        float f = static_cast<float>(vals[i]);
        std::memcpy(&payload_[off + 4 * i], &f, 4);
    }
    entries_.push_back(std::move(e));
}

void ContainerWriter::add_i32(const std::string& path, const std::vector<int64_t>& shape,
                              const std::vector<int32_t>& vals) {
    if (shape_numel(shape) != static_cast<int64_t>(vals.size()))
        throw ContractError("container: value count mismatch for " + path);
    ContainerEntry e{path, "i32", shape, payload_.size(), vals.size() * 4};
    size_t off = payload_.size();
    payload_.resize(off + e.byte_len);
    std::memcpy(&payload_[off], vals.data(), e.byte_len);
    entries_.push_back(std::move(e));
}

void ContainerWriter::add_bits(const std::string& path, const std::vector<int64_t>& shape,
                               const std::vector<uint8_t>& packed, int64_t nbits) {
    if (shape_numel(shape) != nbits)
        throw ContractError("container: bit count mismatch for " + path);
    uint64_t nbytes = static_cast<uint64_t>((nbits + 7) / 8);
    if (packed.size() != nbytes) throw ContractError("container: packed size mismatch for " + path);
    ContainerEntry e{path, "bit", shape, payload_.size(), nbytes};
    payload_.insert(payload_.end(), packed.begin(), packed.end());
    entries_.push_back(std::move(e));
}

void ContainerWriter::save(const std::string& file) const {
    json header;
    header["format_version"] = kFormatVersion;
    header["model_kind"] = model_kind_;
    header["config"] = config_json_.empty() ? json(nullptr) : json::parse(config_json_);
    json jentries = json::array();
    for (const auto& e : entries_) {
        jentries.push_back({{"path", e.path},
                            {"dtype", e.dtype},
                            {"shape", e.shape},
                            {"byte_offset", e.byte_offset},
                            {"byte_len", e.byte_len}});
    }
    header["entries"] = std::move(jentries);
    header["payload_digest"] = rng::fnv1a(payload_.data(), payload_.size());

    std::string htext = header.dump();
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + file + "' for writing");
    out.write(kMagic, 4);
    uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    out.write(reinterpret_cast<const char*>(payload_.data()),
              static_cast<std::streamsize>(payload_.size()));
    if (!out) throw IoError("write failed for '" + file + "'");
}

Container Container::load(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open '" + file + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IoError("'" + file + "' is not an SFT1 container");
    uint64_t hlen;
    std::memcpy(&hlen, bytes.data() + 4, 8);
    if (bytes.size() < 12 + hlen) throw IoError("'" + file + "' is truncated in the header");

    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<long>(hlen));
    } catch (const json::exception& e) {
        throw IoError("'" + file + "' has a malformed header: " + e.what());
    }
    if (header.value("format_version", -1) != kFormatVersion)
        throw IoError("'" + file + "' has unknown format version");

    Container c;
    c.payload_.assign(bytes.begin() + 12 + static_cast<long>(hlen), bytes.end());
    uint64_t want = header.at("payload_digest").get<uint64_t>();
    uint64_t got = rng::fnv1a(c.payload_.data(), c.payload_.size());
    if (want != got)
        throw DigestError("'" + file + "' payload digest mismatch (header " +
                          std::to_string(want) + ", payload " + std::to_string(got) + ")");

    c.model_kind_ = header.at("model_kind").get<std::string>();
    c.config_json_ = header.at("config").is_null() ? "" : header.at("config").dump();
    for (const auto& je : header.at("entries")) {
        ContainerEntry e;
        e.path = je.at("path").get<std::string>();
        e.dtype = je.at("dtype").get<std::string>();
        e.shape = je.at("shape").get<std::vector<int64_t>>();
        e.byte_offset = je.at("byte_offset").get<uint64_t>();
        e.byte_len = je.at("byte_len").get<uint64_t>();
        if (e.byte_offset + e.byte_len > c.payload_.size())
            throw IoError("'" + file + "' entry " + e.path + " exceeds the payload");
        c.entries_.push_back(std::move(e));
    }
    return c;
}

bool Container::has(const std::string& path) const {
    for (const auto& e : entries_)
        if (e.path == path) return true;
    return false;
}

const ContainerEntry& Container::entry(const std::string& path) const {
    for (const auto& e : entries_)
        if (e.path == path) return e;
    throw IoError("container has no entry '" + path + "'");
}

std::vector<double> Container::read_f32(const ContainerEntry& e) const {
    if (e.dtype != "f32") throw IoError("entry " + e.path + " is not f32");
    std::vector<double> out(static_cast<size_t>(e.numel()));
    for (size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, &payload_[e.byte_offset + 4 * i], 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

std::vector<int32_t> Container::read_i32(const ContainerEntry& e) const {
    if (e.dtype != "i32") throw IoError("entry " + e.path + " is not i32");
    std::vector<int32_t> out(static_cast<size_t>(e.numel()));
    std::memcpy(out.data(), &payload_[e.byte_offset], e.byte_len);
    return out;
}

std::vector<uint8_t> Container::read_bits(const ContainerEntry& e) const {
    if (e.dtype != "bit") throw IoError("entry " + e.path + " is not bit");
    return {payload_.begin() + static_cast<long>(e.byte_offset),
            payload_.begin() + static_cast<long>(e.byte_offset + e.byte_len)};
}

void save_checkpoint(const ParamTree& params, const std::string& model_kind,
                     const std::string& config_json, const std::string& file) {
    ContainerWriter w(model_kind, config_json);
    for (const auto& e : params) w.add_f32(e.path, e.tensor.shape, e.tensor.data);
    w.save(file);
}

LoadedCheckpoint load_checkpoint(const std::string& file) {
    Container c = Container::load(file);
    LoadedCheckpoint out;
    out.model_kind = c.model_kind();
    out.config_json = c.config_json();
    for (const auto& e : c.entries())
        out.params.add(e.path, Tensor::from(e.shape, c.read_f32(e)));
    return out;
}

void apply_tree(ParamTree& dst, const ParamTree& src) {
    std::vector<std::string> diffs;
    size_t n = std::max(dst.size(), src.size());
    for (size_t i = 0; i < n && diffs.size() < 10; ++i) {
        if (i >= dst.size()) {
            diffs.push_back("extra " + src.entry(i).path + " " + src.entry(i).tensor.shape_str());
        } else if (i >= src.size()) {
            diffs.push_back("missing " + dst.entry(i).path + " " + dst.entry(i).tensor.shape_str());
        } else if (dst.entry(i).path != src.entry(i).path ||
                   dst.entry(i).tensor.shape != src.entry(i).tensor.shape) {
            diffs.push_back("want " + dst.entry(i).path + " " + dst.entry(i).tensor.shape_str() +
                            ", got " + src.entry(i).path + " " + src.entry(i).tensor.shape_str());
        }
    }
    if (!diffs.empty()) {
        std::string msg = "checkpoint does not fit this model:";
        for (const auto& d : diffs) msg += "\n  " + d;
        throw ShapeDiffError(msg);
    }
    for (size_t i = 0; i < dst.size(); ++i) {
        for (size_t j = 0; j < src.entry(i).tensor.data.size(); ++j)
            dst.entry(i).tensor.data[j] = quantize(src.entry(i).tensor.data[j]);
    }
}

}  // namespace sft
