#pragma once

// XRDL checkpoint container (all integers little-endian):
//
//   "XRDL"
//   u32 version (= 1)
//   u32 header length, header bytes (compact JSON: spec, class_names, metadata)
//   per parameter, in name order:
//     u32 name length, name bytes, u8 trainable, u8 rank, rank x u32 dims,
//     u32 element count, element count x f32
//   u32 CRC-32 (IEEE) of every byte after the magic and before the CRC

#include "xrdl/byte_io.hpp"
#include "xrdl/error.hpp"
#include "xrdl/model.hpp"
#include "xrdl/model_zoo.hpp"

#include "json.hpp"

#include <boost/crc.hpp>

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace xrdl {

inline constexpr std::string_view checkpoint_magic = "XRDL";
inline constexpr std::uint32_t checkpoint_version = 1;

struct checkpoint {
    model_spec spec;
    std::vector<std::string> class_names;
    nlohmann::json metadata = nlohmann::json::object();  // epoch, val_loss, seed, ...
    param_store<float> params;
};

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
    boost::crc_32_type crc;
    crc.process_bytes(data, size);
    return crc.checksum();
}

inline std::string checkpoint_header(const checkpoint& ck) {
    const nlohmann::json header{{"class_names", ck.class_names}, {"metadata", ck.metadata}, {"spec", to_json(ck.spec)}};
    return header.dump();
}

inline bytes encode_checkpoint(const checkpoint& ck) {
    check_params_match(ck.spec, ck.params);
    const std::string header = checkpoint_header(ck);
    byte_writer w;
    w.raw(checkpoint_magic);
    w.u32(checkpoint_version);
    w.u32(static_cast<std::uint32_t>(header.size()));
    w.raw(header);
    for (const auto& [name, e] : ck.params) {
        if (e.value.rank() > 255 || e.value.size() > std::numeric_limits<std::uint32_t>::max()) {
            throw consistency_error("parameter '" + name + "' too large for the container");
        }
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.raw(name);
        w.u8(e.trainable ? 1 : 0);
        w.u8(static_cast<std::uint8_t>(e.value.rank()));
        for (const auto d : e.value.dims()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        w.u32(static_cast<std::uint32_t>(e.value.size()));
        for (const float v : e.value.values()) {
            w.f32(v);
        }
    }
    bytes out = w.take();
    const std::uint32_t crc = crc32(out.data() + 4, out.size() - 4);
    byte_writer tail;
    tail.u32(crc);
    out.insert(out.end(), tail.buffer().begin(), tail.buffer().end());
    return out;
}

inline checkpoint decode_checkpoint(const bytes& data, const std::string& origin = "<memory>") {
    const std::size_t prefix = std::min<std::size_t>(data.size(), 4);
    if (!std::equal(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(prefix), checkpoint_magic.begin())) {
        throw format_error(origin + ": not an XRDL checkpoint (bad magic)");
    }
    if (data.size() < 16) {
        throw corruption_error(origin + ": truncated checkpoint (" + std::to_string(data.size()) + " bytes)");
    }
    byte_reader crc_reader(data.data() + data.size() - 4, 4);
    if (crc_reader.u32() != crc32(data.data() + 4, data.size() - 8)) {
        throw corruption_error(origin + ": CRC mismatch");
    }

    byte_reader r(data.data() + 4, data.size() - 8);
    checkpoint ck;
    try {
        const std::uint32_t version = r.u32();
        if (version == 0 || version > checkpoint_version) {
            throw version_error(origin + ": unsupported checkpoint version " + std::to_string(version));
        }
        const std::uint32_t header_size = r.u32();
        const nlohmann::json header = nlohmann::json::parse(r.raw(header_size));
        ck.spec = spec_from_json(header.at("spec"));
        ck.class_names = header.at("class_names").get<std::vector<std::string>>();
        ck.metadata = header.at("metadata");
        while (r.remaining() > 0) {
            const std::string name = r.raw(r.u32());
            const bool trainable = r.u8() != 0;
            shape_t dims(r.u8());
            for (auto& d : dims) {
                d = r.u32();
            }
            const std::size_t count = r.u32();
            if (count != element_count(dims) || count > r.remaining() / 4) {
                throw format_error(origin + ": parameter '" + name + "' element count disagrees with its shape");
            }
            std::vector<float> values(count);
            for (auto& v : values) {
                v = r.f32();
            }
            ck.params.add(name, tensor32(std::move(dims), std::move(values)), trainable);
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(origin + ": malformed header: " + e.what());
    }
    try {
        validate(ck.spec);
    } catch (const error& e) {
        throw consistency_error(origin + ": embedded model spec is invalid: " + e.what());
    }
    check_params_match(ck.spec, ck.params);
    return ck;
}

inline void save_checkpoint(const checkpoint& ck, const std::filesystem::path& path) {
    atomic_write(path, encode_checkpoint(ck));
}

inline checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path), path.string());
}

/// Writes a headless checkpoint holding just the backbone.
inline void export_backbone(const backbone& base, const std::filesystem::path& path) {
    save_checkpoint(checkpoint{base.spec, {}, nlohmann::json::object(), base.params}, path);
}

/// Replaces every backbone parameter with the same-named tensor from the
/// checkpoint at `path`; any missing name or shape mismatch is an error.
/// Extra parameters in the file (e.g. a full model's head) are ignored.
inline backbone import_backbone_weights(backbone base, const std::filesystem::path& path) {
    const checkpoint ck = load_checkpoint(path);
    std::string problems;
    for (const auto& [name, e] : base.params) {
        if (!ck.params.contains(name)) {
            problems += " missing '" + name + "';";
        } else if (ck.params.value(name).dims() != e.value.dims()) {
            problems += " '" + name + "' has shape " + to_string(ck.params.value(name).dims()) + ", expected " +
                        to_string(e.value.dims()) + ";";
        }
    }
    if (!problems.empty()) {
        throw consistency_error(path.string() + " does not match backbone '" + base.spec.name + "':" + problems);
    }
    for (const auto& name : base.params.names()) {
        base.params.set_value(name, ck.params.value(name));
        base.params.set_trainable(name, false);
    }
    return base;
}

}  // namespace xrdl
