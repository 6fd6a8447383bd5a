#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "drgrade/config.hpp"
#include "drgrade/fusion.hpp"

namespace drgrade {

// Binary layout, little-endian:
//   "DRGCKPT1"
//   u64 length + bytes   canonical RunConfig text
//   u64 length + bytes   "best_epoch best_kappa mean0 mean1 mean2 std0 std1 std2"
//   u32 section count
//   per section: u64 length + name, u32 entry count,
//                per entry: u64 length + name, tensor blob
// Sections: "backbone", then optionally "fusion" and "fusion_scaler".
// The config hash is recomputed from the stored text on load.

constexpr char kCheckpointMagic[9] = "DRGCKPT1";

struct Checkpoint {
    RunConfig config;
    ModelParams backbone;
    NormStats norm{};
    std::optional<FusionHead> fusion;
    int best_epoch = -1;
    double best_validation_kappa = 0.0;
};

namespace detail {

inline void write_string(std::ostream& os, const std::string& s)
{
    write_le<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::size_t limit = std::size_t{1} << 24)
{
    const auto n = read_le<std::uint64_t>(is);
    if (n > limit) fail(ErrorKind::io, "checkpoint: implausible string length");
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) fail(ErrorKind::io, "checkpoint: truncated string");
    return s;
}

inline void write_params(std::ostream& os, const std::string& section, const ModelParams& params)
{
    write_string(os, section);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params.entries()) {
        write_string(os, p.name);
        write_tensor(os, p.value);
    }
}

inline ModelParams read_params(std::istream& is)
{
    ModelParams params;
    const auto n = read_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = read_string(is);
        params.add(name, read_tensor(is));
    }
    return params;
}

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck)
{
    std::ostringstream os(std::ios::binary);
    os.write(kCheckpointMagic, 8);
    detail::write_string(os, ck.config.serialize());
    std::string meta = std::to_string(ck.best_epoch) + " " + format_double(ck.best_validation_kappa);
    for (double m : ck.norm.mean) meta += " " + format_double(m);
    for (double d : ck.norm.std) meta += " " + format_double(d);
    detail::write_string(os, meta);
    detail::write_le<std::uint32_t>(os, ck.fusion ? 3 : 1);
    detail::write_params(os, "backbone", ck.backbone);
    if (ck.fusion) {
        detail::write_params(os, "fusion", ck.fusion->params);
        ModelParams scaler;
        if (!ck.fusion->scaler.empty()) {
            scaler.add("mean", ck.fusion->scaler.mean);
            scaler.add("std", ck.fusion->scaler.std);
        }
        detail::write_params(os, "fusion_scaler", scaler);
    }
    return os.str();
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path.string() + "'");
    const std::string bytes = serialize_checkpoint(ck);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Loads and checks that the backbone entries match the stored config.
inline Checkpoint load_checkpoint(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::string(magic, 8) != kCheckpointMagic)
        fail(ErrorKind::io, "'" + path.string() + "' is not a checkpoint");
    Checkpoint ck;
    std::istringstream cfg_text(detail::read_string(in));
    ck.config = parse_run_config(cfg_text, path.string() + "#config");
    std::istringstream meta(detail::read_string(in));
    meta >> ck.best_epoch >> ck.best_validation_kappa;
    for (double& m : ck.norm.mean) meta >> m;
    for (double& d : ck.norm.std) meta >> d;
    if (!meta) fail(ErrorKind::io, "checkpoint: malformed metadata record");
    const auto sections = detail::read_le<std::uint32_t>(in);
    for (std::uint32_t s = 0; s < sections; ++s) {
        const std::string name = detail::read_string(in);
        if (name == "backbone") ck.backbone = detail::read_params(in);
        else if (name == "fusion") {
            if (!ck.fusion) ck.fusion = FusionHead{};
            ck.fusion->params = detail::read_params(in);
        } else if (name == "fusion_scaler") {
            if (!ck.fusion) ck.fusion = FusionHead{};
            ModelParams sc = detail::read_params(in);
            if (sc.size() == 2) ck.fusion->scaler = {sc.at("mean").value, sc.at("std").value};
        }
        else fail(ErrorKind::io, "checkpoint: unknown section '" + name + "'");
    }
    const ModelParams expected = make_backbone_params(ck.config.backbone());
    bool compatible = expected.size() == ck.backbone.size();
    for (std::size_t i = 0; compatible && i < expected.size(); ++i)
        compatible = expected.entries()[i].name == ck.backbone.entries()[i].name &&
                     expected.entries()[i].value.shape() == ck.backbone.entries()[i].value.shape();
    if (!compatible) fail(ErrorKind::invalid_argument, "checkpoint: parameters do not match the stored backbone config");
    if (ck.fusion) {
        ck.fusion->config = FusionConfig{ck.config.backbone().feature_dim, {}, 2, false};
        const ModelParams fexp = make_fusion_params(ck.fusion->config);
        bool ok = fexp.size() == ck.fusion->params.size();
        for (std::size_t i = 0; ok && i < fexp.size(); ++i)
            ok = fexp.entries()[i].name == ck.fusion->params.entries()[i].name &&
                 fexp.entries()[i].value.shape() == ck.fusion->params.entries()[i].value.shape();
        if (!ok) fail(ErrorKind::invalid_argument, "checkpoint: fusion head does not match the backbone feature width");
    }
    return ck;
}

} // namespace drgrade
