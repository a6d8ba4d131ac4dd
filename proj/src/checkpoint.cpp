#include "rrelu/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rrelu/error.hpp"

namespace rrelu {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4, "float must be 32-bit");

// The blob format is little-endian; bail out early on exotic hosts.
bool host_is_little_endian() {
    const std::uint32_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

json tensor_entry(const std::string& name, const Tensorf& t, const char* group,
                  std::size_t offset) {
    return json{{"name", name},
                {"shape", t.shape},
                {"dtype", "f32"},
                {"group", group},
                {"offset", offset},
                {"nbytes", t.size() * sizeof(float)}};
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& dir) {
    if (!host_is_little_endian())
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: big-endian host unsupported");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw CheckpointError(CheckpointError::Kind::Io,
                              "checkpoint: cannot create directory " + dir + ": " + ec.message());

    json tensors = json::array();
    std::size_t offset = 0;
    std::ofstream blob(fs::path(dir) / "weights.bin", std::ios::binary | std::ios::trunc);
    if (!blob)
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open weights.bin");
    auto dump = [&](const std::string& name, const Tensorf& t, const char* group) {
        tensors.push_back(tensor_entry(name, t, group, offset));
        blob.write(reinterpret_cast<const char*>(t.ptr()),
                   static_cast<std::streamsize>(t.size() * sizeof(float)));
        offset += t.size() * sizeof(float);
    };
    for (const auto& [name, t] : net.params) dump(name, t, "param");
    for (const auto& [name, t] : net.buffers) dump(name, t, "buffer");
    blob.close();
    if (!blob)
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: write to weights.bin failed");

    json manifest{{"format_version", kCheckpointFormatVersion},
                  {"model", json::parse(spec_to_json(net.spec))},
                  {"bn_eps", net.bn_eps},
                  {"bn_momentum", net.bn_momentum},
                  {"tensors", std::move(tensors)}};
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf)
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open manifest.json");
    mf << manifest.dump(2) << "\n";
    mf.close();
    if (!mf)
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: write to manifest.json failed");
}

Network load_checkpoint(const std::string& dir) {
    if (!host_is_little_endian())
        throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: big-endian host unsupported");
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf)
        throw CheckpointError(CheckpointError::Kind::Io,
                              "checkpoint: cannot open " + dir + "/manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw CheckpointError(CheckpointError::Kind::CorruptManifest,
                              std::string("checkpoint: manifest is not valid JSON: ") + e.what());
    }

    Network net;
    int version = 0;
    json tensors;
    try {
        version = manifest.at("format_version").get<int>();
        net.spec = spec_from_json(manifest.at("model").dump());
        net.bn_eps = manifest.at("bn_eps").get<float>();
        net.bn_momentum = manifest.at("bn_momentum").get<float>();
        tensors = manifest.at("tensors");
        if (!tensors.is_array()) throw ParseError("tensors is not an array");
    } catch (const json::exception& e) {
        throw CheckpointError(CheckpointError::Kind::CorruptManifest,
                              std::string("checkpoint: manifest missing field: ") + e.what());
    } catch (const ParseError& e) {
        throw CheckpointError(CheckpointError::Kind::CorruptManifest,
                              std::string("checkpoint: ") + e.what());
    }
    if (version != kCheckpointFormatVersion)
        throw CheckpointError(CheckpointError::Kind::Incompatible,
                              "checkpoint: format version " + std::to_string(version) +
                                  " (expected " + std::to_string(kCheckpointFormatVersion) + ")");

    // Allocate per the spec, then fill from the registry; any mismatch between
    // the two is an incompatibility.
    Network expected = Network::build(net.spec);
    net.params = std::move(expected.params);
    net.buffers = std::move(expected.buffers);

    std::ifstream blob(fs::path(dir) / "weights.bin", std::ios::binary | std::ios::ate);
    if (!blob)
        throw CheckpointError(CheckpointError::Kind::Io,
                              "checkpoint: cannot open " + dir + "/weights.bin");
    const std::size_t blob_size = static_cast<std::size_t>(blob.tellg());

    std::size_t filled = 0;
    for (const auto& e : tensors) {
        std::string name, group, dtype;
        std::vector<std::size_t> shape;
        std::size_t offset = 0, nbytes = 0;
        try {
            name = e.at("name").get<std::string>();
            group = e.at("group").get<std::string>();
            dtype = e.at("dtype").get<std::string>();
            shape = e.at("shape").get<std::vector<std::size_t>>();
            offset = e.at("offset").get<std::size_t>();
            nbytes = e.at("nbytes").get<std::size_t>();
        } catch (const json::exception& ex) {
            throw CheckpointError(CheckpointError::Kind::CorruptManifest,
                                  std::string("checkpoint: bad tensor entry: ") + ex.what());
        }
        if (dtype != "f32")
            throw CheckpointError(CheckpointError::Kind::Incompatible,
                                  "checkpoint: tensor " + name + " has dtype " + dtype);
        auto& table = group == "buffer" ? net.buffers : net.params;
        auto it = table.find(name);
        if (it == table.end())
            throw CheckpointError(CheckpointError::Kind::Incompatible,
                                  "checkpoint: tensor " + name + " not expected by the model spec");
        if (it->second.shape != shape || nbytes != it->second.size() * sizeof(float))
            throw CheckpointError(CheckpointError::Kind::Incompatible,
                                  "checkpoint: tensor " + name + " shape mismatch, manifest " +
                                      shape_str(shape) + " vs model " +
                                      shape_str(it->second.shape));
        if (offset + nbytes > blob_size)
            throw CheckpointError(CheckpointError::Kind::TruncatedBlob,
                                  "checkpoint: weights.bin is " + std::to_string(blob_size) +
                                      " bytes, tensor " + name + " needs bytes [" +
                                      std::to_string(offset) + ", " +
                                      std::to_string(offset + nbytes) + ")");
        blob.seekg(static_cast<std::streamoff>(offset));
        blob.read(reinterpret_cast<char*>(it->second.ptr()),
                  static_cast<std::streamsize>(nbytes));
        if (!blob)
            throw CheckpointError(CheckpointError::Kind::TruncatedBlob,
                                  "checkpoint: short read for tensor " + name);
        ++filled;
    }
    if (filled != net.params.size() + net.buffers.size())
        throw CheckpointError(CheckpointError::Kind::Incompatible,
                              "checkpoint: manifest lists " + std::to_string(filled) +
                                  " tensors, model expects " +
                                  std::to_string(net.params.size() + net.buffers.size()));
    return net;
}

}  // namespace rrelu
