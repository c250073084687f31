#include "milasc/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "milasc/errors.hpp"
#include "milasc/runconfig.hpp"

static_assert(std::endian::native == std::endian::little,
              "container blobs are little-endian; big-endian hosts need byte swapping");

namespace milasc {

void ArrayContainer::add(const std::string& name, Tensor tensor) {
    if (name.empty() || name.find_first_of(" \t\n\r") != std::string::npos) {
        throw ValidationError("container: array name '" + name + "' must be non-empty without whitespace");
    }
    for (const auto& e : entries_) {
        if (e.first == name) throw ValidationError("container: duplicate array name '" + name + "'");
    }
    entries_.emplace_back(name, std::move(tensor));
}

const Tensor* ArrayContainer::find(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.first == name) return &e.second;
    }
    return nullptr;
}

void ArrayContainer::save(const std::string& path) const {
    std::ostringstream head;
    head << kContainerMagic << "\n";
    head << "meta " << meta.size() << "\n";
    head << meta;
    head << "arrays " << entries_.size() << "\n";
    std::size_t offset = 0;
    for (const auto& [name, tensor] : entries_) {
        head << name << " " << tensor.rank();
        for (int d : tensor.shape()) head << " " << d;
        head << " " << offset << "\n";
        offset += static_cast<std::size_t>(tensor.size()) * sizeof(double);
    }
    head << "blob " << offset << "\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("container: cannot write " + path);
    const std::string header = head.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, tensor] : entries_) {
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(static_cast<std::size_t>(tensor.size()) * sizeof(double)));
    }
    if (!out) throw ValidationError("container: short write to " + path);
}

ArrayContainer ArrayContainer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("container: cannot open " + path);

    auto fail = [&path](const std::string& why) -> void {
        throw ValidationError("container: " + path + ": " + why);
    };
    std::string line;
    if (!std::getline(in, line) || line != kContainerMagic) fail("bad magic (expected MILASC01)");

    if (!std::getline(in, line)) fail("truncated meta header");
    std::size_t meta_len = 0;
    {
        std::istringstream is(line);
        std::string tag;
        if (!(is >> tag >> meta_len) || tag != "meta") fail("bad meta header");
    }
    ArrayContainer c;
    c.meta.resize(meta_len);
    if (meta_len > 0 && !in.read(c.meta.data(), static_cast<std::streamsize>(meta_len))) {
        fail("truncated meta section");
    }

    if (!std::getline(in, line)) fail("truncated manifest header");
    std::size_t count = 0;
    {
        std::istringstream is(line);
        std::string tag;
        if (!(is >> tag >> count) || tag != "arrays") fail("bad manifest header");
    }

    struct Row {
        std::string name;
        std::vector<int> shape;
        std::size_t offset;
        std::size_t elems;
    };
    std::vector<Row> rows;
    rows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) fail("truncated manifest");
        std::istringstream is(line);
        Row row;
        int rank = 0;
        if (!(is >> row.name >> rank) || rank < 0) fail("bad manifest row '" + line + "'");
        row.shape.resize(static_cast<std::size_t>(rank));
        row.elems = 1;
        for (int d = 0; d < rank; ++d) {
            if (!(is >> row.shape[static_cast<std::size_t>(d)])) fail("bad manifest row '" + line + "'");
            row.elems *= static_cast<std::size_t>(row.shape[static_cast<std::size_t>(d)]);
        }
        if (!(is >> row.offset)) fail("bad manifest row '" + line + "'");
        rows.push_back(std::move(row));
    }

    if (!std::getline(in, line)) fail("truncated blob header");
    std::size_t blob_len = 0;
    {
        std::istringstream is(line);
        std::string tag;
        if (!(is >> tag >> blob_len) || tag != "blob") fail("bad blob header");
    }
    std::vector<char> blob(blob_len);
    if (blob_len > 0 && !in.read(blob.data(), static_cast<std::streamsize>(blob_len))) {
        fail("truncated blob");
    }

    for (auto& row : rows) {
        const std::size_t bytes = row.elems * sizeof(double);
        if (row.offset + bytes > blob_len) fail("array '" + row.name + "' overruns the blob");
        std::vector<double> values(row.elems);
        std::memcpy(values.data(), blob.data() + row.offset, bytes);
        c.entries_.emplace_back(row.name, Tensor::from(row.shape, std::move(values)));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, MilModel& model, const std::string& resolved_config) {
    ArrayContainer c;
    c.meta = resolved_config;
    for (auto& [name, tensor] : model.state_dict()) c.add(name, std::move(tensor));
    c.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    ArrayContainer c = ArrayContainer::load(path);
    LoadedCheckpoint ckpt;
    ckpt.resolved_config = c.meta;
    ckpt.config = model_config_from_text(c.meta);
    ckpt.state.assign(c.entries().begin(), c.entries().end());
    return ckpt;
}

MilModel restore_model(const LoadedCheckpoint& checkpoint) {
    MilModel model(checkpoint.config);
    model.load_state_dict(checkpoint.state);
    return model;
}

} // namespace milasc
