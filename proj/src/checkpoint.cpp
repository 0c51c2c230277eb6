#include "defog/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace defog {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'C', 'K'};

template <class T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw Error("checkpoint: truncated file");
    return v;
}

} // namespace

const ad::TensorT<float>& Archive::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name)
            return t;
    throw Error("checkpoint: tensor not found: " + name);
}

bool Archive::contains(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name)
            return true;
    return false;
}

void save_archive(const Archive& a, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UserError("cannot write " + path);
    out.write(kMagic, 4);
    write_pod<uint32_t>(out, Archive::kFormatVersion);

    std::string header = a.meta.dump();
    write_pod<uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    write_pod<uint64_t>(out, a.tensors.size());
    for (const auto& [name, t] : a.tensors) {
        write_pod<uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape)
            write_pod<int32_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out)
        throw UserError("write failed: " + path);
}

Archive load_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UserError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw UserError("corrupt checkpoint (bad magic): " + path);
    uint32_t version = read_pod<uint32_t>(in);
    if (version != Archive::kFormatVersion)
        throw UserError("unsupported checkpoint version " + std::to_string(version));

    Archive a;
    uint64_t header_len = read_pod<uint64_t>(in);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in)
        throw UserError("corrupt checkpoint (truncated header): " + path);
    try {
        a.meta = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw UserError("corrupt checkpoint (header): " + std::string(e.what()));
    }

    uint64_t count = read_pod<uint64_t>(in);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t name_len = read_pod<uint64_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        uint32_t ndim = read_pod<uint32_t>(in);
        std::vector<int> shape;
        for (uint32_t d = 0; d < ndim; ++d)
            shape.push_back(read_pod<int32_t>(in));
        ad::TensorT<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!in)
            throw UserError("corrupt checkpoint (truncated tensor " + name + ")");
        a.tensors.emplace_back(std::move(name), std::move(t));
    }
    return a;
}

} // namespace defog
