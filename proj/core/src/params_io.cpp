#include "emofuse/params_io.hpp"

#include <cstring>
#include <fstream>

namespace emofuse {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'F', 'P', 'A', 'R', 'A', 'M'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(value));
    if (!in) throw Error("parameter file truncated");
    return value;
}

}  // namespace

void save_params(const ParamMap& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write parameter file: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<int32_t>(tensor.rows));
        write_pod(out, static_cast<int32_t>(tensor.cols));
        out.write(reinterpret_cast<const char*>(tensor.v.data()),
                  static_cast<std::streamsize>(tensor.v.size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing parameter file: " + path.string());
}

ParamMap load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open parameter file: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error("not a parameter file: " + path.string());
    const auto version = read_pod<uint32_t>(in);
    if (version != kVersion)
        throw Error("unsupported parameter file version in " + path.string());
    const auto count = read_pod<uint32_t>(in);
    ParamMap params;
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = read_pod<int32_t>(in);
        const auto cols = read_pod<int32_t>(in);
        if (!in || rows < 0 || cols < 0) throw Error("corrupt parameter file: " + path.string());
        Tensor t(rows, cols);
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!in) throw Error("parameter file truncated: " + path.string());
        params.emplace(std::move(name), std::move(t));
    }
    return params;
}

uint64_t params_digest(const ParamMap& params) {
    uint64_t h = kFnvOffsetBasis;
    for (const auto& [name, tensor] : params) {
        h = fnv1a64(name, h);
        h = tensor.digest(h);
    }
    return h;
}

}  // namespace emofuse
