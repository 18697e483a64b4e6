#include "ctfg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ctfg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'T', 'F', 'G'};

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail("checkpoint read: truncated file");
    return v;
}

}  // namespace

void save_arrays(const std::string& path, const std::map<std::string, Array>& arrays) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    for (const auto& [name, arr] : arrays) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(arr.rank()));
        for (std::size_t e : arr.shape()) put<std::uint64_t>(os, e);
        os.write(reinterpret_cast<const char*>(arr.data()),
                 static_cast<std::streamsize>(arr.numel() * sizeof(double)));
    }
    if (!os) fail("write to '" + path + "' failed");
}

std::map<std::string, Array> load_arrays(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        fail("'" + path + "' is not a checkpoint file");
    auto version = take<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        fail("unsupported checkpoint version " + std::to_string(version));
    std::map<std::string, Array> out;
    while (true) {
        std::uint32_t name_len{};
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is) fail("checkpoint read: truncated file");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) fail("checkpoint read: truncated name");
        auto rank = take<std::uint32_t>(is);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i)
            shape[i] = static_cast<std::size_t>(take<std::uint64_t>(is));
        std::vector<double> data(shape_numel(shape));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) fail("checkpoint read: truncated payload for '" + name + "'");
        if (out.count(name)) fail("checkpoint has duplicate tensor '" + name + "'");
        out.emplace(name, Array(std::move(shape), std::move(data)));
    }
    return out;
}

void save_params(const std::string& path, const ParamStore& params) {
    save_arrays(path, params.all());
}

void load_params(const std::string& path, ParamStore& params) {
    params.all() = load_arrays(path);
}

}  // namespace ctfg
