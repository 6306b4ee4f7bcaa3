#include "navlab/core/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace navlab::io {

namespace {

constexpr char kMagic[8] = {'N', 'V', 'L', 'B', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open for write: " + tmp.string());
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, nd::Tensor>>& tensors) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kCheckpointVersion);
    write_pod(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) write_pod(os, static_cast<int32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(double) * t.numel()));
    }
    atomic_write_file(path, os.str());
}

std::vector<std::pair<std::string, nd::Tensor>> load_raw_tensors(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    const auto version = read_pod<uint32_t>(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: version " + std::to_string(version) + " unsupported (expect " +
                                 std::to_string(kCheckpointVersion) + ")");
    const auto count = read_pod<uint32_t>(is);
    std::vector<std::pair<std::string, nd::Tensor>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto ndim = read_pod<uint32_t>(is);
        nd::Shape shape(ndim);
        for (auto& d : shape) d = read_pod<int32_t>(is);
        const int64_t n = nd::shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(sizeof(double) * n));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor data in " + path.string());
        out.emplace_back(std::move(name), nd::Tensor::from_vector(std::move(shape), std::move(data)));
    }
    return out;
}

void load_tensors_into(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, nd::Tensor>>& dest) {
    auto loaded = load_raw_tensors(path);
    std::map<std::string, nd::Tensor> by_name;
    for (auto& [name, t] : loaded) by_name.emplace(name, t);
    if (by_name.size() != dest.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (" + std::to_string(by_name.size()) +
                                 " stored vs " + std::to_string(dest.size()) + " expected)");
    // validate everything first so a failure leaves no partial state
    for (const auto& [name, t] : dest) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
        if (!nd::same_shape(it->second.shape(), t.shape()))
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    for (const auto& [name, t] : dest) {
        const auto& src = by_name.at(name);
        std::copy(src.values().begin(), src.values().end(), const_cast<nd::Tensor&>(t).values().begin());
    }
}

}  // namespace navlab::io
