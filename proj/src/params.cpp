#include "sarfah/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sarfah {

namespace {
constexpr char kMagic[5] = {'S', 'F', 'A', 'H', '1'};

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint32_t read_u32(std::istream& is) {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int64_t read_i64(std::istream& is) {
    int64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
}  // namespace

Tensor ParamTree::insert(const std::string& path, Tensor t, bool trainable) {
    if (entries_.count(path)) throw std::invalid_argument("ParamTree: duplicate leaf " + path);
    t.set_requires_grad(trainable);
    entries_.emplace(path, Entry{t, trainable});
    return t;
}

Tensor ParamTree::create(const std::string& path, Shape shape, bool trainable) {
    return insert(path, Tensor::zeros(std::move(shape)), trainable);
}

Tensor ParamTree::create_full(const std::string& path, Shape shape, double value, bool trainable) {
    return insert(path, Tensor::full(std::move(shape), value), trainable);
}

Tensor ParamTree::create_randn(const std::string& path, Shape shape, Rng& rng, double stddev,
                               bool trainable) {
    return insert(path, Tensor::randn(std::move(shape), rng, stddev), trainable);
}

bool ParamTree::has(const std::string& path) const { return entries_.count(path) != 0; }

Tensor ParamTree::get(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw std::invalid_argument("ParamTree: no leaf " + path);
    return it->second.tensor;
}

bool ParamTree::trainable(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw std::invalid_argument("ParamTree: no leaf " + path);
    return it->second.trainable;
}

int64_t ParamTree::trainable_count() const {
    int64_t n = 0;
    for (const auto& [_, e] : entries_)
        if (e.trainable) n += e.tensor.numel();
    return n;
}

int64_t ParamTree::trainable_count_prefix(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& [path, e] : entries_)
        if (e.trainable && path.rfind(prefix, 0) == 0) n += e.tensor.numel();
    return n;
}

std::vector<std::string> ParamTree::paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, _] : entries_) out.push_back(path);
    return out;
}

void ParamTree::zero_grads() {
    for (auto& [_, e] : entries_) e.tensor.zero_grad();
}

void ParamTree::save(const std::string& file, const std::string& config) const {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + file + " for writing");
    os.write(kMagic, 5);
    write_u32(os, static_cast<uint32_t>(config.size()));
    os.write(config.data(), static_cast<std::streamsize>(config.size()));
    write_u32(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& [path, e] : entries_) {
        write_u32(os, static_cast<uint32_t>(path.size()));
        os.write(path.data(), static_cast<std::streamsize>(path.size()));
        const Shape& s = e.tensor.shape();
        write_u32(os, static_cast<uint32_t>(s.size()));
        for (int64_t d : s) write_i64(os, d);
        auto data = e.tensor.data();
        os.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + file);
}

namespace {
std::ifstream open_checkpoint(const std::string& file, uint32_t& config_len) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + file);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + file);
    config_len = read_u32(is);
    return is;
}
}  // namespace

std::string ParamTree::read_config(const std::string& file) {
    uint32_t config_len = 0;
    auto is = open_checkpoint(file, config_len);
    std::string config(config_len, '\0');
    is.read(config.data(), config_len);
    if (!is) throw std::runtime_error("checkpoint: truncated config in " + file);
    return config;
}

void ParamTree::load(const std::string& file) {
    uint32_t config_len = 0;
    auto is = open_checkpoint(file, config_len);
    is.seekg(config_len, std::ios::cur);
    const uint32_t count = read_u32(is);
    size_t loaded = 0;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t rank = read_u32(is);
        Shape shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = read_i64(is);
        const int64_t n = shape_numel(shape);
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw std::runtime_error("checkpoint: unknown leaf " + name);
        if (it->second.tensor.shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file " +
                                     shape_str(shape) + " vs tree " +
                                     shape_str(it->second.tensor.shape()));
        is.read(reinterpret_cast<char*>(it->second.tensor.data().data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated data in " + file);
        ++loaded;
    }
    if (loaded != entries_.size())
        throw std::runtime_error("checkpoint: file has " + std::to_string(loaded) +
                                 " leaves, tree expects " + std::to_string(entries_.size()));
}

}  // namespace sarfah
