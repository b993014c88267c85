#pragma once

#include <map>
#include <string>
#include <vector>

#include "sarfah/tensor.hpp"

namespace sarfah {

// Named parameter tree. Leaves are created by the layers at construction
// time; trainable leaves carry gradients, frozen leaves (BN running stats)
// are plain state.
class ParamTree {
public:
    Tensor create(const std::string& path, Shape shape, bool trainable = true);
    Tensor create_full(const std::string& path, Shape shape, double value, bool trainable = true);
    Tensor create_randn(const std::string& path, Shape shape, Rng& rng, double stddev,
                        bool trainable = true);

    bool has(const std::string& path) const;
    Tensor get(const std::string& path) const;
    bool trainable(const std::string& path) const;

    int64_t trainable_count() const;
    int64_t trainable_count_prefix(const std::string& prefix) const;
    std::vector<std::string> paths() const;

    template <typename F>
    void for_each(F&& fn) const {
        for (const auto& [path, e] : entries_) fn(path, e.tensor, e.trainable);
    }
    template <typename F>
    void for_each_trainable(F&& fn) {
        for (auto& [path, e] : entries_)
            if (e.trainable) fn(path, e.tensor);
    }

    void zero_grads();

    // Flat binary container: magic "SFAH1", a config text blob, then one
    // record per leaf (name length, name bytes, rank, shape, raw
    // little-endian 64-bit floats). Round trips bit-exactly.
    void save(const std::string& file, const std::string& config) const;
    // Loads values into the existing tree; every leaf must be present with a
    // matching shape.
    void load(const std::string& file);
    static std::string read_config(const std::string& file);

private:
    struct Entry {
        Tensor tensor;
        bool trainable;
    };
    Tensor insert(const std::string& path, Tensor t, bool trainable);
    std::map<std::string, Entry> entries_;
};

}  // namespace sarfah
