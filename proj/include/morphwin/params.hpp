#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "morphwin/tensor.hpp"

namespace morphwin {

/// Named learnable arrays, kept in insertion order. Names are hierarchical
/// ("encoder.stage1.block0.attn.qkv.weight") and unique.
template <class T>
class ParamSet {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    void add(std::string name, Tensor<T> value);
    void set(const std::string& name, Tensor<T> value);

    const Tensor<T>& get(const std::string& name) const;
    const Tensor<T>& operator()(const std::string& name) const { return get(name); }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    /// Same names, every tensor watched on `tape`.
    ParamSet attach(Tape<T>& tape) const;

    /// Gradients of every entry, in the same order; zeros for unreached ones.
    ParamSet gradients(const GradientMap<T>& grads) const;

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Checkpoint container "MWCK1": magic, then per parameter a u64 name
// length, the UTF-8 name, u64 rank, u64 dims, and little-endian float32
// values. All integers little-endian.
void write_checkpoint(std::ostream& os, const ParamSet<float>& params);
ParamSet<float> read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::string& path);

/// Throws ValidationError naming the first parameter whose name or shape
/// differs between `expected` (the architecture) and `loaded`.
void check_compatible(const ParamSet<float>& expected, const ParamSet<float>& loaded);

}  // namespace morphwin
