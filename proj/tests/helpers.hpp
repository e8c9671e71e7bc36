#pragma once

#include <filesystem>
#include <string>

#include "morphwin/swin.hpp"
#include "morphwin/wwa.hpp"
#include "oracles.hpp"

namespace testutil {

using TD = morphwin::Tensor<double>;

inline morphwin::GateMlp<double> to_gate(const oracle::Mlp& m) { return {m.w1, m.b1, m.w2, m.b2}; }

inline morphwin::GateMlp<double> zero_gate(std::size_t in) {
    const std::size_t h = morphwin::gate_hidden_size(in);
    return {TD::zeros({in, h}), TD::zeros({h}), TD::zeros({h, in}), TD::zeros({in})};
}

inline morphwin::AttentionParams<double> random_attention(morphwin::Rng& rng, std::size_t c, std::size_t heads,
                                                          const morphwin::Dims3& window) {
    morphwin::AttentionParams<double> p;
    p.qkv_weight = oracle::random(rng, {c, 3 * c});
    p.qkv_bias = oracle::random(rng, {3 * c});
    p.proj_weight = oracle::random(rng, {c, c});
    p.proj_bias = oracle::random(rng, {c});
    p.bias_table = oracle::random(rng, {morphwin::relative_table_rows(window), heads});
    p.relative_index = morphwin::relative_position_index(window);
    p.heads = heads;
    return p;
}

inline morphwin::SwinBlockParams<double> random_block(morphwin::Rng& rng, std::size_t c, std::size_t heads,
                                                      const morphwin::Dims3& window, std::size_t windows, bool wwa) {
    morphwin::SwinBlockParams<double> b;
    b.norm1_gamma = oracle::random(rng, {c}, 0.5, 1.5);
    b.norm1_beta = oracle::random(rng, {c});
    b.attn = random_attention(rng, c, heads, window);
    b.norm2_gamma = oracle::random(rng, {c}, 0.5, 1.5);
    b.norm2_beta = oracle::random(rng, {c});
    b.mlp_fc1_weight = oracle::random(rng, {c, 4 * c});
    b.mlp_fc1_bias = oracle::random(rng, {4 * c});
    b.mlp_fc2_weight = oracle::random(rng, {4 * c, c});
    b.mlp_fc2_bias = oracle::random(rng, {c});
    if (wwa) b.wwa = morphwin::WwaParams<double>{to_gate(oracle::random_mlp(rng, c)), to_gate(oracle::random_mlp(rng, windows))};
    return b;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("morphwin_test_" + tag);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
