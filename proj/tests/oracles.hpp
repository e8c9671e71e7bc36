#pragma once

// Literal loop transcriptions used as independent references. None of
// these call into the library's tensor operations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <vector>

#include "morphwin/rng.hpp"
#include "morphwin/tensor.hpp"
#include "morphwin/volume.hpp"

namespace oracle {

using morphwin::Dims3;
using morphwin::LabelMap;
using morphwin::Rng;
using morphwin::Shape;
using Vec = std::vector<double>;
using TD = morphwin::Tensor<double>;

inline TD random(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Vec v(morphwin::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return TD(std::move(shape), std::move(v));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double leaky(double x, double slope) { return x >= 0 ? x : slope * x; }

// Central difference of a scalar function of one coordinate of `x`.
inline double central_difference(const std::function<double(const TD&)>& f, const TD& x, std::size_t i, double eps) {
    auto plus = x.values();
    auto minus = x.values();
    plus[i] += eps;
    minus[i] -= eps;
    return (f(TD(x.shape(), plus)) - f(TD(x.shape(), minus))) / (2 * eps);
}

inline double relative_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / scale;
}

// ---- convolution ----------------------------------------------------------

// x [D,H,W,Ci], k [kd,kh,kw,Ci,Co], zero padding.
inline Vec conv3d(const TD& x, const TD& k, std::size_t stride, std::size_t pad, Dims3& out_dims) {
    const long D = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
    const long kd = k.dim(0), kh = k.dim(1), kw = k.dim(2), Co = k.dim(4);
    const long s = stride, p = pad;
    const long od = (D + 2 * p - kd) / s + 1, oh = (H + 2 * p - kh) / s + 1, ow = (W + 2 * p - kw) / s + 1;
    out_dims = {static_cast<std::size_t>(od), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
    Vec out(od * oh * ow * Co, 0.0);
    for (long z = 0; z < od; ++z)
        for (long y = 0; y < oh; ++y)
            for (long xx = 0; xx < ow; ++xx)
                for (long o = 0; o < Co; ++o) {
                    double acc = 0;
                    for (long a = 0; a < kd; ++a)
                        for (long b = 0; b < kh; ++b)
                            for (long c = 0; c < kw; ++c) {
                                const long iz = z * s + a - p, iy = y * s + b - p, ix = xx * s + c - p;
                                if (iz < 0 || iy < 0 || ix < 0 || iz >= D || iy >= H || ix >= W) continue;
                                for (long i = 0; i < Ci; ++i) {
                                    acc += x[((iz * H + iy) * W + ix) * Ci + i] *
                                           k[(((a * kh + b) * kw + c) * Ci + i) * Co + o];
                                }
                            }
                    out[((z * oh + y) * ow + xx) * Co + o] = acc;
                }
    return out;
}

// ---- windows ----------------------------------------------------------------

// Spatial coordinate of element `e` of window `n`.
inline std::array<std::size_t, 3> window_coord(const Dims3& dims, const Dims3& win, std::size_t n, std::size_t e) {
    const std::size_t gh = dims[1] / win[1], gw = dims[2] / win[2];
    const std::size_t wz = n / (gh * gw), wy = (n / gw) % gh, wx = n % gw;
    const std::size_t ez = e / (win[1] * win[2]), ey = (e / win[2]) % win[1], ex = e % win[2];
    return {wz * win[0] + ez, wy * win[1] + ey, wx * win[2] + ex};
}

// Mask built from original (pre-shift) coordinates: two elements of a
// window may attend to each other iff they were within one window extent
// of each other on every axis before the forward roll.
inline Vec shifted_mask(const Dims3& dims, const Dims3& win, const Dims3& shift) {
    const std::size_t N = (dims[0] / win[0]) * (dims[1] / win[1]) * (dims[2] / win[2]);
    const std::size_t K = win[0] * win[1] * win[2];
    Vec mask(N * K * K, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j) {
                const auto a = window_coord(dims, win, n, i);
                const auto b = window_coord(dims, win, n, j);
                bool together = true;
                for (int ax = 0; ax < 3; ++ax) {
                    const long L = dims[ax];
                    const long oa = ((static_cast<long>(a[ax]) - static_cast<long>(shift[ax])) % L + L) % L;
                    const long ob = ((static_cast<long>(b[ax]) - static_cast<long>(shift[ax])) % L + L) % L;
                    if (std::abs(oa - ob) >= static_cast<long>(win[ax])) together = false;
                }
                mask[(n * K + i) * K + j] = together ? 0.0 : -1e9;
            }
    return mask;
}

// ---- gating -------------------------------------------------------------------

struct Mlp {
    TD w1, b1, w2, b2;  // [in,h], [h], [h,in], [in]
};

inline Mlp random_mlp(Rng& rng, std::size_t in) {
    const std::size_t h = std::max<std::size_t>(1, in / 4);
    return {random(rng, {in, h}), random(rng, {h}), random(rng, {h, in}), random(rng, {in})};
}

inline Vec gate(const Vec& v, const Mlp& m, double slope) {
    const std::size_t in = m.w1.dim(0), h = m.w1.dim(1);
    Vec hidden(h), out(in);
    for (std::size_t j = 0; j < h; ++j) {
        double a = m.b1[j];
        for (std::size_t i = 0; i < in; ++i) a += v[i] * m.w1[i * h + j];
        hidden[j] = leaky(a, slope);
    }
    for (std::size_t i = 0; i < in; ++i) {
        double a = m.b2[i];
        for (std::size_t j = 0; j < h; ++j) a += hidden[j] * m.w2[j * in + i];
        out[i] = sigmoid(a);
    }
    return out;
}

// W [N,K,C]; alpha[n,c] = gate(mean_k W[n,k,:])[c]; out = alpha * W.
inline Vec channel_phase(const Vec& w, std::size_t N, std::size_t K, std::size_t C, const Mlp& m, double slope = 0.2) {
    Vec out(w.size());
    for (std::size_t n = 0; n < N; ++n) {
        Vec mean(C, 0.0);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c) mean[c] += w[(n * K + k) * C + c];
        for (auto& v : mean) v /= static_cast<double>(K);
        const auto alpha = gate(mean, m, slope);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c) out[(n * K + k) * C + c] = alpha[c] * w[(n * K + k) * C + c];
    }
    return out;
}

// View (K x C x N); beta[k,n] = gate over n of mean_c; out = beta * target.
inline Vec window_phase(const Vec& w, const Vec& target, std::size_t N, std::size_t K, std::size_t C, const Mlp& m,
                        double slope = 0.2) {
    Vec out(w.size());
    for (std::size_t k = 0; k < K; ++k) {
        Vec mean(N, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) mean[n] += w[(n * K + k) * C + c];
        for (auto& v : mean) v /= static_cast<double>(C);
        const auto beta = gate(mean, m, slope);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) out[(n * K + k) * C + c] = beta[n] * target[(n * K + k) * C + c];
    }
    return out;
}

// ---- attention -----------------------------------------------------------------

inline std::size_t offset_row(const Dims3& win, std::size_t i, std::size_t j) {
    const long hw = win[1] * win[2];
    const long zi = i / hw, yi = (i / win[2]) % win[1], xi = i % win[2];
    const long zj = j / hw, yj = (j / win[2]) % win[1], xj = j % win[2];
    const long dz = zi - zj + static_cast<long>(win[0]) - 1;
    const long dy = yi - yj + static_cast<long>(win[1]) - 1;
    const long dx = xi - xj + static_cast<long>(win[2]) - 1;
    return static_cast<std::size_t>((dz * (2 * static_cast<long>(win[1]) - 1) + dy) * (2 * static_cast<long>(win[2]) - 1) + dx);
}

// Per window and head: softmax(q k^T / sqrt(hd) + B + mask) v, then proj.
// qkv columns are laid out (q|k|v), each split into heads of hd columns.
inline Vec window_msa(const Vec& x, std::size_t N, std::size_t K, std::size_t C, std::size_t H, const TD& wqkv,
                      const TD& bqkv, const TD& wp, const TD& bp, const TD& table, const Dims3& win,
                      const Vec* mask) {
    const std::size_t hd = C / H;
    Vec out(N * K * C, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        std::vector<Vec> qkv(K, Vec(3 * C));
        for (std::size_t t = 0; t < K; ++t)
            for (std::size_t o = 0; o < 3 * C; ++o) {
                double a = bqkv[o];
                for (std::size_t c = 0; c < C; ++c) a += x[(n * K + t) * C + c] * wqkv[c * 3 * C + o];
                qkv[t][o] = a;
            }
        std::vector<Vec> heads(K, Vec(C, 0.0));
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t i = 0; i < K; ++i) {
                Vec logits(K);
                for (std::size_t j = 0; j < K; ++j) {
                    double dot = 0;
                    for (std::size_t d = 0; d < hd; ++d) dot += qkv[i][h * hd + d] * qkv[j][C + h * hd + d];
                    logits[j] = dot / std::sqrt(static_cast<double>(hd)) + table[offset_row(win, i, j) * H + h] +
                                (mask ? (*mask)[(n * K + i) * K + j] : 0.0);
                }
                const double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0;
                for (auto& l : logits) z += (l = std::exp(l - mx));
                for (std::size_t j = 0; j < K; ++j)
                    for (std::size_t d = 0; d < hd; ++d) heads[i][h * hd + d] += logits[j] / z * qkv[j][2 * C + h * hd + d];
            }
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t o = 0; o < C; ++o) {
                double a = bp[o];
                for (std::size_t c = 0; c < C; ++c) a += heads[i][c] * wp[c * C + o];
                out[(n * K + i) * C + o] = a;
            }
    }
    return out;
}

// ---- patch merging / expanding ----------------------------------------------------

inline Vec patch_merging(const TD& x, const TD& w) {
    const std::size_t D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3), O = w.dim(1);
    Vec out((D / 2) * (H / 2) * (W / 2) * O, 0.0);
    for (std::size_t z = 0; z < D / 2; ++z)
        for (std::size_t y = 0; y < H / 2; ++y)
            for (std::size_t xx = 0; xx < W / 2; ++xx) {
                Vec gathered;
                for (std::size_t dz = 0; dz < 2; ++dz)
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx)
                            for (std::size_t c = 0; c < C; ++c)
                                gathered.push_back(x[(((2 * z + dz) * H + 2 * y + dy) * W + 2 * xx + dx) * C + c]);
                for (std::size_t o = 0; o < O; ++o) {
                    double a = 0;
                    for (std::size_t i = 0; i < gathered.size(); ++i) a += gathered[i] * w[i * O + o];
                    out[((z * (H / 2) + y) * (W / 2) + xx) * O + o] = a;
                }
            }
    return out;
}

inline Vec patch_expanding(const TD& x, const TD& w) {
    const std::size_t D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3), half = C / 2;
    Vec out(8 * D * H * W * half, 0.0);
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t xx = 0; xx < W; ++xx) {
                Vec v(4 * C, 0.0);
                for (std::size_t o = 0; o < 4 * C; ++o)
                    for (std::size_t c = 0; c < C; ++c) v[o] += x[((z * H + y) * W + xx) * C + c] * w[c * 4 * C + o];
                for (std::size_t dz = 0; dz < 2; ++dz)
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx)
                            for (std::size_t c = 0; c < half; ++c) {
                                const std::size_t oz = 2 * z + dz, oy = 2 * y + dy, ox = 2 * xx + dx;
                                out[((oz * 2 * H + oy) * 2 * W + ox) * half + c] = v[((dz * 2 + dy) * 2 + dx) * half + c];
                            }
            }
    return out;
}

// ---- warping --------------------------------------------------------------------

// img [D,H,W,Ch], phi [D,H,W,3].
inline Vec warp_trilinear(const TD& img, const TD& phi, bool zero_border) {
    const long D = img.dim(0), H = img.dim(1), W = img.dim(2), Ch = img.dim(3);
    const long n[3] = {D, H, W};
    Vec out(img.numel(), 0.0);
    for (long z = 0; z < D; ++z)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                const long v = (z * H + y) * W + x;
                double p[3] = {z + phi[v * 3], y + phi[v * 3 + 1], x + phi[v * 3 + 2]};
                long i0[3];
                double t[3];
                for (int a = 0; a < 3; ++a) {
                    if (!zero_border) p[a] = std::clamp(p[a], 0.0, static_cast<double>(n[a] - 1));
                    i0[a] = static_cast<long>(std::floor(p[a]));
                    t[a] = p[a] - i0[a];
                }
                for (long ch = 0; ch < Ch; ++ch) {
                    double acc = 0;
                    for (int c = 0; c < 8; ++c) {
                        long idx[3];
                        double wgt = 1;
                        bool inside = true;
                        for (int a = 0; a < 3; ++a) {
                            const int bit = (c >> (2 - a)) & 1;
                            idx[a] = i0[a] + bit;
                            wgt *= bit ? t[a] : 1 - t[a];
                            if (idx[a] < 0 || idx[a] >= n[a]) {
                                if (zero_border) inside = false;
                                idx[a] = std::clamp(idx[a], 0L, n[a] - 1);
                            }
                        }
                        if (!inside || wgt == 0) continue;
                        acc += wgt * img[((idx[0] * H + idx[1]) * W + idx[2]) * Ch + ch];
                    }
                    out[v * Ch + ch] = acc;
                }
            }
    return out;
}

inline LabelMap warp_nearest(const LabelMap& labels, const TD& phi) {
    const auto d = labels.dims;
    LabelMap out = LabelMap::zeros(d);
    for (std::size_t z = 0; z < d[0]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[2]; ++x) {
                const std::size_t v = labels.index(z, y, x);
                const double p[3] = {z + phi[v * 3], y + phi[v * 3 + 1], x + phi[v * 3 + 2]};
                long q[3];
                for (int a = 0; a < 3; ++a) {
                    q[a] = std::clamp(static_cast<long>(std::floor(p[a] + 0.5)), 0L, static_cast<long>(d[a]) - 1);
                }
                out.values[v] = labels.at(q[0], q[1], q[2]);
            }
    return out;
}

// ---- metrics ---------------------------------------------------------------------

inline std::set<std::size_t> voxels(const LabelMap& m, morphwin::Label l) {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.values[i] == l) s.insert(i);
    }
    return s;
}

inline double dice(const LabelMap& a, const LabelMap& b, morphwin::Label l) {
    const auto A = voxels(a, l), B = voxels(b, l);
    if (A.empty() && B.empty()) return 1.0;
    std::vector<std::size_t> both;
    std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(both));
    return 2.0 * static_cast<double>(both.size()) / static_cast<double>(A.size() + B.size());
}

inline std::vector<std::array<long, 3>> surface(const LabelMap& m, morphwin::Label l) {
    std::vector<std::array<long, 3>> out;
    const long D = m.dims[0], H = m.dims[1], W = m.dims[2];
    auto inside = [&](long z, long y, long x) {
        return z >= 0 && y >= 0 && x >= 0 && z < D && y < H && x < W && m.at(z, y, x) == l;
    };
    for (long z = 0; z < D; ++z)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                if (!inside(z, y, x)) continue;
                if (!inside(z - 1, y, x) || !inside(z + 1, y, x) || !inside(z, y - 1, x) || !inside(z, y + 1, x) ||
                    !inside(z, y, x - 1) || !inside(z, y, x + 1)) {
                    out.push_back({z, y, x});
                }
            }
    return out;
}

inline double hd95(const LabelMap& a, const LabelMap& b, morphwin::Label l, const std::array<double, 3>& s) {
    const auto sa = surface(a, l), sb = surface(b, l);
    std::vector<double> d;
    auto directed = [&](const auto& from, const auto& to) {
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                double acc = 0;
                for (int k = 0; k < 3; ++k) acc += std::pow((p[k] - q[k]) * s[k], 2);
                best = std::min(best, std::sqrt(acc));
            }
            d.push_back(best);
        }
    };
    directed(sa, sb);
    directed(sb, sa);
    std::sort(d.begin(), d.end());
    const double rank = 0.95 * static_cast<double>(d.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (rank - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

}  // namespace oracle
