#include "morphwin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "morphwin/ops.hpp"

namespace morphwin {

template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return ops::mean(ops::square(ops::sub(a, b)));
}

template <class T>
Tensor<T> diffusion_regularizer(const Tensor<T>& phi) {
    if (phi.rank() != 4 || phi.dim(3) != 3) throw ShapeError("diffusion_regularizer expects [D,H,W,3], got " + shape_str(phi.shape()));
    Tensor<T> energy = Tensor<T>::scalar(0);
    for (std::size_t a = 0; a < 3; ++a) {
        const auto n = phi.dim(a);
        if (n < 2) continue;
        auto diff = ops::sub(ops::slice(phi, a, 1, n - 1), ops::slice(phi, a, 0, n - 1));
        energy = ops::add(energy, ops::sum(ops::square(diff)));
    }
    return ops::mul(energy, static_cast<T>(1.0 / static_cast<double>(phi.numel())));
}

template <class T>
LossBreakdown<T> total_loss(const Tensor<T>& moving, const Tensor<T>& fixed, const Tensor<T>& phi, double lambda,
                            Border border) {
    if (lambda < 0) throw ValidationError("lambda must be non-negative");
    LossBreakdown<T> out;
    out.lambda = lambda;
    out.similarity = mse(warp_trilinear(moving, phi, border), fixed);
    out.regularity = diffusion_regularizer(phi);
    out.total = ops::add(out.similarity, ops::mul(out.regularity, static_cast<T>(lambda)));
    return out;
}

namespace {

void check_same(const LabelMap& a, const LabelMap& b, const char* what) {
    if (a.dims != b.dims) throw ShapeError(std::string(what) + ": label maps differ in dims");
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

double dice(const LabelMap& a, const LabelMap& b, Label label) {
    check_same(a, b, "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool in_a = a.values[i] == label;
        const bool in_b = b.values[i] == label;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> surface_voxels(const LabelMap& m, Label label) {
    const auto& d = m.dims;
    std::vector<std::size_t> out;
    for (std::size_t z = 0; z < d[0]; ++z) {
        for (std::size_t y = 0; y < d[1]; ++y) {
            for (std::size_t x = 0; x < d[2]; ++x) {
                if (m.at(z, y, x) != label) continue;
                const bool edge = z == 0 || y == 0 || x == 0 || z + 1 == d[0] || y + 1 == d[1] || x + 1 == d[2];
                if (edge || m.at(z - 1, y, x) != label || m.at(z + 1, y, x) != label || m.at(z, y - 1, x) != label ||
                    m.at(z, y + 1, x) != label || m.at(z, y, x - 1) != label || m.at(z, y, x + 1) != label) {
                    out.push_back(m.index(z, y, x));
                }
            }
        }
    }
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

std::optional<double> hd95(const LabelMap& a, const LabelMap& b, Label label, const Spacing& spacing) {
    check_same(a, b, "hd95");
    const auto sa = surface_voxels(a, label);
    const auto sb = surface_voxels(b, label);
    if (sa.empty() || sb.empty()) return std::nullopt;
    const auto& d = a.dims;
    auto coords = [&](std::size_t i) {
        return std::array<double, 3>{static_cast<double>(i / (d[1] * d[2])) * spacing[0],
                                     static_cast<double>((i / d[2]) % d[1]) * spacing[1],
                                     static_cast<double>(i % d[2]) * spacing[2]};
    };
    auto directed = [&](const std::vector<std::size_t>& from, const std::vector<std::size_t>& to, std::vector<double>& out) {
        std::vector<std::array<double, 3>> target;
        target.reserve(to.size());
        for (auto i : to) target.push_back(coords(i));
        for (auto i : from) {
            const auto p = coords(i);
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : target) {
                const double dz = p[0] - q[0], dy = p[1] - q[1], dx = p[2] - q[2];
                best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            out.push_back(std::sqrt(best));
        }
    };
    std::vector<double> dist;
    dist.reserve(sa.size() + sb.size());
    directed(sa, sb, dist);
    directed(sb, sa, dist);
    return percentile(std::move(dist), 95.0);
}

template <class T>
double folding_ratio(const Tensor<T>& phi) {
    if (phi.rank() != 4 || phi.dim(3) != 3) throw ShapeError("folding_ratio expects [D,H,W,3], got " + shape_str(phi.shape()));
    const std::size_t d = phi.dim(0), h = phi.dim(1), w = phi.dim(2);
    if (d < 3 || h < 3 || w < 3) return 0.0;
    const T* p = phi.data().data();
    const std::size_t stride[3] = {h * w * 3, w * 3, 3};
    std::size_t folded = 0, interior = 0;
    for (std::size_t z = 1; z + 1 < d; ++z) {
        for (std::size_t y = 1; y + 1 < h; ++y) {
            for (std::size_t x = 1; x + 1 < w; ++x) {
                const std::size_t base = ((z * h + y) * w + x) * 3;
                double j[3][3];
                for (int c = 0; c < 3; ++c) {      // derivative axis
                    for (int r = 0; r < 3; ++r) {  // displacement component
                        const double plus = p[base + stride[c] + r];
                        const double minus = p[base - stride[c] + r];
                        j[r][c] = (r == c ? 1.0 : 0.0) + 0.5 * (plus - minus);
                    }
                }
                const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                                   j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                                   j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
                folded += det <= 0.0;
                ++interior;
            }
        }
    }
    return 100.0 * static_cast<double>(folded) / static_cast<double>(interior);
}

std::optional<TTest> paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("paired_t_test: samples differ in length");
    if (a.size() < 2) throw ValidationError("paired_t_test: need at least two pairs");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const double n = static_cast<double>(diff.size());
    const double m = mean_of(diff);
    double ss = 0;
    for (double x : diff) ss += (x - m) * (x - m);
    const double var = ss / (n - 1);
    if (!(var > 0)) return std::nullopt;
    TTest r;
    r.dof = diff.size() - 1;
    r.t = m / std::sqrt(var / n);
    boost::math::students_t dist(static_cast<double>(r.dof));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

double EvalReport::mean_dice() const {
    std::vector<double> v;
    for (const auto& l : labels) v.push_back(l.dice);
    return mean_of(v);
}

double EvalReport::std_dice() const {
    std::vector<double> v;
    for (const auto& l : labels) v.push_back(l.dice);
    return std_of(v);
}

std::optional<double> EvalReport::mean_hd95() const {
    std::vector<double> v;
    for (const auto& l : labels) {
        if (l.hd95) v.push_back(*l.hd95);
    }
    if (v.empty()) return std::nullopt;
    return mean_of(v);
}

std::optional<double> EvalReport::std_hd95() const {
    std::vector<double> v;
    for (const auto& l : labels) {
        if (l.hd95) v.push_back(*l.hd95);
    }
    if (v.empty()) return std::nullopt;
    return std_of(v);
}

EvalReport evaluate(const LabelMap& warped, const LabelMap& fixed, const Tensor<float>& phi, const Spacing& spacing) {
    check_same(warped, fixed, "evaluate");
    auto la = warped.foreground_labels();
    auto lb = fixed.foreground_labels();
    std::vector<Label> all;
    std::set_union(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(all));
    EvalReport r;
    for (auto l : all) {
        LabelScore s;
        s.label = l;
        s.dice = dice(warped, fixed, l);
        s.hd95 = hd95(warped, fixed, l, spacing);
        if (!std::binary_search(la.begin(), la.end(), l)) s.warning = "label missing from warped volume";
        if (!std::binary_search(lb.begin(), lb.end(), l)) s.warning = "label missing from fixed volume";
        r.labels.push_back(s);
    }
    r.folding_percent = folding_ratio(phi);
    return r;
}

std::string report_text(const EvalReport& r) {
    std::ostringstream os;
    for (const auto& l : r.labels) {
        os << "label " << l.label << ": dice " << fmt(l.dice) << ", hd95 "
           << (l.hd95 ? fmt(*l.hd95) + " mm" : std::string("undefined"));
        if (!l.warning.empty()) os << " (warning: " << l.warning << ")";
        os << "\n";
    }
    os << "mean dice " << fmt(r.mean_dice()) << " +- " << fmt(r.std_dice()) << "\n";
    const auto mh = r.mean_hd95();
    os << "mean hd95 " << (mh ? fmt(*mh) + " +- " + fmt(*r.std_hd95()) + " mm" : std::string("undefined")) << "\n";
    os << "folding " << fmt(r.folding_percent) << " %\n";
    return os.str();
}

std::string report_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "label,dice,hd95_mm\n";
    for (const auto& l : r.labels) {
        os << l.label << "," << fmt(l.dice) << "," << (l.hd95 ? fmt(*l.hd95) : std::string("undefined"));
        if (!l.warning.empty()) os << ",warning: " << l.warning;
        os << "\n";
    }
    const auto mh = r.mean_hd95();
    os << "mean," << fmt(r.mean_dice()) << "," << (mh ? fmt(*mh) : std::string("undefined")) << "\n";
    os << "std," << fmt(r.std_dice()) << "," << (mh ? fmt(*r.std_hd95()) : std::string("undefined")) << "\n";
    os << "folding_percent," << fmt(r.folding_percent) << "\n";
    return os.str();
}

#define MORPHWIN_INSTANTIATE_METRICS(T)                                                                    \
    template Tensor<T> mse<T>(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> diffusion_regularizer<T>(const Tensor<T>&);                                         \
    template LossBreakdown<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, Border); \
    template double folding_ratio<T>(const Tensor<T>&);

MORPHWIN_INSTANTIATE_METRICS(float)
MORPHWIN_INSTANTIATE_METRICS(double)

}  // namespace morphwin
