#include "morphwin/params.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "morphwin/adam.hpp"

namespace morphwin {

namespace {
constexpr char kCheckpointMagic[] = "MWCK1";
constexpr std::uint64_t kMaxNameLength = 4096;
constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 34;
}  // namespace

template <class T>
void ParamSet<T>::add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

template <class T>
void ParamSet<T>::set(const std::string& name, Tensor<T> value) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    auto& slot = entries_[it->second].second;
    if (slot.shape() != value.shape()) {
        throw ShapeError("parameter '" + name + "' has shape " + shape_str(slot.shape()) + ", cannot assign " +
                         shape_str(value.shape()));
    }
    slot = std::move(value);
}

template <class T>
const Tensor<T>& ParamSet<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("missing parameter '" + name + "'");
    return entries_[it->second].second;
}

template <class T>
std::size_t ParamSet<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
}

template <class T>
ParamSet<T> ParamSet<T>::attach(Tape<T>& tape) const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, tape.watch(t));
    return out;
}

template <class T>
ParamSet<T> ParamSet<T>::gradients(const GradientMap<T>& grads) const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, grads.of(t));
    return out;
}

template class ParamSet<float>;
template class ParamSet<double>;

void write_checkpoint(std::ostream& os, const ParamSet<float>& params) {
    os.write(kCheckpointMagic, 5);
    for (const auto& [name, t] : params.entries()) {
        binary::put_le<std::uint64_t>(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        binary::put_le<std::uint64_t>(os, t.rank());
        for (auto d : t.shape()) binary::put_le<std::uint64_t>(os, d);
        for (auto v : t.data()) binary::put_f32(os, v);
    }
    if (!os) throw Error("failed to write checkpoint");
}

ParamSet<float> read_checkpoint(std::istream& is) {
    binary::expect_magic(is, kCheckpointMagic);
    ParamSet<float> params;
    while (is.peek() != std::char_traits<char>::eof()) {
        const auto name_len = binary::get_le<std::uint64_t>(is, "parameter name length");
        if (name_len == 0 || name_len > kMaxNameLength) throw FormatError("implausible parameter name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
            throw FormatError("truncated file while reading parameter name");
        }
        const auto rank = binary::get_le<std::uint64_t>(is, "rank");
        if (rank > kMaxRank) throw FormatError("parameter '" + name + "' has implausible rank");
        Shape shape;
        std::uint64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            const auto d = binary::get_le<std::uint64_t>(is, "dimension");
            if (d == 0 || d > kMaxElements || count > kMaxElements / d) {
                throw FormatError("parameter '" + name + "' has invalid dimensions");
            }
            count *= d;
            shape.push_back(static_cast<std::size_t>(d));
        }
        std::vector<float> values(count);
        for (auto& v : values) v = binary::get_f32(is, "parameter values");
        params.add(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
    }
    return params;
}

void save_checkpoint(const std::string& path, const ParamSet<float>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_checkpoint(os, params);
}

ParamSet<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint '" + path + "'");
    return read_checkpoint(is);
}

void check_compatible(const ParamSet<float>& expected, const ParamSet<float>& loaded) {
    const auto& a = expected.entries();
    const auto& b = loaded.entries();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i >= b.size()) throw ValidationError("checkpoint is missing parameter '" + a[i].first + "'");
        if (a[i].first != b[i].first) {
            throw ValidationError("checkpoint parameter mismatch: expected '" + a[i].first + "', found '" + b[i].first + "'");
        }
        if (a[i].second.shape() != b[i].second.shape()) {
            throw ValidationError("checkpoint parameter '" + a[i].first + "' has shape " +
                                  shape_str(b[i].second.shape()) + ", architecture expects " +
                                  shape_str(a[i].second.shape()));
        }
    }
    if (b.size() > a.size()) throw ValidationError("checkpoint has unexpected parameter '" + b[a.size()].first + "'");
}

template <class T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const AdamOptions& options) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    for (const auto& [name, p] : params.entries()) {
        const auto& g = grads.get(name);
        if (g.shape() != p.shape()) {
            throw ShapeError("adam: gradient for '" + name + "' has shape " + shape_str(g.shape()) +
                             ", parameter has " + shape_str(p.shape()));
        }
        auto& m = state.first_moment[name];
        auto& v = state.second_moment[name];
        if (m.empty()) {
            m.assign(p.numel(), T(0));
            v.assign(p.numel(), T(0));
        }
        std::vector<T> updated(p.data().begin(), p.data().end());
        const auto gd = g.data();
        for (std::size_t i = 0; i < updated.size(); ++i) {
            const double gi = gd[i];
            const double mi = options.beta1 * m[i] + (1.0 - options.beta1) * gi;
            const double vi = options.beta2 * v[i] + (1.0 - options.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / correction1;
            const double vhat = vi / correction2;
            updated[i] = static_cast<T>(updated[i] - options.lr * mhat / (std::sqrt(vhat) + options.eps));
        }
        params.set(name, Tensor<T>(p.shape(), std::move(updated)));
    }
}

template void adam_step<float>(ParamSet<float>&, const ParamSet<float>&, AdamState<float>&, const AdamOptions&);
template void adam_step<double>(ParamSet<double>&, const ParamSet<double>&, AdamState<double>&, const AdamOptions&);

}  // namespace morphwin
