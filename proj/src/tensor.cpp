#include "morphwin/tensor.hpp"

#include <limits>
#include <sstream>
#include <utility>

namespace morphwin {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace {
constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();
std::string g_corrupted_op;
}  // namespace

namespace debug {
void corrupt_adjoint(std::string op) { g_corrupted_op = std::move(op); }
const std::string& corrupted_adjoint() { return g_corrupted_op; }
}  // namespace debug

template <class T>
Tensor<T>::Tensor() : data_(std::make_shared<const std::vector<T>>(1, T(0))) {}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data.size()) {
        throw ShapeError("shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(data.size()));
    }
    data_ = std::make_shared<const std::vector<T>>(std::move(data));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    return full(std::move(shape), T(0));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
    return Tensor(Shape{}, std::vector<T>{value});
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw ShapeError("index rank " + std::to_string(index.size()) + " does not match shape " + shape_str(shape_));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) throw ShapeError("index out of bounds for shape " + shape_str(shape_));
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return (*data_)[flat];
}

template <class T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape_));
    return (*data_)[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.node_ = 0;
    return out;
}

template <class T>
Tensor<T> Tensor<T>::with_shape(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError("cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

template <class T>
Tensor<T> Tape<T>::watch(const Tensor<T>& leaf) {
    if (consumed_) throw Error("tape already consumed by a backward pass");
    Node node;
    node.op = "leaf";
    node.numel = leaf.numel();
    node.leaf = true;
    nodes_.push_back(std::move(node));
    Tensor<T> out = leaf.detach();
    out.tape_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
}

template <class T>
Tensor<T> Tape<T>::record(const char* op, Shape shape, std::vector<T> value,
                          std::span<const Tensor<T>* const> inputs, Backward backward) {
    if (consumed_) throw Error("tape already consumed by a backward pass");
    Tensor<T> out(std::move(shape), std::move(value));
    Node node;
    node.op = op;
    node.numel = out.numel();
    node.backward = std::move(backward);
    node.inputs.reserve(inputs.size());
    for (const auto* in : inputs) {
        if (in->tape_ == this) {
            node.inputs.push_back(in->node_);
        } else if (in->tape_ == nullptr) {
            node.inputs.push_back(kNoNode);
        } else {
            throw Error(std::string("inputs of '") + op + "' are recorded on different tapes");
        }
    }
    nodes_.push_back(std::move(node));
    out.tape_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
}

template <class T>
GradientMap<T> Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) throw Error("backward called twice on the same tape");
    if (loss.numel() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (loss.tape_ != this) throw Error("loss is not recorded on this tape");
    consumed_ = true;

    GradientMap<T> map;
    map.tape_ = this;
    map.grads_.resize(nodes_.size());
    auto& grads = map.grads_;
    grads[loss.node_].assign(1, T(1));

    const auto& corrupted = debug::corrupted_adjoint();
    std::vector<T*> buffers;
    for (std::size_t n = loss.node_ + 1; n-- > 0;) {
        Node& node = nodes_[n];
        if (node.leaf || grads[n].empty()) continue;
        buffers.assign(node.inputs.size(), nullptr);
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
            const auto in = node.inputs[i];
            if (in == kNoNode) continue;
            if (grads[in].empty()) grads[in].assign(nodes_[in].numel, T(0));
            buffers[i] = grads[in].data();
        }
        if (!corrupted.empty() && corrupted == node.op) {
            for (auto& g : grads[n]) g *= T(1.5);
        }
        node.backward(std::span<const T>(grads[n]), std::span<T* const>(buffers));
        grads[n].clear();
        grads[n].shrink_to_fit();
        node.backward = nullptr;
    }
    return map;
}

template <class T>
Tensor<T> GradientMap<T>::of(const Tensor<T>& t) const {
    if (t.tape() == nullptr || t.tape() != tape_ || t.node() >= grads_.size() || grads_[t.node()].empty()) {
        return Tensor<T>::zeros(t.shape());
    }
    return Tensor<T>(t.shape(), grads_[t.node()]);
}

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      const std::vector<const Tensor<T>*>& inputs, typename Tape<T>::Backward backward) {
    Tape<T>* tape = nullptr;
    for (const auto* in : inputs) {
        if (in->tape() != nullptr) {
            tape = in->tape();
            break;
        }
    }
    if (tape == nullptr) return Tensor<T>(std::move(shape), std::move(value));
    return tape->record(op, std::move(shape), std::move(value),
                        std::span<const Tensor<T>* const>(inputs.data(), inputs.size()), std::move(backward));
}

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs, typename Tape<T>::Backward backward) {
    return make_result<T>(op, std::move(shape), std::move(value), std::vector<const Tensor<T>*>(inputs),
                          std::move(backward));
}

#define MORPHWIN_INSTANTIATE(T)                                                                               \
    template class Tensor<T>;                                                                                 \
    template class Tape<T>;                                                                                   \
    template class GradientMap<T>;                                                                            \
    template Tensor<T> make_result<T>(const char*, Shape, std::vector<T>, std::initializer_list<const Tensor<T>*>, \
                                      typename Tape<T>::Backward);                                            \
    template Tensor<T> make_result<T>(const char*, Shape, std::vector<T>, const std::vector<const Tensor<T>*>&, \
                                      typename Tape<T>::Backward);

MORPHWIN_INSTANTIATE(float)
MORPHWIN_INSTANTIATE(double)

}  // namespace morphwin
