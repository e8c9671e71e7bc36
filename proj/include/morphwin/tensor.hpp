#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphwin {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or out-of-range axes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad configuration or input that the caller can fix (CLI exit code 1).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed or truncated files.
class FormatError : public Error {
public:
    using Error::Error;
};

template <class T>
class Tape;

template <class T>
class GradientMap;

/// Dense row-major array. Values are immutable once constructed; every
/// operation returns a new Tensor. A Tensor created by an operation whose
/// inputs live on a Tape carries a reference to its node on that tape.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor();
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return data_->size(); }

    std::span<const T> data() const { return {data_->data(), data_->size()}; }
    const std::vector<T>& values() const { return *data_; }
    T operator[](std::size_t flat) const { return (*data_)[flat]; }
    T at(std::initializer_list<std::size_t> index) const;
    T item() const;

    bool requires_grad() const { return tape_ != nullptr; }
    Tape<T>* tape() const { return tape_; }
    std::size_t node() const { return node_; }

    // Same values, no tape attachment.
    Tensor detach() const;

    // Shares storage with this tensor under a new shape (counts must match).
    Tensor with_shape(Shape shape) const;

    template <class U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_->begin(), data_->end()));
    }

private:
    friend class Tape<T>;

    Shape shape_;
    std::shared_ptr<const std::vector<T>> data_;
    Tape<T>* tape_ = nullptr;
    std::size_t node_ = 0;
};

/// Record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the record is topologically
/// sorted by construction. A tape supports exactly one backward pass.
template <class T>
class Tape {
public:
    // Receives the output adjoint and one accumulation buffer per input;
    // the buffer is null for inputs that are not on the tape.
    using Backward = std::function<void(std::span<const T> grad_out, std::span<T* const> grad_in)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Attach a leaf (typically a parameter) to this tape.
    Tensor<T> watch(const Tensor<T>& leaf);

    Tensor<T> record(const char* op, Shape shape, std::vector<T> value,
                     std::span<const Tensor<T>* const> inputs, Backward backward);

    GradientMap<T> backward(const Tensor<T>& loss);

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        const char* op = "";
        std::size_t numel = 0;
        std::vector<std::size_t> inputs;
        Backward backward;
        bool leaf = false;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// Gradients of one backward pass, addressable by the forward tensors.
template <class T>
class GradientMap {
public:
    GradientMap() = default;

    /// Gradient w.r.t. `t`; zeros when `t` did not contribute to the loss.
    Tensor<T> of(const Tensor<T>& t) const;

private:
    friend class Tape<T>;
    const Tape<T>* tape_ = nullptr;
    std::vector<std::vector<T>> grads_;
};

/// Build the result of a primitive: recorded on the inputs' tape when any
/// input is attached, a plain tensor otherwise.
template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename Tape<T>::Backward backward);

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      const std::vector<const Tensor<T>*>& inputs,
                      typename Tape<T>::Backward backward);

namespace debug {

// Test hook: scales the adjoint flowing into every node recorded under
// `op` by 1.5, so a gradient check must flag it. Empty string disables.
void corrupt_adjoint(std::string op);
const std::string& corrupted_adjoint();

}  // namespace debug

}  // namespace morphwin
