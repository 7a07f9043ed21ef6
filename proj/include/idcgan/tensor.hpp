#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace idcgan {

// Dense tensor shape; image batches use the layout [N, C, H, W].
using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

// Contract violations (bad shapes, invalid op geometry, corrupt configs).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Non-finite values where finite math is required (NaN/Inf abort paths).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Unreadable / malformed external data (files, checkpoints, datasets).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void expect(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename Scalar>
class Tape;

// Value-semantic dense tensor. `tape_id`/`node` tie the value to the tape
// that produced it; a tensor with node < 0 is a plain constant. Tensors not
// attached to a live tape are immutable values safe to share across threads.
template <typename Scalar>
struct Tensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array data;
  std::uint64_t tape_id = 0;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, Array d) : shape(std::move(s)), data(std::move(d)) {
    expect(numel(shape) == data.size(),
           "tensor data length does not match shape " + to_string(shape));
  }

  static Tensor zeros(Shape s) {
    Tensor t;
    t.data = Array::Zero(numel(s));
    t.shape = std::move(s);
    return t;
  }

  static Tensor constant(Shape s, Scalar v) {
    Tensor t;
    t.data = Array::Constant(numel(s), v);
    t.shape = std::move(s);
    return t;
  }

  static Tensor from(Shape s, std::initializer_list<Scalar> values) {
    Tensor t;
    t.shape = std::move(s);
    t.data.resize(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (Scalar v : values) t.data[i++] = v;
    expect(numel(t.shape) == t.data.size(),
           "initializer length does not match shape " + to_string(t.shape));
    return t;
  }

  std::int64_t size() const { return data.size(); }
  std::int64_t dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  Scalar scalar() const {
    expect(size() == 1, "scalar() called on tensor of shape " + to_string(shape));
    return data[0];
  }

  bool all_finite() const { return data.allFinite(); }

  // Same values, detached from any tape.
  Tensor detached() const {
    Tensor t(*this);
    t.tape_id = 0;
    t.node = -1;
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.shape = shape;
    t.data = data.template cast<Other>();
    return t;
  }
};

}  // namespace idcgan
