#include "oodmark/tensor.hpp"

#include <cmath>
#include <sstream>

namespace oodmark {

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

float frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data) s += static_cast<double>(v) * v;
  return static_cast<float>(std::sqrt(s));
}

void axpy(float a, const Tensor& t, Tensor& out) {
  if (!t.same_shape(out)) throw std::invalid_argument("axpy: shape mismatch");
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] += a * t.data[i];
}

}  // namespace oodmark
