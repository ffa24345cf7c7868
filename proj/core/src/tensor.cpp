#include "cwcl/tensor.hpp"

#include <sstream>

namespace cwcl {

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void require_shape(const Tensor& t, const std::vector<std::int64_t>& expect,
                   const std::string& what) {
  if (t.shape == expect) return;
  Tensor e;
  e.shape = expect;
  std::ostringstream os;
  os << what << ": shape mismatch, expected " << e.shape_str() << " got "
     << t.shape_str();
  throw std::invalid_argument(os.str());
}

}  // namespace cwcl
