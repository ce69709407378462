#include "persona/matrix.hpp"

#include <stdexcept>

namespace persona {

void Matrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) cols_ = values.size();
  if (values.size() != cols_) {
    throw std::invalid_argument("Matrix::push_row: row has " + std::to_string(values.size()) +
                                " columns, expected " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

}  // namespace persona
