#include "ctfg/array.hpp"

#include <cmath>
#include <sstream>

namespace ctfg {

void fail(const std::string& msg) { throw Error(msg); }

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << ")";
    return os.str();
}

bool& checked_mode() {
    static bool on = true;
    return on;
}

Array::Array(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        fail("array data size " + std::to_string(data_.size()) + " does not match shape " +
             shape_str(shape_));
    if (checked_mode()) check_finite("array construction");
}

Array Array::scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

Array Array::full(Shape shape, double v) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a.at(i) = v;
    return a;
}

Array Array::zeros_like(const Array& a) { return Array(a.shape()); }

std::size_t Array::rows() const {
    if (rank() > 2) fail("rows() on rank-" + std::to_string(rank()) + " array");
    return rank() == 2 ? shape_[0] : 1;
}

std::size_t Array::cols() const {
    if (rank() > 2) fail("cols() on rank-" + std::to_string(rank()) + " array");
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return shape_[0];
    return 1;
}

bool Array::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Array::check_finite(const std::string& what) const {
    if (!all_finite()) fail("non-finite value in " + what);
}

}  // namespace ctfg
