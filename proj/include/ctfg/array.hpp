#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctfg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

[[noreturn]] void fail(const std::string& msg);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// When on (the default), Array construction from external data and every graph
// node evaluation reject NaN/Inf. Benchmarks may switch it off.
bool& checked_mode();

// Dense row-major f64 array. Rank 0 is a scalar; most of the system lives in
// rank <= 2.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape);                     // zero-filled
    Array(Shape shape, std::vector<double> data);    // checked in checked mode

    static Array scalar(double v);
    static Array full(Shape shape, double v);
    static Array zeros_like(const Array& a);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool same_shape(const Array& o) const { return shape_ == o.shape_; }

    // rows/cols view every rank <= 2 array as a matrix: scalar is 1x1, a
    // rank-1 array of n elements is 1xn.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at2(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at2(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool all_finite() const;
    void check_finite(const std::string& what) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace ctfg
