#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/serialize.hpp"

namespace pgnas {

// Dense row-major tensor of 64-bit floats. Training and testing run in
// doubles throughout; narrower storage exists only in checkpoints.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        v_.assign(checked_numel(shape_), 0.0);
    }

    Tensor(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), v_(std::move(values)) {
        if (checked_numel(shape_) != v_.size()) {
            throw ShapeError("value count " + std::to_string(v_.size()) +
                             " does not match shape " + shape_text(shape_));
        }
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double value) {
        Tensor t(std::move(shape));
        for (double& x : t.v_) x = value;
        return t;
    }

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t numel() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    double& operator[](size_t i) { return v_[i]; }
    double operator[](size_t i) const { return v_[i]; }

    double& at(int a, int b) { return v_[static_cast<size_t>(a) * su(1) + static_cast<size_t>(b)]; }
    double at(int a, int b) const { return v_[static_cast<size_t>(a) * su(1) + static_cast<size_t>(b)]; }

    double& at(int a, int b, int c, int d) { return v_[idx4(a, b, c, d)]; }
    double at(int a, int b, int c, int d) const { return v_[idx4(a, b, c, d)]; }

    size_t idx4(int a, int b, int c, int d) const {
        return ((static_cast<size_t>(a) * su(1) + static_cast<size_t>(b)) * su(2) +
                static_cast<size_t>(c)) *
                   su(3) +
               static_cast<size_t>(d);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool is_scalar() const { return v_.size() == 1; }
    double scalar_value() const {
        if (!is_scalar()) throw ShapeError("expected scalar, got shape " + shape_text(shape_));
        return v_[0];
    }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const { return shape_text(shape_); }

    static std::string shape_text(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

    // Digest over shape and raw value bits; bitwise-equal tensors collide iff equal.
    uint64_t digest(uint64_t h = 0xcbf29ce484222325ull) const {
        for (int d : shape_) {
            uint32_t u = static_cast<uint32_t>(d);
            h = digest_bytes(reinterpret_cast<const uint8_t*>(&u), sizeof(u), h);
        }
        return digest_bytes(reinterpret_cast<const uint8_t*>(v_.data()), v_.size() * sizeof(double), h);
    }

  private:
    size_t su(int i) const { return static_cast<size_t>(shape_[static_cast<size_t>(i)]); }

    static size_t checked_numel(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_text(shape));
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<double> v_;
};

}  // namespace pgnas
