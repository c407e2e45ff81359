#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ulmpac {

using cplx = std::complex<double>;

// Dense row-major complex tensor. Houses channel data, realigned patches and
// network activations alike.
class ComplexTensor {
public:
    ComplexTensor() = default;
    explicit ComplexTensor(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), data_(count_(dims_)) {}
    ComplexTensor(std::vector<std::size_t> dims, std::vector<cplx> values)
        : dims_(std::move(dims)), data_(std::move(values)) {
        if (data_.size() != count_(dims_))
            throw std::invalid_argument("ComplexTensor: value count does not match dims");
    }

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t ndim() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    cplx* data() { return data_.data(); }
    const cplx* data() const { return data_.data(); }
    cplx& operator[](std::size_t i) { return data_[i]; }
    const cplx& operator[](std::size_t i) const { return data_[i]; }

    cplx& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    const cplx& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    cplx& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }
    const cplx& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }

    bool same_shape(const ComplexTensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        for (const cplx& v : data_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    void fill(cplx v) { std::fill(data_.begin(), data_.end(), v); }

private:
    static std::size_t count_(const std::vector<std::size_t>& d) {
        return std::accumulate(d.begin(), d.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }
    std::vector<std::size_t> dims_;
    std::vector<cplx> data_;
};

// Real-valued counterpart, used for RF data, density maps and profiles.
class RealTensor {
public:
    RealTensor() = default;
    explicit RealTensor(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), data_(count_(dims_)) {}
    RealTensor(std::vector<std::size_t> dims, std::vector<double> values)
        : dims_(std::move(dims)), data_(std::move(values)) {
        if (data_.size() != count_(dims_))
            throw std::invalid_argument("RealTensor: value count does not match dims");
    }

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t ndim() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
    const double& at2(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    const double& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

private:
    static std::size_t count_(const std::vector<std::size_t>& d) {
        return std::accumulate(d.begin(), d.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

}  // namespace ulmpac
