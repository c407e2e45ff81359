#pragma once

#include <string>

#include "ulmpac/tensor.hpp"

namespace ulmpac::ulmt {

// ULMT binary tensor format:
//   magic "ULMT", u8 version=1, u8 dtype (0 real64, 1 complex64, 2 complex128),
//   u8 ndim, ndim x u64 little-endian extents, row-major little-endian payload.
// Complex payloads are interleaved (real, imag).

enum class Dtype : std::uint8_t { Real64 = 0, Complex64 = 1, Complex128 = 2 };

void write_real(const std::string& path, const RealTensor& t);
void write_complex(const std::string& path, const ComplexTensor& t, Dtype dtype = Dtype::Complex128);

RealTensor read_real(const std::string& path);
ComplexTensor read_complex(const std::string& path);

Dtype peek_dtype(const std::string& path);

}  // namespace ulmpac::ulmt
