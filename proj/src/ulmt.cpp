#include "ulmpac/ulmt.hpp"

#include <cstring>
#include <fstream>

namespace ulmpac::ulmt {

namespace {

constexpr char kMagic[4] = {'U', 'L', 'M', 'T'};

void write_header(std::ofstream& f, Dtype dtype, const std::vector<std::size_t>& dims) {
    f.write(kMagic, 4);
    std::uint8_t version = 1;
    std::uint8_t dt = static_cast<std::uint8_t>(dtype);
    std::uint8_t ndim = static_cast<std::uint8_t>(dims.size());
    f.put(static_cast<char>(version));
    f.put(static_cast<char>(dt));
    f.put(static_cast<char>(ndim));
    for (std::size_t d : dims) {
        std::uint64_t e = d;
        f.write(reinterpret_cast<const char*>(&e), 8);
    }
}

struct Header {
    Dtype dtype;
    std::vector<std::size_t> dims;
};

Header read_header(std::ifstream& f, const std::string& path) {
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("ULMT: bad magic in " + path);
    int version = f.get();
    if (version != 1) throw std::runtime_error("ULMT: unsupported version in " + path);
    int dt = f.get();
    if (dt < 0 || dt > 2) throw std::runtime_error("ULMT: unknown dtype in " + path);
    int ndim = f.get();
    if (ndim < 0) throw std::runtime_error("ULMT: truncated header in " + path);
    Header h;
    h.dtype = static_cast<Dtype>(dt);
    h.dims.resize(static_cast<std::size_t>(ndim));
    for (auto& d : h.dims) {
        std::uint64_t e = 0;
        f.read(reinterpret_cast<char*>(&e), 8);
        d = static_cast<std::size_t>(e);
    }
    if (!f) throw std::runtime_error("ULMT: truncated header in " + path);
    return h;
}

}  // namespace

void write_real(const std::string& path, const RealTensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ULMT: cannot open " + path + " for writing");
    write_header(f, Dtype::Real64, t.dims());
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("ULMT: write failed: " + path);
}

void write_complex(const std::string& path, const ComplexTensor& t, Dtype dtype) {
    if (dtype == Dtype::Real64)
        throw std::invalid_argument("ULMT: complex tensor needs a complex dtype");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ULMT: cannot open " + path + " for writing");
    write_header(f, dtype, t.dims());
    if (dtype == Dtype::Complex128) {
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(cplx)));
    } else {
        std::vector<float> buf(t.size() * 2);
        for (std::size_t i = 0; i < t.size(); ++i) {
            buf[2 * i] = static_cast<float>(t[i].real());
            buf[2 * i + 1] = static_cast<float>(t[i].imag());
        }
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("ULMT: write failed: " + path);
}

RealTensor read_real(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ULMT: cannot open " + path);
    Header h = read_header(f, path);
    if (h.dtype != Dtype::Real64)
        throw std::runtime_error("ULMT: expected real64 tensor in " + path);
    RealTensor t(h.dims);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("ULMT: truncated payload in " + path);
    return t;
}

ComplexTensor read_complex(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ULMT: cannot open " + path);
    Header h = read_header(f, path);
    ComplexTensor t(h.dims);
    if (h.dtype == Dtype::Complex128) {
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(cplx)));
    } else if (h.dtype == Dtype::Complex64) {
        std::vector<float> buf(t.size() * 2);
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = cplx(buf[2 * i], buf[2 * i + 1]);
    } else {
        throw std::runtime_error("ULMT: expected complex tensor in " + path);
    }
    if (!f) throw std::runtime_error("ULMT: truncated payload in " + path);
    return t;
}

Dtype peek_dtype(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ULMT: cannot open " + path);
    Header h = read_header(f, path);
    return h.dtype;
}

}  // namespace ulmpac::ulmt
