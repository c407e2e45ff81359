#include <cstring>

#include "ulmpac/cvcnn.hpp"
#include "ulmpac/parallel.hpp"

namespace ulmpac::cvcnn {

namespace {

inline cplx wread(const std::vector<double>& w, std::size_t i) {
    return {w[2 * i], w[2 * i + 1]};
}
inline void wadd(std::vector<double>& w, std::size_t i, cplx v) {
    w[2 * i] += v.real();
    w[2 * i + 1] += v.imag();
}

struct OutDims {
    std::size_t d, h, wdim;
};

OutDims conv_out_dims(const std::vector<std::size_t>& xd, const Shape3& k,
                      const Shape3& stride, const Pad3& plo, const Pad3& phi) {
    auto one = [](std::size_t in, std::size_t kk, std::size_t s, std::size_t lo,
                  std::size_t hi) {
        if (in + lo + hi < kk) throw std::invalid_argument("conv3d: kernel larger than input");
        return (in + lo + hi - kk) / s + 1;
    };
    return {one(xd[2], k[0], stride[0], plo[0], phi[0]),
            one(xd[3], k[1], stride[1], plo[1], phi[1]),
            one(xd[4], k[2], stride[2], plo[2], phi[2])};
}

}  // namespace

ComplexTensor conv3d_forward(const ComplexTensor& x, const std::vector<double>& w,
                             const std::vector<double>& bias, std::size_t cout,
                             const Shape3& k, const Shape3& stride, const Pad3& pad_lo,
                             const Pad3& pad_hi, int workers) {
    if (x.ndim() != 5) throw std::invalid_argument("conv3d: input must be 5-D");
    const std::size_t nb = x.dim(0), cin = x.dim(1);
    const std::size_t id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    if (w.size() != 2 * cout * cin * k[0] * k[1] * k[2])
        throw std::invalid_argument("conv3d: weight size mismatch");
    OutDims od = conv_out_dims(x.dims(), k, stride, pad_lo, pad_hi);

    ComplexTensor y({nb, cout, od.d, od.h, od.wdim});
    const cplx* xp = x.data();
    cplx* yp = y.data();
    const std::size_t ospatial = od.d * od.h * od.wdim;

    parallel_for(nb * cout, workers, [&](std::size_t job) {
        const std::size_t n = job / cout, co = job % cout;
        cplx b = wread(bias, co);
        cplx* out = yp + (n * cout + co) * ospatial;
        for (std::size_t zo = 0; zo < od.d; ++zo)
            for (std::size_t ho = 0; ho < od.h; ++ho)
                for (std::size_t wo = 0; wo < od.wdim; ++wo) {
                    cplx acc = b;
                    long z0 = static_cast<long>(zo * stride[0]) - static_cast<long>(pad_lo[0]);
                    long h0 = static_cast<long>(ho * stride[1]) - static_cast<long>(pad_lo[1]);
                    long w0 = static_cast<long>(wo * stride[2]) - static_cast<long>(pad_lo[2]);
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const cplx* xc = xp + ((n * cin + ci) * id) * ih * iw;
                        std::size_t wbase = ((co * cin + ci) * k[0]) * k[1] * k[2];
                        for (std::size_t kz = 0; kz < k[0]; ++kz) {
                            long zi = z0 + static_cast<long>(kz);
                            if (zi < 0 || zi >= static_cast<long>(id)) continue;
                            for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                long hi = h0 + static_cast<long>(kh);
                                if (hi < 0 || hi >= static_cast<long>(ih)) continue;
                                const cplx* xrow = xc + (static_cast<std::size_t>(zi) * ih +
                                                         static_cast<std::size_t>(hi)) * iw;
                                std::size_t wrow = wbase + (kz * k[1] + kh) * k[2];
                                for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                    long wi = w0 + static_cast<long>(kw);
                                    if (wi < 0 || wi >= static_cast<long>(iw)) continue;
                                    acc += wread(w, wrow + kw) *
                                           xrow[static_cast<std::size_t>(wi)];
                                }
                            }
                        }
                    }
                    out[(zo * od.h + ho) * od.wdim + wo] = acc;
                }
    });
    return y;
}

void conv3d_backward(const ComplexTensor& x, const std::vector<double>& w,
                     const ComplexTensor& gy, std::size_t cout, const Shape3& k,
                     const Shape3& stride, const Pad3& pad_lo, const Pad3& pad_hi,
                     ComplexTensor* gx, std::vector<double>* gw, std::vector<double>* gb,
                     int workers) {
    const std::size_t nb = x.dim(0), cin = x.dim(1);
    const std::size_t id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    OutDims od = conv_out_dims(x.dims(), k, stride, pad_lo, pad_hi);
    const std::size_t ospatial = od.d * od.h * od.wdim;
    const cplx* xp = x.data();
    const cplx* gp = gy.data();

    if (gx) {
        *gx = ComplexTensor(x.dims());
        cplx* gxp = gx->data();
        parallel_for(nb * cin, workers, [&](std::size_t job) {
            const std::size_t n = job / cin, ci = job % cin;
            cplx* gxc = gxp + ((n * cin + ci) * id) * ih * iw;
            for (std::size_t co = 0; co < cout; ++co) {
                const cplx* gyc = gp + (n * cout + co) * ospatial;
                std::size_t wbase = ((co * cin + ci) * k[0]) * k[1] * k[2];
                for (std::size_t zo = 0; zo < od.d; ++zo)
                    for (std::size_t ho = 0; ho < od.h; ++ho)
                        for (std::size_t wo = 0; wo < od.wdim; ++wo) {
                            cplx g = gyc[(zo * od.h + ho) * od.wdim + wo];
                            if (g == cplx{}) continue;
                            long z0 = static_cast<long>(zo * stride[0]) -
                                      static_cast<long>(pad_lo[0]);
                            long h0 = static_cast<long>(ho * stride[1]) -
                                      static_cast<long>(pad_lo[1]);
                            long w0 = static_cast<long>(wo * stride[2]) -
                                      static_cast<long>(pad_lo[2]);
                            for (std::size_t kz = 0; kz < k[0]; ++kz) {
                                long zi = z0 + static_cast<long>(kz);
                                if (zi < 0 || zi >= static_cast<long>(id)) continue;
                                for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                    long hi = h0 + static_cast<long>(kh);
                                    if (hi < 0 || hi >= static_cast<long>(ih)) continue;
                                    std::size_t wrow = wbase + (kz * k[1] + kh) * k[2];
                                    cplx* gxrow =
                                        gxc + (static_cast<std::size_t>(zi) * ih +
                                               static_cast<std::size_t>(hi)) * iw;
                                    for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                        long wi = w0 + static_cast<long>(kw);
                                        if (wi < 0 || wi >= static_cast<long>(iw)) continue;
                                        gxrow[static_cast<std::size_t>(wi)] +=
                                            std::conj(wread(w, wrow + kw)) * g;
                                    }
                                }
                            }
                        }
            }
        });
    }

    if (gw) {
        parallel_for(cout, workers, [&](std::size_t co) {
            for (std::size_t n = 0; n < nb; ++n) {
                const cplx* gyc = gp + (n * cout + co) * ospatial;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const cplx* xc = xp + ((n * cin + ci) * id) * ih * iw;
                    std::size_t wbase = ((co * cin + ci) * k[0]) * k[1] * k[2];
                    for (std::size_t zo = 0; zo < od.d; ++zo)
                        for (std::size_t ho = 0; ho < od.h; ++ho)
                            for (std::size_t wo = 0; wo < od.wdim; ++wo) {
                                cplx g = gyc[(zo * od.h + ho) * od.wdim + wo];
                                if (g == cplx{}) continue;
                                long z0 = static_cast<long>(zo * stride[0]) -
                                          static_cast<long>(pad_lo[0]);
                                long h0 = static_cast<long>(ho * stride[1]) -
                                          static_cast<long>(pad_lo[1]);
                                long w0 = static_cast<long>(wo * stride[2]) -
                                          static_cast<long>(pad_lo[2]);
                                for (std::size_t kz = 0; kz < k[0]; ++kz) {
                                    long zi = z0 + static_cast<long>(kz);
                                    if (zi < 0 || zi >= static_cast<long>(id)) continue;
                                    for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                        long hi = h0 + static_cast<long>(kh);
                                        if (hi < 0 || hi >= static_cast<long>(ih)) continue;
                                        std::size_t wrow = wbase + (kz * k[1] + kh) * k[2];
                                        const cplx* xrow =
                                            xc + (static_cast<std::size_t>(zi) * ih +
                                                  static_cast<std::size_t>(hi)) * iw;
                                        for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                            long wi = w0 + static_cast<long>(kw);
                                            if (wi < 0 || wi >= static_cast<long>(iw))
                                                continue;
                                            wadd(*gw, wrow + kw,
                                                 g * std::conj(
                                                         xrow[static_cast<std::size_t>(wi)]));
                                        }
                                    }
                                }
                            }
                }
            }
        });
    }

    if (gb) {
        for (std::size_t co = 0; co < cout; ++co) {
            cplx acc{};
            for (std::size_t n = 0; n < nb; ++n) {
                const cplx* gyc = gp + (n * cout + co) * ospatial;
                for (std::size_t i = 0; i < ospatial; ++i) acc += gyc[i];
            }
            wadd(*gb, co, acc);
        }
    }
}

void sym2x2_sqrt_invsqrt(double a, double b, double c, double out_sqrt[3],
                         double out_invsqrt[3]) {
    double half_tr = 0.5 * (a + c);
    double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
    double l1 = half_tr + disc, l2 = half_tr - disc;
    if (l2 <= 0.0) throw std::domain_error("sym2x2: matrix not positive definite");
    double s1 = std::sqrt(l1), s2 = std::sqrt(l2);

    // Eigenvector for l1.
    double vx, vy;
    if (std::abs(b) > 1e-300 * std::max(std::abs(a - l1), 1.0)) {
        vx = b;
        vy = l1 - a;
    } else if (a >= c) {
        vx = 1.0;
        vy = 0.0;
    } else {
        vx = 0.0;
        vy = 1.0;
    }
    double nrm = std::hypot(vx, vy);
    vx /= nrm;
    vy /= nrm;
    // Q = [[vx, -vy], [vy, vx]]; f(A) = Q diag(f(l1), f(l2)) Q^T.
    auto fill = [&](double f1, double f2, double out[3]) {
        out[0] = f1 * vx * vx + f2 * vy * vy;
        out[1] = (f1 - f2) * vx * vy;
        out[2] = f1 * vy * vy + f2 * vx * vx;
    };
    fill(s1, s2, out_sqrt);
    fill(1.0 / s1, 1.0 / s2, out_invsqrt);
}

void sym2x2_sylvester(const double b[3], const double c[3], double x[3]) {
    // Same eigenbasis trick: B = Q diag(b1, b2) Q^T, X'_ij = C'_ij / (b_i + b_j).
    double a = b[0], bb = b[1], cc = b[2];
    double half_tr = 0.5 * (a + cc);
    double disc = std::sqrt(std::max(0.0, 0.25 * (a - cc) * (a - cc) + bb * bb));
    double l1 = half_tr + disc, l2 = half_tr - disc;
    double vx, vy;
    if (std::abs(bb) > 1e-300 * std::max(std::abs(a - l1), 1.0)) {
        vx = bb;
        vy = l1 - a;
    } else if (a >= cc) {
        vx = 1.0;
        vy = 0.0;
    } else {
        vx = 0.0;
        vy = 1.0;
    }
    double nrm = std::hypot(vx, vy);
    vx /= nrm;
    vy /= nrm;
    // C' = Q^T C Q for symmetric C.
    double c00 = vx * (c[0] * vx + c[1] * vy) + vy * (c[1] * vx + c[2] * vy);
    double c01 = vx * (-c[0] * vy + c[1] * vx) + vy * (-c[1] * vy + c[2] * vx);
    double c11 = -vy * (-c[0] * vy + c[1] * vx) + vx * (-c[1] * vy + c[2] * vx);
    double x00 = c00 / (2.0 * l1);
    double x01 = c01 / (l1 + l2);
    double x11 = c11 / (2.0 * l2);
    // X = Q X' Q^T.
    x[0] = x00 * vx * vx - 2.0 * x01 * vx * vy + x11 * vy * vy;
    x[1] = x00 * vx * vy + x01 * (vx * vx - vy * vy) - x11 * vx * vy;
    x[2] = x00 * vy * vy + 2.0 * x01 * vx * vy + x11 * vx * vx;
}

ComplexTensor concat_channels(const std::vector<const ComplexTensor*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty");
    const auto& d0 = parts[0]->dims();
    std::size_t ctotal = 0;
    for (const auto* p : parts) {
        const auto& d = p->dims();
        if (d.size() != 5 || d[0] != d0[0] || d[2] != d0[2] || d[3] != d0[3] || d[4] != d0[4])
            throw std::invalid_argument("concat_channels: shape mismatch");
        ctotal += d[1];
    }
    const std::size_t nb = d0[0], spatial = d0[2] * d0[3] * d0[4];
    ComplexTensor out({nb, ctotal, d0[2], d0[3], d0[4]});
    for (std::size_t n = 0; n < nb; ++n) {
        std::size_t coff = 0;
        for (const auto* p : parts) {
            std::size_t pc = p->dim(1);
            std::memcpy(out.data() + (n * ctotal + coff) * spatial,
                        p->data() + n * pc * spatial, pc * spatial * sizeof(cplx));
            coff += pc;
        }
    }
    return out;
}

std::vector<ComplexTensor> split_channels(const ComplexTensor& x,
                                          const std::vector<std::size_t>& channels) {
    std::size_t total = 0;
    for (std::size_t c : channels) total += c;
    if (total != x.dim(1)) throw std::invalid_argument("split_channels: channel mismatch");
    const std::size_t nb = x.dim(0), spatial = x.dim(2) * x.dim(3) * x.dim(4);
    std::vector<ComplexTensor> out;
    std::size_t coff = 0;
    for (std::size_t c : channels) {
        ComplexTensor part({nb, c, x.dim(2), x.dim(3), x.dim(4)});
        for (std::size_t n = 0; n < nb; ++n)
            std::memcpy(part.data() + n * c * spatial,
                        x.data() + (n * x.dim(1) + coff) * spatial,
                        c * spatial * sizeof(cplx));
        out.push_back(std::move(part));
        coff += c;
    }
    return out;
}

double complex_l2_loss(const ComplexTensor& pred, const ComplexTensor& target,
                       ComplexTensor* grad) {
    if (pred.dims() != target.dims())
        throw std::invalid_argument("complex_l2_loss: shape mismatch");
    if (pred.ndim() != 2) throw std::invalid_argument("complex_l2_loss: expect [N, Ne]");
    const std::size_t nb = pred.dim(0), ne = pred.dim(1);
    double loss = 0.0;
    if (grad) *grad = ComplexTensor(pred.dims());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        cplx d = pred[i] - target[i];
        loss += std::norm(d);
        if (grad)
            (*grad)[i] = 2.0 * d / static_cast<double>(ne * nb);
    }
    return loss / static_cast<double>(ne * nb);
}

}  // namespace ulmpac::cvcnn
