#include <sstream>

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

void rayleigh_phase_init(std::vector<double>& w, std::size_t fan_in, std::size_t fan_out,
                         Rng& rng) {
    double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < w.size() / 2; ++i) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        double mag = sigma * std::sqrt(-2.0 * std::log(u));
        double phi = rng.uniform(-M_PI, M_PI);
        w[2 * i] = mag * std::cos(phi);
        w[2 * i + 1] = mag * std::sin(phi);
    }
}

std::string shape_str(const Shape3& s) {
    std::ostringstream os;
    os << '(' << s[0] << ',' << s[1] << ',' << s[2] << ')';
    return os.str();
}

}  // namespace

Conv3d::Conv3d(std::string name, std::size_t cin, std::size_t cout, Shape3 k,
               Shape3 stride, Pad3 pad_lo, Pad3 pad_hi)
    : cin(cin), cout(cout), k(k), stride(stride), pad_lo(pad_lo), pad_hi(pad_hi) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.v.assign(2 * cout * cin * k[0] * k[1] * k[2], 0.0);
    weight.g = weight.v;
    bias.v.assign(2 * cout, 0.0);
    bias.g = bias.v;
    bias.decay = false;
}

ComplexTensor Conv3d::forward(const ComplexTensor& x, Ctx& ctx) {
    if (x.dim(1) != cin) throw std::invalid_argument(weight.name + ": channel mismatch");
    x_ = x;
    return conv3d_forward(x, weight.v, bias.v, cout, k, stride, pad_lo, pad_hi, ctx.workers);
}

ComplexTensor Conv3d::backward(const ComplexTensor& gy, Ctx& ctx) {
    ComplexTensor gx;
    conv3d_backward(x_, weight.v, gy, cout, k, stride, pad_lo, pad_hi, &gx, &weight.g,
                    &bias.g, ctx.workers);
    return gx;
}

void Conv3d::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

void Conv3d::init(Rng& rng) {
    std::size_t kvol = k[0] * k[1] * k[2];
    rayleigh_phase_init(weight.v, cin * kvol, cout * kvol, rng);
    std::fill(bias.v.begin(), bias.v.end(), 0.0);
}

std::string Conv3d::describe() const {
    std::ostringstream os;
    os << weight.name << ": conv3d " << cin << "->" << cout << " k" << shape_str(k)
       << " s" << shape_str(stride);
    return os.str();
}

ConvTranspose3d::ConvTranspose3d(std::string name, std::size_t cin, std::size_t cout,
                                 Shape3 k, Shape3 stride, Pad3 pad_lo, Pad3 pad_hi)
    : cin(cin), cout(cout), k(k), stride(stride), pad_lo(pad_lo), pad_hi(pad_hi) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.v.assign(2 * cout * cin * k[0] * k[1] * k[2], 0.0);
    weight.g = weight.v;
    bias.v.assign(2 * cout, 0.0);
    bias.g = bias.v;
    bias.decay = false;
}

ComplexTensor ConvTranspose3d::forward(const ComplexTensor& x, Ctx& ctx) {
    if (x.ndim() != 5 || x.dim(1) != cin)
        throw std::invalid_argument(weight.name + ": shape mismatch");
    x_ = x;
    const std::size_t nb = x.dim(0);
    const std::size_t id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    auto out_dim = [&](std::size_t in, std::size_t kk, std::size_t s, std::size_t lo,
                       std::size_t hi) -> std::size_t {
        long v = static_cast<long>((in - 1) * s + kk) - static_cast<long>(lo + hi);
        if (v <= 0) throw std::invalid_argument(weight.name + ": degenerate output");
        return static_cast<std::size_t>(v);
    };
    const std::size_t od = out_dim(id, k[0], stride[0], pad_lo[0], pad_hi[0]);
    const std::size_t oh = out_dim(ih, k[1], stride[1], pad_lo[1], pad_hi[1]);
    const std::size_t ow = out_dim(iw, k[2], stride[2], pad_lo[2], pad_hi[2]);

    ComplexTensor y({nb, cout, od, oh, ow});
    const std::size_t ospatial = od * oh * ow;
    parallel_for(nb * cout, ctx.workers, [&](std::size_t job) {
        const std::size_t n = job / cout, co = job % cout;
        cplx* out = y.data() + (n * cout + co) * ospatial;
        cplx b = wread(bias.v, co);
        for (std::size_t i = 0; i < ospatial; ++i) out[i] = b;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const cplx* xc = x.data() + ((n * cin + ci) * id) * ih * iw;
            std::size_t wbase = ((co * cin + ci) * k[0]) * k[1] * k[2];
            for (std::size_t zi = 0; zi < id; ++zi)
                for (std::size_t hi2 = 0; hi2 < ih; ++hi2)
                    for (std::size_t wi = 0; wi < iw; ++wi) {
                        cplx xv = xc[(zi * ih + hi2) * iw + wi];
                        if (xv == cplx{}) continue;
                        for (std::size_t kz = 0; kz < k[0]; ++kz) {
                            long zo = static_cast<long>(zi * stride[0] + kz) -
                                      static_cast<long>(pad_lo[0]);
                            if (zo < 0 || zo >= static_cast<long>(od)) continue;
                            for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                long ho = static_cast<long>(hi2 * stride[1] + kh) -
                                          static_cast<long>(pad_lo[1]);
                                if (ho < 0 || ho >= static_cast<long>(oh)) continue;
                                std::size_t wrow = wbase + (kz * k[1] + kh) * k[2];
                                for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                    long wo = static_cast<long>(wi * stride[2] + kw) -
                                              static_cast<long>(pad_lo[2]);
                                    if (wo < 0 || wo >= static_cast<long>(ow)) continue;
                                    out[(static_cast<std::size_t>(zo) * oh +
                                         static_cast<std::size_t>(ho)) * ow +
                                        static_cast<std::size_t>(wo)] +=
                                        wread(weight.v, wrow + kw) * xv;
                                }
                            }
                        }
                    }
        }
    });
    return y;
}

ComplexTensor ConvTranspose3d::backward(const ComplexTensor& gy, Ctx& ctx) {
    const std::size_t nb = x_.dim(0);
    const std::size_t id = x_.dim(2), ih = x_.dim(3), iw = x_.dim(4);
    const std::size_t od = gy.dim(2), oh = gy.dim(3), ow = gy.dim(4);
    const std::size_t ospatial = od * oh * ow;

    ComplexTensor gx(x_.dims());
    parallel_for(nb * cin, ctx.workers, [&](std::size_t job) {
        const std::size_t n = job / cin, ci = job % cin;
        cplx* gxc = gx.data() + ((n * cin + ci) * id) * ih * iw;
        for (std::size_t co = 0; co < cout; ++co) {
            const cplx* gyc = gy.data() + (n * cout + co) * ospatial;
            std::size_t wbase = ((co * cin + ci) * k[0]) * k[1] * k[2];
            for (std::size_t zi = 0; zi < id; ++zi)
                for (std::size_t hi2 = 0; hi2 < ih; ++hi2)
                    for (std::size_t wi = 0; wi < iw; ++wi) {
                        cplx acc{};
                        for (std::size_t kz = 0; kz < k[0]; ++kz) {
                            long zo = static_cast<long>(zi * stride[0] + kz) -
                                      static_cast<long>(pad_lo[0]);
                            if (zo < 0 || zo >= static_cast<long>(od)) continue;
                            for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                long ho = static_cast<long>(hi2 * stride[1] + kh) -
                                          static_cast<long>(pad_lo[1]);
                                if (ho < 0 || ho >= static_cast<long>(oh)) continue;
                                std::size_t wrow = wbase + (kz * k[1] + kh) * k[2];
                                for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                    long wo = static_cast<long>(wi * stride[2] + kw) -
                                              static_cast<long>(pad_lo[2]);
                                    if (wo < 0 || wo >= static_cast<long>(ow)) continue;
                                    acc += std::conj(wread(weight.v, wrow + kw)) *
                                           gyc[(static_cast<std::size_t>(zo) * oh +
                                                static_cast<std::size_t>(ho)) * ow +
                                               static_cast<std::size_t>(wo)];
                                }
                            }
                        }
                        gxc[(zi * ih + hi2) * iw + wi] += acc;
                    }
        }
    });

    parallel_for(cout, ctx.workers, [&](std::size_t co) {
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* gyc = gy.data() + (n * cout + co) * ospatial;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const cplx* xc = x_.data() + ((n * cin + ci) * id) * ih * iw;
                std::size_t wbase = ((co * cin + ci) * k[0]) * k[1] * k[2];
                for (std::size_t zi = 0; zi < id; ++zi)
                    for (std::size_t hi2 = 0; hi2 < ih; ++hi2)
                        for (std::size_t wi = 0; wi < iw; ++wi) {
                            cplx xv = xc[(zi * ih + hi2) * iw + wi];
                            if (xv == cplx{}) continue;
                            for (std::size_t kz = 0; kz < k[0]; ++kz) {
                                long zo = static_cast<long>(zi * stride[0] + kz) -
                                          static_cast<long>(pad_lo[0]);
                                if (zo < 0 || zo >= static_cast<long>(od)) continue;
                                for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                    long ho = static_cast<long>(hi2 * stride[1] + kh) -
                                              static_cast<long>(pad_lo[1]);
                                    if (ho < 0 || ho >= static_cast<long>(oh)) continue;
                                    std::size_t wrow = wbase + (kz * k[1] + kh) * k[2];
                                    for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                        long wo = static_cast<long>(wi * stride[2] + kw) -
                                                  static_cast<long>(pad_lo[2]);
                                        if (wo < 0 || wo >= static_cast<long>(ow)) continue;
                                        wadd(weight.g, wrow + kw,
                                             gyc[(static_cast<std::size_t>(zo) * oh +
                                                  static_cast<std::size_t>(ho)) * ow +
                                                 static_cast<std::size_t>(wo)] *
                                                 std::conj(xv));
                                    }
                                }
                            }
                        }
            }
        }
    });

    for (std::size_t co = 0; co < cout; ++co) {
        cplx acc{};
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* gyc = gy.data() + (n * cout + co) * ospatial;
            for (std::size_t i = 0; i < ospatial; ++i) acc += gyc[i];
        }
        wadd(bias.g, co, acc);
    }
    return gx;
}

void ConvTranspose3d::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

void ConvTranspose3d::init(Rng& rng) {
    std::size_t kvol = k[0] * k[1] * k[2];
    rayleigh_phase_init(weight.v, cin * kvol, cout * kvol, rng);
    std::fill(bias.v.begin(), bias.v.end(), 0.0);
}

std::string ConvTranspose3d::describe() const {
    std::ostringstream os;
    os << weight.name << ": convtranspose3d " << cin << "->" << cout << " k" << shape_str(k)
       << " s" << shape_str(stride);
    return os.str();
}

BatchNorm::BatchNorm(std::string name, std::size_t channels, double eps, double momentum)
    : channels(channels), eps(eps), momentum(momentum) {
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.decay = false;
    beta.decay = false;
    gamma.v.assign(3 * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        gamma.v[3 * c] = M_SQRT1_2;      // g_rr
        gamma.v[3 * c + 2] = M_SQRT1_2;  // g_ii
    }
    gamma.g.assign(gamma.v.size(), 0.0);
    beta.v.assign(2 * channels, 0.0);
    beta.g = beta.v;
    // Running stats start at the whitened fixed point: zero mean, V = I.
    running_.assign(5 * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        running_[5 * c + 2] = 1.0;
        running_[5 * c + 4] = 1.0;
    }
}

ComplexTensor BatchNorm::forward(const ComplexTensor& x, Ctx& ctx) {
    if (x.ndim() != 5 || x.dim(1) != channels)
        throw std::invalid_argument(gamma.name + ": shape mismatch");
    const std::size_t nb = x.dim(0), spatial = x.dim(2) * x.dim(3) * x.dim(4);
    const double count = static_cast<double>(nb * spatial);
    ComplexTensor y(x.dims());
    trained_forward_ = ctx.training;

    if (ctx.training) {
        xc_ = ComplexTensor(x.dims());
        xt_ = ComplexTensor(x.dims());
        s_.assign(3 * channels, 0.0);
        vsqrt_.assign(3 * channels, 0.0);
    }

    parallel_for(channels, ctx.workers, [&](std::size_t c) {
        double mr, mi, vrr, vri, vii;
        if (ctx.training) {
            cplx mean{};
            for (std::size_t n = 0; n < nb; ++n) {
                const cplx* xp = x.data() + (n * channels + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) mean += xp[i];
            }
            mean /= count;
            mr = mean.real();
            mi = mean.imag();
            vrr = vri = vii = 0.0;
            for (std::size_t n = 0; n < nb; ++n) {
                const cplx* xp = x.data() + (n * channels + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    double dr = xp[i].real() - mr, di = xp[i].imag() - mi;
                    vrr += dr * dr;
                    vri += dr * di;
                    vii += di * di;
                }
            }
            vrr = vrr / count + eps;
            vri = vri / count;
            vii = vii / count + eps;
            running_[5 * c] = (1.0 - momentum) * running_[5 * c] + momentum * mr;
            running_[5 * c + 1] = (1.0 - momentum) * running_[5 * c + 1] + momentum * mi;
            running_[5 * c + 2] = (1.0 - momentum) * running_[5 * c + 2] + momentum * vrr;
            running_[5 * c + 3] = (1.0 - momentum) * running_[5 * c + 3] + momentum * vri;
            running_[5 * c + 4] = (1.0 - momentum) * running_[5 * c + 4] + momentum * vii;
        } else {
            mr = running_[5 * c];
            mi = running_[5 * c + 1];
            vrr = running_[5 * c + 2] + eps;
            vri = running_[5 * c + 3];
            vii = running_[5 * c + 4] + eps;
        }

        double vs[3], si[3];
        sym2x2_sqrt_invsqrt(vrr, vri, vii, vs, si);
        double grr = gamma.v[3 * c], gri = gamma.v[3 * c + 1], gii = gamma.v[3 * c + 2];
        double br = beta.v[2 * c], bi = beta.v[2 * c + 1];
        if (ctx.training) {
            s_[3 * c] = si[0];
            s_[3 * c + 1] = si[1];
            s_[3 * c + 2] = si[2];
            vsqrt_[3 * c] = vs[0];
            vsqrt_[3 * c + 1] = vs[1];
            vsqrt_[3 * c + 2] = vs[2];
        }
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* xp = x.data() + (n * channels + c) * spatial;
            cplx* yp = y.data() + (n * channels + c) * spatial;
            cplx* cc = ctx.training ? xc_.data() + (n * channels + c) * spatial : nullptr;
            cplx* tt = ctx.training ? xt_.data() + (n * channels + c) * spatial : nullptr;
            for (std::size_t i = 0; i < spatial; ++i) {
                double dr = xp[i].real() - mr, di = xp[i].imag() - mi;
                double tr = si[0] * dr + si[1] * di;
                double ti = si[1] * dr + si[2] * di;
                if (cc) cc[i] = {dr, di};
                if (tt) tt[i] = {tr, ti};
                yp[i] = {grr * tr + gri * ti + br, gri * tr + gii * ti + bi};
            }
        }
    });
    return y;
}

ComplexTensor BatchNorm::backward(const ComplexTensor& gy, Ctx& ctx) {
    const std::size_t nb = gy.dim(0), spatial = gy.dim(2) * gy.dim(3) * gy.dim(4);
    const double count = static_cast<double>(nb * spatial);
    ComplexTensor gx(gy.dims());

    if (!trained_forward_) {
        // Eval mode: y = Gamma S (x - mu_r) + beta, a fixed affine map.
        parallel_for(channels, ctx.workers, [&](std::size_t c) {
            double vrr = running_[5 * c + 2] + eps;
            double vri = running_[5 * c + 3];
            double vii = running_[5 * c + 4] + eps;
            double vs[3], si[3];
            sym2x2_sqrt_invsqrt(vrr, vri, vii, vs, si);
            double grr = gamma.v[3 * c], gri = gamma.v[3 * c + 1], gii = gamma.v[3 * c + 2];
            for (std::size_t n = 0; n < nb; ++n) {
                const cplx* gp = gy.data() + (n * channels + c) * spatial;
                cplx* xp = gx.data() + (n * channels + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    double ar = grr * gp[i].real() + gri * gp[i].imag();
                    double ai = gri * gp[i].real() + gii * gp[i].imag();
                    xp[i] = {si[0] * ar + si[1] * ai, si[1] * ar + si[2] * ai};
                }
            }
        });
        return gx;
    }

    parallel_for(channels, ctx.workers, [&](std::size_t c) {
        double grr = gamma.v[3 * c], gri = gamma.v[3 * c + 1], gii = gamma.v[3 * c + 2];
        const double s0 = s_[3 * c], s1 = s_[3 * c + 1], s2 = s_[3 * c + 2];
        const double b0 = vsqrt_[3 * c], b1 = vsqrt_[3 * c + 1], b2 = vsqrt_[3 * c + 2];

        // Accumulate gradient pieces in one pass over the channel.
        double gbr = 0.0, gbi = 0.0;
        double ggrr = 0.0, ggri = 0.0, ggii = 0.0;
        double sum_gtr = 0.0, sum_gti = 0.0;  // sum of gxt (whitened grads)
        double gh00 = 0.0, gh01 = 0.0, gh10 = 0.0, gh11 = 0.0;  // Gbar = sum gxt c^T
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* gp = gy.data() + (n * channels + c) * spatial;
            const cplx* tt = xt_.data() + (n * channels + c) * spatial;
            const cplx* cc = xc_.data() + (n * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                double gr = gp[i].real(), gi = gp[i].imag();
                double tr = tt[i].real(), ti = tt[i].imag();
                gbr += gr;
                gbi += gi;
                ggrr += gr * tr;
                ggii += gi * ti;
                ggri += gr * ti + gi * tr;
                double gtr = grr * gr + gri * gi;
                double gti = gri * gr + gii * gi;
                sum_gtr += gtr;
                sum_gti += gti;
                gh00 += gtr * cc[i].real();
                gh01 += gtr * cc[i].imag();
                gh10 += gti * cc[i].real();
                gh11 += gti * cc[i].imag();
            }
        }
        beta.g[2 * c] += gbr;
        beta.g[2 * c + 1] += gbi;
        gamma.g[3 * c] += ggrr;
        gamma.g[3 * c + 1] += ggri;
        gamma.g[3 * c + 2] += ggii;

        // dL/dV via the Sylvester adjoint of the matrix inverse square root.
        double sg00 = s0 * gh00 + s1 * gh10;  // S * Gbar
        double sg01 = s0 * gh01 + s1 * gh11;
        double sg10 = s1 * gh00 + s2 * gh10;
        double sg11 = s1 * gh01 + s2 * gh11;
        double m00 = sg00 * s0 + sg01 * s1;  // (S Gbar) * S
        double m01 = sg00 * s1 + sg01 * s2;
        double m10 = sg10 * s0 + sg11 * s1;
        double m11 = sg10 * s1 + sg11 * s2;
        double cbar[3] = {-m00, -0.5 * (m01 + m10), -m11};
        double bmat[3] = {b0, b1, b2};
        double vbar[3];
        sym2x2_sylvester(bmat, cbar, vbar);

        const double mgtr = sum_gtr / count, mgti = sum_gti / count;
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* gp = gy.data() + (n * channels + c) * spatial;
            const cplx* cc = xc_.data() + (n * channels + c) * spatial;
            cplx* xp = gx.data() + (n * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                double gr = gp[i].real(), gi = gp[i].imag();
                double gtr = grr * gr + gri * gi - mgtr;
                double gti = gri * gr + gii * gi - mgti;
                double xr = s0 * gtr + s1 * gti;
                double xi = s1 * gtr + s2 * gti;
                double cr = cc[i].real(), cdi = cc[i].imag();
                xr += 2.0 / count * (vbar[0] * cr + vbar[1] * cdi);
                xi += 2.0 / count * (vbar[1] * cr + vbar[2] * cdi);
                xp[i] = {xr, xi};
            }
        }
    });
    return gx;
}

void BatchNorm::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

std::string BatchNorm::describe() const {
    return gamma.name + ": batchnorm " + std::to_string(channels);
}

ComplexTensor CReLU::forward(const ComplexTensor& x, Ctx&) {
    ComplexTensor y(x.dims());
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double re = x[i].real() > 0.0 ? x[i].real() : 0.0;
        double im = x[i].imag() > 0.0 ? x[i].imag() : 0.0;
        mask_[i] = static_cast<std::uint8_t>((x[i].real() > 0.0 ? 1 : 0) |
                                             (x[i].imag() > 0.0 ? 2 : 0));
        y[i] = {re, im};
    }
    return y;
}

ComplexTensor CReLU::backward(const ComplexTensor& gy, Ctx&) {
    ComplexTensor gx(gy.dims());
    for (std::size_t i = 0; i < gy.size(); ++i)
        gx[i] = {(mask_[i] & 1) ? gy[i].real() : 0.0, (mask_[i] & 2) ? gy[i].imag() : 0.0};
    return gx;
}

ComplexTensor Dropout::forward(const ComplexTensor& x, Ctx& ctx) {
    if (!ctx.training || p <= 0.0) {
        keep_.clear();
        return x;
    }
    if (!ctx.rng) throw std::logic_error("dropout: missing rng in training mode");
    ComplexTensor y(x.dims());
    keep_.assign(x.size(), 1);
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (ctx.rng->uniform() < p) {
            keep_[i] = 0;
            y[i] = {};
        } else {
            y[i] = x[i] * scale;
        }
    }
    return y;
}

ComplexTensor Dropout::backward(const ComplexTensor& gy, Ctx&) {
    if (keep_.empty()) return gy;
    ComplexTensor gx(gy.dims());
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < gy.size(); ++i)
        gx[i] = keep_[i] ? gy[i] * scale : cplx{};
    return gx;
}

ComplexTensor AvgPool3d::forward(const ComplexTensor& x, Ctx& ctx) {
    in_dims_ = x.dims();
    const std::size_t nb = x.dim(0), nc = x.dim(1);
    const std::size_t id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    const long lo0 = static_cast<long>((k[0] - 1) / 2);
    const long lo1 = static_cast<long>((k[1] - 1) / 2);
    const long lo2 = static_cast<long>((k[2] - 1) / 2);
    ComplexTensor y(x.dims());
    parallel_for(nb * nc, ctx.workers, [&](std::size_t job) {
        const cplx* xc = x.data() + job * id * ih * iw;
        cplx* yc = y.data() + job * id * ih * iw;
        for (std::size_t z = 0; z < id; ++z)
            for (std::size_t h = 0; h < ih; ++h)
                for (std::size_t w = 0; w < iw; ++w) {
                    cplx acc{};
                    int cnt = 0;
                    for (std::size_t kz = 0; kz < k[0]; ++kz) {
                        long zi = static_cast<long>(z + kz) - lo0;
                        if (zi < 0 || zi >= static_cast<long>(id)) continue;
                        for (std::size_t kh = 0; kh < k[1]; ++kh) {
                            long hi = static_cast<long>(h + kh) - lo1;
                            if (hi < 0 || hi >= static_cast<long>(ih)) continue;
                            for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                long wi = static_cast<long>(w + kw) - lo2;
                                if (wi < 0 || wi >= static_cast<long>(iw)) continue;
                                acc += xc[(static_cast<std::size_t>(zi) * ih +
                                           static_cast<std::size_t>(hi)) * iw +
                                          static_cast<std::size_t>(wi)];
                                ++cnt;
                            }
                        }
                    }
                    yc[(z * ih + h) * iw + w] = acc / static_cast<double>(cnt);
                }
    });
    return y;
}

ComplexTensor AvgPool3d::backward(const ComplexTensor& gy, Ctx& ctx) {
    const std::size_t nb = in_dims_[0], nc = in_dims_[1];
    const std::size_t id = in_dims_[2], ih = in_dims_[3], iw = in_dims_[4];
    const long lo0 = static_cast<long>((k[0] - 1) / 2);
    const long lo1 = static_cast<long>((k[1] - 1) / 2);
    const long lo2 = static_cast<long>((k[2] - 1) / 2);
    ComplexTensor gx(in_dims_);
    parallel_for(nb * nc, ctx.workers, [&](std::size_t job) {
        const cplx* gc = gy.data() + job * id * ih * iw;
        cplx* xc = gx.data() + job * id * ih * iw;
        for (std::size_t z = 0; z < id; ++z)
            for (std::size_t h = 0; h < ih; ++h)
                for (std::size_t w = 0; w < iw; ++w) {
                    int cnt = 0;
                    for (std::size_t kz = 0; kz < k[0]; ++kz) {
                        long zi = static_cast<long>(z + kz) - lo0;
                        if (zi < 0 || zi >= static_cast<long>(id)) continue;
                        for (std::size_t kh = 0; kh < k[1]; ++kh) {
                            long hi = static_cast<long>(h + kh) - lo1;
                            if (hi < 0 || hi >= static_cast<long>(ih)) continue;
                            for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                long wi = static_cast<long>(w + kw) - lo2;
                                if (wi >= 0 && wi < static_cast<long>(iw)) ++cnt;
                            }
                        }
                    }
                    cplx g = gc[(z * ih + h) * iw + w] / static_cast<double>(cnt);
                    for (std::size_t kz = 0; kz < k[0]; ++kz) {
                        long zi = static_cast<long>(z + kz) - lo0;
                        if (zi < 0 || zi >= static_cast<long>(id)) continue;
                        for (std::size_t kh = 0; kh < k[1]; ++kh) {
                            long hi = static_cast<long>(h + kh) - lo1;
                            if (hi < 0 || hi >= static_cast<long>(ih)) continue;
                            for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                long wi = static_cast<long>(w + kw) - lo2;
                                if (wi < 0 || wi >= static_cast<long>(iw)) continue;
                                xc[(static_cast<std::size_t>(zi) * ih +
                                    static_cast<std::size_t>(hi)) * iw +
                                   static_cast<std::size_t>(wi)] += g;
                            }
                        }
                    }
                }
    });
    return gx;
}

ComplexTensor GlobalAvgPool::forward(const ComplexTensor& x, Ctx&) {
    in_dims_ = x.dims();
    const std::size_t nb = x.dim(0), nc = x.dim(1);
    const std::size_t id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    const double count = static_cast<double>(id * ih);
    ComplexTensor y({nb, nc, 1, 1, iw});
    for (std::size_t n = 0; n < nb; ++n)
        for (std::size_t c = 0; c < nc; ++c) {
            const cplx* xc = x.data() + (n * nc + c) * id * ih * iw;
            cplx* yc = y.data() + (n * nc + c) * iw;
            for (std::size_t w = 0; w < iw; ++w) {
                cplx acc{};
                for (std::size_t z = 0; z < id; ++z)
                    for (std::size_t h = 0; h < ih; ++h) acc += xc[(z * ih + h) * iw + w];
                yc[w] = acc / count;
            }
        }
    return y;
}

ComplexTensor GlobalAvgPool::backward(const ComplexTensor& gy, Ctx&) {
    const std::size_t nb = in_dims_[0], nc = in_dims_[1];
    const std::size_t id = in_dims_[2], ih = in_dims_[3], iw = in_dims_[4];
    const double count = static_cast<double>(id * ih);
    ComplexTensor gx(in_dims_);
    for (std::size_t n = 0; n < nb; ++n)
        for (std::size_t c = 0; c < nc; ++c) {
            const cplx* gc = gy.data() + (n * nc + c) * iw;
            cplx* xc = gx.data() + (n * nc + c) * id * ih * iw;
            for (std::size_t w = 0; w < iw; ++w) {
                cplx g = gc[w] / count;
                for (std::size_t z = 0; z < id; ++z)
                    for (std::size_t h = 0; h < ih; ++h) xc[(z * ih + h) * iw + w] = g;
            }
        }
    return gx;
}

Dense::Dense(std::string name, std::size_t in_features, std::size_t out_features)
    : in_features(in_features), out_features(out_features) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.v.assign(2 * out_features * in_features, 0.0);
    weight.g = weight.v;
    bias.v.assign(2 * out_features, 0.0);
    bias.g = bias.v;
    bias.decay = false;
}

ComplexTensor Dense::forward(const ComplexTensor& x, Ctx& ctx) {
    const std::size_t nb = x.dim(0);
    if (x.size() != nb * in_features)
        throw std::invalid_argument(weight.name + ": flatten size mismatch");
    in_dims_ = x.dims();
    x_ = x;
    ComplexTensor y({nb, out_features});
    parallel_for(nb, ctx.workers, [&](std::size_t n) {
        const cplx* xv = x.data() + n * in_features;
        cplx* yv = y.data() + n * out_features;
        for (std::size_t o = 0; o < out_features; ++o) {
            cplx acc = wread(bias.v, o);
            const std::size_t wbase = o * in_features;
            for (std::size_t i = 0; i < in_features; ++i)
                acc += wread(weight.v, wbase + i) * xv[i];
            yv[o] = acc;
        }
    });
    return y;
}

ComplexTensor Dense::backward(const ComplexTensor& gy, Ctx& ctx) {
    const std::size_t nb = gy.dim(0);
    ComplexTensor gx(in_dims_);
    parallel_for(nb, ctx.workers, [&](std::size_t n) {
        const cplx* gv = gy.data() + n * out_features;
        cplx* xv = gx.data() + n * in_features;
        for (std::size_t o = 0; o < out_features; ++o) {
            cplx g = gv[o];
            if (g == cplx{}) continue;
            const std::size_t wbase = o * in_features;
            for (std::size_t i = 0; i < in_features; ++i)
                xv[i] += std::conj(wread(weight.v, wbase + i)) * g;
        }
    });
    for (std::size_t o = 0; o < out_features; ++o) {
        cplx gbias{};
        const std::size_t wbase = o * in_features;
        for (std::size_t n = 0; n < nb; ++n) {
            cplx g = gy.data()[n * out_features + o];
            gbias += g;
            const cplx* xv = x_.data() + n * in_features;
            for (std::size_t i = 0; i < in_features; ++i)
                wadd(weight.g, wbase + i, g * std::conj(xv[i]));
        }
        wadd(bias.g, o, gbias);
    }
    return gx;
}

void Dense::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

void Dense::init(Rng& rng) {
    rayleigh_phase_init(weight.v, in_features, out_features, rng);
    std::fill(bias.v.begin(), bias.v.end(), 0.0);
}

std::string Dense::describe() const {
    std::ostringstream os;
    os << weight.name << ": dense " << in_features << "->" << out_features;
    return os.str();
}

}  // namespace ulmpac::cvcnn
