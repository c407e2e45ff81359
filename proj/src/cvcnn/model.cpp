#include <sstream>

#include "ulmpac/cvcnn.hpp"

namespace ulmpac::cvcnn {

namespace {

std::size_t ch(std::size_t paper_channels, std::size_t div) {
    std::size_t c = paper_channels / div;
    return c == 0 ? 1 : c;
}

// Conv + complex batchnorm + CReLU, the repeating unit of both conv blocks.
struct Block {
    Conv3d conv;
    BatchNorm bn;
    CReLU act;

    Block(const std::string& name, std::size_t cin, std::size_t cout, Shape3 k,
          Shape3 stride = {1, 1, 1}, Pad3 plo = {0, 0, 0}, Pad3 phi = {0, 0, 0})
        : conv(name, cin, cout, k, stride, plo, phi), bn(name, cout), act(name) {}

    static Block same(const std::string& name, std::size_t cin, std::size_t cout, Shape3 k) {
        return Block(name, cin, cout, k, {1, 1, 1}, Conv3d::same_lo(k), Conv3d::same_hi(k));
    }

    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) {
        return act.forward(bn.forward(conv.forward(x, ctx), ctx), ctx);
    }
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) {
        return conv.backward(bn.backward(act.backward(gy, ctx), ctx), ctx);
    }
    void collect(std::vector<Param*>& out) {
        conv.collect_params(out);
        bn.collect_params(out);
    }
    void layers(std::vector<Layer*>& out) {
        out.push_back(&conv);
        out.push_back(&bn);
        out.push_back(&act);
    }
};

// Transposed conv + batchnorm, activation applied by the caller (after the
// optional skip addition).
struct UpBlock {
    ConvTranspose3d conv;
    BatchNorm bn;
    CReLU act;

    UpBlock(const std::string& name, std::size_t cin, std::size_t cout)
        : conv(name, cin, cout, {1, 1, 3}, {1, 1, 2}, {0, 0, 1}, {0, 0, 0}),
          bn(name, cout),
          act(name) {}

    void collect(std::vector<Param*>& out) {
        conv.collect_params(out);
        bn.collect_params(out);
    }
    void layers(std::vector<Layer*>& out) {
        out.push_back(&conv);
        out.push_back(&bn);
        out.push_back(&act);
    }
};

}  // namespace

ModelSpec spec_for(Scale scale) {
    ModelSpec s;
    if (scale == Scale::Paper) {
        s = {Scale::Paper, 11, 16, 17, 128, 1};
    } else {
        s = {Scale::Desk, 3, 8, 9, 16, 8};
    }
    return s;
}

struct Model::Impl {
    ModelSpec spec;

    Block c1a, c1b, c1c;
    Block i_b1a, i_b1b;
    Block i_b2a, i_b2b, i_b2c;
    Block i_b3;
    AvgPool3d i_pool;
    Block i_b4;
    Block c2a, c2b, c2c;
    Dropout drop;
    Block c2d;
    GlobalAvgPool gpool;
    Block vd1, vd2;
    UpBlock vu1, vu2;
    Conv3d proj1, proj2;
    UpBlock dc1, dc2;
    Dense fc;

    // Forward caches for the branch points.
    ComplexTensor inc_in_, pooled_, vd1_out_;
    std::vector<std::size_t> inc_channels_;

    explicit Impl(const ModelSpec& sp)
        : spec(sp),
          c1a(Block::same("c1a", sp.angles, ch(256, sp.channel_div), {3, 3, 7})),
          c1b("c1b", ch(256, sp.channel_div), ch(128, sp.channel_div), {2, 3, 4},
              {2, 2, 2}, {0, 1, 1}, {0, 1, 1}),
          c1c("c1c", ch(128, sp.channel_div), ch(32, sp.channel_div), {1, 1, 1}),
          i_b1a("inc.b1a", ch(32, sp.channel_div), ch(48, sp.channel_div), {1, 1, 1}),
          i_b1b(Block::same("inc.b1b", ch(48, sp.channel_div), ch(64, sp.channel_div),
                            {5, 5, 5})),
          i_b2a("inc.b2a", ch(32, sp.channel_div), ch(64, sp.channel_div), {1, 1, 1}),
          i_b2b(Block::same("inc.b2b", ch(64, sp.channel_div), ch(96, sp.channel_div),
                            {3, 3, 3})),
          i_b2c(Block::same("inc.b2c", ch(96, sp.channel_div), ch(96, sp.channel_div),
                            {3, 3, 3})),
          i_b3("inc.b3", ch(32, sp.channel_div), ch(64, sp.channel_div), {1, 1, 1}),
          i_pool("inc.pool", {3, 3, 3}),
          i_b4("inc.b4", ch(32, sp.channel_div), ch(32, sp.channel_div), {1, 1, 1}),
          c2a(Block::same("c2a",
                          ch(64, sp.channel_div) + ch(96, sp.channel_div) +
                              ch(64, sp.channel_div) + ch(32, sp.channel_div),
                          ch(64, sp.channel_div), {3, 3, 3})),
          c2b("c2b", ch(64, sp.channel_div), ch(32, sp.channel_div), {4, 4, 4}, {2, 2, 2},
              {1, 1, 1}, {1, 2, 1}),
          c2c("c2c", ch(32, sp.channel_div), ch(32, sp.channel_div), {1, 1, 1}),
          drop("c2c", 0.2),
          c2d(Block::same("c2d", ch(32, sp.channel_div), ch(16, sp.channel_div), {3, 3, 3})),
          gpool("gpool"),
          vd1("vd1", ch(16, sp.channel_div), ch(32, sp.channel_div), {1, 1, 3}, {1, 1, 2},
              {0, 0, 1}, {0, 0, 0}),
          vd2("vd2", ch(32, sp.channel_div), ch(64, sp.channel_div), {1, 1, 3}, {1, 1, 2},
              {0, 0, 1}, {0, 0, 0}),
          vu1("vu1", ch(64, sp.channel_div), ch(16, sp.channel_div)),
          vu2("vu2", ch(16, sp.channel_div), ch(8, sp.channel_div)),
          proj1("proj1", ch(32, sp.channel_div), ch(16, sp.channel_div), {1, 1, 1}),
          proj2("proj2", ch(16, sp.channel_div), ch(8, sp.channel_div), {1, 1, 1}),
          dc1("dc1", ch(8, sp.channel_div), ch(64, sp.channel_div)),
          dc2("dc2", ch(64, sp.channel_div), ch(128, sp.channel_div)),
          fc("fc", ch(128, sp.channel_div) * sp.elements, sp.elements) {
        inc_channels_ = {ch(64, sp.channel_div), ch(96, sp.channel_div),
                         ch(64, sp.channel_div), ch(32, sp.channel_div)};
    }

    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) {
        if (x.ndim() != 5 || x.dim(1) != spec.angles || x.dim(2) != spec.frames ||
            x.dim(3) != spec.samples || x.dim(4) != spec.elements) {
            std::ostringstream os;
            os << "cvcnn: input shape mismatch, expected [N," << spec.angles << ','
               << spec.frames << ',' << spec.samples << ',' << spec.elements << ']';
            throw std::invalid_argument(os.str());
        }
        ComplexTensor t = c1c.forward(c1b.forward(c1a.forward(x, ctx), ctx), ctx);
        inc_in_ = t;
        ComplexTensor b1 = i_b1b.forward(i_b1a.forward(t, ctx), ctx);
        ComplexTensor b2 =
            i_b2c.forward(i_b2b.forward(i_b2a.forward(t, ctx), ctx), ctx);
        ComplexTensor b3 = i_b3.forward(t, ctx);
        ComplexTensor b4 = i_b4.forward(i_pool.forward(t, ctx), ctx);
        t = concat_channels({&b1, &b2, &b3, &b4});

        t = c2a.forward(t, ctx);
        t = c2b.forward(t, ctx);
        t = c2c.forward(t, ctx);
        t = drop.forward(t, ctx);
        t = c2d.forward(t, ctx);
        t = gpool.forward(t, ctx);
        pooled_ = t;

        ComplexTensor d1 = vd1.forward(t, ctx);
        vd1_out_ = d1;
        ComplexTensor d2 = vd2.forward(d1, ctx);

        ComplexTensor u1 = vu1.bn.forward(vu1.conv.forward(d2, ctx), ctx);
        ComplexTensor s1 = proj1.forward(d1, ctx);
        for (std::size_t i = 0; i < u1.size(); ++i) u1[i] += s1[i];
        u1 = vu1.act.forward(u1, ctx);

        ComplexTensor u2 = vu2.bn.forward(vu2.conv.forward(u1, ctx), ctx);
        ComplexTensor s2 = proj2.forward(pooled_, ctx);
        for (std::size_t i = 0; i < u2.size(); ++i) u2[i] += s2[i];
        u2 = vu2.act.forward(u2, ctx);

        t = dc1.act.forward(dc1.bn.forward(dc1.conv.forward(u2, ctx), ctx), ctx);
        t = dc2.act.forward(dc2.bn.forward(dc2.conv.forward(t, ctx), ctx), ctx);
        return fc.forward(t, ctx);
    }

    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) {
        ComplexTensor g = fc.backward(gy, ctx);
        g = dc2.conv.backward(dc2.bn.backward(dc2.act.backward(g, ctx), ctx), ctx);
        g = dc1.conv.backward(dc1.bn.backward(dc1.act.backward(g, ctx), ctx), ctx);

        g = vu2.act.backward(g, ctx);
        ComplexTensor g_pool_skip = proj2.backward(g, ctx);
        g = vu2.conv.backward(vu2.bn.backward(g, ctx), ctx);

        g = vu1.act.backward(g, ctx);
        ComplexTensor g_d1_skip = proj1.backward(g, ctx);
        g = vu1.conv.backward(vu1.bn.backward(g, ctx), ctx);

        g = vd2.backward(g, ctx);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_d1_skip[i];
        g = vd1.backward(g, ctx);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_pool_skip[i];

        g = gpool.backward(g, ctx);
        g = c2d.backward(g, ctx);
        g = drop.backward(g, ctx);
        g = c2c.backward(g, ctx);
        g = c2b.backward(g, ctx);
        g = c2a.backward(g, ctx);

        std::vector<ComplexTensor> parts = split_channels(g, inc_channels_);
        ComplexTensor g1 = i_b1a.backward(i_b1b.backward(parts[0], ctx), ctx);
        ComplexTensor g2 =
            i_b2a.backward(i_b2b.backward(i_b2c.backward(parts[1], ctx), ctx), ctx);
        ComplexTensor g3 = i_b3.backward(parts[2], ctx);
        ComplexTensor g4 = i_pool.backward(i_b4.backward(parts[3], ctx), ctx);
        for (std::size_t i = 0; i < g1.size(); ++i) g1[i] += g2[i] + g3[i] + g4[i];

        g = c1c.backward(g1, ctx);
        g = c1b.backward(g, ctx);
        return c1a.backward(g, ctx);
    }

    void collect(std::vector<Param*>& out) {
        c1a.collect(out);
        c1b.collect(out);
        c1c.collect(out);
        i_b1a.collect(out);
        i_b1b.collect(out);
        i_b2a.collect(out);
        i_b2b.collect(out);
        i_b2c.collect(out);
        i_b3.collect(out);
        i_b4.collect(out);
        c2a.collect(out);
        c2b.collect(out);
        c2c.collect(out);
        c2d.collect(out);
        vd1.collect(out);
        vd2.collect(out);
        vu1.collect(out);
        vu2.collect(out);
        proj1.collect_params(out);
        proj2.collect_params(out);
        dc1.collect(out);
        dc2.collect(out);
        fc.collect_params(out);
    }

    void layer_list(std::vector<Layer*>& out) {
        c1a.layers(out);
        c1b.layers(out);
        c1c.layers(out);
        i_b1a.layers(out);
        i_b1b.layers(out);
        i_b2a.layers(out);
        i_b2b.layers(out);
        i_b2c.layers(out);
        i_b3.layers(out);
        out.push_back(&i_pool);
        i_b4.layers(out);
        c2a.layers(out);
        c2b.layers(out);
        c2c.layers(out);
        out.push_back(&drop);
        c2d.layers(out);
        out.push_back(&gpool);
        vd1.layers(out);
        vd2.layers(out);
        vu1.layers(out);
        vu2.layers(out);
        out.push_back(&proj1);
        out.push_back(&proj2);
        dc1.layers(out);
        dc2.layers(out);
        out.push_back(&fc);
    }
};

Model::Model(const ModelSpec& spec) : impl_(std::make_shared<Impl>(spec)), spec_(spec) {}

ComplexTensor Model::forward(const ComplexTensor& x, Ctx& ctx) {
    return impl_->forward(x, ctx);
}

ComplexTensor Model::backward(const ComplexTensor& gy, Ctx& ctx) {
    return impl_->backward(gy, ctx);
}

std::vector<Param*> Model::params() {
    std::vector<Param*> out;
    impl_->collect(out);
    return out;
}

std::vector<Layer*> Model::layers() {
    std::vector<Layer*> out;
    impl_->layer_list(out);
    return out;
}

void Model::init_weights(std::uint64_t seed) {
    Rng rng(seed);
    for (Layer* l : layers()) l->init(rng);
}

void Model::zero_grad() {
    for (Param* p : params()) p->zero_grad();
}

std::string Model::describe() const {
    std::vector<Layer*> ls;
    impl_->layer_list(ls);
    std::ostringstream os;
    for (Layer* l : ls) os << l->describe() << '\n';
    return os.str();
}

ComplexTensor patch_to_input(const RealignedPatch& patch) {
    // [Ntheta x Nf x Nt x Ne] maps directly onto [C x D x H x W].
    return ComplexTensor(
        {patch.num_angles(), patch.num_frames(), patch.num_samples(), patch.num_elements()},
        std::vector<cplx>(patch.data.data(), patch.data.data() + patch.data.size()));
}

ComplexTensor batch_inputs(const std::vector<const RealignedPatch*>& patches) {
    if (patches.empty()) throw std::invalid_argument("batch_inputs: empty");
    const RealignedPatch& p0 = *patches[0];
    ComplexTensor out({patches.size(), p0.num_angles(), p0.num_frames(), p0.num_samples(),
                       p0.num_elements()});
    const std::size_t per = p0.data.size();
    for (std::size_t n = 0; n < patches.size(); ++n) {
        if (patches[n]->data.size() != per)
            throw std::invalid_argument("batch_inputs: shape mismatch");
        std::copy(patches[n]->data.data(), patches[n]->data.data() + per,
                  out.data() + n * per);
    }
    return out;
}

ComplexTensor batch_targets(const std::vector<const AberrationFunction*>& targets) {
    if (targets.empty()) throw std::invalid_argument("batch_targets: empty");
    const std::size_t ne = targets[0]->size();
    ComplexTensor out({targets.size(), ne});
    for (std::size_t n = 0; n < targets.size(); ++n) {
        if (targets[n]->size() != ne)
            throw std::invalid_argument("batch_targets: length mismatch");
        for (std::size_t i = 0; i < ne; ++i) out.data()[n * ne + i] = targets[n]->value(i);
    }
    return out;
}

AberrationFunction infer(Model& model, const RealignedPatch& patch, int workers) {
    Ctx ctx;
    ctx.training = false;
    ctx.workers = workers;
    ComplexTensor x = patch_to_input(patch);
    ComplexTensor in({1, x.dim(0), x.dim(1), x.dim(2), x.dim(3)},
                     std::vector<cplx>(x.data(), x.data() + x.size()));
    ComplexTensor y = model.forward(in, ctx);
    const std::size_t ne = y.dim(1);
    std::vector<double> amp(ne), phase(ne);
    for (std::size_t n = 0; n < ne; ++n) {
        double a = std::abs(y.data()[n]);
        amp[n] = std::clamp(a, 1e-6, 1.0);
        phase[n] = a > 0.0 ? std::arg(y.data()[n]) : 0.0;
    }
    return AberrationFunction::from_amp_phase(amp, phase);
}

}  // namespace ulmpac::cvcnn
