#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <vector>

#include "ulmpac/cvcnn.hpp"
#include "ulmpac/rng.hpp"

using namespace ulmpac;
using namespace ulmpac::cvcnn;

namespace {

ComplexTensor random_tensor(std::vector<std::size_t> dims, Rng& rng, double scale = 1.0) {
    ComplexTensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = {scale * rng.gaussian(), scale * rng.gaussian()};
    return t;
}

std::vector<Sample> make_samples(const ModelSpec& sp, std::size_t count, Rng& rng) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < count; ++i) {
        Sample s;
        s.input = random_tensor({sp.angles, sp.frames, sp.samples, sp.elements}, rng, 0.3);
        s.target.resize(sp.elements);
        for (auto& t : s.target) {
            double ph = rng.uniform(-M_PI, M_PI);
            t = {std::cos(ph), std::sin(ph)};
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> snapshot(Model& model) {
    std::vector<double> out;
    for (const Param* p : model.params()) out.insert(out.end(), p->v.begin(), p->v.end());
    return out;
}

std::string temp_dir(const char* tag) {
    auto p = std::filesystem::temp_directory_path() / tag;
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("desk model maps the input block to one value per element") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(1);
    Ctx ctx;
    ctx.workers = 2;
    Rng rng(2);
    ComplexTensor x = random_tensor({2, sp.angles, sp.frames, sp.samples, sp.elements}, rng);
    ComplexTensor y = model.forward(x, ctx);
    REQUIRE(y.dims() == std::vector<std::size_t>({2, sp.elements}));
    CHECK(y.all_finite());
    CHECK_THROWS(model.forward(random_tensor({1, 2, 2, 2, 2}, rng), ctx));
}

TEST_CASE("paper scale model emits one value per transducer element") {
    ModelSpec sp = spec_for(Scale::Paper);
    REQUIRE(sp.angles == 11);
    REQUIRE(sp.frames == 16);
    REQUIRE(sp.samples == 17);
    REQUIRE(sp.elements == 128);
    Model model(sp);
    model.init_weights(1);
    Ctx ctx;
    ctx.workers = 8;
    Rng rng(3);
    ComplexTensor x =
        random_tensor({1, sp.angles, sp.frames, sp.samples, sp.elements}, rng, 0.1);
    ComplexTensor y = model.forward(x, ctx);
    REQUIRE(y.dims() == std::vector<std::size_t>({1, sp.elements}));
    CHECK(y.all_finite());
}

TEST_CASE("zero input stays finite through the whole stack") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(7);
    Ctx ctx;
    ComplexTensor x({1, sp.angles, sp.frames, sp.samples, sp.elements});
    ComplexTensor y = model.forward(x, ctx);
    CHECK(y.all_finite());
}

TEST_CASE("evaluation is deterministic") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(11);
    Ctx ctx;
    ctx.training = false;
    Rng rng(12);
    ComplexTensor x = random_tensor({2, sp.angles, sp.frames, sp.samples, sp.elements}, rng);
    ComplexTensor y1 = model.forward(x, ctx);
    ComplexTensor y2 = model.forward(x, ctx);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(21);
    Rng rng(22);
    std::vector<Sample> train_set = make_samples(sp, 6, rng);
    std::vector<double> before = snapshot(model);
    TrainConfig cfg;
    cfg.lr0 = 0.0;
    cfg.alpha = 0.0;
    cfg.batch_size = 3;
    cfg.epochs = 2;
    cfg.seed = 5;
    std::vector<EpochStats> hist = train(model, train_set, {}, cfg);
    CHECK(snapshot(model) == before);
    REQUIRE(hist.size() == 2);
    // Dropout masks and batch statistics still vary per epoch, so the training
    // loss is only required to stay finite, not constant.
    CHECK(std::isfinite(hist[0].train_loss));
    CHECK(std::isfinite(hist[1].train_loss));
}

TEST_CASE("strong l2 regularization shrinks the weights monotonically") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(31);
    Rng rng(32);
    std::vector<Sample> set = make_samples(sp, 2, rng);
    std::vector<Param*> params = model.params();
    Adam opt;
    Ctx ctx;
    ctx.training = true;
    Rng drop_rng(33);
    ctx.rng = &drop_rng;

    auto decay_norm = [&]() {
        double s = 0.0;
        for (const Param* p : params)
            if (p->decay)
                for (double v : p->v) s += v * v;
        return std::sqrt(s);
    };

    ComplexTensor x({set.size(), sp.angles, sp.frames, sp.samples, sp.elements});
    ComplexTensor t({set.size(), sp.elements});
    for (std::size_t n = 0; n < set.size(); ++n) {
        std::copy(set[n].input.data(), set[n].input.data() + set[n].input.size(),
                  x.data() + n * set[n].input.size());
        std::copy(set[n].target.begin(), set[n].target.end(), t.data() + n * sp.elements);
    }
    double prev = decay_norm();
    for (int step = 0; step < 6; ++step) {
        model.zero_grad();
        ComplexTensor gy;
        complex_l2_loss(model.forward(x, ctx), t, &gy);
        model.backward(gy, ctx);
        opt.update(params, 1e-3, 1e3);
        double now = decay_norm();
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run bit for bit") {
    ModelSpec sp = spec_for(Scale::Desk);
    Rng data_rng(41);
    std::vector<Sample> train_set = make_samples(sp, 6, data_rng);
    std::vector<Sample> val_set = make_samples(sp, 2, data_rng);

    TrainConfig cfg;
    cfg.lr0 = 1e-3;
    cfg.batch_size = 3;
    cfg.epochs = 4;
    cfg.seed = 9;

    // Uninterrupted run.
    Model full(sp);
    full.init_weights(42);
    Adam opt_full;
    Rng rng_full(cfg.seed);
    std::vector<EpochStats> hist_full =
        train(full, train_set, val_set, cfg, &opt_full, &rng_full);

    // Same run, stopped after two epochs and resumed from the checkpoint.
    std::string dir = temp_dir("ulmpac_ckpt_test");
    Model part(sp);
    part.init_weights(42);
    Adam opt_part;
    Rng rng_part(cfg.seed);
    TrainConfig cfg2 = cfg;
    cfg2.epochs = 2;
    cfg2.checkpoint_dir = dir;
    std::vector<EpochStats> hist_a =
        train(part, train_set, val_set, cfg2, &opt_part, &rng_part);

    Model resumed(sp);
    Adam opt_res;
    Rng rng_res(0);
    std::vector<EpochStats> hist_b;
    std::size_t next = load_checkpoint(dir + "/checkpoint.ulmc", resumed, &opt_res,
                                       &rng_res, &hist_b);
    REQUIRE(next == 2);
    REQUIRE(hist_b.size() == 2);
    std::vector<EpochStats> hist_c =
        train(resumed, train_set, val_set, cfg, &opt_res, &rng_res, next);

    CHECK(snapshot(resumed) == snapshot(full));
    REQUIRE(hist_full.size() == 4);
    REQUIRE(hist_c.size() == 2);
    CHECK(hist_c[1].train_loss == hist_full[3].train_loss);
    CHECK(hist_c[1].val_loss == hist_full[3].val_loss);
    std::filesystem::remove_all(dir);
}

TEST_CASE("training history has one row per epoch") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(51);
    Rng rng(52);
    std::vector<Sample> set = make_samples(sp, 4, rng);
    TrainConfig cfg;
    cfg.lr0 = 1e-4;
    cfg.batch_size = 2;
    cfg.epochs = 3;
    std::vector<EpochStats> hist = train(model, set, set, cfg);
    REQUIRE(hist.size() == 3);
    for (std::size_t e = 0; e < hist.size(); ++e) {
        CHECK(hist[e].epoch == e);
        CHECK(std::isfinite(hist[e].train_loss));
        CHECK(std::isfinite(hist[e].val_loss));
    }
    std::string csv = history_csv(hist);
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == 4);  // header plus one row per epoch
    CHECK(csv.rfind("epoch,train_loss,val_loss,lr\n", 0) == 0);
}

TEST_CASE("sample files round trip") {
    ModelSpec sp = spec_for(Scale::Desk);
    Rng rng(61);
    Sample s = make_samples(sp, 1, rng)[0];
    std::string path =
        (std::filesystem::temp_directory_path() / "ulmpac_sample_test.ulms").string();
    save_sample(path, s);
    Sample r = load_sample(path);
    REQUIRE(r.input.dims() == s.input.dims());
    REQUIRE(r.target.size() == s.target.size());
    for (std::size_t i = 0; i < s.input.size(); ++i) CHECK(r.input[i] == s.input[i]);
    for (std::size_t i = 0; i < s.target.size(); ++i) CHECK(r.target[i] == s.target[i]);
    std::remove(path.c_str());
}

TEST_CASE("inference clamps amplitudes into a sane band") {
    ModelSpec sp = spec_for(Scale::Desk);
    Model model(sp);
    model.init_weights(71);
    RealignedPatch patch;
    Rng rng(72);
    patch.data = random_tensor({sp.angles, sp.frames, sp.samples, sp.elements}, rng);
    AberrationFunction est = infer(model, patch, 2);
    REQUIRE(est.size() == sp.elements);
    for (std::size_t n = 0; n < est.size(); ++n) {
        CHECK(est.amplitude(n) >= 1e-6);
        CHECK(est.amplitude(n) <= 1.0);
        CHECK(std::isfinite(est.phase(n)));
    }
}
