#pragma once

#include <array>
#include <memory>
#include <string>

#include "ulmpac/aberration.hpp"
#include "ulmpac/beamform.hpp"
#include "ulmpac/rng.hpp"
#include "ulmpac/tensor.hpp"

namespace ulmpac::cvcnn {

// Trainable parameter: flat doubles; complex weights are interleaved (re, im).
struct Param {
    std::string name;
    std::vector<double> v, g;
    bool decay = true;  // L2 regularization applies

    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

struct Ctx {
    bool training = false;
    int workers = 1;
    Rng* rng = nullptr;  // dropout masks
};

// Activations are 5-D throughout: [N, C, D, H, W]. The 1-D stage keeps
// singleton D and H.
class Layer {
public:
    virtual ~Layer() = default;
    virtual ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) = 0;
    virtual ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) = 0;
    virtual void collect_params(std::vector<Param*>&) {}
    virtual void init(Rng&) {}
    // Non-trainable persistent state (batchnorm running stats).
    virtual std::vector<double>* mutable_state() { return nullptr; }
    virtual std::string describe() const = 0;
};

using Shape3 = std::array<std::size_t, 3>;
using Pad3 = std::array<std::size_t, 3>;

// Direct complex convolution, per-axis stride and asymmetric padding.
ComplexTensor conv3d_forward(const ComplexTensor& x, const std::vector<double>& w,
                             const std::vector<double>& bias, std::size_t cout,
                             const Shape3& k, const Shape3& stride, const Pad3& pad_lo,
                             const Pad3& pad_hi, int workers);
void conv3d_backward(const ComplexTensor& x, const std::vector<double>& w,
                     const ComplexTensor& gy, std::size_t cout, const Shape3& k,
                     const Shape3& stride, const Pad3& pad_lo, const Pad3& pad_hi,
                     ComplexTensor* gx, std::vector<double>* gw, std::vector<double>* gb,
                     int workers);

class Conv3d : public Layer {
public:
    Conv3d(std::string name, std::size_t cin, std::size_t cout, Shape3 k,
           Shape3 stride = {1, 1, 1}, Pad3 pad_lo = {0, 0, 0}, Pad3 pad_hi = {0, 0, 0});

    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;
    std::string describe() const override;

    static Pad3 same_lo(const Shape3& k) { return {(k[0] - 1) / 2, (k[1] - 1) / 2, (k[2] - 1) / 2}; }
    static Pad3 same_hi(const Shape3& k) { return {k[0] / 2, k[1] / 2, k[2] / 2}; }

    Param weight, bias;
    std::size_t cin, cout;
    Shape3 k, stride;
    Pad3 pad_lo, pad_hi;

private:
    ComplexTensor x_;
};

class ConvTranspose3d : public Layer {
public:
    ConvTranspose3d(std::string name, std::size_t cin, std::size_t cout, Shape3 k,
                    Shape3 stride, Pad3 pad_lo, Pad3 pad_hi);

    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;
    std::string describe() const override;

    Param weight, bias;  // weight [cout, cin, kd, kh, kw]
    std::size_t cin, cout;
    Shape3 k, stride;
    Pad3 pad_lo, pad_hi;

private:
    ComplexTensor x_;
};

// Complex batch normalization: per channel, whiten the 2-D (re, im) vector by
// the inverse square root of its 2x2 covariance, then apply a symmetric 2x2
// affine gain and a complex shift.
class BatchNorm : public Layer {
public:
    BatchNorm(std::string name, std::size_t channels, double eps = 1e-5,
              double momentum = 0.1);

    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    void collect_params(std::vector<Param*>& out) override;
    std::vector<double>* mutable_state() override { return &running_; }
    std::string describe() const override;

    Param gamma;  // [C x 3]: g_rr, g_ri, g_ii
    Param beta;   // [C] complex
    std::size_t channels;
    double eps, momentum;

private:
    // Per channel: mean_r, mean_i, v_rr, v_ri, v_ii.
    std::vector<double> running_;
    // Caches for backward.
    ComplexTensor xc_;               // centered input
    ComplexTensor xt_;               // whitened input
    std::vector<double> s_;          // per channel 2x2 S = V^{-1/2} (3 entries)
    std::vector<double> vsqrt_;      // per channel 2x2 V^{1/2} (3 entries)
    bool trained_forward_ = false;
};

// Symmetric 2x2 inverse square root and square root, closed-form eigen.
void sym2x2_sqrt_invsqrt(double a, double b, double c, double out_sqrt[3],
                         double out_invsqrt[3]);
// Solve B X + X B = C for symmetric B (spd) and symmetric C; 2x2.
void sym2x2_sylvester(const double b[3], const double c[3], double x[3]);

class CReLU : public Layer {
public:
    explicit CReLU(std::string name) : name_(std::move(name)) {}
    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    std::string describe() const override { return name_ + ": crelu"; }

private:
    std::string name_;
    std::vector<std::uint8_t> mask_;  // 2 bits per unit packed as bytes (re, im)
};

class Dropout : public Layer {
public:
    Dropout(std::string name, double prob) : p(prob), name_(std::move(name)) {}
    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    std::string describe() const override { return name_ + ": dropout"; }

    double p;

private:
    std::string name_;
    std::vector<std::uint8_t> keep_;
};

// Average pooling, stride 1, same padding; window normalized by the count of
// in-bounds taps.
class AvgPool3d : public Layer {
public:
    AvgPool3d(std::string name, Shape3 kernel) : k(kernel), name_(std::move(name)) {}
    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    std::string describe() const override { return name_ + ": avgpool"; }

    Shape3 k;

private:
    std::string name_;
    std::vector<std::size_t> in_dims_;
};

// Mean over the D and H axes, keeping W.
class GlobalAvgPool : public Layer {
public:
    explicit GlobalAvgPool(std::string name) : name_(std::move(name)) {}
    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    std::string describe() const override { return name_ + ": globalpool"; }

private:
    std::string name_;
    std::vector<std::size_t> in_dims_;
};

class Dense : public Layer {
public:
    Dense(std::string name, std::size_t in_features, std::size_t out_features);
    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx) override;  // -> [N, out]
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;
    std::string describe() const override;

    Param weight, bias;
    std::size_t in_features, out_features;

private:
    ComplexTensor x_;
    std::vector<std::size_t> in_dims_;
};

ComplexTensor concat_channels(const std::vector<const ComplexTensor*>& parts);
std::vector<ComplexTensor> split_channels(const ComplexTensor& x,
                                          const std::vector<std::size_t>& channels);

enum class Scale { Paper, Desk };

struct ModelSpec {
    Scale scale = Scale::Desk;
    std::size_t angles = 3, frames = 8, samples = 9, elements = 16;
    std::size_t channel_div = 8;
};

ModelSpec spec_for(Scale scale);

// The full network of conv block 1, inception, conv block 2, global pool,
// 1-D V-net with skip connections, two strided deconvolutions and a dense head
// emitting one complex value per element.
class Model {
public:
    explicit Model(const ModelSpec& spec);

    ComplexTensor forward(const ComplexTensor& x, Ctx& ctx);  // [N,C,D,H,W] -> [N,Ne]
    ComplexTensor backward(const ComplexTensor& gy, Ctx& ctx);
    std::vector<Param*> params();
    std::vector<Layer*> layers();
    void init_weights(std::uint64_t seed);
    void zero_grad();
    std::string describe() const;

    const ModelSpec& spec() const { return spec_; }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    ModelSpec spec_;
};

double complex_l2_loss(const ComplexTensor& pred, const ComplexTensor& target,
                       ComplexTensor* grad = nullptr);

ComplexTensor patch_to_input(const RealignedPatch& patch);
ComplexTensor batch_inputs(const std::vector<const RealignedPatch*>& patches);
ComplexTensor batch_targets(const std::vector<const AberrationFunction*>& targets);

AberrationFunction infer(Model& model, const RealignedPatch& patch, int workers = 1);

struct TrainConfig {
    double lr0 = 1e-4;
    double lr_gamma = 0.99;
    double alpha = 1e-4;  // L2 regularization weight
    std::size_t batch_size = 25;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string checkpoint_dir;  // empty = no checkpoints
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m, s;

    void ensure(const std::vector<Param*>& params);
    void update(const std::vector<Param*>& params, double lr, double alpha);
};

struct Sample {
    ComplexTensor input;   // [C, D, H, W]
    std::vector<cplx> target;
};

std::vector<EpochStats> train(Model& model, const std::vector<Sample>& train_set,
                              const std::vector<Sample>& val_set, const TrainConfig& cfg,
                              Adam* optimizer = nullptr, Rng* rng = nullptr,
                              std::size_t start_epoch = 0);

double evaluate_loss(Model& model, const std::vector<Sample>& set, int workers,
                     std::size_t batch_size);

std::string history_csv(const std::vector<EpochStats>& history);

void save_checkpoint(const std::string& path, Model& model, const Adam& opt,
                     const Rng& rng, std::size_t epoch,
                     const std::vector<EpochStats>& history);
// Model must already have the matching architecture.
std::size_t load_checkpoint(const std::string& path, Model& model, Adam* opt, Rng* rng,
                            std::vector<EpochStats>* history);

void save_sample(const std::string& path, const Sample& sample);
Sample load_sample(const std::string& path);

}  // namespace ulmpac::cvcnn
