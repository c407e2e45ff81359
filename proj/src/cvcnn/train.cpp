#include <cmath>
#include <filesystem>
#include <sstream>

#include "ulmpac/cvcnn.hpp"

namespace ulmpac::cvcnn {

namespace {

ComplexTensor stack_inputs(const std::vector<Sample>& set,
                           const std::vector<std::size_t>& idx, std::size_t lo,
                           std::size_t hi) {
    const ComplexTensor& first = set[idx[lo]].input;
    if (first.ndim() != 4) throw std::invalid_argument("train: sample input must be 4-D");
    std::size_t per = first.size();
    ComplexTensor out({hi - lo, first.dim(0), first.dim(1), first.dim(2), first.dim(3)});
    for (std::size_t b = lo; b < hi; ++b) {
        const ComplexTensor& x = set[idx[b]].input;
        if (x.size() != per) throw std::invalid_argument("train: input shape mismatch");
        std::copy(x.data(), x.data() + per, out.data() + (b - lo) * per);
    }
    return out;
}

ComplexTensor stack_targets(const std::vector<Sample>& set,
                            const std::vector<std::size_t>& idx, std::size_t lo,
                            std::size_t hi) {
    const std::size_t ne = set[idx[lo]].target.size();
    ComplexTensor out({hi - lo, ne});
    for (std::size_t b = lo; b < hi; ++b) {
        if (set[idx[b]].target.size() != ne)
            throw std::invalid_argument("train: target length mismatch");
        std::copy(set[idx[b]].target.begin(), set[idx[b]].target.end(),
                  out.data() + (b - lo) * ne);
    }
    return out;
}

}  // namespace

void Adam::ensure(const std::vector<Param*>& params) {
    if (m.size() == params.size()) return;
    m.clear();
    s.clear();
    for (const Param* p : params) {
        m.emplace_back(p->v.size(), 0.0);
        s.emplace_back(p->v.size(), 0.0);
    }
}

void Adam::update(const std::vector<Param*>& params, double lr, double alpha) {
    ensure(params);
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        if (m[i].size() != p.v.size())
            throw std::logic_error("adam: state size mismatch for " + p.name);
        for (std::size_t j = 0; j < p.v.size(); ++j) {
            double g = p.g[j];
            if (p.decay && alpha != 0.0) g += 2.0 * alpha * p.v[j];
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
            s[i][j] = beta2 * s[i][j] + (1.0 - beta2) * g * g;
            double mhat = m[i][j] / bc1;
            double shat = s[i][j] / bc2;
            p.v[j] -= lr * mhat / (std::sqrt(shat) + eps);
        }
    }
}

double evaluate_loss(Model& model, const std::vector<Sample>& set, int workers,
                     std::size_t batch_size) {
    if (set.empty()) return 0.0;
    Ctx ctx;
    ctx.training = false;
    ctx.workers = workers;
    std::vector<std::size_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    double total = 0.0;
    for (std::size_t lo = 0; lo < set.size(); lo += batch_size) {
        std::size_t hi = std::min(set.size(), lo + batch_size);
        ComplexTensor x = stack_inputs(set, idx, lo, hi);
        ComplexTensor t = stack_targets(set, idx, lo, hi);
        ComplexTensor y = model.forward(x, ctx);
        total += complex_l2_loss(y, t) * static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(set.size());
}

std::vector<EpochStats> train(Model& model, const std::vector<Sample>& train_set,
                              const std::vector<Sample>& val_set, const TrainConfig& cfg,
                              Adam* optimizer, Rng* rng, std::size_t start_epoch) {
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be > 0");

    Adam local_opt;
    Adam& opt = optimizer ? *optimizer : local_opt;
    Rng local_rng(cfg.seed);
    Rng& rand = rng ? *rng : local_rng;

    std::vector<Param*> params = model.params();
    opt.ensure(params);

    Ctx ctx;
    ctx.training = true;
    ctx.workers = cfg.workers;
    ctx.rng = &rand;

    std::vector<std::size_t> idx(train_set.size());

    std::vector<EpochStats> history;
    for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr0 * std::pow(cfg.lr_gamma, static_cast<double>(epoch));
        // Fisher-Yates from the identity so the schedule depends only on the
        // rng state; draws happen on the control thread so worker count never
        // changes it, and a resumed run replays the same epochs.
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::size_t j = rand.uniform_index(i);
            std::swap(idx[i - 1], idx[j]);
        }

        double epoch_loss = 0.0;
        for (std::size_t lo = 0; lo < train_set.size(); lo += cfg.batch_size) {
            std::size_t hi = std::min(train_set.size(), lo + cfg.batch_size);
            ComplexTensor x = stack_inputs(train_set, idx, lo, hi);
            ComplexTensor t = stack_targets(train_set, idx, lo, hi);
            model.zero_grad();
            ComplexTensor y = model.forward(x, ctx);
            ComplexTensor gy;
            double loss = complex_l2_loss(y, t, &gy);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << " batch " << lo / cfg.batch_size
                   << " (lr " << lr << ", batch " << hi - lo << " samples)";
                throw std::runtime_error(os.str());
            }
            model.backward(gy, ctx);
            opt.update(params, lr, cfg.alpha);
            epoch_loss += loss * static_cast<double>(hi - lo);
        }
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = epoch_loss / static_cast<double>(train_set.size());
        st.val_loss = evaluate_loss(model, val_set, cfg.workers, cfg.batch_size);
        st.lr = lr;
        history.push_back(st);

        if (!cfg.checkpoint_dir.empty()) {
            std::filesystem::create_directories(cfg.checkpoint_dir);
            save_checkpoint(cfg.checkpoint_dir + "/checkpoint.ulmc", model, opt, rand,
                            epoch + 1, history);
        }
    }
    return history;
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,lr\n";
    os.precision(12);
    for (const auto& h : history)
        os << h.epoch << ',' << h.train_loss << ',' << h.val_loss << ',' << h.lr << '\n';
    return os.str();
}

}  // namespace ulmpac::cvcnn
