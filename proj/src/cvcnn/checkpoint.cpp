#include <fstream>

#include <json.hpp>

#include "ulmpac/cvcnn.hpp"

namespace ulmpac::cvcnn {

namespace {

using nlohmann::json;

void write_doubles(std::ofstream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& is, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated payload");
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const Adam& opt,
                     const Rng& rng, std::size_t epoch,
                     const std::vector<EpochStats>& history) {
    std::vector<Param*> params = model.params();
    std::vector<Layer*> layers = model.layers();

    json manifest;
    manifest["scale"] = model.spec().scale == Scale::Paper ? "paper" : "desk";
    manifest["epoch"] = epoch;
    manifest["rng"] = rng.serialize();
    manifest["adam_step"] = opt.step;
    manifest["has_adam"] = !opt.m.empty();
    json plist = json::array();
    for (const Param* p : params) plist.push_back({{"name", p->name}, {"size", p->v.size()}});
    manifest["params"] = plist;
    json slist = json::array();
    for (Layer* l : layers) {
        std::vector<double>* st = l->mutable_state();
        if (st) slist.push_back({{"layer", l->describe()}, {"size", st->size()}});
    }
    manifest["states"] = slist;
    json hist = json::array();
    for (const auto& h : history)
        hist.push_back({h.epoch, h.train_loss, h.val_loss, h.lr});
    manifest["history"] = hist;

    std::string mstr = manifest.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write("ULMC", 4);
    std::uint8_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 1);
    std::uint64_t mlen = mstr.size();
    os.write(reinterpret_cast<const char*>(&mlen), 8);
    os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));

    for (const Param* p : params) write_doubles(os, p->v);
    for (Layer* l : layers) {
        std::vector<double>* st = l->mutable_state();
        if (st) write_doubles(os, *st);
    }
    if (!opt.m.empty()) {
        for (const auto& v : opt.m) write_doubles(os, v);
        for (const auto& v : opt.s) write_doubles(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::size_t load_checkpoint(const std::string& path, Model& model, Adam* opt, Rng* rng,
                            std::vector<EpochStats>* history) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "ULMC")
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint8_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    std::uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), 8);
    std::string mstr(mlen, '\0');
    is.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw std::runtime_error("checkpoint: truncated manifest");
    json manifest = json::parse(mstr);

    std::vector<Param*> params = model.params();
    const auto& plist = manifest.at("params");
    if (plist.size() != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (plist[i].at("name").get<std::string>() != params[i]->name ||
            plist[i].at("size").get<std::size_t>() != params[i]->v.size())
            throw std::runtime_error("checkpoint: parameter layout mismatch at " +
                                     params[i]->name);
    }
    for (Param* p : params) read_doubles(is, p->v, p->v.size());

    std::vector<Layer*> layers = model.layers();
    std::size_t si = 0;
    const auto& slist = manifest.at("states");
    for (Layer* l : layers) {
        std::vector<double>* st = l->mutable_state();
        if (!st) continue;
        if (si >= slist.size() || slist[si].at("size").get<std::size_t>() != st->size())
            throw std::runtime_error("checkpoint: state layout mismatch");
        read_doubles(is, *st, st->size());
        ++si;
    }

    if (opt) {
        if (manifest.value("has_adam", false)) {
            opt->step = manifest.at("adam_step").get<std::size_t>();
            opt->m.clear();
            opt->s.clear();
            for (const Param* p : params) {
                std::vector<double> v;
                read_doubles(is, v, p->v.size());
                opt->m.push_back(std::move(v));
            }
            for (const Param* p : params) {
                std::vector<double> v;
                read_doubles(is, v, p->v.size());
                opt->s.push_back(std::move(v));
            }
        } else {
            opt->step = 0;
            opt->m.clear();
            opt->s.clear();
        }
    }
    if (rng) rng->deserialize(manifest.at("rng").get<std::string>());
    if (history) {
        history->clear();
        for (const auto& h : manifest.at("history")) {
            EpochStats st;
            st.epoch = h[0].get<std::size_t>();
            st.train_loss = h[1].get<double>();
            st.val_loss = h[2].get<double>();
            st.lr = h[3].get<double>();
            history->push_back(st);
        }
    }
    return manifest.at("epoch").get<std::size_t>();
}

void save_sample(const std::string& path, const Sample& sample) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("sample: cannot write " + path);
    os.write("ULMS", 4);
    std::uint8_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 1);
    std::uint8_t ndim = static_cast<std::uint8_t>(sample.input.ndim());
    os.write(reinterpret_cast<const char*>(&ndim), 1);
    for (std::size_t i = 0; i < sample.input.ndim(); ++i) {
        std::uint64_t d = sample.input.dim(i);
        os.write(reinterpret_cast<const char*>(&d), 8);
    }
    std::uint64_t ne = sample.target.size();
    os.write(reinterpret_cast<const char*>(&ne), 8);
    os.write(reinterpret_cast<const char*>(sample.input.data()),
             static_cast<std::streamsize>(sample.input.size() * sizeof(cplx)));
    os.write(reinterpret_cast<const char*>(sample.target.data()),
             static_cast<std::streamsize>(sample.target.size() * sizeof(cplx)));
    if (!os) throw std::runtime_error("sample: write failed for " + path);
}

Sample load_sample(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("sample: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "ULMS")
        throw std::runtime_error("sample: bad magic in " + path);
    std::uint8_t version = 0, ndim = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    is.read(reinterpret_cast<char*>(&ndim), 1);
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        d = static_cast<std::size_t>(v);
    }
    std::uint64_t ne = 0;
    is.read(reinterpret_cast<char*>(&ne), 8);
    Sample s;
    s.input = ComplexTensor(dims);
    is.read(reinterpret_cast<char*>(s.input.data()),
            static_cast<std::streamsize>(s.input.size() * sizeof(cplx)));
    s.target.resize(ne);
    is.read(reinterpret_cast<char*>(s.target.data()),
            static_cast<std::streamsize>(ne * sizeof(cplx)));
    if (!is) throw std::runtime_error("sample: truncated payload in " + path);
    return s;
}

}  // namespace ulmpac::cvcnn
