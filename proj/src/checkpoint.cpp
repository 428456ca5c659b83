#include "gridfill/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "gridfill/errors.hpp"

namespace gridfill {

namespace {

// Explicit little-endian encoding keeps the format identical across hosts.
struct Writer {
    std::ofstream f;
    explicit Writer(const std::string &path) : f(path, std::ios::binary) {
        if (!f) throw io_error("cannot open for writing: " + path);
    }
    void bytes(const void *p, size_t n) { f.write(static_cast<const char *>(p), static_cast<std::streamsize>(n)); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v));
        u32(static_cast<uint32_t>(v >> 32));
    }
    void f32(float v) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void str(const std::string &s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
};

struct Reader {
    std::vector<uint8_t> buf;
    size_t pos = 0;
    std::string path;

    explicit Reader(const std::string &p) : path(p) {
        std::ifstream f(p, std::ios::binary);
        if (!f) throw io_error("cannot open: " + p);
        buf.assign(std::istreambuf_iterator<char>(f), {});
    }
    void need(size_t n) {
        if (pos + n > buf.size()) throw data_error("truncated checkpoint " + path, pos);
    }
    void bytes(void *p, size_t n) {
        need(n);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint32_t>(buf[pos]) | (static_cast<uint32_t>(buf[pos + 1]) << 8) |
                     (static_cast<uint32_t>(buf[pos + 2]) << 16) |
                     (static_cast<uint32_t>(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        uint64_t lo = u32();
        uint64_t hi = u32();
        return lo | (hi << 32);
    }
    float f32() {
        uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char *>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

constexpr char kMagic[4] = {'I', 'M', 'P', 'V'};

}  // namespace

void Checkpoint::save(const std::string &path) const {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);

    w.u32(static_cast<uint32_t>(model_cfg.d_model));
    w.u32(static_cast<uint32_t>(model_cfg.n_heads));
    w.u32(static_cast<uint32_t>(model_cfg.enc_depth));
    w.u32(static_cast<uint32_t>(model_cfg.dec_depth));
    w.u32(static_cast<uint32_t>(model_cfg.patch_side));
    w.u32(static_cast<uint32_t>(model_cfg.image_side));
    w.u32(static_cast<uint32_t>(model_cfg.mlp_ratio));
    w.u32(static_cast<uint32_t>(model_cfg.codebook_levels));
    w.u32(static_cast<uint32_t>(model_cfg.d_text));
    w.u32(static_cast<uint32_t>(model_cfg.cross_attn));

    w.f64(train_cfg.lr_peak);
    w.f64(train_cfg.weight_decay);
    w.f64(train_cfg.beta1);
    w.f64(train_cfg.beta2);
    w.u32(static_cast<uint32_t>(train_cfg.warmup_steps));
    w.u32(static_cast<uint32_t>(train_cfg.total_steps));
    w.u32(static_cast<uint32_t>(train_cfg.batch));
    w.f64(train_cfg.mask_ratio);
    w.f64(train_cfg.text_drop);
    w.u64(train_cfg.seed);
    w.u32(static_cast<uint32_t>(train_cfg.checkpoint_every));

    w.u64(step);
    w.u32(static_cast<uint32_t>(param_names.size()));
    for (size_t i = 0; i < param_names.size(); i++) {
        w.str(param_names[i]);
        w.u32(static_cast<uint32_t>(param_shapes[i].size()));
        for (int d : param_shapes[i]) w.u32(static_cast<uint32_t>(d));
        for (float v : param_data[i]) w.f32(v);
    }
    w.u8(has_optimizer ? 1 : 0);
    if (has_optimizer) {
        w.u64(adam_t);
        for (size_t i = 0; i < param_names.size(); i++) {
            for (float v : m_data[i]) w.f32(v);
            for (float v : v_data[i]) w.f32(v);
        }
    }
    for (uint64_t s : rng_state) w.u64(s);
    w.u8(rng_has_spare ? 1 : 0);
    w.f64(rng_spare);
    w.f.flush();
    if (!w.f) throw io_error("short write: " + path);
}

Checkpoint Checkpoint::load(const std::string &path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("not a checkpoint file (bad magic) " + path, 0);
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw data_error("unsupported checkpoint version " + std::to_string(version) + " in " + path,
                         4);

    Checkpoint c;
    c.model_cfg.d_model = static_cast<int>(r.u32());
    c.model_cfg.n_heads = static_cast<int>(r.u32());
    c.model_cfg.enc_depth = static_cast<int>(r.u32());
    c.model_cfg.dec_depth = static_cast<int>(r.u32());
    c.model_cfg.patch_side = static_cast<int>(r.u32());
    c.model_cfg.image_side = static_cast<int>(r.u32());
    c.model_cfg.mlp_ratio = static_cast<int>(r.u32());
    c.model_cfg.codebook_levels = static_cast<int>(r.u32());
    c.model_cfg.d_text = static_cast<int>(r.u32());
    c.model_cfg.cross_attn = static_cast<CrossAttn>(r.u32());

    c.train_cfg.lr_peak = r.f64();
    c.train_cfg.weight_decay = r.f64();
    c.train_cfg.beta1 = r.f64();
    c.train_cfg.beta2 = r.f64();
    c.train_cfg.warmup_steps = static_cast<int>(r.u32());
    c.train_cfg.total_steps = static_cast<int>(r.u32());
    c.train_cfg.batch = static_cast<int>(r.u32());
    c.train_cfg.mask_ratio = r.f64();
    c.train_cfg.text_drop = r.f64();
    c.train_cfg.seed = r.u64();
    c.train_cfg.checkpoint_every = static_cast<int>(r.u32());

    c.step = r.u64();
    const uint32_t n_params = r.u32();
    for (uint32_t i = 0; i < n_params; i++) {
        c.param_names.push_back(r.str());
        const uint32_t ndims = r.u32();
        std::vector<int> shape;
        size_t total = 1;
        for (uint32_t d = 0; d < ndims; d++) {
            shape.push_back(static_cast<int>(r.u32()));
            total *= static_cast<size_t>(shape.back());
        }
        c.param_shapes.push_back(shape);
        std::vector<float> data(total);
        for (auto &v : data) v = r.f32();
        c.param_data.push_back(std::move(data));
    }
    c.has_optimizer = r.u8() != 0;
    if (c.has_optimizer) {
        c.adam_t = r.u64();
        for (uint32_t i = 0; i < n_params; i++) {
            const size_t total = c.param_data[i].size();
            std::vector<float> m(total), v(total);
            for (auto &x : m) x = r.f32();
            for (auto &x : v) x = r.f32();
            c.m_data.push_back(std::move(m));
            c.v_data.push_back(std::move(v));
        }
    }
    for (auto &s : c.rng_state) s = r.u64();
    c.rng_has_spare = r.u8() != 0;
    c.rng_spare = r.f64();
    return c;
}

Checkpoint Checkpoint::capture(const Model &model, const TrainConfig &train_cfg, uint64_t step,
                               AdamW *opt, const Rng *rng) {
    Checkpoint c;
    c.model_cfg = model.config();
    c.train_cfg = train_cfg;
    c.step = step;
    for (const auto &[name, t] : model.named_params()) {
        c.param_names.push_back(name);
        c.param_shapes.push_back(t.shape());
        std::vector<float> data(t.numel());
        for (size_t i = 0; i < data.size(); i++) data[i] = static_cast<float>(t.get(i));
        c.param_data.push_back(std::move(data));
    }
    if (opt) {
        c.has_optimizer = true;
        c.adam_t = opt->t();
        for (size_t pi = 0; pi < opt->n_params(); pi++) {
            const Buffer &m = opt->m(pi);
            const Buffer &v = opt->v(pi);
            std::vector<float> md(m.size()), vd(v.size());
            for (size_t i = 0; i < md.size(); i++) md[i] = static_cast<float>(m.get(i));
            for (size_t i = 0; i < vd.size(); i++) vd[i] = static_cast<float>(v.get(i));
            c.m_data.push_back(std::move(md));
            c.v_data.push_back(std::move(vd));
        }
    }
    if (rng) rng->save_state(c.rng_state, c.rng_has_spare, c.rng_spare);
    return c;
}

void Checkpoint::apply(Model &model, AdamW *opt, Rng *rng) const {
    auto named = model.named_params();
    if (named.size() != param_names.size())
        throw data_error("checkpoint holds " + std::to_string(param_names.size()) +
                         " parameters, model wants " + std::to_string(named.size()));
    for (size_t i = 0; i < named.size(); i++) {
        auto &[name, t] = named[i];
        if (name != param_names[i] || t.shape() != param_shapes[i])
            throw data_error("checkpoint parameter mismatch at '" + param_names[i] + "' vs model '" +
                             name + "'");
        for (size_t j = 0; j < param_data[i].size(); j++) t.set(j, param_data[i][j]);
    }
    if (opt && has_optimizer) {
        opt->set_t(adam_t);
        for (size_t pi = 0; pi < opt->n_params(); pi++) {
            for (size_t j = 0; j < m_data[pi].size(); j++) opt->m(pi).set(j, m_data[pi][j]);
            for (size_t j = 0; j < v_data[pi].size(); j++) opt->v(pi).set(j, v_data[pi][j]);
        }
    }
    if (rng) rng->load_state(rng_state, rng_has_spare, rng_spare);
}

Model Checkpoint::restore_model() const {
    Model model(model_cfg, 0);
    apply(model);
    return model;
}

}  // namespace gridfill
