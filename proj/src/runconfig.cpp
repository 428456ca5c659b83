#include "gridfill/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "gridfill/errors.hpp"

namespace gridfill {

namespace {

std::string trim(const std::string &s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string &key, const std::string &v) {
    try {
        size_t used = 0;
        int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception &) {
        throw config_error("config key '" + key + "': cannot parse integer from '" + v + "'");
    }
}

double to_double(const std::string &key, const std::string &v) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception &) {
        throw config_error("config key '" + key + "': cannot parse number from '" + v + "'");
    }
}

const char *cross_attn_name(CrossAttn c) {
    switch (c) {
        case CrossAttn::both: return "both";
        case CrossAttn::decoder_only: return "decoder_only";
        case CrossAttn::off: return "off";
    }
    return "?";
}

}  // namespace

void RunConfig::set(const std::string &key, const std::string &value) {
    if (key == "d_model") model.d_model = to_int(key, value);
    else if (key == "n_heads") model.n_heads = to_int(key, value);
    else if (key == "enc_depth") model.enc_depth = to_int(key, value);
    else if (key == "dec_depth") model.dec_depth = to_int(key, value);
    else if (key == "patch_side") model.patch_side = to_int(key, value);
    else if (key == "image_side") model.image_side = to_int(key, value);
    else if (key == "mlp_ratio") model.mlp_ratio = to_int(key, value);
    else if (key == "codebook_levels") model.codebook_levels = to_int(key, value);
    else if (key == "d_text") model.d_text = to_int(key, value);
    else if (key == "cross_attention") {
        if (value == "both") model.cross_attn = CrossAttn::both;
        else if (value == "decoder_only") model.cross_attn = CrossAttn::decoder_only;
        else if (value == "off") model.cross_attn = CrossAttn::off;
        else throw config_error("config key 'cross_attention': unknown mode '" + value + "'");
    } else if (key == "lr_peak") train.lr_peak = to_double(key, value);
    else if (key == "weight_decay") train.weight_decay = to_double(key, value);
    else if (key == "beta1") train.beta1 = to_double(key, value);
    else if (key == "beta2") train.beta2 = to_double(key, value);
    else if (key == "warmup_steps") train.warmup_steps = to_int(key, value);
    else if (key == "total_steps") train.total_steps = to_int(key, value);
    else if (key == "batch") train.batch = to_int(key, value);
    else if (key == "mask_ratio") train.mask_ratio = to_double(key, value);
    else if (key == "text_drop") train.text_drop = to_double(key, value);
    else if (key == "seed") {
        train.seed = static_cast<uint64_t>(std::stoull(value));
        seed_explicit = true;
    } else if (key == "checkpoint_every") train.checkpoint_every = to_int(key, value);
    else if (key == "threads") train.threads = to_int(key, value);
    else if (key == "corpus_size") corpus_size = to_int(key, value);
    else if (key == "corpus_mode") {
        if (!parse_corpus_mode(value, corpus_mode))
            throw config_error("config key 'corpus_mode': unknown mode '" + value + "'");
    } else if (key == "corpus_dir") corpus_dir = value;
    else if (key == "out_dir") out_dir = value;
    else throw config_error("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_text(const std::string &text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        lineno++;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + " has no '=': " + t);
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str());
}

std::string RunConfig::to_text() const {
    std::ostringstream o;
    o << "d_model = " << model.d_model << "\n";
    o << "n_heads = " << model.n_heads << "\n";
    o << "enc_depth = " << model.enc_depth << "\n";
    o << "dec_depth = " << model.dec_depth << "\n";
    o << "patch_side = " << model.patch_side << "\n";
    o << "image_side = " << model.image_side << "\n";
    o << "mlp_ratio = " << model.mlp_ratio << "\n";
    o << "codebook_levels = " << model.codebook_levels << "\n";
    o << "d_text = " << model.d_text << "\n";
    o << "cross_attention = " << cross_attn_name(model.cross_attn) << "\n";
    o << "lr_peak = " << train.lr_peak << "\n";
    o << "weight_decay = " << train.weight_decay << "\n";
    o << "beta1 = " << train.beta1 << "\n";
    o << "beta2 = " << train.beta2 << "\n";
    o << "warmup_steps = " << train.warmup_steps << "\n";
    o << "total_steps = " << train.total_steps << "\n";
    o << "batch = " << train.batch << "\n";
    o << "mask_ratio = " << train.mask_ratio << "\n";
    o << "text_drop = " << train.text_drop << "\n";
    o << "seed = " << train.seed << "\n";
    o << "checkpoint_every = " << train.checkpoint_every << "\n";
    o << "threads = " << train.threads << "\n";
    o << "corpus_size = " << corpus_size << "\n";
    o << "corpus_mode = " << corpus_mode_name(corpus_mode) << "\n";
    o << "corpus_dir = " << corpus_dir << "\n";
    o << "out_dir = " << out_dir << "\n";
    return o.str();
}

}  // namespace gridfill
