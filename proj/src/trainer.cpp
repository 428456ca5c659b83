#include "gridfill/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>
#include <sstream>

#include "gridfill/checkpoint.hpp"
#include "gridfill/errors.hpp"

namespace gridfill {

void TrainConfig::validate() const {
    if (warmup_steps >= total_steps)
        throw config_error("warmup_steps " + std::to_string(warmup_steps) +
                           " must be below total_steps " + std::to_string(total_steps));
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw config_error("mask_ratio must lie strictly between 0 and 1");
    if (batch < 1) throw config_error("batch must be positive");
    if (text_drop < 0.0 || text_drop > 1.0) throw config_error("text_drop must lie in [0, 1]");
    if (threads < 1 || threads > 16) throw config_error("threads must lie in [1, 16]");
}

double lr_at(const TrainConfig &cfg, int step) {
    if (step < 0 || step > cfg.total_steps)
        throw contract_error("lr_at: step " + std::to_string(step) + " outside [0, " +
                             std::to_string(cfg.total_steps) + "]");
    if (step <= cfg.warmup_steps)
        return cfg.lr_peak * static_cast<double>(step) / cfg.warmup_steps;
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

AdamW::AdamW(std::vector<Tensor> params, const TrainConfig &cfg)
    : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2),
      weight_decay_(cfg.weight_decay) {
    for (const auto &p : params_) {
        m_.emplace_back(p.numel(), p.values().precision());
        v_.emplace_back(p.numel(), p.values().precision());
    }
}

void AdamW::zero_grad() {
    for (auto &p : params_) p.zero_grad();
}

namespace {

template <typename T>
void adamw_kernel(T *__restrict val, const T *__restrict grad, T *__restrict m, T *__restrict v,
                  size_t n, double beta1, double beta2, double bc1, double bc2, double lr,
                  double shrink, double eps) {
    for (size_t i = 0; i < n; i++) {
        const double g = grad[i];
        const double mi = beta1 * m[i] + (1.0 - beta1) * g;
        const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps);
        val[i] = static_cast<T>(val[i] * shrink - lr * update);
    }
}

}  // namespace

void AdamW::step(double lr) {
    t_++;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double shrink = 1.0 - lr * weight_decay_;
    for (size_t pi = 0; pi < params_.size(); pi++) {
        Tensor &p = params_[pi];
        Buffer &val = p.values();
        Buffer &grad = p.grad();
        const size_t n = val.size();
        if (val.precision() == Precision::f32)
            adamw_kernel<float>(val.f32(), grad.f32(), m_[pi].f32(), v_[pi].f32(), n, beta1_, beta2_,
                                bc1, bc2, lr, shrink, eps_);
        else
            adamw_kernel<double>(val.f64(), grad.f64(), m_[pi].f64(), v_[pi].f64(), n, beta1_, beta2_,
                                 bc1, bc2, lr, shrink, eps_);
    }
}

std::vector<bool> sample_mask(int n_tokens, double mask_ratio, Rng &rng) {
    const int k = static_cast<int>(std::lround(mask_ratio * n_tokens));
    std::vector<int> perm(static_cast<size_t>(n_tokens));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<bool> mask(static_cast<size_t>(n_tokens), false);
    for (int i = 0; i < k; i++) {
        const int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_tokens - i)));
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
        mask[static_cast<size_t>(perm[static_cast<size_t>(i)])] = true;
    }
    return mask;
}

Corpus Corpus::synthetic(const CorpusSpec &spec) {
    Corpus c;
    c.lazy_ = true;
    c.spec_ = spec;
    return c;
}

Corpus Corpus::from_manifest(const std::string &dir) {
    Corpus c;
    c.lazy_ = false;
    const std::string manifest = dir + "/manifest.tsv";
    std::ifstream f(manifest);
    if (!f) throw ingestion_error("cannot open corpus manifest: " + manifest);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string path, caption, origin, seed;
        if (!std::getline(ss, path, '\t') || !std::getline(ss, caption, '\t') ||
            !std::getline(ss, origin, '\t') || !std::getline(ss, seed))
            throw ingestion_error("malformed manifest line " + std::to_string(lineno) + " in " +
                                  manifest);
        TrainRecord rec;
        if (!parse_origin(origin, rec.origin))
            throw ingestion_error("unknown record origin '" + origin + "' in " + manifest);
        rec.caption = caption;
        rec.seed = std::stoull(seed);
        const std::string img_path = dir + "/" + path;
        try {
            rec.image = read_image(img_path);
        } catch (const std::exception &e) {
            throw ingestion_error("cannot ingest " + img_path + ": " + e.what());
        }
        c.records_.push_back(std::move(rec));
    }
    if (c.records_.empty()) throw ingestion_error("empty corpus manifest: " + manifest);
    return c;
}

int Corpus::size() const { return lazy_ ? spec_.size : static_cast<int>(records_.size()); }

TrainRecord Corpus::record(int index) const {
    if (index < 0 || index >= size())
        throw index_error("corpus record " + std::to_string(index) + " outside [0, " +
                          std::to_string(size()) + ")");
    return lazy_ ? corpus_record(spec_, index) : records_[static_cast<size_t>(index)];
}

void export_corpus(const CorpusSpec &spec, const std::string &dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.tsv");
    if (!manifest) throw io_error("cannot open for writing: " + dir + "/manifest.tsv");
    char name[32];
    for (int i = 0; i < spec.size; i++) {
        TrainRecord rec = corpus_record(spec, i);
        std::snprintf(name, sizeof(name), "img_%06d.ppm", i);
        write_ppm(rec.image, dir + "/" + name);
        manifest << name << "\t" << rec.caption << "\t" << origin_name(rec.origin) << "\t" << rec.seed
                 << "\n";
    }
}

Trainer::Trainer(Model &model, const TrainConfig &cfg, const Corpus &corpus)
    : model_(model), cfg_(cfg), corpus_(corpus), opt_(model.params(), cfg), rng_(cfg.seed) {
    cfg_.validate();
    stats_.position_mask_counts.assign(static_cast<size_t>(model.config().n_tokens()), 0);
}

struct Trainer::RecordJob {
    const TrainRecord *rec;
    std::vector<bool> mask;
    TextPrompt prompt;
    TokenGrid targets;
};

double Trainer::run_jobs(Model &model, const std::vector<RecordJob> &jobs, size_t begin, size_t end,
                         double scale) {
    double total = 0.0;
    for (size_t i = begin; i < end; i++) {
        const RecordJob &job = jobs[i];
        Tensor loss = model.loss(job.rec->image, job.mask, job.prompt, job.targets);
        if (scale != 1.0) loss = gridfill::scale(loss, scale);
        backward(loss);
        total += loss.get(0);
    }
    return total;
}

double Trainer::train_step(std::span<const TrainRecord> batch) {
    opt_.zero_grad();
    const double scale = 1.0 / static_cast<double>(batch.size());

    // All stochastic decisions come from the trainer stream in record order,
    // independent of how the work is split across threads.
    std::vector<RecordJob> jobs;
    jobs.reserve(batch.size());
    for (const TrainRecord &rec : batch) {
        RecordJob job;
        job.rec = &rec;
        job.mask = sample_mask(model_.config().n_tokens(), cfg_.mask_ratio, rng_);
        const bool drop = rng_.bernoulli(cfg_.text_drop);
        job.prompt = model_.text().tokenize(drop ? "" : rec.caption);
        job.targets = model_.codebook().encode_image(rec.image);
        jobs.push_back(std::move(job));
    }

    double total = 0.0;
    const size_t n = jobs.size();
    if (cfg_.threads > 1 && n >= 4) {
        if (!clone_) clone_ = std::make_unique<Model>(model_.config(), 0);
        clone_->copy_params_from(model_);
        for (auto p : clone_->params()) p.zero_grad();
        const size_t half = n / 2;
        double clone_total = 0.0;
        std::thread worker(
            [&]() { clone_total = run_jobs(*clone_, jobs, half, n, scale); });
        total += run_jobs(model_, jobs, 0, half, scale);
        worker.join();
        total += clone_total;
        // merge in fixed parameter order
        auto main_params = model_.params();
        auto clone_params = clone_->params();
        for (size_t pi = 0; pi < main_params.size(); pi++) {
            Buffer &dst = main_params[pi].grad();
            Buffer &src = clone_params[pi].grad();
            if (dst.precision() == Precision::f32) {
                float *d = dst.f32();
                const float *s = src.f32();
                for (size_t j = 0; j < dst.size(); j++) d[j] += s[j];
            } else {
                double *d = dst.f64();
                const double *s = src.f64();
                for (size_t j = 0; j < dst.size(); j++) d[j] += s[j];
            }
        }
    } else {
        total = run_jobs(model_, jobs, 0, n, scale);
    }

    for (const RecordJob &job : jobs) {
        stats_.records_seen++;
        if (job.prompt.empty) stats_.empty_text_records++;
        switch (job.rec->origin) {
            case RecordOrigin::figure: stats_.figure_records++; break;
            case RecordOrigin::plain: stats_.plain_records++; break;
            case RecordOrigin::structured: stats_.structured_records++; break;
        }
        long long masked = 0;
        for (size_t i = 0; i < job.mask.size(); i++)
            if (job.mask[i]) {
                masked++;
                stats_.position_mask_counts[i]++;
            }
        stats_.mask_count_min = std::min(stats_.mask_count_min, masked);
        stats_.mask_count_max = std::max(stats_.mask_count_max, masked);
    }

    step_++;
    opt_.step(lr_at(cfg_, step_));
    stats_.steps_run++;
    stats_.last_loss = total;  // per-record losses carry the 1/batch scale
    return stats_.last_loss;
}

double Trainer::step() {
    std::vector<TrainRecord> batch;
    batch.reserve(static_cast<size_t>(cfg_.batch));
    for (int i = 0; i < cfg_.batch; i++)
        batch.push_back(corpus_.record(static_cast<int>(rng_.uniform_int(
            static_cast<uint64_t>(corpus_.size())))));
    return train_step(batch);
}

void Trainer::restore(int step, const Rng &rng, uint64_t adam_t) {
    step_ = step;
    rng_ = rng;
    opt_.set_t(adam_t);
}

void Trainer::run(const std::string &out_dir) {
    std::filesystem::create_directories(out_dir);
    const bool resuming = step_ > 0;
    const std::string metrics_path = out_dir + "/metrics.csv";
    const bool append = resuming && std::filesystem::exists(metrics_path) &&
                        std::filesystem::file_size(metrics_path) > 0;
    std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw io_error("cannot open for writing: " + metrics_path);
    if (!append) metrics << "step,loss,lr\n";

    char name[48];
    while (step_ < cfg_.total_steps) {
        const double loss = step();
        metrics << step_ << "," << loss << "," << lr_at(cfg_, step_) << "\n";
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 &&
            step_ < cfg_.total_steps) {
            std::snprintf(name, sizeof(name), "/ckpt_%06d.bin", step_);
            Checkpoint::capture(model_, cfg_, static_cast<uint64_t>(step_), &opt_, &rng_)
                .save(out_dir + name);
        }
    }
    metrics.flush();
    if (!metrics) throw io_error("short write: " + out_dir + "/metrics.csv");
    Checkpoint::capture(model_, cfg_, static_cast<uint64_t>(step_), &opt_, &rng_)
        .save(out_dir + "/ckpt_final.bin");
}

}  // namespace gridfill
