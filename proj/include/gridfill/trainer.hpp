#pragma once

#include <climits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gridfill/model.hpp"
#include "gridfill/taskgen.hpp"
#include "gridfill/tensor.hpp"

namespace gridfill {

struct TrainConfig {
    double lr_peak = 2e-4;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.95;
    int warmup_steps = 100;
    int total_steps = 5000;
    int batch = 32;
    double mask_ratio = 0.75;
    double text_drop = 0.1;
    uint64_t seed = 1;
    int checkpoint_every = 1000;
    // Worker threads over the batch. Results are deterministic for a fixed
    // thread count; gradients merge in a fixed order after the join and the
    // optimizer update stays single-threaded.
    int threads = 2;

    void validate() const;
};

// Linear warmup to lr_peak, then cosine decay to zero at total_steps.
double lr_at(const TrainConfig &cfg, int step);

// Decoupled AdamW: the decay multiplies weights directly, the moment term
// never sees it.
class AdamW {
  public:
    AdamW(std::vector<Tensor> params, const TrainConfig &cfg);

    void zero_grad();
    void step(double lr);

    uint64_t t() const { return t_; }
    size_t n_params() const { return params_.size(); }
    Buffer &m(size_t i) { return m_[i]; }
    Buffer &v(size_t i) { return v_[i]; }
    void set_t(uint64_t t) { t_ = t; }

  private:
    std::vector<Tensor> params_;
    std::vector<Buffer> m_, v_;
    double beta1_, beta2_, weight_decay_, eps_ = 1e-8;
    uint64_t t_ = 0;
};

// Exactly round(mask_ratio * n) positions, uniform without replacement.
std::vector<bool> sample_mask(int n_tokens, double mask_ratio, Rng &rng);

// Either a lazy synthetic corpus or records ingested from an exported
// manifest directory.
class Corpus {
  public:
    static Corpus synthetic(const CorpusSpec &spec);
    static Corpus from_manifest(const std::string &dir);  // ingestion_error with path

    int size() const;
    TrainRecord record(int index) const;

  private:
    bool lazy_ = true;
    CorpusSpec spec_;
    std::vector<TrainRecord> records_;
};

// Writes the corpus as PPM files plus manifest.tsv (path, caption, origin,
// seed per line).
void export_corpus(const CorpusSpec &spec, const std::string &dir);

struct TrainStats {
    int steps_run = 0;
    long long records_seen = 0;
    long long empty_text_records = 0;
    long long figure_records = 0, plain_records = 0, structured_records = 0;
    long long mask_count_min = LLONG_MAX, mask_count_max = 0;
    std::vector<long long> position_mask_counts;
    double last_loss = 0.0;
};

class Trainer {
  public:
    Trainer(Model &model, const TrainConfig &cfg, const Corpus &corpus);

    // One optimizer step over the given records (masking and text drop are
    // sampled per record).
    double train_step(std::span<const TrainRecord> batch);
    double train_step(const TrainRecord &record) { return train_step({&record, 1}); }

    // Samples a batch from the corpus and steps; returns the batch loss.
    double step();

    int current_step() const { return step_; }
    const TrainStats &stats() const { return stats_; }
    AdamW &optimizer() { return opt_; }
    Rng &rng() { return rng_; }
    void restore(int step, const Rng &rng, uint64_t adam_t);

    // Full loop: metrics CSV (step,loss,lr) and periodic checkpoints under
    // out_dir. Appends to metrics.csv when resuming from a nonzero step.
    void run(const std::string &out_dir);

  private:
    struct RecordJob;
    double run_jobs(Model &model, const std::vector<RecordJob> &jobs, size_t begin, size_t end,
                    double scale);

    Model &model_;
    TrainConfig cfg_;
    const Corpus &corpus_;
    AdamW opt_;
    Rng rng_;
    int step_ = 0;
    TrainStats stats_;
    std::unique_ptr<Model> clone_;  // second-thread parameter snapshot
};

}  // namespace gridfill
