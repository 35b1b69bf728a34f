#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddgan/checkpoint.hpp"
#include "ddgan/mixture.hpp"
#include "ddgan/nets.hpp"
#include "ddgan/schedule.hpp"

namespace ddgan {

// Full experiment configuration; defaults are the toy protocol. Serialized
// losslessly by the config module and echoed into every artifact directory.
struct TrainConfig {
    std::size_t T = 4;
    std::size_t batch_size = 512;
    std::size_t iterations = 50000;
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.9;
    double adam_eps = 1e-8;
    double r1_gamma = 0.02;
    std::size_t r1_interval = 16;  // lazy penalty: every k-th step, scaled by k
    double ema_decay = 0.999;
    bool cosine_lr = true;

    std::size_t latent_dim = 100;
    bool latent_enabled = true;
    std::string parametrization = "x0";    // x0 | direct | noise
    std::string conditioning = "concat";   // concat | adaptive-norm
    bool aug_baseline = false;             // one-shot GAN with diffusion augmentation

    std::string dataset = "25gaussians";   // 25gaussians | bimodal1d
    double dataset_std = 0.05;
    double dataset_center = 1.0;           // bimodal1d component centers at +-center

    double beta_min = 0.1;
    double beta_max = 20.0;

    std::size_t hidden_dim = 512;
    std::size_t hidden_layers = 3;
    std::size_t time_embed_dim = 64;
    std::size_t mapping_layers = 3;
    std::size_t mapping_dim = 128;
    std::size_t norm_groups = 32;
    bool minibatch_std = false;
    std::string precision = "f32";         // training default; f64 selectable
    std::string init = "zero_final";       // zero_final | random_final

    std::uint64_t seed = 1;
    std::size_t metrics_interval = 100;
    std::size_t checkpoint_interval = 0;   // 0: final checkpoint only
};

std::size_t data_dim_of(const TrainConfig& cfg);
GaussianMixture make_dataset(const TrainConfig& cfg);
GeneratorConfig generator_config(const TrainConfig& cfg);
DiscriminatorConfig discriminator_config(const TrainConfig& cfg);
Parametrization parse_parametrization(const std::string& s);
Conditioning parse_conditioning(const std::string& s);
Dtype parse_precision(const std::string& s);
InitMode parse_init(const std::string& s);

struct MetricsRecord {
    std::size_t iteration = 0;
    std::vector<double> d_loss_per_t;  // indexed 1..T (slot t-1)
    double d_loss = 0.0;
    double g_loss = 0.0;
    double r1 = 0.0;
    double wall_seconds = 0.0;
};

// ---- losses ----------------------------------------------------------------

struct Triple {
    Tensor x_prev, x_t;
    std::vector<std::size_t> t;
};

// Numerically stabilized non-saturating pair: softplus(-l_real) + softplus(l_fake).
Tensor discriminator_loss(const DiscriminatorNet& d, const Triple& real, const Triple& fake);
Tensor discriminator_loss_from_logits(const Tensor& logit_real, const Tensor& logit_fake);

// softplus(-l_fake), differentiable through the generator's fake batch.
Tensor generator_loss(const DiscriminatorNet& d, const Triple& fake);
Tensor generator_loss_from_logits(const Tensor& logit_fake);

// (gamma/2) E || d sigmoid(logit) / d x_prev ||^2 at the real triple.
Tensor r1_penalty(const DiscriminatorNet& d, const Triple& real, double gamma);
// Same, from precomputed logits whose graph reaches x_prev (a variable).
Tensor r1_penalty_from_logits(const Tensor& logits, const Tensor& x_prev, double gamma);

// ---- optimizer / EMA --------------------------------------------------------

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps, std::size_t n_params);
    // grads align with params; lr_scale applies schedule decay.
    void step(std::vector<NamedParam>& params, const std::vector<Tensor>& grads,
              double lr_scale);

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

class Ema {
public:
    Ema(double decay, const std::vector<NamedParam>& params);
    void update(const std::vector<NamedParam>& params);
    const std::vector<std::vector<double>>& shadow() const { return shadow_; }
    void load_into(std::vector<NamedParam>& params) const;

private:
    double decay_;
    std::vector<std::vector<double>> shadow_;
};

// ---- loop --------------------------------------------------------------------

struct TrainResult {
    std::shared_ptr<GeneratorNet> generator;
    std::shared_ptr<DiscriminatorNet> discriminator;
    std::vector<std::vector<double>> ema;  // aligned with generator->parameters()
    std::vector<MetricsRecord> metrics;
    Checkpoint checkpoint;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;
using CheckpointSink = std::function<void(std::size_t iteration, const Checkpoint&)>;

// Alternating D/G steps with per-element timestep sampling, R1, Adam, cosine
// decay and generator EMA. Aborts with NumericError on non-finite losses.
TrainResult train(const TrainConfig& cfg, const GaussianMixture& data,
                  const MetricsSink& metrics_sink = {},
                  const CheckpointSink& checkpoint_sink = {});

// Builds a checkpoint snapshot (used at intervals and at the end).
Checkpoint snapshot(const TrainConfig& cfg, const GeneratorNet& g, const DiscriminatorNet& d,
                    const Ema& ema, const Rng& root, std::size_t iteration);

}  // namespace ddgan
