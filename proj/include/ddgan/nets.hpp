#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ddgan/posterior.hpp"
#include "ddgan/rng.hpp"
#include "ddgan/schedule.hpp"
#include "ddgan/tensor.hpp"

namespace ddgan {

// Sinusoidal embedding of an (integer) step: interleaved pairs
// (sin(t / 10000^{2i/d}), cos(t / 10000^{2i/d})), i = 0..d/2-1.
std::vector<double> time_embed(double t, std::size_t dim);
Tensor time_embed_rows(const std::vector<std::size_t>& steps, std::size_t dim,
                       Dtype dtype = Dtype::f64);

enum class Conditioning { concat, adaptive_norm };
enum class Parametrization { x0, direct, noise };
enum class InitMode { zero_final, random_final };

struct NamedParam {
    std::string name;
    Tensor value;
};

struct Linear {
    Tensor W, b;
    Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }
};

struct GeneratorConfig {
    std::size_t data_dim = 2;
    std::size_t hidden_dim = 512;
    std::size_t hidden_layers = 3;
    std::size_t time_embed_dim = 64;
    double leaky_slope = 0.2;
    Dtype dtype = Dtype::f64;
    InitMode init = InitMode::zero_final;

    std::size_t latent_dim = 100;
    bool latent_enabled = true;
    Conditioning conditioning = Conditioning::concat;
    Parametrization parametrization = Parametrization::x0;
    std::size_t mapping_layers = 3;  // latent mapping network depth
    std::size_t mapping_dim = 128;
    std::size_t norm_groups = 32;  // feature-group count in adaptive-norm mode
    double norm_eps = 1e-5;
};

// Time- and latent-conditioned MLP generator. In concat mode x_t, the time
// embedding and z are concatenated at the input; in adaptive-norm mode z runs
// through the mapping network and modulates per-layer feature normalization.
class GeneratorNet {
public:
    GeneratorNet(GeneratorConfig cfg, Rng& rng);

    const GeneratorConfig& config() const { return cfg_; }
    std::vector<NamedParam> parameters() const;

    // x_t: [B, N]; z: [B, L], or undefined when the latent is disabled.
    Tensor forward(const Tensor& x_t, const Tensor& z,
                   const std::vector<std::size_t>& steps) const;
    Tensor forward(const Tensor& x_t, const Tensor& z, std::size_t t) const;

private:
    GeneratorConfig cfg_;
    std::vector<Linear> mapping_;
    std::vector<Linear> hidden_;
    std::vector<Linear> mod_;          // w -> per-layer (scale, shift), adaptive mode
    std::vector<Tensor> norm_scale_;   // learnable affine when the latent is off
    std::vector<Tensor> norm_shift_;
    Linear out_;
};

struct DiscriminatorConfig {
    std::size_t data_dim = 2;
    std::size_t hidden_dim = 512;
    std::size_t hidden_layers = 3;
    std::size_t time_embed_dim = 64;
    double leaky_slope = 0.2;
    Dtype dtype = Dtype::f64;
    InitMode init = InitMode::zero_final;

    bool minibatch_std = false;
    bool pairwise = true;  // x_{t-1} and x_t concatenated; off for single-input use
};

// Conditional discriminator over (x_{t-1}, x_t, t); emits one logit per row.
class DiscriminatorNet {
public:
    DiscriminatorNet(DiscriminatorConfig cfg, Rng& rng);

    const DiscriminatorConfig& config() const { return cfg_; }
    std::vector<NamedParam> parameters() const;

    Tensor forward(const Tensor& x_prev, const Tensor& x_t,
                   const std::vector<std::size_t>& steps) const;  // -> [B]
    Tensor forward(const Tensor& x_prev, const Tensor& x_t, std::size_t t) const;

    // Single-input variant (no conditioning pair), for the augmentation
    // baseline where the discriminator sees perturbed samples only.
    Tensor forward_single(const Tensor& x, const std::vector<std::size_t>& steps) const;

private:
    Tensor trunk(const Tensor& input, const std::vector<std::size_t>& steps) const;
    DiscriminatorConfig cfg_;
    std::vector<Linear> hidden_;
    Linear out_;
};

// One reverse step x_t -> x_{t-1} with externally supplied randomness;
// eps may be undefined when the posterior draw is not needed (t = 1 or
// direct parametrization). Differentiable through the generator.
Tensor denoise_step_given(const GeneratorNet& g, const DiffusionSchedule& sched,
                          const Tensor& x_t, std::size_t t, const Tensor& z, const Tensor& eps);

// Convenience form drawing z and the posterior noise from rng (z first).
Tensor denoise_step(const GeneratorNet& g, const DiffusionSchedule& sched, const Tensor& x_t,
                    std::size_t t, Rng& rng);

// Per-row steps; used by the training loop where t varies within the batch.
Tensor denoise_step_rows(const GeneratorNet& g, const DiffusionSchedule& sched,
                         const Tensor& x_t, const std::vector<std::size_t>& steps, Rng& rng);

}  // namespace ddgan
