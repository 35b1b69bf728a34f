#pragma once

#include <cstddef>
#include <memory>

#include "ddgan/checkpoint.hpp"
#include "ddgan/nets.hpp"
#include "ddgan/schedule.hpp"
#include "ddgan/training.hpp"

namespace ddgan {

enum class WeightChoice { raw, ema };  // no silent fallback between the two

TrainConfig config_from_checkpoint(const Checkpoint& ckpt);
DiffusionSchedule schedule_from_checkpoint(const Checkpoint& ckpt);
std::shared_ptr<GeneratorNet> generator_from_checkpoint(const Checkpoint& ckpt,
                                                        WeightChoice choice);

struct SampleSummary {
    std::size_t n = 0;
    std::size_t T = 0;
    std::size_t nfe_per_sample = 0;  // generator evaluations per sample
    double wall_seconds = 0.0;
    double wall_per_100 = 0.0;
    std::uint64_t seed = 0;
};

// Ancestral generation: x_T ~ N(0, I), then T denoising steps. Each sample
// draws from its own substream of rng, so results are independent of batch
// chunking; the per-sample draw count is asserted (T*(L+N) in the posterior
// parametrizations, N + T*L in direct mode).
Tensor generate(const GeneratorNet& g, const DiffusionSchedule& sched, std::size_t n, Rng& rng,
                SampleSummary* summary = nullptr, bool one_shot = false);

// m draws of p(x_0 | x_t = point): fresh z per sample, full rollout from
// step t when t > 1, single posterior-free generator output at t = 1.
Tensor conditional_fan(const GeneratorNet& g, const DiffusionSchedule& sched,
                       const std::vector<double>& x_t, std::size_t t, std::size_t m, Rng& rng);

}  // namespace ddgan
