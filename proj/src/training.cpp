#include "ddgan/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ddgan/config.hpp"
#include "ddgan/posterior.hpp"

namespace ddgan {

Tensor discriminator_loss_from_logits(const Tensor& logit_real, const Tensor& logit_fake) {
    return mean_all(add(softplus(affine(logit_real, -1.0, 0.0)), softplus(logit_fake)));
}

Tensor generator_loss_from_logits(const Tensor& logit_fake) {
    return mean_all(softplus(affine(logit_fake, -1.0, 0.0)));
}

Tensor discriminator_loss(const DiscriminatorNet& d, const Triple& real, const Triple& fake) {
    return discriminator_loss_from_logits(d.forward(real.x_prev, real.x_t, real.t),
                                          d.forward(fake.x_prev, fake.x_t, fake.t));
}

Tensor generator_loss(const DiscriminatorNet& d, const Triple& fake) {
    return generator_loss_from_logits(d.forward(fake.x_prev, fake.x_t, fake.t));
}

Tensor r1_penalty_from_logits(const Tensor& logits, const Tensor& x_prev, double gamma) {
    // gradient of the [0,1]-valued discriminator output w.r.t. x_{t-1}
    Tensor p = sigmoid(logits);
    Tensor gx = gradients(sum_all(p), {x_prev}, /*create_graph=*/true)[0];
    return affine(mean_all(sum_last(square(gx))), 0.5 * gamma, 0.0);
}

Tensor r1_penalty(const DiscriminatorNet& d, const Triple& real, double gamma) {
    Tensor x_var = Tensor::variable(real.x_prev.shape(), real.x_prev.values(),
                                    real.x_prev.dtype());
    return r1_penalty_from_logits(d.forward(x_var, real.x_t, real.t), x_var, gamma);
}

Adam::Adam(double lr, double beta1, double beta2, double eps, std::size_t n_params)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params), v_(n_params) {}

void Adam::step(std::vector<NamedParam>& params, const std::vector<Tensor>& grads,
                double lr_scale) {
    if (params.size() != m_.size() || grads.size() != params.size())
        throw Error("adam: parameter/gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& vals = params[i].value.mutable_values();
        const auto& g = grads[i].values();
        if (m_[i].empty()) {
            m_[i].assign(vals.size(), 0.0);
            v_[i].assign(vals.size(), 0.0);
        }
        const bool f32 = params[i].value.dtype() == Dtype::f32;
        for (std::size_t j = 0; j < vals.size(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double update =
                lr_ * lr_scale * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
            vals[j] -= update;
            if (f32) vals[j] = static_cast<double>(static_cast<float>(vals[j]));
        }
    }
}

Ema::Ema(double decay, const std::vector<NamedParam>& params) : decay_(decay) {
    for (const auto& p : params) shadow_.push_back(p.value.values());
}

void Ema::update(const std::vector<NamedParam>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& vals = params[i].value.values();
        for (std::size_t j = 0; j < vals.size(); ++j)
            shadow_[i][j] = decay_ * shadow_[i][j] + (1.0 - decay_) * vals[j];
    }
}

void Ema::load_into(std::vector<NamedParam>& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value.mutable_values() = shadow_[i];
}

Checkpoint snapshot(const TrainConfig& cfg, const GeneratorNet& g, const DiscriminatorNet& d,
                    const Ema& ema, const Rng& root, std::size_t iteration) {
    Checkpoint ckpt;
    ckpt.config_echo = serialize_train_config(cfg);
    for (const auto& p : g.parameters())
        ckpt.params.push_back({p.name, p.value.shape(), p.value.values()});
    for (const auto& p : d.parameters())
        ckpt.params.push_back({p.name, p.value.shape(), p.value.values()});
    const auto gp = g.parameters();
    for (std::size_t i = 0; i < gp.size(); ++i)
        ckpt.ema.push_back({gp[i].name, {}, ema.shadow()[i]});
    ckpt.rng_state = root.state();
    ckpt.iteration = iteration;
    return ckpt;
}

namespace {

struct Batch {
    Tensor x0;      // [B, N] (aug baseline only)
    Tensor x_prev;  // [B, N] real x_{t-1}
    Tensor x_t;     // [B, N]
    std::vector<std::size_t> t;
};

// Ancestral triple: x0 ~ data, x_{t-1} ~ q(.|x0) (marginal form),
// x_t ~ q(.|x_{t-1}) (stepwise form), with per-row timesteps.
Batch make_real_batch(const GaussianMixture& data, const DiffusionSchedule& sched,
                      std::size_t B, Rng& rng, Dtype dt) {
    const std::size_t N = data.dim;
    const std::size_t T = sched.steps();
    Batch b;
    Tensor x0 = data.sample_matrix(B, rng);
    b.t.resize(B);
    for (auto& t : b.t) t = 1 + rng.next_u64() % T;
    std::vector<double> xprev(B * N), xt(B * N);
    for (std::size_t r = 0; r < B; ++r) {
        auto [mc, var] = sched.marginal_params(b.t[r] - 1);
        const double sd = std::sqrt(var);
        const double beta = sched.beta(b.t[r]);
        const double step_coef = std::sqrt(1.0 - beta);
        const double step_sd = std::sqrt(beta);
        for (std::size_t j = 0; j < N; ++j) {
            double xp = mc * x0.at(r * N + j);
            if (var > 0.0) xp += sd * rng.normal();
            xprev[r * N + j] = xp;
            xt[r * N + j] = step_coef * xp + step_sd * rng.normal();
        }
    }
    b.x0 = (dt == Dtype::f64) ? x0 : Tensor::constant({B, N}, x0.values(), dt);
    b.x_prev = Tensor::constant({B, N}, std::move(xprev), dt);
    b.x_t = Tensor::constant({B, N}, std::move(xt), dt);
    return b;
}

// Diffusion-as-augmentation: perturb rows by a random level tau in
// {0..T-1} (the last step would destroy the signal). Differentiable in x.
Tensor augment_rows(const Tensor& x, const std::vector<std::size_t>& tau,
                    const DiffusionSchedule& sched, Rng& rng) {
    const std::size_t B = x.shape()[0], N = x.shape()[1];
    std::vector<double> coef(B), noise(B * N, 0.0);
    for (std::size_t r = 0; r < B; ++r) {
        auto [mc, var] = sched.marginal_params(tau[r]);
        coef[r] = mc;
        if (var > 0.0) {
            const double sd = std::sqrt(var);
            for (std::size_t j = 0; j < N; ++j) noise[r * N + j] = sd * rng.normal();
        }
    }
    return add(mul_colvec(x, Tensor::constant({B}, std::move(coef), x.dtype())),
               Tensor::constant({B, N}, std::move(noise), x.dtype()));
}

double grad_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g.values()) s += v * v;
    return std::sqrt(s);
}

[[noreturn]] void abort_non_finite(std::size_t iteration, const char* which, double loss_d,
                                   double loss_g, double r1, double gnorm) {
    std::ostringstream os;
    os << "training: non-finite " << which << " at iteration " << iteration
       << " (d_loss=" << loss_d << " g_loss=" << loss_g << " r1=" << r1
       << " grad_norm=" << gnorm << ")";
    throw NumericError(os.str());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const GaussianMixture& data,
                  const MetricsSink& metrics_sink, const CheckpointSink& checkpoint_sink) {
    if (data.dim != data_dim_of(cfg))
        throw ConfigError("training: dataset dimensionality does not match config");
    const Dtype dt = parse_precision(cfg.precision);
    const DiffusionSchedule sched(cfg.T, cfg.beta_min, cfg.beta_max);
    Rng root(cfg.seed);
    Rng rng_g_init = root.fork(1);
    Rng rng_d_init = root.fork(2);

    TrainResult res;
    res.generator = std::make_shared<GeneratorNet>(generator_config(cfg), rng_g_init);
    res.discriminator =
        std::make_shared<DiscriminatorNet>(discriminator_config(cfg), rng_d_init);
    GeneratorNet& G = *res.generator;
    DiscriminatorNet& D = *res.discriminator;

    auto g_params = G.parameters();
    auto d_params = D.parameters();
    std::vector<Tensor> g_wrt, d_wrt;
    for (const auto& p : g_params) g_wrt.push_back(p.value);
    for (const auto& p : d_params) d_wrt.push_back(p.value);

    Adam adam_g(cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, g_params.size());
    Adam adam_d(cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, d_params.size());
    Ema ema(cfg.ema_decay, g_params);

    const std::size_t B = cfg.batch_size;
    const std::size_t N = data.dim;
    const auto t_start = std::chrono::steady_clock::now();
    double r1_last = 0.0;  // most recent applied penalty (lazy interval > 1)

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const double lr_scale =
            cfg.cosine_lr ? 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(iter) /
                                                  static_cast<double>(cfg.iterations)))
                          : 1.0;

        // ---- discriminator step ----
        Rng rng_d = root.fork(3, iter);
        double loss_d_v = 0.0, r1_v = 0.0;
        std::vector<double> lr_vals, lf_vals;
        std::vector<std::size_t> d_ts;
        {
            Tensor logit_real, logit_fake, x_real_var;
            if (!cfg.aug_baseline) {
                Batch b = make_real_batch(data, sched, B, rng_d, dt);
                d_ts = b.t;
                Tensor x_fake_prev;
                {
                    NoGradGuard ng;
                    x_fake_prev = denoise_step_rows(G, sched, b.x_t, b.t, rng_d);
                }
                x_real_var = Tensor::variable(b.x_prev.shape(), b.x_prev.values(), dt);
                logit_real = D.forward(x_real_var, b.x_t, b.t);
                logit_fake = D.forward(x_fake_prev, b.x_t, b.t);
            } else {
                Tensor x0 = data.sample_matrix(B, rng_d);
                if (dt != Dtype::f64) x0 = Tensor::constant(x0.shape(), x0.values(), dt);
                std::vector<std::size_t> tau(B);
                for (auto& t : tau) t = rng_d.next_u64() % cfg.T;
                d_ts.resize(B);
                for (std::size_t r = 0; r < B; ++r) d_ts[r] = tau[r] + 1;
                Tensor x_fake0;
                {
                    NoGradGuard ng;
                    Tensor x_in = sample_normal(rng_d, {B, N}, dt);
                    Tensor z;
                    if (cfg.latent_enabled)
                        z = sample_normal(rng_d, {B, cfg.latent_dim}, dt);
                    x_fake0 = G.forward(x_in, z, 1);
                }
                Tensor x_real_aug = augment_rows(x0, tau, sched, rng_d);
                Tensor x_fake_aug = augment_rows(x_fake0, tau, sched, rng_d);
                x_real_var = Tensor::variable(x_real_aug.shape(), x_real_aug.values(), dt);
                logit_real = D.forward_single(x_real_var, tau);
                logit_fake = D.forward_single(x_fake_aug, tau);
            }

            Tensor loss_d = discriminator_loss_from_logits(logit_real, logit_fake);
            Tensor total = loss_d;
            if (cfg.r1_gamma > 0.0 && iter % cfg.r1_interval == 0) {
                Tensor r1 = r1_penalty_from_logits(
                    logit_real, x_real_var,
                    cfg.r1_gamma * static_cast<double>(cfg.r1_interval));
                r1_v = r1.item();
                r1_last = r1_v;
                total = add(total, r1);
            }
            loss_d_v = loss_d.item();
            lr_vals = logit_real.values();
            lf_vals = logit_fake.values();
            auto grads = gradients(total, d_wrt);
            if (!std::isfinite(loss_d_v) || !std::isfinite(r1_v))
                abort_non_finite(iter, "discriminator loss", loss_d_v, 0.0, r1_v,
                                 grad_norm(grads));
            adam_d.step(d_params, grads, lr_scale);
        }

        // ---- generator step ----
        Rng rng_g = root.fork(4, iter);
        double loss_g_v = 0.0;
        {
            Tensor logit_fake;
            if (!cfg.aug_baseline) {
                Batch b = make_real_batch(data, sched, B, rng_g, dt);
                Tensor x_fake_prev = denoise_step_rows(G, sched, b.x_t, b.t, rng_g);
                logit_fake = D.forward(x_fake_prev, b.x_t, b.t);
            } else {
                std::vector<std::size_t> tau(B);
                for (auto& t : tau) t = rng_g.next_u64() % cfg.T;
                Tensor x_in = sample_normal(rng_g, {B, N}, dt);
                Tensor z;
                if (cfg.latent_enabled) z = sample_normal(rng_g, {B, cfg.latent_dim}, dt);
                Tensor x_fake0 = G.forward(x_in, z, 1);
                Tensor x_fake_aug = augment_rows(x_fake0, tau, sched, rng_g);
                logit_fake = D.forward_single(x_fake_aug, tau);
            }
            Tensor loss_g = generator_loss_from_logits(logit_fake);
            loss_g_v = loss_g.item();
            auto grads = gradients(loss_g, g_wrt);
            if (!std::isfinite(loss_g_v))
                abort_non_finite(iter, "generator loss", loss_d_v, loss_g_v, r1_v,
                                 grad_norm(grads));
            adam_g.step(g_params, grads, lr_scale);
            ema.update(g_params);
        }

        const std::size_t it1 = iter + 1;
        if (it1 % cfg.metrics_interval == 0 || it1 == cfg.iterations) {
            MetricsRecord rec;
            rec.iteration = it1;
            rec.d_loss = loss_d_v;
            rec.g_loss = loss_g_v;
            rec.r1 = r1_last;
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                    .count();
            rec.d_loss_per_t.assign(cfg.T, std::numeric_limits<double>::quiet_NaN());
            std::vector<double> sums(cfg.T, 0.0);
            std::vector<std::size_t> counts(cfg.T, 0);
            auto softplus1 = [](double x) {
                return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
            };
            for (std::size_t r = 0; r < d_ts.size(); ++r) {
                const std::size_t slot = d_ts[r] - 1;
                sums[slot] += softplus1(-lr_vals[r]) + softplus1(lf_vals[r]);
                ++counts[slot];
            }
            for (std::size_t s = 0; s < cfg.T; ++s)
                if (counts[s] > 0) rec.d_loss_per_t[s] = sums[s] / static_cast<double>(counts[s]);
            res.metrics.push_back(rec);
            if (metrics_sink) metrics_sink(rec);
        }
        if (checkpoint_sink && cfg.checkpoint_interval > 0 &&
            it1 % cfg.checkpoint_interval == 0 && it1 != cfg.iterations) {
            checkpoint_sink(it1, snapshot(cfg, G, D, ema, root, it1));
        }
    }

    res.ema = ema.shadow();
    res.checkpoint = snapshot(cfg, G, D, ema, root, cfg.iterations);
    if (checkpoint_sink) checkpoint_sink(cfg.iterations, res.checkpoint);
    return res;
}

}  // namespace ddgan
