#include "ddgan/nets.hpp"

#include <cmath>

namespace ddgan {

std::vector<double> time_embed(double t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0)
        throw Error("time_embed: dimension must be even and positive, got " +
                    std::to_string(dim));
    std::vector<double> e(dim);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double freq =
            std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

Tensor time_embed_rows(const std::vector<std::size_t>& steps, std::size_t dim, Dtype dtype) {
    // steps come from a tiny range, so memoize the per-step vectors
    thread_local std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::vector<double>>>
        cache;
    auto embed_of = [&](std::size_t t) -> const std::vector<double>& {
        for (const auto& [key, v] : cache)
            if (key.first == t && key.second == dim) return v;
        cache.push_back({{t, dim}, time_embed(static_cast<double>(t), dim)});
        return cache.back().second;
    };
    std::vector<double> data(steps.size() * dim);
    for (std::size_t r = 0; r < steps.size(); ++r) {
        const auto& e = embed_of(steps[r]);
        std::copy(e.begin(), e.end(), data.begin() + r * dim);
    }
    return Tensor::constant({steps.size(), dim}, std::move(data), dtype);
}

namespace {

// Hidden layers: fan-in-scaled uniform. Final layers: zeros by default so the
// initial generator output is 0 and the initial discriminator is at chance.
Linear make_linear(std::size_t in, std::size_t out, Rng& rng, Dtype dtype, bool zero) {
    std::vector<double> w(in * out, 0.0), b(out, 0.0);
    if (!zero) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& v : w) v = bound * (2.0 * rng.uniform() - 1.0);
        for (auto& v : b) v = bound * (2.0 * rng.uniform() - 1.0);
    }
    return Linear{Tensor::variable({in, out}, std::move(w), dtype),
                  Tensor::variable({out}, std::move(b), dtype)};
}

void push_linear(std::vector<NamedParam>& out, const std::string& prefix, const Linear& l) {
    out.push_back({prefix + ".W", l.W});
    out.push_back({prefix + ".b", l.b});
}

}  // namespace

GeneratorNet::GeneratorNet(GeneratorConfig cfg, Rng& rng) : cfg_(cfg) {
    const bool adaptive = cfg.conditioning == Conditioning::adaptive_norm;
    if (adaptive && cfg.hidden_dim % cfg.norm_groups != 0)
        throw Error("generator: norm_groups must divide hidden_dim");

    std::size_t in = cfg.data_dim + cfg.time_embed_dim;
    if (!adaptive && cfg.latent_enabled) in += cfg.latent_dim;

    if (adaptive && cfg.latent_enabled) {
        std::size_t min = cfg.latent_dim;
        for (std::size_t l = 0; l < cfg.mapping_layers; ++l) {
            mapping_.push_back(make_linear(min, cfg.mapping_dim, rng, cfg.dtype, false));
            min = cfg.mapping_dim;
        }
    }
    for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
        hidden_.push_back(make_linear(in, cfg.hidden_dim, rng, cfg.dtype, false));
        in = cfg.hidden_dim;
        if (adaptive) {
            if (cfg.latent_enabled) {
                // modulation starts neutral: zero scale/shift offsets
                mod_.push_back(make_linear(cfg.mapping_dim, 2 * cfg.hidden_dim, rng, cfg.dtype,
                                           true));
            } else {
                norm_scale_.push_back(
                    Tensor::variable({cfg.hidden_dim},
                                     std::vector<double>(cfg.hidden_dim, 1.0), cfg.dtype));
                norm_shift_.push_back(Tensor::variable(
                    {cfg.hidden_dim}, std::vector<double>(cfg.hidden_dim, 0.0), cfg.dtype));
            }
        }
    }
    out_ = make_linear(in, cfg.data_dim, rng, cfg.dtype, cfg.init == InitMode::zero_final);
}

std::vector<NamedParam> GeneratorNet::parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < mapping_.size(); ++i)
        push_linear(out, "g.mapping" + std::to_string(i), mapping_[i]);
    for (std::size_t i = 0; i < hidden_.size(); ++i)
        push_linear(out, "g.hidden" + std::to_string(i), hidden_[i]);
    for (std::size_t i = 0; i < mod_.size(); ++i)
        push_linear(out, "g.mod" + std::to_string(i), mod_[i]);
    for (std::size_t i = 0; i < norm_scale_.size(); ++i) {
        out.push_back({"g.norm" + std::to_string(i) + ".scale", norm_scale_[i]});
        out.push_back({"g.norm" + std::to_string(i) + ".shift", norm_shift_[i]});
    }
    push_linear(out, "g.out", out_);
    return out;
}

Tensor GeneratorNet::forward(const Tensor& x_t, const Tensor& z,
                             const std::vector<std::size_t>& steps) const {
    const bool adaptive = cfg_.conditioning == Conditioning::adaptive_norm;
    if (x_t.rank() != 2 || x_t.shape()[1] != cfg_.data_dim)
        throw ShapeError("generator: expected x_t of shape [B," +
                         std::to_string(cfg_.data_dim) + "], got " + shape_str(x_t.shape()));
    if (steps.size() != x_t.shape()[0])
        throw ShapeError("generator: steps size does not match batch");
    if (!cfg_.latent_enabled && z.defined())
        throw Error("generator: latent variable supplied while the latent is disabled");
    if (cfg_.latent_enabled) {
        if (!z.defined() || z.rank() != 2 || z.shape()[0] != x_t.shape()[0] ||
            z.shape()[1] != cfg_.latent_dim)
            throw ShapeError("generator: expected z of shape [B," +
                             std::to_string(cfg_.latent_dim) + "]");
    }

    Tensor emb = time_embed_rows(steps, cfg_.time_embed_dim, cfg_.dtype);
    Tensor h;
    if (!adaptive && cfg_.latent_enabled)
        h = concat({x_t, emb, z});
    else
        h = concat({x_t, emb});

    Tensor w;  // mapped latent, adaptive mode
    if (adaptive && cfg_.latent_enabled) {
        w = z;
        for (const auto& l : mapping_) w = leaky_relu(l.forward(w), cfg_.leaky_slope);
    }

    for (std::size_t i = 0; i < hidden_.size(); ++i) {
        h = hidden_[i].forward(h);
        if (adaptive) {
            h = feature_norm(h, cfg_.norm_groups, cfg_.norm_eps);
            if (cfg_.latent_enabled) {
                Tensor ss = mod_[i].forward(w);  // [B, 2H]
                Tensor scale = slice_last(ss, 0, cfg_.hidden_dim);
                Tensor shift = slice_last(ss, cfg_.hidden_dim, 2 * cfg_.hidden_dim);
                h = add(mul(h, affine(scale, 1.0, 1.0)), shift);
            } else {
                h = add_rowvec(mul_rowvec(h, norm_scale_[i]), norm_shift_[i]);
            }
        }
        h = leaky_relu(h, cfg_.leaky_slope);
    }
    return out_.forward(h);
}

Tensor GeneratorNet::forward(const Tensor& x_t, const Tensor& z, std::size_t t) const {
    return forward(x_t, z, std::vector<std::size_t>(x_t.shape()[0], t));
}

DiscriminatorNet::DiscriminatorNet(DiscriminatorConfig cfg, Rng& rng) : cfg_(cfg) {
    std::size_t in = (cfg.pairwise ? 2 * cfg.data_dim : cfg.data_dim) + cfg.time_embed_dim;
    for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
        hidden_.push_back(make_linear(in, cfg.hidden_dim, rng, cfg.dtype, false));
        in = cfg.hidden_dim;
    }
    if (cfg.minibatch_std) in += 1;
    out_ = make_linear(in, 1, rng, cfg.dtype, cfg.init == InitMode::zero_final);
}

std::vector<NamedParam> DiscriminatorNet::parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < hidden_.size(); ++i)
        push_linear(out, "d.hidden" + std::to_string(i), hidden_[i]);
    push_linear(out, "d.out", out_);
    return out;
}

Tensor DiscriminatorNet::trunk(const Tensor& input, const std::vector<std::size_t>& steps) const {
    Tensor h = concat({input, time_embed_rows(steps, cfg_.time_embed_dim, cfg_.dtype)});
    for (const auto& l : hidden_) h = leaky_relu(l.forward(h), cfg_.leaky_slope);
    if (cfg_.minibatch_std) {
        // one shared feature: mean over features of the per-feature batch std
        const std::size_t B = h.shape()[0];
        Tensor onesr = Tensor::full({1, B}, 1.0 / static_cast<double>(B), cfg_.dtype);
        Tensor m = matmul(onesr, h);  // [1, H]
        Tensor centered = sub(h, matmul(Tensor::full({B, 1}, 1.0, cfg_.dtype), m));
        Tensor var = matmul(onesr, square(centered));
        Tensor stat = mean_all(sqrt(affine(var, 1.0, 1e-8)));
        h = concat({h, fill_broadcast(stat, {B, 1})});
    }
    return reshape(out_.forward(h), {h.shape()[0]});
}

Tensor DiscriminatorNet::forward(const Tensor& x_prev, const Tensor& x_t,
                                 const std::vector<std::size_t>& steps) const {
    if (!cfg_.pairwise) throw Error("discriminator: configured single-input, use forward_single");
    if (x_prev.shape() != x_t.shape() || x_prev.rank() != 2 ||
        x_prev.shape()[1] != cfg_.data_dim)
        throw ShapeError("discriminator: incompatible shapes " + shape_str(x_prev.shape()) +
                         " and " + shape_str(x_t.shape()));
    if (steps.size() != x_prev.shape()[0])
        throw ShapeError("discriminator: steps size does not match batch");
    return trunk(concat({x_prev, x_t}), steps);
}

Tensor DiscriminatorNet::forward(const Tensor& x_prev, const Tensor& x_t, std::size_t t) const {
    return forward(x_prev, x_t, std::vector<std::size_t>(x_prev.shape()[0], t));
}

Tensor DiscriminatorNet::forward_single(const Tensor& x,
                                        const std::vector<std::size_t>& steps) const {
    if (cfg_.pairwise) throw Error("discriminator: configured pairwise, use forward");
    if (x.rank() != 2 || x.shape()[1] != cfg_.data_dim)
        throw ShapeError("discriminator: bad input shape " + shape_str(x.shape()));
    return trunk(x, steps);
}

Tensor denoise_step_given(const GeneratorNet& g, const DiffusionSchedule& sched,
                          const Tensor& x_t, std::size_t t, const Tensor& z, const Tensor& eps) {
    sched.check_step(t);
    Tensor pred = g.forward(x_t, z, t);
    switch (g.config().parametrization) {
        case Parametrization::direct:
            return pred;
        case Parametrization::noise: {
            Tensor x0 = x0_from_eps(sched, x_t, pred, t);
            const PosteriorParams p = posterior_params(sched, t);
            Tensor mean = add(affine(x0, p.coef_x0, 0.0), affine(x_t, p.coef_xt, 0.0));
            if (p.var == 0.0 || !eps.defined()) return mean;
            return add(mean, affine(eps, std::sqrt(p.var), 0.0));
        }
        case Parametrization::x0:
        default: {
            const PosteriorParams p = posterior_params(sched, t);
            Tensor mean = add(affine(pred, p.coef_x0, 0.0), affine(x_t, p.coef_xt, 0.0));
            if (p.var == 0.0 || !eps.defined()) return mean;
            return add(mean, affine(eps, std::sqrt(p.var), 0.0));
        }
    }
}

Tensor denoise_step(const GeneratorNet& g, const DiffusionSchedule& sched, const Tensor& x_t,
                    std::size_t t, Rng& rng) {
    const std::size_t B = x_t.shape()[0];
    Tensor z;
    if (g.config().latent_enabled)
        z = sample_normal(rng, {B, g.config().latent_dim}, g.config().dtype);
    Tensor eps;
    const bool needs_noise = g.config().parametrization != Parametrization::direct &&
                             posterior_params(sched, t).var > 0.0;
    if (needs_noise) eps = sample_normal(rng, x_t.shape(), x_t.dtype());
    return denoise_step_given(g, sched, x_t, t, z, eps);
}

Tensor denoise_step_rows(const GeneratorNet& g, const DiffusionSchedule& sched,
                         const Tensor& x_t, const std::vector<std::size_t>& steps, Rng& rng) {
    const std::size_t B = x_t.shape()[0];
    Tensor z;
    if (g.config().latent_enabled)
        z = sample_normal(rng, {B, g.config().latent_dim}, g.config().dtype);
    Tensor pred = g.forward(x_t, z, steps);
    if (g.config().parametrization == Parametrization::direct) return pred;

    Tensor x0 = pred;
    if (g.config().parametrization == Parametrization::noise) {
        // per-row inversion of the marginal form
        std::vector<double> inv_root_ab(B), sd(B);
        for (std::size_t r = 0; r < B; ++r) {
            inv_root_ab[r] = 1.0 / std::sqrt(sched.alpha_bar(steps[r]));
            sd[r] = -std::sqrt(sched.one_minus_alpha_bar(steps[r]));
        }
        Tensor scaled_eps = mul_colvec(pred, Tensor::constant({B}, sd, x_t.dtype()));
        x0 = mul_colvec(add(x_t, scaled_eps), Tensor::constant({B}, inv_root_ab, x_t.dtype()));
    }
    std::vector<PosteriorParams> params(B);
    for (std::size_t r = 0; r < B; ++r) params[r] = posterior_params(sched, steps[r]);
    return posterior_sample_rows(params, x0, x_t, rng);
}

}  // namespace ddgan
