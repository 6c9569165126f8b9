#include "n2n/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/threads.hpp"
#include "n2n/transport.hpp"

namespace n2n::training {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Scratch {
    std::vector<ad::Tape> tapes;
    std::vector<objective::RecordedPoint> recs;
    std::vector<ad::ParamGrad> chunk_grads;
    std::vector<objective::LossBreakdown> chunk_losses;
    std::vector<uint32_t> alive;
    PointCloud pulled;
    std::vector<double> gc_nearest;
};

struct StepOutput {
    objective::LossBreakdown loss;
    double gnorm = 0.0;
    std::size_t active = 0;
};

StepOutput gradient_step(const field::FieldParams& params, const sampling::BatchPair& batch,
                         const TrainConfig& cfg, int64_t iter, Scratch& ws,
                         std::vector<double>& grad) {
    const std::size_t b = batch.queries.size();
    const std::size_t workers = worker_count();
    ws.tapes.resize(b);
    ws.recs.resize(b);
    if (ws.chunk_grads.size() < workers)
        ws.chunk_grads.resize(workers, ad::ParamGrad(params.size()));
    ws.chunk_losses.assign(workers, {});

    objective::PullOptions popts;
    popts.detach_direction = cfg.detach_pull_direction;

    // Phase 1: record field evaluation and pull per query.
    parallel_chunks(b, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            ad::Tape& tape = ws.tapes[i];
            tape.clear();
            tape.bind({params.data.data(), params.data.size()}, &params.layout);
            ws.recs[i] = objective::record_pull(tape, params, batch.queries[i], popts);
        }
    });

    ws.alive.clear();
    ws.pulled.clear();
    for (std::size_t i = 0; i < b; ++i) {
        if (!ws.recs[i].degenerate) {
            ws.alive.push_back(static_cast<uint32_t>(i));
            ws.pulled.push_back(ws.recs[i].pulled_value);
        }
    }
    const std::size_t m = ws.alive.size();
    if (m == 0) throw NumericError("training step: every query had a degenerate gradient");

    // Transport between pulled queries and the target batch (assignment is a
    // constant of the step).
    std::span<const Vec3> targets(batch.targets.data(), m);
    const bool approximate = cfg.auction_above > 0 && m > cfg.auction_above;
    const transport::Assignment asg = approximate
                                          ? transport::auction_assignment(ws.pulled, targets)
                                          : transport::min_cost_assignment(ws.pulled, targets);

    const bool use_gc = cfg.mode == objective::Mode::Mlp && cfg.weights.lambda > 0.0 && m >= 2;
    ws.gc_nearest.assign(m, std::numeric_limits<double>::infinity());
    if (use_gc) {
        const KdTree tree(ws.pulled);
        for (std::size_t k = 0; k < m; ++k) {
            const Vec3& q = batch.queries[ws.alive[k]];
            ws.gc_nearest[k] =
                std::sqrt(tree.nearest_excluding(q, static_cast<uint32_t>(k)).dist2);
        }
    }

    const double inv_m = 1.0 / static_cast<double>(m);
    const double l1 = cfg.weights.lambda1(iter);
    objective::TermWeights w;
    w.emd = inv_m;
    w.gc = cfg.mode == objective::Mode::Mlp ? cfg.weights.lambda * inv_m : 0.0;
    w.pull = cfg.mode == objective::Mode::Fast ? l1 * inv_m : 0.0;
    w.eik = cfg.mode == objective::Mode::Fast ? cfg.weights.lambda2 * inv_m : 0.0;

    // Phase 2: record per-point losses and run the reverse pass; accumulation
    // is per chunk, reduced below in chunk order.
    for (auto& g : ws.chunk_grads) g.reset();
    parallel_chunks(m, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& lb = ws.chunk_losses[chunk];
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t i = ws.alive[k];
            ad::Tape& tape = ws.tapes[i];
            const Vec3 target = batch.targets[asg.perm[k]];
            const Vec3* pull_target = batch.nearest.empty() ? nullptr : &batch.nearest[i];
            const int root = objective::record_point_loss(tape, ws.recs[i], batch.queries[i],
                                                          &target, ws.gc_nearest[k], pull_target, w);
            tape.backward(root, ws.chunk_grads[chunk]);

            lb.emd += norm(ws.recs[i].pulled_value - target);
            if (use_gc && std::isfinite(ws.gc_nearest[k]))
                lb.gc += std::max(0.0, std::fabs(ws.recs[i].d_value) - ws.gc_nearest[k]);
            if (w.pull != 0.0 && pull_target)
                lb.pull += norm2(ws.recs[i].pulled_value - *pull_target);
            if (w.eik != 0.0) {
                const double gn = norm(tape.value3(ws.recs[i].grad)) - 1.0;
                lb.eik += gn * gn;
            }
        }
    });

    grad.assign(params.size(), 0.0);
    for (std::size_t c = 0; c < workers; ++c)
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += ws.chunk_grads[c].g[i];

    StepOutput out;
    out.active = m;
    for (std::size_t c = 0; c < workers; ++c) {
        out.loss.emd += ws.chunk_losses[c].emd;
        out.loss.gc += ws.chunk_losses[c].gc;
        out.loss.pull += ws.chunk_losses[c].pull;
        out.loss.eik += ws.chunk_losses[c].eik;
    }
    out.loss.emd *= inv_m;
    out.loss.gc *= inv_m;
    out.loss.pull *= inv_m;
    out.loss.eik *= inv_m;
    out.loss.total = cfg.mode == objective::Mode::Mlp
                         ? out.loss.emd + cfg.weights.lambda * out.loss.gc
                         : out.loss.emd + l1 * out.loss.pull + cfg.weights.lambda2 * out.loss.eik;
    double g2 = 0.0;
    for (double g : grad) g2 += g * g;
    out.gnorm = std::sqrt(g2);
    return out;
}

void adam_update(field::FieldParams& params, field::OptimState& opt, const std::vector<double>& grad,
                 const TrainConfig& cfg, int64_t step_1based, double clip_scale) {
    const double t = static_cast<double>(step_1based);
    const double b1c = 1.0 - std::pow(cfg.beta1, t);
    const double b2c = 1.0 - std::pow(cfg.beta2, t);
    const double decay =
        std::max(0.0, 1.0 - cfg.lr_decay * (t - 1.0) / std::max<double>(1.0, static_cast<double>(cfg.iterations)));

    std::vector<char> is_table(params.layout.blocks.size(), 0);
    for (int tb : params.table_blocks) is_table[static_cast<std::size_t>(tb)] = 1;

    for (std::size_t b = 0; b < params.layout.blocks.size(); ++b) {
        const auto& bl = params.layout.blocks[b];
        const double lr = (is_table[b] ? cfg.lr_tables : cfg.lr) * decay;
        for (std::size_t i = bl.offset; i < bl.offset + bl.size(); ++i) {
            const double g = grad[i] * clip_scale;
            opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
            opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
            params.data[i] -=
                lr * (opt.m[i] / b1c) / (std::sqrt(opt.v[i] / b2c) + cfg.adam_eps);
        }
    }
    // Keep every stored value exactly float32-representable so checkpoints
    // round-trip bitwise and resumed runs replay the original trajectory.
    field::quantize_f32(params.data);
    field::quantize_f32(opt.m);
    field::quantize_f32(opt.v);
}

TrainResult run_loop(field::FieldParams params, field::OptimState opt, int64_t start_iter,
                     const sampling::ObservationSet& s, const TrainConfig& cfg) {
    TrainResult result;
    result.log.entries.reserve(static_cast<std::size_t>(cfg.iterations - start_iter));

    double far = cfg.far_field_fraction;
    if (far < 0.0) far = cfg.mode == objective::Mode::Fast ? 0.1 : 0.0;
    sampling::PoolOptions pool_opts = cfg.pool;
    pool_opts.far_field_fraction = far;
    const sampling::QueryPool pool = sampling::build_pool_set(s, pool_opts, cfg.seed);

    Scratch ws;
    std::vector<double> grad;
    field::FieldParams last_good = params;
    field::OptimState last_good_opt = opt;

    for (int64_t iter = start_iter; iter < cfg.iterations; ++iter) {
        const auto t0 = Clock::now();
        Rng rng = Rng::fork(cfg.seed, 0xBA7C4 + static_cast<uint64_t>(iter));
        TrainLogEntry entry;
        entry.iter = iter;
        try {
            const sampling::BatchPair batch = sampling::sample_pair(pool, s, cfg.batch, rng);
            const StepOutput step = gradient_step(params, batch, cfg, iter, ws, grad);
            if (!std::isfinite(step.loss.total))
                throw NumericError("training loss became non-finite");
            double clip_scale = 1.0;
            if (cfg.clip_gradients && step.gnorm > cfg.clip_norm && step.gnorm > 0.0)
                clip_scale = cfg.clip_norm / step.gnorm;
            opt.step = static_cast<uint64_t>(iter) + 1;
            adam_update(params, opt, grad, cfg, iter + 1, clip_scale);

            entry.total = step.loss.total;
            entry.emd = step.loss.emd;
            entry.gc = step.loss.gc;
            entry.pull = step.loss.pull;
            entry.eik = step.loss.eik;
            entry.gnorm = step.gnorm;
            entry.ms = elapsed_ms(t0);
            result.log.entries.push_back(entry);
        } catch (const NumericError& e) {
            result.aborted = true;
            result.abort_iter = iter;
            result.abort_reason = e.what();
            params = last_good;
            opt = last_good_opt;
            if (!cfg.checkpoint_prefix.empty())
                field::save_field(params, cfg.checkpoint_prefix + "_abort.n2nf", &opt);
            break;
        }
        last_good = params;
        last_good_opt = opt;
        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 &&
            !cfg.checkpoint_prefix.empty()) {
            field::save_field(params, cfg.checkpoint_prefix + "_iter" + std::to_string(iter + 1) +
                                          ".n2nf",
                              &opt);
        }
    }

    if (!cfg.log_path.empty()) write_csv(result.log, cfg.log_path);
    result.params = std::move(params);
    return result;
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (batch < 1) throw ConfigError("batch size must be >= 1");
    if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
    if (mode == objective::Mode::Fast && !grid)
        throw ConfigError("fast mode requires a hash-grid configuration");
    objective::validate(weights);
    field::validate(mlp);
    if (grid) field::validate(*grid);
}

void write_csv(const TrainLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot open train log for writing: " + path);
    os << "iter,total,emd,gc,pull,eik,ms,gnorm\n";
    char line[256];
    for (const auto& e : log.entries) {
        std::snprintf(line, sizeof(line), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f,%.10g\n",
                      static_cast<long long>(e.iter), e.total, e.emd, e.gc, e.pull, e.eik, e.ms,
                      e.gnorm);
        os << line;
    }
}

TrainResult train(const sampling::ObservationSet& s, const TrainConfig& cfg) {
    cfg.validate();
    if (s.clouds.empty()) throw ContractError("train: empty observation set");
    const std::optional<field::HashGridConfig> grid =
        cfg.mode == objective::Mode::Fast ? cfg.grid : std::nullopt;
    field::FieldParams params = field::init_field(cfg.mlp, grid, cfg.seed);
    field::OptimState opt;
    opt.m.assign(params.size(), 0.0);
    opt.v.assign(params.size(), 0.0);
    opt.step = 0;
    return run_loop(std::move(params), std::move(opt), 0, s, cfg);
}

TrainResult resume(const std::string& checkpoint_path, const sampling::ObservationSet& s,
                   const TrainConfig& cfg) {
    cfg.validate();
    field::OptimState opt;
    field::FieldParams params = field::load_field(checkpoint_path, &opt);
    return run_loop(std::move(params), std::move(opt), static_cast<int64_t>(opt.step), s, cfg);
}

DirectResult direct_point_optimization(const sampling::ObservationSet& s, std::size_t m,
                                       int64_t iters, double lr, uint64_t seed, DirectLoss loss) {
    if (m < 1) throw ContractError("direct_point_optimization: m must be >= 1");
    for (const auto& c : s.clouds)
        if (c.size() < m)
            throw ContractError("direct_point_optimization: every observation needs >= m points");

    Rng init_rng = Rng::fork(seed, 0xD1EC7);
    const std::size_t n = s.clouds.size();
    const PointCloud& first = s.clouds[init_rng.below(n)];
    PointCloud g(m);
    {
        const auto sel = init_rng.sample_without_replacement(static_cast<uint32_t>(first.size()),
                                                             static_cast<uint32_t>(m));
        for (std::size_t i = 0; i < m; ++i) g[i] = first[sel[i]];
    }

    std::vector<Vec3> mom(m), vel(m);
    DirectResult out;
    out.loss_trace.reserve(static_cast<std::size_t>(iters));
    for (int64_t t = 1; t <= iters; ++t) {
        Rng rng = Rng::fork(seed, 0x57E9 + static_cast<uint64_t>(t));
        const PointCloud& obs = s.clouds[rng.below(n)];
        const auto sel = rng.sample_without_replacement(static_cast<uint32_t>(obs.size()),
                                                        static_cast<uint32_t>(m));
        PointCloud targets(m);
        for (std::size_t i = 0; i < m; ++i) targets[i] = obs[sel[i]];

        std::vector<Vec3> grad(m);
        double value = 0.0;
        if (loss == DirectLoss::Emd) {
            const auto emd = transport::emd_loss(g, targets);
            value = emd.value;
            grad = emd.grad;
        } else {
            // Symmetric squared Chamfer with both directions mean-reduced.
            const KdTree tt(targets);
            const KdTree gt(g);
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                const auto hit = tt.nearest(g[i]);
                value += hit.dist2 * inv;
                grad[i] += (g[i] - targets[hit.index]) * (2.0 * inv);
            }
            for (std::size_t j = 0; j < m; ++j) {
                const auto hit = gt.nearest(targets[j]);
                value += hit.dist2 * inv;
                grad[hit.index] += (g[hit.index] - targets[j]) * (2.0 * inv);
            }
        }
        out.loss_trace.push_back(value);

        const double b1c = 1.0 - std::pow(0.9, static_cast<double>(t));
        const double b2c = 1.0 - std::pow(0.999, static_cast<double>(t));
        const double lr_t = lr * (1.0 - static_cast<double>(t - 1) / static_cast<double>(iters));
        for (std::size_t i = 0; i < m; ++i) {
            for (int a = 0; a < 3; ++a) {
                mom[i][a] = 0.9 * mom[i][a] + 0.1 * grad[i][a];
                vel[i][a] = 0.999 * vel[i][a] + 0.001 * grad[i][a] * grad[i][a];
                g[i][a] -= lr_t * (mom[i][a] / b1c) / (std::sqrt(vel[i][a] / b2c) + 1e-8);
            }
        }
    }
    out.points = std::move(g);
    return out;
}

}  // namespace n2n::training
