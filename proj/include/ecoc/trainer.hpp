#pragma once
// Iterative optimization: critic step, actor step, soft target update.
// Includes the finite-difference gradient-check harness and bit-exact
// checkpointing of parameters, optimizer moments, and rng state.

#include "ecoc/corpus.hpp"
#include "ecoc/critic.hpp"
#include "ecoc/objective.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ecoc::trainer {

using corpus::Batch;
using corpus::TransitionStore;

struct TrainConfig {
    std::int64_t steps = 1000;
    int batch_size = 256;
    double lr = 1e-3;
    double actor_lr = -1.0;   // negative: inherit lr
    double critic_lr = -1.0;  // negative: inherit lr
    double weight_decay = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double tau = 0.995;  // target retention per soft update
    objective::LossConfig loss;
    std::uint64_t seed = 1;
    std::int64_t checkpoint_every = 0;  // 0: only at the end
    std::int64_t log_every = 10;
    bool target_embeddings = false;  // snapshot the embedding matrix into targets

    double resolved_actor_lr() const { return actor_lr < 0 ? lr : actor_lr; }
    double resolved_critic_lr() const { return critic_lr < 0 ? lr : critic_lr; }
};

// Adam moments for one parameter-group list. The critic and actor sides keep
// separate moments for the parameters they share.
struct AdamSide {
    std::vector<Vec> m;
    std::vector<Vec> v;
    std::int64_t t = 0;
};

struct TrainState {
    critic::Nets nets;
    critic::TargetSet targets;
    AdamSide opt_critic;
    AdamSide opt_actor;
    std::int64_t step = 0;
    Rng rng{0};
};

TrainState init_state(int n_items, int dim, int hidden_dim, const TrainConfig& cfg);

struct StepStats {
    double l_td = 0.0;
    double l_reg = 0.0;
    double l_bc = 0.0;
    double l_dc = 0.0;
    double wall_ms = 0.0;
};

// One optimization step: critic update, actor update, soft target update.
StepStats train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg);

struct CurveRow {
    std::int64_t step = 0;
    double l_td = 0.0;
    double l_reg = 0.0;
    double l_bc = 0.0;
    double l_dc = 0.0;
    double wall_ms = 0.0;
};

struct FitResult {
    std::vector<CurveRow> curve;
};

// Runs train_step on uniformly sampled batches until state.step reaches
// cfg.steps; fully reproducible from the state's rng.
FitResult fit(TrainState& state, const TransitionStore& store, const TrainConfig& cfg,
              const std::function<void(const TrainState&)>& on_checkpoint = nullptr);

enum class LossKind { td, reg, bc, dc, critic_combined, actor_combined };

// Loss value with explicit live/frozen separation; the rng is re-seeded per
// evaluation so sampled items are identical across calls.
double loss_value(LossKind kind, const critic::Nets& live, const critic::Nets& frozen,
                  const critic::TargetSet& targets, const Batch& batch,
                  const objective::LossConfig& cfg, std::uint64_t seed);

double loss_with_grads(LossKind kind, const critic::Nets& nets, const critic::TargetSet& targets,
                       const Batch& batch, const objective::LossConfig& cfg, std::uint64_t seed,
                       critic::NetGrads& grads);

struct GroupCheck {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

struct GradCheckReport {
    std::vector<GroupCheck> groups;
    double worst_rel() const;
};

// Central finite differences (step fd_step) against the analytic gradients,
// parameter group by parameter group.
GradCheckReport grad_check(LossKind kind, const critic::Nets& nets,
                           const critic::TargetSet& targets, const Batch& batch,
                           const objective::LossConfig& cfg, std::uint64_t seed,
                           double fd_step = 1e-5);

// rel = |a - b| / max(|a|, |b|, 1e-6)
double rel_err(double a, double b);

struct LoadedCheckpoint {
    TrainState state;
    std::string stored_digest;
    bool digest_mismatch = false;
};

void save_checkpoint(const TrainState& state, const std::string& path,
                     const std::string& config_digest);
LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& expected_digest);

}  // namespace ecoc::trainer
