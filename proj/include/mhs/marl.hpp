#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mhs/env.hpp"
#include "mhs/heuristics.hpp"
#include "mhs/mlp.hpp"

namespace mhs {

enum class ActionSource : uint8_t { Actor, Heuristic };
enum class CriticArch { Joint, Separate };
enum class InterleaveMode { AlternateByStep, ActorOnly, HeuristicOnly };
enum class ParityMode { GlobalStep, PerAgentEvent };

const char* to_string(CriticArch a);

// Stored only on true event indicators. old_log_prob is evaluated under the
// collecting actor at collection time for both sources, so the PPO ratio is
// well defined for heuristic samples too.
struct Transition {
  int agent = -1;
  std::vector<double> state;
  int action = -1;
  ActionSource source = ActionSource::Actor;
  double old_log_prob = 0.0;
  int64_t step = 0;
  double ret = 0.0;        // Monte-Carlo reward-to-go R_t
  double advantage = 0.0;  // raw R_t - V(s_t)
};

struct EpisodeBuffer {
  std::vector<std::vector<Transition>> per_agent;  // by env agent id
  std::vector<double> rewards;  // shared per-step stream, length episode_steps
  double episode_return = 0.0;
  int64_t total_throughput = 0;
  bool complete = false;  // episode ran to termination
  bool returns_ready = false;
};

// Actor parameter blocks for trainable agents plus one critic (joint) or
// one per agent class (separate). gamma/clip follow the stock training
// hyperparameters.
struct PolicySet {
  std::vector<int> actor_agents;  // env agent ids with actors, ascending
  std::vector<Mlp> actors;
  std::vector<AdamW> actor_opts;
  CriticArch arch = CriticArch::Separate;
  std::vector<AgentClass> critic_classes;  // empty for joint
  std::vector<Mlp> critics;
  std::vector<AdamW> critic_opts;
  double gamma = 0.99;
  double clip_eps = 0.2;

  int actor_index(int agent) const;   // -1 when the agent has no actor
  int critic_index(AgentClass cls) const;
};

PolicySet make_policy_set(const Env& env, CriticArch arch,
                          bool junction_agents_trainable, uint64_t seed,
                          double lr, double weight_decay,
                          const std::vector<int>& hidden = {64, 64});

// one heuristic callback per env agent id
struct HeuristicBinding {
  std::vector<AgentHeuristic> per_agent;
  std::string description;  // for manifests/logs

  static HeuristicBinding named(const Env& env, const std::string& receiving,
                                const HeuristicParams& params);
  // frozen first-iteration policies as the interleaved heuristic
  static HeuristicBinding frozen(const Env& env, const std::string& policy_dir);
};

struct DecisionTraceRow {
  int64_t step = 0;  // step the decision event was raised
  int agent = -1;
  int action = -1;
  ActionSource source = ActionSource::Actor;
};

struct CollectOptions {
  InterleaveMode mode = InterleaveMode::AlternateByStep;
  ParityMode parity = ParityMode::GlobalStep;
  bool greedy_actors = false;   // evaluation uses argmax actions
  bool store_transitions = true;
  std::vector<DecisionTraceRow>* trace = nullptr;
};

EpisodeBuffer collect_episode(Env& env, const PolicySet& ps,
                              const HeuristicBinding& heur,
                              const CollectOptions& opt, uint64_t env_seed,
                              Rng& action_rng);

// R_t over the full shared reward stream (Monte-Carlo; episode must have
// ended), evaluated at each transition's step index.
void compute_returns(EpisodeBuffer& buf, double gamma);
// raw advantages R_t - V(s_t) under the architecture-matched critic
void compute_advantages(EpisodeBuffer& buf, const PolicySet& ps,
                        const std::vector<AgentClass>& agent_classes);

// per-sample clipped surrogate, ascent semantics
double clipped_objective(double ratio, double advantage, double eps);

// Single-batch gradients of the (descent-form) actor loss
//   L = -mean(min(r A, clip(r) A)) - entropy_coef * mean(H)
// for given per-transition advantages. Returns the loss value.
double actor_loss_gradients(const Mlp& actor,
                            const std::vector<const Transition*>& batch,
                            const std::vector<double>& advantages, double eps,
                            double entropy_coef, Gradients& out,
                            double* clip_fraction);

double critic_loss_gradients(const Mlp& critic,
                             const std::vector<const std::vector<double>*>& states,
                             const std::vector<double>& returns,
                             Gradients& out);

struct ActorUpdateStats {
  double loss = 0.0;
  double clip_fraction = 0.0;
  int samples = 0;
};

// K ascent epochs on the clipped surrogate, full batch. Advantages are
// normalized to zero mean / unit variance inside the update.
ActorUpdateStats ppo_actor_update(Mlp& actor, AdamW& opt,
                                  const std::vector<Transition>& transitions,
                                  double eps, int epochs,
                                  bool include_heuristic_samples,
                                  double entropy_coef);

double critic_update(Mlp& critic, AdamW& opt,
                     const std::vector<const Transition*>& batch, int epochs);

struct TrainSetup {
  std::shared_ptr<const Topology> topo;
  DemandModel demand;
  EnvConfig env_cfg;
  int episodes = 300;
  int update_epochs = 4;
  double lr = 0.001;
  double weight_decay = 0.01;
  double gamma = 0.99;
  double clip_eps = 0.2;
  double entropy_coef = 0.0;
  CriticArch arch = CriticArch::Separate;
  bool junction_agents_trainable = false;
  InterleaveMode mode = InterleaveMode::AlternateByStep;
  ParityMode parity = ParityMode::GlobalStep;
  bool actor_on_heuristic_samples = true;
  uint64_t train_seed = 1;
  int eval_interval = 10;
  int eval_episodes = 5;
  std::vector<int> hidden = {64, 64};
  // receiving-class heuristic name, or "frozen:<dir>" for MARL*
  std::string heuristic = "high";
  HeuristicParams heuristic_params;
  std::string out_dir;  // checkpoints + log land here when non-empty

  static TrainSetup from_config(const ConfigDoc& doc);
};

struct TrainLogRow {
  int episode = 0;
  double train_return = 0.0;
  double eval_return_mean = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> actor_losses;
  double critic_loss = 0.0;
  double clip_fraction = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  PolicySet best;
  PolicySet last;
  std::vector<TrainLogRow> log;
  double best_eval = -std::numeric_limits<double>::infinity();
  int best_episode = -1;
  std::string policy_dir;  // where the best checkpoint bundle was written
};

TrainResult train(const TrainSetup& setup);

// Train config whose interleaved heuristic is the frozen first-iteration
// policy bundle; fresh actor/critic initialization.
TrainSetup make_second_iteration_setup(const TrainSetup& base,
                                       const std::string& first_iter_dir);

// checkpoint bundle: one file per actor/critic plus a manifest
void save_policy_set(const std::string& dir, const PolicySet& ps,
                     const Env& env, uint64_t config_hash,
                     uint64_t train_seed, const std::string& heuristic_desc);
PolicySet load_policy_set(const std::string& dir, const Env& env);
std::string policy_manifest_text(const std::string& dir);

void write_training_log_csv(const std::string& path,
                            const std::vector<TrainLogRow>& log);

}  // namespace mhs
