#include "mhs/marl.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "mhs/errors.hpp"

namespace mhs {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t k) {
  uint64_t s = seed;
  uint64_t a = splitmix64(s);
  s = a ^ (tag * 0x9E3779B97F4A7C15ULL) ^ (k + 1);
  return splitmix64(s);
}

std::string hex64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const char* class_name(AgentClass c) {
  return c == AgentClass::Receiving ? "receiving" : "junction";
}

}  // namespace

const char* to_string(CriticArch a) {
  return a == CriticArch::Joint ? "joint" : "separate";
}

int PolicySet::actor_index(int agent) const {
  for (size_t i = 0; i < actor_agents.size(); ++i)
    if (actor_agents[i] == agent) return static_cast<int>(i);
  return -1;
}

int PolicySet::critic_index(AgentClass cls) const {
  if (arch == CriticArch::Joint) return critics.empty() ? -1 : 0;
  for (size_t i = 0; i < critic_classes.size(); ++i)
    if (critic_classes[i] == cls) return static_cast<int>(i);
  return -1;
}

PolicySet make_policy_set(const Env& env, CriticArch arch,
                          bool junction_agents_trainable, uint64_t seed,
                          double lr, double weight_decay,
                          const std::vector<int>& hidden) {
  PolicySet ps;
  ps.arch = arch;
  auto layer_sizes = [&](int out_dim) {
    std::vector<int> sizes = {env.obs_dim()};
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(out_dim);
    return sizes;
  };
  for (const auto& spec : env.agents()) {
    if (spec.cls == AgentClass::Junction && !junction_agents_trainable)
      continue;
    ps.actor_agents.push_back(spec.agent_id);
    ps.actors.push_back(Mlp::init(layer_sizes(spec.action_dim),
                                  mix_seed(seed, 0xAC70, spec.agent_id)));
    ps.actor_opts.push_back(AdamW::init(ps.actors.back(), lr, weight_decay));
  }
  if (ps.actors.empty())
    throw ConfigError("no trainable agents in this configuration");

  std::vector<AgentClass> classes_present;
  for (int agent : ps.actor_agents) {
    AgentClass c = env.agents()[agent].cls;
    if (std::find(classes_present.begin(), classes_present.end(), c) ==
        classes_present.end())
      classes_present.push_back(c);
  }
  int n_critics = arch == CriticArch::Joint
                      ? 1
                      : static_cast<int>(classes_present.size());
  for (int i = 0; i < n_critics; ++i) {
    ps.critics.push_back(
        Mlp::init(layer_sizes(1), mix_seed(seed, 0xC817, i)));
    ps.critic_opts.push_back(AdamW::init(ps.critics.back(), lr, weight_decay));
    if (arch == CriticArch::Separate)
      ps.critic_classes.push_back(classes_present[i]);
  }
  return ps;
}

HeuristicBinding HeuristicBinding::named(const Env& env,
                                         const std::string& receiving,
                                         const HeuristicParams& params) {
  HeuristicBinding b;
  b.description = "named:" + receiving;
  AgentHeuristic recv_fn = named_receiving_heuristic(receiving, params);
  AgentHeuristic junc_fn = [](const DispatchContext& ctx, const Observation&) {
    return junction_least_pallets(ctx);
  };
  for (const auto& spec : env.agents())
    b.per_agent.push_back(spec.cls == AgentClass::Receiving ? recv_fn : junc_fn);
  return b;
}

HeuristicBinding HeuristicBinding::frozen(const Env& env,
                                          const std::string& policy_dir) {
  HeuristicBinding b;
  b.description = "frozen:" + policy_dir;
  ordered_json manifest =
      ordered_json::parse(policy_manifest_text(policy_dir));
  if (manifest.at("caps_hash").get<std::string>() != hex64(env.caps_hash()))
    throw RuntimeFailure(
        "frozen policies at '" + policy_dir +
        "' were trained under different observation normalization caps");
  std::map<int, std::string> files;
  for (const auto& a : manifest.at("actors"))
    files[a.at("agent_id").get<int>()] =
        a.at("file").get<std::string>();
  AgentHeuristic junc_fn = [](const DispatchContext& ctx, const Observation&) {
    return junction_least_pallets(ctx);
  };
  for (const auto& spec : env.agents()) {
    auto it = files.find(spec.agent_id);
    if (it != files.end()) {
      LoadedCheckpoint ck =
          load_checkpoint(policy_dir + "/" + it->second);
      b.per_agent.push_back(frozen_policy_heuristic(
          std::move(ck.net), spec.action_dim, env.obs_dim()));
    } else if (spec.cls == AgentClass::Junction) {
      b.per_agent.push_back(junc_fn);
    } else {
      throw RuntimeFailure("policy bundle '" + policy_dir +
                           "' has no actor for receiving agent " +
                           std::to_string(spec.agent_id));
    }
  }
  return b;
}

EpisodeBuffer collect_episode(Env& env, const PolicySet& ps,
                              const HeuristicBinding& heur,
                              const CollectOptions& opt, uint64_t env_seed,
                              Rng& action_rng) {
  if (static_cast<int>(heur.per_agent.size()) != env.agent_count())
    throw RuntimeFailure("heuristic binding does not cover every agent");
  StepResult res = env.reset(env_seed);
  EpisodeBuffer buf;
  buf.per_agent.resize(env.agent_count());
  buf.rewards.assign(env.config().episode_steps, 0.0);
  std::vector<int64_t> event_count(env.agent_count(), 0);
  std::vector<std::pair<int, int>> actions;
  ForwardCache cache;

  while (!res.done) {
    actions.clear();
    for (int agent = 0; agent < env.agent_count(); ++agent) {
      if (!res.event[agent]) continue;
      const AgentSpec& spec = env.agents()[agent];
      Observation obs = env.observe(agent);
      int actor_idx = ps.actor_index(agent);

      bool use_actor = false;
      if (actor_idx >= 0) {
        switch (opt.mode) {
          case InterleaveMode::ActorOnly: use_actor = true; break;
          case InterleaveMode::HeuristicOnly: use_actor = false; break;
          case InterleaveMode::AlternateByStep: {
            int64_t parity = opt.parity == ParityMode::GlobalStep
                                 ? res.clock
                                 : event_count[agent];
            use_actor = (parity % 2 == 0);
            break;
          }
        }
      }

      int action = -1;
      if (actor_idx >= 0) {
        const auto& logits = forward_cached(ps.actors[actor_idx], obs, cache);
        if (use_actor) {
          if (opt.greedy_actors) {
            action = argmax(logits);
          } else {
            auto probs = softmax(logits);
            action = sample_categorical(probs, action_rng);
          }
        } else {
          DispatchContext ctx = build_dispatch_context(
              env.topology(), env.state(), spec.node, &action_rng);
          action = heur.per_agent[agent](ctx, obs);
        }
        if (opt.store_transitions) {
          Transition tr;
          tr.agent = agent;
          tr.action = action;
          tr.source =
              use_actor ? ActionSource::Actor : ActionSource::Heuristic;
          tr.old_log_prob = log_prob(logits, action);
          tr.step = res.clock;
          tr.state = std::move(obs);
          buf.per_agent[agent].push_back(std::move(tr));
        }
      } else {
        DispatchContext ctx = build_dispatch_context(
            env.topology(), env.state(), spec.node, &action_rng);
        action = heur.per_agent[agent](ctx, obs);
      }
      event_count[agent] += 1;
      if (opt.trace)
        opt.trace->push_back({res.clock, agent, action,
                              use_actor ? ActionSource::Actor
                                        : ActionSource::Heuristic});
      actions.push_back({agent, action});
    }
    res = env.step(actions);
    buf.rewards[res.clock - 1] = res.reward;
    buf.episode_return += res.reward;
  }
  buf.total_throughput =
      env.state().counters.receiving + env.state().counters.shipping;
  buf.complete = true;
  return buf;
}

void compute_returns(EpisodeBuffer& buf, double gamma) {
  if (!buf.complete)
    throw RuntimeFailure("compute_returns: episode incomplete");
  std::vector<double> rtg(buf.rewards.size(), 0.0);
  double acc = 0.0;
  for (int i = static_cast<int>(buf.rewards.size()) - 1; i >= 0; --i) {
    acc = buf.rewards[i] + gamma * acc;
    rtg[i] = acc;
  }
  for (auto& agent_buf : buf.per_agent)
    for (auto& tr : agent_buf) tr.ret = rtg[tr.step - 1];
  buf.returns_ready = true;
}

void compute_advantages(EpisodeBuffer& buf, const PolicySet& ps,
                        const std::vector<AgentClass>& agent_classes) {
  if (!buf.returns_ready)
    throw RuntimeFailure("compute_advantages: returns not filled");
  for (size_t agent = 0; agent < buf.per_agent.size(); ++agent) {
    auto& agent_buf = buf.per_agent[agent];
    if (agent_buf.empty()) continue;
    int ci = ps.critic_index(agent_classes[agent]);
    if (ci < 0)
      throw RuntimeFailure("no critic for agent class " +
                           std::string(class_name(agent_classes[agent])));
    const Mlp& critic = ps.critics[ci];
    for (auto& tr : agent_buf)
      tr.advantage = tr.ret - forward(critic, tr.state)[0];
  }
}

double clipped_objective(double ratio, double advantage, double eps) {
  double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage;
  return std::min(ratio * advantage, clipped);
}

double actor_loss_gradients(const Mlp& actor,
                            const std::vector<const Transition*>& batch,
                            const std::vector<double>& advantages, double eps,
                            double entropy_coef, Gradients& out,
                            double* clip_fraction) {
  out.zero();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  int clipped_n = 0;
  ForwardCache cache;
  std::vector<double> dlogits;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = *batch[i];
    const auto& logits = forward_cached(actor, tr.state, cache);
    auto probs = softmax(logits);
    double lp = log_prob(logits, tr.action);
    double ratio = std::exp(lp - tr.old_log_prob);
    double adv = advantages[i];
    double unclipped = ratio * adv;
    double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    loss -= std::min(unclipped, clipped) * inv_b;
    if (std::abs(ratio - 1.0) > eps) ++clipped_n;

    // gradient flows only while the unclipped branch is the active minimum
    double dobj_dlp = (unclipped <= clipped) ? unclipped : 0.0;
    double dl_dlp = -dobj_dlp * inv_b;
    dlogits.assign(probs.size(), 0.0);
    for (size_t k = 0; k < probs.size(); ++k) dlogits[k] = -dl_dlp * probs[k];
    dlogits[tr.action] += dl_dlp;

    if (entropy_coef != 0.0) {
      double h = entropy(probs);
      loss -= entropy_coef * h * inv_b;
      for (size_t k = 0; k < probs.size(); ++k) {
        double pk = probs[k];
        if (pk <= 0) continue;
        dlogits[k] += entropy_coef * inv_b * pk * (std::log(pk) + h);
      }
    }
    backward(actor, cache, dlogits, out);
  }
  if (clip_fraction)
    *clip_fraction = batch.empty() ? 0.0 : clipped_n * inv_b;
  return loss;
}

double critic_loss_gradients(
    const Mlp& critic, const std::vector<const std::vector<double>*>& states,
    const std::vector<double>& returns, Gradients& out) {
  out.zero();
  const double inv_b = 1.0 / static_cast<double>(states.size());
  double loss = 0.0;
  ForwardCache cache;
  for (size_t i = 0; i < states.size(); ++i) {
    double v = forward_cached(critic, *states[i], cache)[0];
    double err = v - returns[i];
    loss += err * err * inv_b;
    double dv = 2.0 * err * inv_b;
    backward(critic, cache, std::span<const double>(&dv, 1), out);
  }
  return loss;
}

ActorUpdateStats ppo_actor_update(Mlp& actor, AdamW& opt,
                                  const std::vector<Transition>& transitions,
                                  double eps, int epochs,
                                  bool include_heuristic_samples,
                                  double entropy_coef) {
  std::vector<const Transition*> batch;
  for (const auto& tr : transitions)
    if (include_heuristic_samples || tr.source == ActionSource::Actor)
      batch.push_back(&tr);
  ActorUpdateStats stats;
  stats.samples = static_cast<int>(batch.size());
  if (batch.empty()) return stats;  // no-op on an empty batch

  // normalize advantages over this update batch
  std::vector<double> adv(batch.size());
  double mean = 0;
  for (size_t i = 0; i < batch.size(); ++i) mean += batch[i]->advantage;
  mean /= static_cast<double>(batch.size());
  double var = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    double d = batch[i]->advantage - mean;
    var += d * d;
  }
  double stddev = std::sqrt(var / static_cast<double>(batch.size()));
  for (size_t i = 0; i < batch.size(); ++i)
    adv[i] = (batch[i]->advantage - mean) / (stddev + 1e-8);

  Gradients g = Gradients::zeros_like(actor);
  double loss_sum = 0, clip_sum = 0;
  for (int e = 0; e < epochs; ++e) {
    double cf = 0;
    loss_sum += actor_loss_gradients(actor, batch, adv, eps, entropy_coef, g, &cf);
    clip_sum += cf;
    opt.apply(actor, g);
  }
  stats.loss = loss_sum / epochs;
  stats.clip_fraction = clip_sum / epochs;
  return stats;
}

double critic_update(Mlp& critic, AdamW& opt,
                     const std::vector<const Transition*>& batch, int epochs) {
  if (batch.empty()) return 0.0;  // no-op
  std::vector<const std::vector<double>*> states;
  std::vector<double> returns;
  states.reserve(batch.size());
  returns.reserve(batch.size());
  for (const auto* tr : batch) {
    states.push_back(&tr->state);
    returns.push_back(tr->ret);
  }
  Gradients g = Gradients::zeros_like(critic);
  double loss_sum = 0;
  for (int e = 0; e < epochs; ++e) {
    loss_sum += critic_loss_gradients(critic, states, returns, g);
    opt.apply(critic, g);
  }
  return loss_sum / epochs;
}

TrainSetup TrainSetup::from_config(const ConfigDoc& doc) {
  TrainSetup s;
  EnvBundle bundle = make_env_bundle(doc);
  s.topo = bundle.topo;
  s.demand = bundle.demand;
  s.env_cfg = bundle.env_cfg;
  s.episodes = static_cast<int>(doc.get_int("train", "episodes", 300));
  s.update_epochs = static_cast<int>(doc.get_int("train", "update_epochs", 4));
  s.lr = doc.get_double("train", "lr", 0.001);
  s.weight_decay = doc.get_double("train", "weight_decay", 0.01);
  s.gamma = doc.get_double("train", "gamma", 0.99);
  s.clip_eps = doc.get_double("train", "clip_eps", 0.2);
  s.entropy_coef = doc.get_double("train", "entropy_coef", 0.0);
  std::string arch = doc.get_string("train", "critic", "separate");
  if (arch == "joint")
    s.arch = CriticArch::Joint;
  else if (arch == "separate")
    s.arch = CriticArch::Separate;
  else
    throw ConfigError("[train] critic must be joint or separate");
  std::string junctions =
      doc.get_string("train", "junction_agents", "heuristic");
  if (junctions == "trainable")
    s.junction_agents_trainable = true;
  else if (junctions != "heuristic")
    throw ConfigError("[train] junction_agents must be heuristic or trainable");
  std::string mode = doc.get_string("train", "interleave", "alternate");
  if (mode == "alternate")
    s.mode = InterleaveMode::AlternateByStep;
  else if (mode == "actor_only")
    s.mode = InterleaveMode::ActorOnly;
  else if (mode == "heuristic_only")
    s.mode = InterleaveMode::HeuristicOnly;
  else
    throw ConfigError(
        "[train] interleave must be alternate, actor_only or heuristic_only");
  std::string parity = doc.get_string("train", "parity", "global_step");
  if (parity == "per_agent_event")
    s.parity = ParityMode::PerAgentEvent;
  else if (parity != "global_step")
    throw ConfigError("[train] parity must be global_step or per_agent_event");
  s.actor_on_heuristic_samples =
      doc.get_bool("train", "actor_on_heuristic", true);
  s.train_seed = static_cast<uint64_t>(doc.get_int("train", "seed", 1));
  s.eval_interval = static_cast<int>(doc.get_int("train", "eval_interval", 10));
  s.eval_episodes = static_cast<int>(doc.get_int("train", "eval_episodes", 5));
  auto hid = doc.get_int_list("train", "hidden", {64, 64});
  s.hidden.assign(hid.begin(), hid.end());
  s.heuristic = doc.get_string("train", "heuristic", "high");
  s.heuristic_params = HeuristicParams::from_config(doc, *s.topo);
  s.out_dir = doc.get_string("train", "out_dir", "");
  if (s.episodes < 1) throw ConfigError("[train] episodes must be >= 1");
  if (!(s.gamma > 0.0 && s.gamma < 1.0))
    throw ConfigError("[train] gamma must lie in (0, 1)");
  if (!(s.clip_eps > 0.0))
    throw ConfigError("[train] clip_eps must be > 0");
  if (s.update_epochs < 1)
    throw ConfigError("[train] update_epochs must be >= 1");
  return s;
}

namespace {

std::string setup_fingerprint(const TrainSetup& s) {
  std::ostringstream ss;
  ss << "episodes=" << s.episodes << ";epochs=" << s.update_epochs
     << ";lr=" << s.lr << ";wd=" << s.weight_decay << ";gamma=" << s.gamma
     << ";clip=" << s.clip_eps << ";ent=" << s.entropy_coef
     << ";arch=" << to_string(s.arch)
     << ";junc=" << (s.junction_agents_trainable ? 1 : 0)
     << ";mode=" << static_cast<int>(s.mode)
     << ";parity=" << static_cast<int>(s.parity)
     << ";aoh=" << (s.actor_on_heuristic_samples ? 1 : 0)
     << ";seed=" << s.train_seed << ";eval=" << s.eval_interval << ","
     << s.eval_episodes << ";heur=" << s.heuristic
     << ";steps=" << s.env_cfg.episode_steps;
  for (int h : s.hidden) ss << ";h=" << h;
  return ss.str();
}

}  // namespace

TrainResult train(const TrainSetup& setup) {
  auto t0 = std::chrono::steady_clock::now();
  Env env(setup.topo, setup.demand, setup.env_cfg);
  PolicySet ps =
      make_policy_set(env, setup.arch, setup.junction_agents_trainable,
                      setup.train_seed, setup.lr, setup.weight_decay,
                      setup.hidden);
  ps.gamma = setup.gamma;
  ps.clip_eps = setup.clip_eps;

  HeuristicBinding heur;
  if (setup.heuristic.rfind("frozen:", 0) == 0) {
    heur = HeuristicBinding::frozen(env, setup.heuristic.substr(7));
  } else {
    heur = HeuristicBinding::named(env, setup.heuristic,
                                   setup.heuristic_params);
  }

  std::vector<AgentClass> classes;
  for (const auto& spec : env.agents()) classes.push_back(spec.cls);

  auto evaluate = [&](const PolicySet& p) {
    CollectOptions o;
    o.mode = InterleaveMode::ActorOnly;
    o.greedy_actors = true;
    o.store_transitions = false;
    double sum = 0;
    for (int k = 0; k < setup.eval_episodes; ++k) {
      Rng r(mix_seed(setup.train_seed, 0xE7A1, k));
      sum += collect_episode(env, p, heur, o,
                             mix_seed(setup.train_seed, 0xE5EE, k), r)
                 .episode_return;
    }
    return sum / std::max(1, setup.eval_episodes);
  };

  TrainResult result;
  for (int ep = 1; ep <= setup.episodes; ++ep) {
    CollectOptions o;
    o.mode = setup.mode;
    o.parity = setup.parity;
    Rng action_rng(mix_seed(setup.train_seed, 0xAC71, ep));
    EpisodeBuffer buf = collect_episode(
        env, ps, heur, o, mix_seed(setup.train_seed, 0x5EED, ep), action_rng);
    compute_returns(buf, ps.gamma);
    compute_advantages(buf, ps, classes);

    TrainLogRow row;
    row.episode = ep;
    row.train_return = buf.episode_return;
    double clip_acc = 0;
    for (size_t ai = 0; ai < ps.actors.size(); ++ai) {
      auto stats = ppo_actor_update(
          ps.actors[ai], ps.actor_opts[ai], buf.per_agent[ps.actor_agents[ai]],
          ps.clip_eps, setup.update_epochs, setup.actor_on_heuristic_samples,
          setup.entropy_coef);
      row.actor_losses.push_back(stats.loss);
      clip_acc += stats.clip_fraction;
    }
    row.clip_fraction = clip_acc / static_cast<double>(ps.actors.size());

    double critic_loss = 0;
    for (size_t ci = 0; ci < ps.critics.size(); ++ci) {
      std::vector<const Transition*> batch;
      for (int agent : ps.actor_agents) {
        if (ps.arch == CriticArch::Separate &&
            ps.critic_classes[ci] != classes[agent])
          continue;
        for (const auto& tr : buf.per_agent[agent]) batch.push_back(&tr);
      }
      critic_loss +=
          critic_update(ps.critics[ci], ps.critic_opts[ci], batch,
                        setup.update_epochs);
    }
    row.critic_loss = critic_loss / static_cast<double>(ps.critics.size());

    bool eval_now = (setup.eval_interval > 0 && ep % setup.eval_interval == 0) ||
                    ep == setup.episodes;
    if (eval_now) {
      row.eval_return_mean = evaluate(ps);
      if (row.eval_return_mean > result.best_eval) {
        result.best_eval = row.eval_return_mean;
        result.best = ps;
        result.best_episode = ep;
      }
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.log.push_back(row);
  }
  result.last = ps;

  if (!setup.out_dir.empty()) {
    fs::create_directories(setup.out_dir);
    std::string best_dir = setup.out_dir + "/best";
    save_policy_set(best_dir, result.best, env,
                    fnv1a64(setup_fingerprint(setup)), setup.train_seed,
                    heur.description);
    write_training_log_csv(setup.out_dir + "/training_log.csv", result.log);
    result.policy_dir = best_dir;
  }
  return result;
}

TrainSetup make_second_iteration_setup(const TrainSetup& base,
                                       const std::string& first_iter_dir) {
  // validate coverage against the agent roster the second iteration needs
  Env probe(base.topo, base.demand, base.env_cfg);
  ordered_json manifest =
      ordered_json::parse(policy_manifest_text(first_iter_dir));
  std::set<int> have;
  for (const auto& a : manifest.at("actors"))
    have.insert(a.at("agent_id").get<int>());
  for (const auto& spec : probe.agents()) {
    bool needed = spec.cls == AgentClass::Receiving ||
                  base.junction_agents_trainable;
    if (needed && !have.count(spec.agent_id))
      throw RuntimeFailure(
          "second iteration needs a frozen checkpoint for agent " +
          std::to_string(spec.agent_id) + " (" +
          std::string(class_name(spec.cls)) + ") in '" + first_iter_dir + "'");
  }
  TrainSetup next = base;
  next.heuristic = "frozen:" + first_iter_dir;
  return next;
}

void save_policy_set(const std::string& dir, const PolicySet& ps,
                     const Env& env, uint64_t config_hash,
                     uint64_t train_seed, const std::string& heuristic_desc) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = 1;
  manifest["critic_arch"] = to_string(ps.arch);
  manifest["caps_hash"] = hex64(env.caps_hash());
  manifest["config_hash"] = hex64(config_hash);
  manifest["train_seed"] = train_seed;
  manifest["gamma"] = ps.gamma;
  manifest["clip_eps"] = ps.clip_eps;
  manifest["heuristic"] = heuristic_desc;

  ordered_json actors = ordered_json::array();
  for (size_t i = 0; i < ps.actors.size(); ++i) {
    int agent = ps.actor_agents[i];
    const AgentSpec& spec = env.agents()[agent];
    std::string file = "actor_" + std::to_string(agent) + ".mhsc";
    CheckpointMeta meta;
    meta.agent_class = spec.cls == AgentClass::Receiving ? 0 : 1;
    meta.caps_hash = env.caps_hash();
    save_checkpoint(dir + "/" + file, ps.actors[i], meta);
    ordered_json a;
    a["agent_id"] = agent;
    a["class"] = class_name(spec.cls);
    a["action_dim"] = spec.action_dim;
    a["file"] = file;
    a["checksum"] = hex64(checkpoint_file_checksum(dir + "/" + file));
    actors.push_back(a);
  }
  manifest["actors"] = actors;

  ordered_json critics = ordered_json::array();
  for (size_t i = 0; i < ps.critics.size(); ++i) {
    std::string file = "critic_" + std::to_string(i) + ".mhsc";
    CheckpointMeta meta;
    meta.agent_class = 2;
    meta.caps_hash = env.caps_hash();
    save_checkpoint(dir + "/" + file, ps.critics[i], meta);
    ordered_json c;
    c["class"] = ps.arch == CriticArch::Joint
                     ? "joint"
                     : class_name(ps.critic_classes[i]);
    c["file"] = file;
    c["checksum"] = hex64(checkpoint_file_checksum(dir + "/" + file));
    critics.push_back(c);
  }
  manifest["critics"] = critics;

  std::ofstream f(dir + "/manifest.json", std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

std::string policy_manifest_text(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f)
    throw RuntimeFailure("no policy manifest at '" + dir + "/manifest.json'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

PolicySet load_policy_set(const std::string& dir, const Env& env) {
  ordered_json manifest = ordered_json::parse(policy_manifest_text(dir));
  if (manifest.at("caps_hash").get<std::string>() != hex64(env.caps_hash()))
    throw RuntimeFailure("policy bundle '" + dir +
                         "' does not match this environment's caps");
  PolicySet ps;
  std::string arch = manifest.at("critic_arch").get<std::string>();
  ps.arch = arch == "joint" ? CriticArch::Joint : CriticArch::Separate;
  ps.gamma = manifest.value("gamma", 0.99);
  ps.clip_eps = manifest.value("clip_eps", 0.2);
  for (const auto& a : manifest.at("actors")) {
    int agent = a.at("agent_id").get<int>();
    const AgentSpec& spec = env.agents().at(agent);
    LoadedCheckpoint ck =
        load_checkpoint(dir + "/" + a.at("file").get<std::string>());
    if (ck.net.output_dim() != spec.action_dim)
      throw RuntimeFailure("actor for agent " + std::to_string(agent) +
                           " has wrong action dim");
    if (ck.net.input_dim() != env.obs_dim())
      throw RuntimeFailure("actor for agent " + std::to_string(agent) +
                           " has wrong observation dim");
    ps.actor_agents.push_back(agent);
    ps.actors.push_back(std::move(ck.net));
    ps.actor_opts.push_back(AdamW::init(ps.actors.back()));
  }
  for (const auto& c : manifest.at("critics")) {
    LoadedCheckpoint ck =
        load_checkpoint(dir + "/" + c.at("file").get<std::string>());
    ps.critics.push_back(std::move(ck.net));
    ps.critic_opts.push_back(AdamW::init(ps.critics.back()));
    std::string cls = c.at("class").get<std::string>();
    if (ps.arch == CriticArch::Separate)
      ps.critic_classes.push_back(cls == "junction" ? AgentClass::Junction
                                                    : AgentClass::Receiving);
  }
  return ps;
}

void write_training_log_csv(const std::string& path,
                            const std::vector<TrainLogRow>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write training log: " + path);
  size_t n_actors = log.empty() ? 0 : log.front().actor_losses.size();
  f << "episode,train_return,eval_return_mean";
  for (size_t i = 0; i < n_actors; ++i) f << ",actor_loss_" << i;
  f << ",critic_loss,clip_fraction,wall_time_s\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (const auto& row : log) {
    f << row.episode << "," << num(row.train_return) << ",";
    if (!std::isnan(row.eval_return_mean)) f << num(row.eval_return_mean);
    for (double l : row.actor_losses) f << "," << num(l);
    f << "," << num(row.critic_loss) << "," << num(row.clip_fraction) << ","
      << num(row.wall_time_s) << "\n";
  }
}

}  // namespace mhs
