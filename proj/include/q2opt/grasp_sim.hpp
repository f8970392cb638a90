#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "q2opt/cem.hpp"
#include "q2opt/distrl.hpp"
#include "q2opt/rng.hpp"

namespace q2opt::sim {

// Planar bin-grasping task. A 4-DOF gripper moves over a bin of circular
// objects; closing the gripper near an object's boundary grasps it with a
// distance-dependent probability, and terminating while holding an object
// scores the episode. Rewards: -0.01 per non-terminal step, then a binary
// 0/1 on the terminal step (the terminal step itself carries no penalty).
struct SimConfig {
  int num_objects_min = 8;
  int num_objects_max = 12;
  double bin_half_x = 1.0;  // bin is [-bin_half_x, bin_half_x] x [-bin_half_y, bin_half_y]
  double bin_half_y = 1.0;
  double object_radius_min = 0.08;
  double object_radius_max = 0.14;
  double grasp_radius = 0.35;   // reach beyond an object's boundary
  double grasp_noise = 0.10;    // stddev of the perturbation on grasp probability
  double slip_prob = 0.05;      // chance per move step of dropping a held object
  int max_steps = 20;
  double obs_noise_sigma = 0.0;
  double step_penalty = -0.01;
  double success_reward = 1.0;
  double move_scale_xy = 0.25;  // workspace units per unit of commanded dx/dy
  double move_scale_z = 0.5;
  double move_scale_rot = 0.785;
  double z_max = 1.0;
  double grasp_height = 0.2;  // gripper must be at or below this z to grasp
};

inline void validate(const SimConfig& cfg) {
  if (cfg.max_steps < 1) throw std::invalid_argument("sim: max_steps must be >= 1");
  if (cfg.num_objects_min < 1 || cfg.num_objects_max < cfg.num_objects_min)
    throw std::invalid_argument("sim: bad object count range");
  if (cfg.slip_prob < 0.0 || cfg.slip_prob > 1.0)
    throw std::invalid_argument("sim: slip_prob must be in [0,1]");
  if (cfg.grasp_radius <= 0.0)
    throw std::invalid_argument("sim: grasp_radius must be positive");
}

struct ObjectState {
  double x = 0.0, y = 0.0;
  double radius = 0.0;
  bool alive = true;
};

struct WorldState {
  double gx = 0.0, gy = 0.0, gz = 0.0, gphi = 0.0;
  bool gripper_closed = false;
  int held_object = -1;  // index into objects, -1 = none
  std::vector<ObjectState> objects;
  int steps_elapsed = 0;
  bool done = false;
};

inline constexpr double kObsSentinel = -2.0;

// gripper pose (4) + closed flag (1) + held flag (1) + one (x, y, radius)
// slot per potential object.
inline int obs_dim(const SimConfig& cfg) { return 6 + 3 * cfg.num_objects_max; }

// Live objects fill the leading slots ordered by distance to the gripper
// (nearest first); dead or absent slots hold the sentinel.
inline std::vector<double> observe(const WorldState& s, const SimConfig& cfg,
                                   Rng* noise_rng = nullptr) {
  std::vector<double> obs(static_cast<std::size_t>(obs_dim(cfg)), kObsSentinel);
  obs[0] = s.gx;
  obs[1] = s.gy;
  obs[2] = s.gz;
  obs[3] = s.gphi;
  obs[4] = s.gripper_closed ? 1.0 : 0.0;
  obs[5] = s.held_object >= 0 ? 1.0 : 0.0;
  std::vector<int> live;
  for (int i = 0; i < static_cast<int>(s.objects.size()); ++i)
    if (s.objects[i].alive) live.push_back(i);
  std::stable_sort(live.begin(), live.end(), [&](int a, int b) {
    const auto& oa = s.objects[a];
    const auto& ob = s.objects[b];
    const double da = std::hypot(oa.x - s.gx, oa.y - s.gy);
    const double db = std::hypot(ob.x - s.gx, ob.y - s.gy);
    return da < db;
  });
  for (std::size_t k = 0; k < live.size(); ++k) {
    const auto& o = s.objects[live[k]];
    obs[6 + 3 * k] = o.x;
    obs[6 + 3 * k + 1] = o.y;
    obs[6 + 3 * k + 2] = o.radius;
  }
  if (noise_rng != nullptr && cfg.obs_noise_sigma > 0.0) {
    for (int i = 0; i < 4; ++i) obs[i] += cfg.obs_noise_sigma * noise_rng->normal();
    for (std::size_t k = 0; k < live.size(); ++k)
      for (int j = 0; j < 3; ++j)
        obs[6 + 3 * k + j] += cfg.obs_noise_sigma * noise_rng->normal();
  }
  return obs;
}

// Procedurally places a uniform number of non-overlapping objects and parks
// the gripper at the home pose above the bin center. Deterministic in
// (cfg, seed).
inline WorldState reset(const SimConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  WorldState s;
  const int count =
      cfg.num_objects_min + rng.uniform_int(cfg.num_objects_max - cfg.num_objects_min + 1);
  s.objects.reserve(count);
  int rejections = 0;
  while (static_cast<int>(s.objects.size()) < count) {
    ObjectState o;
    o.radius = rng.uniform(cfg.object_radius_min, cfg.object_radius_max);
    o.x = rng.uniform(-cfg.bin_half_x + o.radius, cfg.bin_half_x - o.radius);
    o.y = rng.uniform(-cfg.bin_half_y + o.radius, cfg.bin_half_y - o.radius);
    bool ok = true;
    for (const auto& other : s.objects) {
      if (std::hypot(o.x - other.x, o.y - other.y) < o.radius + other.radius + 0.01) {
        ok = false;
        break;
      }
    }
    if (ok) {
      s.objects.push_back(o);
    } else if (++rejections > 10000) {
      throw std::runtime_error("sim reset: object placement failed after 1e4 rejections");
    }
  }
  s.gx = 0.0;
  s.gy = 0.0;
  s.gz = cfg.z_max;
  s.gphi = 0.0;
  return s;
}

struct StepInfo {
  bool grasp_attempted = false;
  bool grasp_success = false;
  bool slipped = false;
  bool timeout = false;
};

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

inline int nearest_live_object(const WorldState& s) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(s.objects.size()); ++i) {
    if (!s.objects[i].alive) continue;
    const double d = std::hypot(s.objects[i].x - s.gx, s.objects[i].y - s.gy);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Advances the world by one action. Throws if the episode is already done.
inline StepOutcome step(WorldState& s, const cem::HybridAction& action,
                        const SimConfig& cfg, Rng& rng) {
  if (s.done) throw std::logic_error("sim step: episode already done");
  StepOutcome out;
  s.steps_elapsed += 1;

  switch (action.mode) {
    case cem::Mode::Move: {
      s.gx = std::clamp(s.gx + action.cont[0] * cfg.move_scale_xy, -cfg.bin_half_x,
                        cfg.bin_half_x);
      s.gy = std::clamp(s.gy + action.cont[1] * cfg.move_scale_xy, -cfg.bin_half_y,
                        cfg.bin_half_y);
      s.gz = std::clamp(s.gz + action.cont[2] * cfg.move_scale_z, 0.0, cfg.z_max);
      s.gphi = std::clamp(s.gphi + action.cont[3] * cfg.move_scale_rot,
                          -std::numbers::pi, std::numbers::pi);
      if (s.held_object >= 0) {
        // carried object follows the gripper; it can slip while moving
        if (rng.bernoulli(cfg.slip_prob)) {
          s.objects[s.held_object].x = s.gx;
          s.objects[s.held_object].y = s.gy;
          s.held_object = -1;
          out.info.slipped = true;
        } else {
          s.objects[s.held_object].x = s.gx;
          s.objects[s.held_object].y = s.gy;
        }
      }
      break;
    }
    case cem::Mode::CloseGripper: {
      if (!s.gripper_closed) {
        s.gripper_closed = true;
        if (s.gz <= cfg.grasp_height) {
          const int target = nearest_live_object(s);
          if (target >= 0) {
            const auto& o = s.objects[target];
            const double boundary_dist =
                std::max(0.0, std::hypot(o.x - s.gx, o.y - s.gy) - o.radius);
            if (boundary_dist <= cfg.grasp_radius) {
              out.info.grasp_attempted = true;
              double p = std::max(0.0, 1.0 - boundary_dist / cfg.grasp_radius);
              if (cfg.grasp_noise > 0.0)
                p = std::clamp(p + cfg.grasp_noise * rng.normal(), 0.0, 1.0);
              if (rng.uniform() < p) {
                s.held_object = target;
                s.objects[target].x = s.gx;
                s.objects[target].y = s.gy;
                out.info.grasp_success = true;
              }
            }
          }
        }
      }
      break;
    }
    case cem::Mode::OpenGripper: {
      if (s.held_object >= 0) {
        s.objects[s.held_object].x = s.gx;
        s.objects[s.held_object].y = s.gy;
        s.held_object = -1;
      }
      s.gripper_closed = false;
      break;
    }
    case cem::Mode::Terminate: {
      out.done = true;
      if (s.held_object >= 0) {
        out.reward = cfg.success_reward;
        s.objects[s.held_object].alive = false;
        s.held_object = -1;
      } else {
        out.reward = 0.0;
      }
      s.done = true;
      s.gripper_closed = false;
      break;
    }
  }

  if (!out.done) {
    if (s.steps_elapsed >= cfg.max_steps) {
      // forced end of episode: binary outcome only, no step penalty
      out.done = true;
      out.info.timeout = true;
      out.reward = 0.0;
      s.done = true;
    } else {
      out.reward = cfg.step_penalty;
    }
  }
  return out;
}

// One ordered episode, the unit of dataset serialization.
struct EpisodeRecord {
  std::int64_t episode_id = 0;
  std::uint64_t seed = 0;
  std::string policy_id;
  std::vector<distrl::Transition> transitions;
  bool success = false;

  double total_return() const {
    double acc = 0.0;
    for (const auto& t : transitions) acc += t.reward;
    return acc;
  }
};

// Exploration policy: descend toward a random bin position, close the
// gripper, terminate. The target is drawn once per episode.
class ScriptedPolicy {
 public:
  explicit ScriptedPolicy(const SimConfig& cfg) : cfg_(cfg) {}

  void begin_episode(Rng& rng) {
    target_x_ = rng.uniform(-cfg_.bin_half_x, cfg_.bin_half_x);
    target_y_ = rng.uniform(-cfg_.bin_half_y, cfg_.bin_half_y);
  }

  cem::HybridAction act(std::span<const double> obs) const {
    cem::HybridAction a;
    const double gx = obs[0], gy = obs[1], gz = obs[2];
    const bool closed = obs[4] > 0.5;
    if (closed) {
      a.mode = cem::Mode::Terminate;
      return a;
    }
    const double dx = target_x_ - gx;
    const double dy = target_y_ - gy;
    const bool at_target = std::abs(dx) <= kTol && std::abs(dy) <= kTol &&
                           gz <= cfg_.grasp_height;
    if (at_target) {
      a.mode = cem::Mode::CloseGripper;
      return a;
    }
    a.mode = cem::Mode::Move;
    a.cont[0] = std::clamp(dx / cfg_.move_scale_xy, -1.0, 1.0);
    a.cont[1] = std::clamp(dy / cfg_.move_scale_xy, -1.0, 1.0);
    a.cont[2] = std::clamp(-gz / cfg_.move_scale_z, -1.0, 1.0);
    a.cont[3] = 0.0;
    return a;
  }

 private:
  static constexpr double kTol = 0.02;
  SimConfig cfg_;
  double target_x_ = 0.0;
  double target_y_ = 0.0;
};

// Rolls one full episode under the given policy callable
// (obs -> HybridAction). env_rng drives sim stochasticity and observation
// noise; the policy owns its own randomness.
template <class Policy>
EpisodeRecord run_episode(const SimConfig& cfg, std::uint64_t env_seed,
                          Policy&& policy, const std::string& policy_id,
                          std::int64_t episode_id) {
  EpisodeRecord record;
  record.episode_id = episode_id;
  record.seed = env_seed;
  record.policy_id = policy_id;
  WorldState world = reset(cfg, env_seed);
  Rng env_rng = Rng(env_seed).split(0x5157);
  std::vector<double> obs = observe(world, cfg, &env_rng);
  int step_index = 0;
  while (!world.done) {
    const cem::HybridAction action = policy(std::span<const double>(obs));
    const StepOutcome outcome = step(world, action, cfg, env_rng);
    std::vector<double> next_obs = observe(world, cfg, &env_rng);
    distrl::Transition tr;
    tr.state = obs;
    tr.action_cont = action.cont;
    tr.action_mode = static_cast<int>(action.mode);
    tr.reward = outcome.reward;
    tr.next_state = next_obs;
    tr.terminal = outcome.done;
    tr.policy_id = policy_id;
    tr.episode_id = episode_id;
    tr.step_index = step_index++;
    record.transitions.push_back(std::move(tr));
    if (outcome.done && outcome.reward >= cfg.success_reward) record.success = true;
    obs = std::move(next_obs);
  }
  return record;
}

}  // namespace q2opt::sim
