"""Regenerates tests/data/golden_traces.json from gymnasium's classic-control tasks.

Each trace starts from the state gymnasium samples on reset(seed), then steps the
unwrapped environment with a fixed action sequence. The C++ tests load the
initial state with set_state and replay the same actions. Observations are
float32 in gymnasium, so the float64 internal state is recorded as well; the
pendulum torque is passed as float64 to keep the whole step in double precision.
"""
import json
import pathlib

import numpy as np

np.float_ = np.float64  # acrobot's rk4 still references the removed alias

import gymnasium as gym

STEPS = 50
SEEDS = (0, 1, 2)
OUT = pathlib.Path(__file__).resolve().parents[1] / "data" / "golden_traces.json"


def cartpole_action(obs, rng):
    # Balancing heuristic so traces run the full length without terminating.
    return int(obs[2] + 0.5 * obs[3] > 0)


def trace(env_id, seed):
    env = gym.make(env_id)
    obs, _ = env.reset(seed=seed)
    raw = env.unwrapped
    rng = np.random.default_rng(1000 + seed)
    record = {
        "env": env_id,
        "seed": seed,
        "initial_state": [float(v) for v in np.asarray(raw.state, dtype=np.float64)],
        "initial_observation": [float(v) for v in obs],
        "steps": [],
    }
    for _ in range(STEPS):
        if env_id == "CartPole-v1":
            action = cartpole_action(obs, rng)
            stored = action
        elif env_id == "Acrobot-v1":
            action = int(rng.integers(0, 3))
            stored = action
        else:
            action = np.array([rng.uniform(-2.0, 2.0)], dtype=np.float64)
            stored = [float(action[0])]
        obs, reward, terminated, truncated, _ = raw.step(action)
        record["steps"].append(
            {
                "action": stored,
                "observation": [float(v) for v in obs],
                "state": [float(v) for v in np.asarray(raw.state, dtype=np.float64)],
                "reward": float(reward),
                "terminated": bool(terminated),
            }
        )
        if terminated:
            break
    return record


def main():
    traces = [trace(env_id, s) for env_id in ("CartPole-v1", "Pendulum-v1", "Acrobot-v1") for s in SEEDS]
    OUT.write_text(json.dumps({"gymnasium": gym.__version__, "traces": traces}, indent=1) + "\n")
    print(f"wrote {len(traces)} traces to {OUT}")


if __name__ == "__main__":
    main()
