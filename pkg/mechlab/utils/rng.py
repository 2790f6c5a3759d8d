"""Random streams.

Trial t of a run with master seed s draws from SeedSequence(s, spawn_key=(t,)).
Inside a trial each agent gets its own child stream, spawned from one 63-bit seed
taken from the trial stream, so an agent's draws do not depend on how many values
the other agents consume.
"""
import numpy as np


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial,)))


def agent_streams(rng: np.random.Generator, num_agents: int) -> list[np.random.Generator]:
    root = np.random.SeedSequence(int(rng.integers(0, 2**63 - 1)))

    return [np.random.default_rng(child) for child in root.spawn(num_agents)]
