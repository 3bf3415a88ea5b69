"""Random instance generation for property-test corpora and the `gen` command."""

from __future__ import annotations

import numpy as np

from .model import Instance, SetSystem, Topology, UserId


def random_instance(
    rng: np.random.Generator,
    server_range: tuple[int, int] = (3, 5),
    users_range: tuple[int, int] = (1, 3),
    max_generators: int = 2,
    max_generator_size: int = 3,
    seed: int = 0,
) -> Instance:
    """A valid random instance: random fan-out, random small generator families.

    Generator sizes are kept small so the monotone closures stay at desk
    scale; colluding generators respect the K - 2 cap.
    """
    u_count = int(rng.integers(server_range[0], server_range[1] + 1))
    fanout = tuple(int(rng.integers(users_range[0], users_range[1] + 1)) for _ in range(u_count))
    topology = Topology(fanout)
    users = list(topology.all_users)
    k = topology.total_users

    def pick(size: int) -> frozenset[UserId]:
        chosen = rng.choice(len(users), size=size, replace=False)
        return frozenset(users[int(i)] for i in chosen)

    n_sec = int(rng.integers(1, max_generators + 1))
    sec = []
    for _ in range(n_sec):
        size = int(rng.integers(1, min(max_generator_size, k) + 1))
        sec.append(pick(size))

    col = []
    max_col = min(max_generator_size, k - 2)
    if max_col >= 1:
        n_col = int(rng.integers(0, max_generators + 1))
        for _ in range(n_col):
            size = int(rng.integers(1, max_col + 1))
            col.append(pick(size))

    return Instance(
        topology=topology,
        security_system=SetSystem.from_generators(sec),
        collusion_system=SetSystem.from_generators(col),
        field_modulus=None,
        rng_seed=seed,
    )
