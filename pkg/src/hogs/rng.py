"""Keyed random streams.

Every stream is a Philox counter-based generator whose key is derived from
``(master_seed, node_id, tag)``, so a client's noise does not depend on how
many other clients ran before it or in which order.
"""

import numpy as np

STREAM_TAGS = {
    "client": 0,
    "split": 1,
    "gcn": 2,
}


def keyed_rng(master_seed: int, node_id: int = 0, tag: str = "client") -> np.random.Generator:
    if master_seed < 0 or node_id < 0:
        raise ValueError("seeds and node ids must be non-negative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(node_id), STREAM_TAGS[tag]))
    return np.random.Generator(np.random.Philox(ss))


def client_rng(master_seed: int, node_id: int) -> np.random.Generator:
    """Per-client stream used for both adjacency and feature perturbation."""
    return keyed_rng(master_seed, node_id, "client")
