import numpy as np
import pytest

from igt.orders import NODE_TYPES, Dataset, GeneratorConfig, generate_synthetic

T0 = 1609459200  # 2021-01-01 00:00 UTC


def toy_dataset(n_orders: int = 2) -> Dataset:
    """Tiny hand-made dataset: orders one hour apart sharing an origin."""
    coords = {"origin": {"o1": (110.0, 30.0), "o2": (112.0, 28.0)},
              "destination": {f"d{k}": (111.0 + 0.1 * k, 31.0 - 0.1 * k) for k in range(n_orders)}}
    return Dataset([f"x{k}" for k in range(n_orders)],
                   [f"r{k % 3}" for k in range(n_orders)],
                   ["o1" if k % 2 == 0 else "o2" for k in range(n_orders)],
                   [f"d{k}" for k in range(n_orders)],
                   [T0 + 3600 * k for k in range(n_orders)],
                   [20.0 + 5.0 * k for k in range(n_orders)], coords=coords)


@pytest.fixture(scope="session")
def small_world() -> Dataset:
    return generate_synthetic(GeneratorConfig(n_days=12, orders_per_day=60, n_retailers=40,
                                              n_origins=10, n_destinations=30), seed=5)


def dense_block(n_i: int, n_j: int, edges: np.ndarray) -> np.ndarray:
    """Dense D^-1/2 (A + I) D^-1/2 of a bipartite block, built from raw edge pairs."""
    n = n_i + n_j
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, n_i + v] = a[n_i + v, u] = 1.0
    a_hat = a + np.eye(n)
    d = a_hat.sum(axis=1)
    return a_hat / np.sqrt(np.outer(d, d))


def dense_propagation(counts: dict, edges: dict, h0: dict, layers: int) -> dict:
    """Dense oracle of layer-wise bipartite propagation, per-type sum, mean over layers 0..L."""
    pairs = [(a, b) for i, a in enumerate(NODE_TYPES) for b in NODE_TYPES[i + 1:]]
    mats = {}
    for a, b in pairs:
        e = edges.get((a, b))
        if e is None and (b, a) in edges:
            e = edges[(b, a)][:, ::-1]
        if e is not None and len(e):
            mats[(a, b)] = dense_block(counts[a], counts[b], e)
    cur = {t: np.array(h, dtype=float) for t, h in h0.items()}
    hist = {t: [cur[t]] for t in cur}
    for _ in range(layers):
        acc = {t: None for t in cur}
        for (a, b), m in mats.items():
            out = m @ np.vstack([cur[a], cur[b]])
            for t, part in ((a, out[:counts[a]]), (b, out[counts[a]:])):
                acc[t] = part if acc[t] is None else acc[t] + part
        cur = {t: cur[t] if acc[t] is None else acc[t] for t in cur}
        for t in cur:
            hist[t].append(cur[t])
    return {t: np.mean(hs, axis=0) for t, hs in hist.items()}


def random_hetero_graph(rng: np.random.Generator, max_nodes: int = 200):
    """Random typed graph over arbitrary type pairs (not only the order chain)."""
    from igt.graph import HeteroGraph, NodeRegistry

    counts = {t: int(rng.integers(1, max_nodes // 4 + 1)) for t in NODE_TYPES}
    reg = NodeRegistry()
    for t in NODE_TYPES:
        reg.add(t, [f"{t}{k}" for k in range(counts[t])])
    edges = {}
    for i, a in enumerate(NODE_TYPES):
        for b in NODE_TYPES[i + 1:]:
            if rng.random() < 0.3:
                continue
            m = int(rng.integers(0, 2 * (counts[a] + counts[b])))
            e = np.column_stack([rng.integers(counts[a], size=m), rng.integers(counts[b], size=m)])
            edges[(a, b)] = np.unique(e, axis=0) if m else e.reshape(0, 2).astype(np.int64)
    return HeteroGraph(reg, edges), counts
