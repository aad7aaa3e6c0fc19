import numpy as np

from lort.weights import WeightStore


def init_store(manifest, seed=0, store=None):
    """Initialize a WeightStore from a layer manifest (test convenience)."""
    rng = np.random.default_rng(seed)
    ws = store if store is not None else WeightStore()
    for name, shape, kind in manifest:
        if kind == "gauss":
            ws[name] = rng.normal(0.0, 0.02, size=shape)
        elif kind == "ones":
            ws[name] = np.ones(shape)
        elif kind == "prelu":
            ws[name] = np.full(shape, 0.25)
        else:
            ws[name] = np.zeros(shape)
    return ws


def zero_store(manifest, store=None):
    ws = store if store is not None else WeightStore()
    for name, shape, _ in manifest:
        ws[name] = np.zeros(shape)
    return ws
