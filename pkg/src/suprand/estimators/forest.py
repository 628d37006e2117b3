"""Honest causal forest with IPW leaf effects."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .. import _rng
from ..data import DataError, Dataset
from . import _tree_kernels as K


@dataclass(frozen=True)
class ForestParams:
    mtry: int = 7
    trees: int = 500
    min_node: int = 20
    honest_fraction: float = 0.5
    subsample_fraction: float = 0.5
    arm_min: int = 5
    seed: int = 0
    max_depth: Optional[int] = None
    n_quantiles: int = 32

    def check(self, n: int) -> None:
        if self.mtry < 1 or self.trees < 1 or self.min_node < 1 or self.arm_min < 1:
            raise ValueError("mtry, trees, min_node and arm_min must be positive")
        if not (0 < self.honest_fraction < 1 and 0 < self.subsample_fraction <= 1):
            raise ValueError("honest_fraction must be in (0,1), subsample_fraction in (0,1]")
        if not 2 <= self.n_quantiles <= 256:
            raise ValueError("n_quantiles must be in [2, 256]")
        if n < 4 * self.min_node:
            raise DataError(f"need at least {4 * self.min_node} rows, got {n}")


@dataclass
class CausalTree:
    """Flat node arrays; leaves have ``feature == -1`` and carry the effect."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_treated: np.ndarray
    n_control: np.ndarray
    structure_rows: np.ndarray = field(default=None, repr=False)
    estimation_rows: np.ndarray = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def apply(self, x) -> np.ndarray:
        return K.apply_tree(np.ascontiguousarray(x, dtype=np.float64),
                            self.feature, self.threshold, self.left, self.right)

    def predict(self, x) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i])})
            else:
                nodes.append({"value": float(self.value[i]), "n_treated": int(self.n_treated[i]),
                              "n_control": int(self.n_control[i])})
        return {"nodes": nodes}


@dataclass
class CausalForest:
    trees: list
    params: ForestParams
    columns: np.ndarray
    ipw_weighting: bool = True

    kind = "causal_forest"

    def __post_init__(self):
        self._pack()

    def _pack(self):
        sizes = [t.n_nodes for t in self.trees]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
        self._arrays = tuple(cat(nm) for nm in ("feature", "threshold", "left", "right", "value"))

    def predict_x(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return K.predict_forest(x, *self._arrays, self._offsets)

    def predict(self, ds: Dataset) -> np.ndarray:
        return self.predict_x(ds.x[:, self.columns])

    @property
    def mtry(self) -> int:
        return self.params.mtry

    @property
    def min_node(self) -> int:
        return self.params.min_node

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": asdict(self.params), "columns": self.columns.tolist(),
                "ipw_weighting": self.ipw_weighting, "trees": [t.to_dict() for t in self.trees]}


def ipw_contributions(ds: Dataset, ipw_weighting: bool = True) -> np.ndarray:
    """Per-row terms whose subset mean is the IPW effect of that subset."""
    d = ds.treated
    y = ds.outcome.astype(np.float64)
    e = ds.propensity if ipw_weighting else np.full(ds.n, d.mean())
    return np.where(d, y / e, -y / (1.0 - e))


def fit_causal_forest(ds: Dataset, params: ForestParams = ForestParams(),
                      ipw_weighting: bool = True, keep_indices: bool = True) -> CausalForest:
    """Grow ``params.trees`` honest causal trees on the observed covariates.

    Each tree draws a subsample without replacement, grows its structure on
    one part and fills leaf effects from the disjoint remainder. Random
    streams are keyed on ``(seed, tree index)``.
    """
    n = ds.n
    params.check(n)
    t = ds.treated
    if t.all() or not t.any():
        raise DataError("both arms must be non-empty")
    cols = ds.schema.observed_indices()
    x = np.ascontiguousarray(ds.x[:, cols])
    z = ipw_contributions(ds, ipw_weighting)
    treated = np.ascontiguousarray(t)
    depth = -1 if params.max_depth is None else int(params.max_depth)
    n_sub = max(2, int(round(params.subsample_fraction * n)))
    n_struct = int(params.honest_fraction * n_sub)
    if n_struct < 1 or n_struct >= n_sub:
        raise DataError("subsample too small to split into structure and estimation parts")

    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int32))
    sorted_x = np.ascontiguousarray(np.take_along_axis(x, order.T, axis=0).T)
    struct_pos = np.full(n, -1, dtype=np.int32)
    trees = []
    for b in range(params.trees):
        rng = _rng.generator(params.seed, 7919, b)
        sub = rng.permutation(n)[:n_sub]
        s_rows = np.sort(sub[:n_struct])
        e_rows = np.sort(sub[n_struct:])
        kseed = int(rng.integers(0, 2**63 - 1))

        struct_pos[s_rows] = np.arange(n_struct)
        thr_table, nthr, codes = K.bin_structure(sorted_x, order, struct_pos, n_struct, params.n_quantiles)
        struct_pos[s_rows] = -1
        f, code, lft, rgt = K.grow_tree(codes, nthr, z[s_rows], treated[s_rows], params.mtry,
                                        params.min_node, params.arm_min, depth, kseed)
        split = f >= 0
        thr = np.zeros(f.shape[0])
        thr[split] = thr_table[f[split], code[split]]
        ok, f, thr, lft, rgt, val, nt, nc = K.honest_fill(x, e_rows, z, treated, f, thr, lft, rgt,
                                                         params.arm_min)
        if not ok:
            raise DataError(f"tree {b}: estimation half has fewer than {params.arm_min} rows in an arm")
        trees.append(CausalTree(f, thr, lft, rgt, val, nt, nc,
                                s_rows.astype(np.int32) if keep_indices else None,
                                e_rows.astype(np.int32) if keep_indices else None))
    return CausalForest(trees, params, cols, ipw_weighting)
