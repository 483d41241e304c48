"""Central finite-difference gradient checks against the tape."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor


@dataclass
class GradCheck:
    name: str
    rel_error: float
    analytic_norm: float
    numeric_norm: float


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """||a - b|| / max(||a||, ||b||, floor)."""
    diff = float(np.linalg.norm(np.ravel(a - b)))
    return diff / max(float(np.linalg.norm(np.ravel(a))), float(np.linalg.norm(np.ravel(b))), floor)


def numeric_gradient(f: Callable[[], float], p: Parameter, eps: float = 1e-5, entries=None) -> np.ndarray:
    """Central differences of scalar ``f`` over the entries of ``p`` (all, or the given flat indices)."""
    base = p.data.copy()
    flat = base.ravel()
    g = np.zeros_like(flat)
    idx = range(flat.size) if entries is None else entries
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        p.assign(flat.reshape(base.shape))
        up = f()
        flat[i] = orig - eps
        p.assign(flat.reshape(base.shape))
        down = f()
        flat[i] = orig
        g[i] = (up - down) / (2.0 * eps)
    p.assign(base)
    return g.reshape(base.shape)


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Parameter], names: Sequence[str] | None = None,
                    eps: float = 1e-5, max_entries: int | None = None, seed: int = 0) -> list[GradCheck]:
    """Compare tape gradients of ``loss_fn()`` with central differences, per parameter.

    ``loss_fn`` must be deterministic (fixed noise). With ``max_entries`` a
    random subset of each parameter's entries is probed and the analytic
    gradient is restricted to the same subset.
    """
    with Tape() as tape:
        loss = loss_fn()
    grads = tape.backward(loss)
    value = lambda: float(loss_fn().data)
    rng = np.random.default_rng(seed)
    out = []
    for k, p in enumerate(params):
        a = grads[p].ravel()
        entries = None
        if max_entries is not None and p.size > max_entries:
            entries = np.sort(rng.choice(p.size, size=max_entries, replace=False))
        n = numeric_gradient(value, p, eps, entries).ravel()
        if entries is not None:
            a, n = a[entries], n[entries]
        name = names[k] if names is not None else (p.name or f"param{k}")
        out.append(GradCheck(name, relative_error(a, n), float(np.linalg.norm(a)), float(np.linalg.norm(n))))
    return out


__all__ = ["GradCheck", "relative_error", "numeric_gradient", "check_gradients"]
