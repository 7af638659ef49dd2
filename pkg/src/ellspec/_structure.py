"""Block structure of correlation profiles.

Many profiles of interest (constant, few-block) have rows that fall into a
small number of identical classes.  On such profiles every object in the
deterministic theory (the pseudo-resolvent, kernel solves, Perron vectors)
is class-constant, so the defining equations restrict *exactly* to a small
reduced system.  Detecting this turns O(N^3) linear algebra into O(k^3)
with k the number of classes; the reduction is algebraically exact, not an
approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ROUND = 10  # digits kept when hashing rows into classes


@dataclass(frozen=True)
class BlockStructure:
    """Partition of indices into classes on which (s, t) are constant.

    ``s_red`` and ``t_red`` are the k x k matrices representing the action
    of S and T on class-constant vectors:  (S v)_c = sum_d s_red[c, d] v_d.
    """

    labels: np.ndarray      # (n,) int class index per matrix index
    counts: np.ndarray      # (k,) class sizes
    s_val: np.ndarray       # (k, k) entry value of s between classes
    t_val: np.ndarray       # (k, k) entry value of t between classes
    s_red: np.ndarray       # (k, k) = s_val * counts[None, :]
    t_red: np.ndarray       # (k, k) likewise for t

    @property
    def k(self) -> int:
        return len(self.counts)

    def expand(self, v_red: np.ndarray) -> np.ndarray:
        """Lift a class vector to a full length-n vector."""
        return np.asarray(v_red)[self.labels]

    def reduce_mean(self, weights_only: bool = False) -> np.ndarray:
        """Class weights counts / n (the measure of each class)."""
        return self.counts / self.counts.sum()


def detect_blocks(s: np.ndarray, t: np.ndarray, max_classes: int = 64,
                  rtol: float = 1e-12):
    """Group indices whose (s, t) rows and columns coincide.

    Returns a :class:`BlockStructure` when the profile is exactly block
    constant with at most ``max_classes`` classes, else ``None``.
    """
    n = s.shape[0]
    scale_s = max(np.abs(s).max(), 1.0 / n)
    scale_t = max(np.abs(t).max(), 1.0 / n)
    sig_rows = np.round(s / scale_s, _ROUND)
    sig_t = np.round(t / scale_t, _ROUND)
    keys = {}
    labels = np.empty(n, dtype=np.intp)
    for i in range(n):
        key = (sig_rows[i].tobytes(), sig_rows[:, i].tobytes(),
               sig_t[i].tobytes(), sig_t[:, i].tobytes())
        if key not in keys:
            if len(keys) >= max_classes:
                return None
            keys[key] = len(keys)
        labels[i] = keys[key]
    k = len(keys)
    if k >= n:
        return None
    counts = np.bincount(labels, minlength=k).astype(float)
    rep = np.empty(k, dtype=np.intp)
    rep[labels[::-1]] = np.arange(n - 1, -1, -1)
    s_val = s[np.ix_(rep, rep)].astype(float)
    t_val = t[np.ix_(rep, rep)].astype(complex)
    # confirm the grouping is exact: entries must depend on classes only
    if not np.allclose(s, s_val[np.ix_(labels, labels)],
                       rtol=0.0, atol=rtol * scale_s):
        return None
    if not np.allclose(t, t_val[np.ix_(labels, labels)],
                       rtol=0.0, atol=rtol * scale_t):
        return None
    return BlockStructure(
        labels=labels,
        counts=counts,
        s_val=s_val,
        t_val=t_val,
        s_red=s_val * counts[None, :],
        t_red=t_val * counts[None, :],
    )
