"""State generation: Monte Carlo, random-walk Metropolis, digital nets and
imported spherical designs, plus deduplication and the fill-distance
diagnostic.
"""

from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .exceptions import (
    ArgumentError,
    CapacityError,
    DegenerateChainError,
    DesignFileError,
    UnsupportedError,
)
from .measures import Measure

__all__ = [
    "PointSet",
    "dedup",
    "mc_points",
    "mcmc_points",
    "digital_net",
    "interlace",
    "load_sphere_design",
    "fill_distance",
    "to_csv",
    "DUP_TOL",
    "MAX_NET_DIM",
    "MAX_NET_BITS",
]

DUP_TOL = 1e-12
MAX_NET_DIM = 21201  # size of the Joe-Kuo direction-number table shipped with scipy
MAX_NET_BITS = 52


@dataclass(frozen=True)
class PointSet:
    """An ordered, duplicate-free collection of states.

    Attributes
    ----------
    points : ndarray, shape (n, d)
    provenance : {"mc", "mcmc", "qmc", "design", "user"}
    seed : int or None
    order, base : int or None
        Digital-net parameters (``qmc`` only).
    t : int or None
        Strength of a spherical design (``design`` only).
    n_dropped : int
        Number of duplicates removed at construction.
    acceptance_rate : float or None
        Metropolis acceptance rate (``mcmc`` only).
    """

    points: np.ndarray
    provenance: str = "user"
    seed: int | None = None
    order: int | None = None
    base: int | None = None
    t: int | None = None
    n_dropped: int = 0
    acceptance_rate: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def deduplicated(self) -> bool:
        """True when construction removed at least one duplicate."""
        return self.n_dropped > 0

    def __len__(self):
        return self.n

    def __getitem__(self, idx):
        return self.points[idx]

    def subset(self, idx) -> "PointSet":
        return replace(self, points=self.points[idx])


def _dedup_indices(X, tol=DUP_TOL):
    """Indices of the first occurrence of each point (sup-norm tolerance)."""
    n = X.shape[0]
    if n <= 1:
        return np.arange(n)
    pairs = cKDTree(X).query_pairs(tol, p=np.inf, output_type="ndarray")
    keep = np.ones(n, dtype=bool)
    if pairs.size:
        pairs = np.sort(pairs, axis=1)
        for i, j in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]:
            if keep[i]:
                keep[j] = False
    return np.flatnonzero(keep)


def dedup(X, tol: float = DUP_TOL):
    """Remove repeated points, keeping first occurrences in their original order.

    Returns
    -------
    kept : ndarray
        The deduplicated points.
    n_dropped : int
    """
    X = np.asarray(getattr(X, "points", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    keep = _dedup_indices(X, tol)
    return X[keep], X.shape[0] - keep.size


def mc_points(measure: Measure, n: int, seed: int) -> PointSet:
    """Independent draws from ``measure``, deduplicated.

    Fewer than ``n`` points are returned if duplicates occur (atomic
    measures); ``n_dropped`` records how many.
    """
    from .measures import sample

    X, dropped = dedup(sample(measure, n, seed))
    return PointSet(X, "mc", seed=seed, n_dropped=dropped)


def mcmc_points(
    log_density: Callable[[np.ndarray], float],
    x0,
    n: int,
    step: float,
    seed: int,
    *,
    return_chain: bool = False,
):
    """Random-walk Metropolis with Gaussian proposals of scale ``step``.

    The chain runs for ``n`` proposals.  Repeated states caused by rejections
    are removed, so the returned set has ``1 + (number of accepted moves)``
    points at most; ``acceptance_rate`` is stored on the result.

    Raises
    ------
    DegenerateChainError
        If no proposal is accepted (only when ``n > 1``).
    """
    if step <= 0:
        raise ArgumentError("step must be positive")
    if n < 1:
        raise ArgumentError("n must be at least 1")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    lp = float(log_density(x))
    if not np.isfinite(lp):
        raise ArgumentError("log density must be finite at x0")
    rng = np.random.default_rng(seed)
    d = x.shape[0]
    chain = np.empty((n, d))
    chain[0] = x
    accepted = 0
    noise = rng.standard_normal((n, d)) * step
    logu = np.log(rng.random(n))
    for i in range(1, n):
        prop = x + noise[i]
        lp_prop = float(log_density(prop))
        if logu[i] < lp_prop - lp:
            x, lp = prop, lp_prop
            accepted += 1
        chain[i] = x
    if n > 1 and accepted == 0:
        raise DegenerateChainError(f"no proposals accepted in {n - 1} steps (step={step:g})")
    rate = accepted / max(n - 1, 1)
    X, dropped = dedup(chain)
    ps = PointSet(X, "mcmc", seed=seed, n_dropped=dropped, acceptance_rate=rate)
    if return_chain:
        return ps, chain
    return ps


def interlace(digits: np.ndarray, order: int, bits: int) -> np.ndarray:
    """Digit interlacing of factor ``order``.

    ``digits`` holds integer coordinates with ``bits`` binary digits each,
    shape ``(n, order * d)``.  Coordinate ``j`` of the output takes its digits
    round-robin from input coordinates ``j*order, ..., j*order + order - 1``:
    output digit ``(a - 1) * order + r`` is digit ``a`` of input ``r``.
    Returns floats in [0, 1) with ``order * bits`` digits.
    """
    digits = np.asarray(digits).astype(np.uint64)
    n, s = digits.shape
    if s % order:
        raise ArgumentError("number of input coordinates must be divisible by order")
    if order * bits > MAX_NET_BITS:
        raise CapacityError(f"{order * bits} interlaced digits exceed {MAX_NET_BITS}")
    d = s // order
    out = np.zeros((n, d), dtype=np.uint64)
    total = order * bits
    for j in range(d):
        acc = np.zeros(n, dtype=np.uint64)
        for a in range(bits):
            for r in range(order):
                bit = (digits[:, j * order + r] >> np.uint64(bits - 1 - a)) & np.uint64(1)
                acc |= bit << np.uint64(total - 1 - (a * order + r))
        out[:, j] = acc
    return out.astype(float) / float(2**total)


def digital_net(d: int, m: int, order: int = 1) -> PointSet:
    """Base-2 digital net with ``2**m`` points in [0, 1)^d.

    ``order=1`` gives the first ``2**m`` points of the unscrambled Sobol
    sequence.  ``order > 1`` interlaces an ``order * d``-dimensional Sobol net
    with factor ``order``, giving a higher-order digital net.
    """
    if d < 1 or m < 0:
        raise ArgumentError("need d >= 1 and m >= 0")
    if order not in (1, 2, 3):
        raise ArgumentError("order must be 1, 2 or 3")
    if order * d > MAX_NET_DIM:
        raise CapacityError(f"{order * d} generating matrices requested, {MAX_NET_DIM} available")
    if order * m > MAX_NET_BITS:
        raise CapacityError(f"{order * m} interlaced digits exceed {MAX_NET_BITS}")
    # scipy's Sobol engine needs enough bits for every direction-number
    # polynomial; fewer than ~30 silently corrupts high dimensions
    base = qmc.Sobol(order * d, scramble=False, bits=max(30, m)).random_base2(m)
    if order == 1:
        pts = base
    else:
        # the top m digits of the first 2**m points form the m x m digital net
        bits = max(m, 1)
        digits = np.floor(base * 2.0**bits).astype(np.uint64)
        pts = interlace(digits, order, bits)
    return PointSet(pts, "qmc", order=order, base=2, meta={"m": m})


_T_PATTERN = re.compile(r"(?:^|[^a-z])(?:t|sf)[_-]?(\d+)", re.IGNORECASE)


def load_sphere_design(path, t: int | None = None, *, tol: float = 1e-6) -> PointSet:
    """Read a spherical point set: one ``x y z`` triple per line, ``#`` comments.

    Points within ``tol`` of unit norm are renormalised exactly.  The design
    strength ``t`` is taken from the argument or parsed from file names such
    as ``sd_t012_n00080.txt`` or ``sf012.00080``.

    Raises
    ------
    DesignFileError
        On a malformed line or a point off the sphere.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise DesignFileError(f"expected 3 coordinates, got {len(parts)}", lineno)
            try:
                xyz = [float(p) for p in parts]
            except ValueError as exc:
                raise DesignFileError(f"not a number: {s!r}", lineno) from exc
            norm = np.sqrt(sum(c * c for c in xyz))
            if abs(norm - 1.0) > tol:
                raise DesignFileError(f"point has norm {norm:.9g}, not 1", lineno)
            rows.append([c / norm for c in xyz])
    if not rows:
        raise DesignFileError("no points found")
    X = np.array(rows)
    X, dropped = dedup(X)
    if t is None:
        mt = _T_PATTERN.search(os.path.basename(str(path)))
        t = int(mt.group(1)) if mt else None
    return PointSet(X, "design", t=t, n_dropped=dropped, meta={"path": str(path)})


def fill_distance(X, box_lo, box_hi, grid_per_dim: int = 64):
    """Grid approximation of ``sup_x min_i |x - x_i|`` over a box.

    Returns
    -------
    h : float
        Fill distance over the grid (an underestimate).
    resolution : float
        Grid diagonal; the true fill distance is below ``h + resolution``.
    """
    X = np.asarray(getattr(X, "points", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lo = np.atleast_1d(np.asarray(box_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(box_hi, dtype=float))
    d = lo.shape[0]
    if d > 4:
        raise UnsupportedError("grid fill distance is limited to d <= 4")
    if grid_per_dim < 8:
        raise ArgumentError("grid_per_dim must be at least 8")
    axes = [np.linspace(lo[i], hi[i], grid_per_dim) for i in range(d)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    best = np.full(G.shape[0], np.inf)
    for start in range(0, X.shape[0], 256):
        blk = X[start:start + 256]
        dist = np.sqrt(((G[:, None, :] - blk[None, :, :]) ** 2).sum(-1)).min(1)
        np.minimum(best, dist, out=best)
    resolution = float(np.linalg.norm((hi - lo) / (grid_per_dim - 1)))
    return float(best.max()), resolution


def to_csv(X, path=None) -> str:
    """Write points as CSV with header ``x1,...,xd``; returns the text."""
    X = np.asarray(getattr(X, "points", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(X.shape[1])])
    for row in X:
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text

