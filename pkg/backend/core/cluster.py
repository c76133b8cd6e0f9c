from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core.errors import ConvergenceError, InsufficientDataError, ParameterError
from core.utilities import derive_seed, make_rng

DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class KMeansResult:
    """Best Lloyd run; labels are 1..K and every cluster is nonempty."""
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    restarts_used: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels - 1, minlength=self.centers.shape[0])


# ==================================================================================================
# SECTION 1: LLOYD STEPS
# ==================================================================================================

def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=float)
    centers[0] = x[rng.integers(0, n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        # all points coincide with chosen centers: fall back to a uniform pick
        idx = rng.integers(0, n) if total <= 0 else rng.choice(n, p=closest / total)
        centers[i] = x[idx]
        closest = np.minimum(closest, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def _assign(x: np.ndarray, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest center (argmin keeps the lowest index on ties) and the squared distance to it."""
    dist = _squared_distances(x, centers)
    labels = np.argmin(dist, axis=1)
    return labels, dist[np.arange(x.shape[0]), labels]


def _repair_empty(x: np.ndarray, labels: np.ndarray, closest: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Moves the farthest point (from its own center) into every empty cluster."""
    labels = labels.copy()
    closest = closest.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        movable = sizes[labels] > 1
        candidates = np.where(movable, closest, -np.inf)
        idx = int(np.argmax(candidates))
        labels[idx] = j
        closest[idx] = 0.0
    return labels, closest


def _update(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centers = np.zeros((k, x.shape[1]), dtype=float)
    for j in range(k):
        centers[j] = x[labels == j].mean(axis=0)
    return centers


def _lloyd(x: np.ndarray, k: int, max_iter: int, tol: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, float, int]:
    centers = _plusplus_init(x, k, rng)
    labels, closest = _repair_empty(x, *_assign(x, centers), k)
    previous = np.inf
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        new_centers = _update(x, labels, k)
        shift = float(((new_centers - centers) ** 2).sum(axis=1).max())
        centers = new_centers
        assigned, closest = _assign(x, centers)
        inertia = float(closest.sum())
        labels, closest = _repair_empty(x, assigned, closest, k)
        repaired = not np.array_equal(labels, assigned)
        if not repaired and inertia > previous * (1.0 + 1e-9) + 1e-12:
            raise ConvergenceError(f"k-means inertia increased at iteration {n_iter}: {previous} -> {inertia}")
        previous = np.inf if repaired else inertia
        if shift < tol:
            break

    centers, labels = _settle(x, labels, k, max(max_iter, DEFAULT_MAX_ITER))
    inertia = float(((x - centers[labels]) ** 2).sum())
    return labels, centers, inertia, n_iter


def _settle(x: np.ndarray, labels: np.ndarray, k: int, max_iter: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Centers as cluster means, with every label at its nearest center.
    Stops early only if a reassignment would empty a cluster.
    """
    rows = np.arange(x.shape[0])
    centers = _update(x, labels, k)
    for _ in range(max_iter):
        dist = _squared_distances(x, centers)
        nearest = dist.min(axis=1)
        if np.all(dist[rows, labels] <= nearest + 1e-12 * (1.0 + nearest)):
            break
        assigned = np.argmin(dist, axis=1)
        if np.bincount(assigned, minlength=k).min() == 0:
            break
        labels = assigned
        centers = _update(x, labels, k)
    return centers, labels


# ==================================================================================================
# SECTION 2: PUBLIC API
# ==================================================================================================

def kmeans(
    x,
    k: int,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> KMeansResult:
    """
    k-means++ seeded Lloyd iterations, best of `restarts` runs.
    Restart r uses the substream derive_seed(seed, r); the winner is the lowest inertia,
    then the lowest restart index.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if k < 1 or restarts < 1 or max_iter < 1:
        raise ParameterError("k, restarts and max_iter must all be >= 1")
    if arr.shape[0] < k:
        raise InsufficientDataError(f"k-means with k={k} needs at least {k} rows, got {arr.shape[0]}")

    best = None
    for r in range(restarts):
        labels, centers, inertia, n_iter = _lloyd(arr, k, max_iter, tol, make_rng(derive_seed(seed, r)))
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, n_iter)

    labels, centers, inertia, n_iter = best
    return KMeansResult(
        labels=labels.astype(np.int64) + 1,
        centers=centers,
        inertia=inertia,
        n_iter=n_iter,
        restarts_used=restarts,
    )


def kmeans_univariate(x, k: int, seed: int, **kwargs) -> List[KMeansResult]:
    """One independent 1-D clustering per column; column j uses derive_seed(seed, 'column', j)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return [kmeans(arr[:, j], k, seed=derive_seed(seed, "column", j), **kwargs) for j in range(arr.shape[1])]
