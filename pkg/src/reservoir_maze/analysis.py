"""Reservoir-state analysis: PCA, decision classifiers, separability checks.

The classifiers predict the robot's next turn (LEFT/RIGHT) from a snapshot
of either the reservoir state or the raw sensor vector. KNN is implemented
directly (majority among the k nearest, distance ties broken by the lower
training-row index); the soft-margin linear SVM is delegated to scikit-learn
and exposed as an explicit (w, b) decision rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.svm import SVC

RESERVOIR = "RESERVOIR"
SENSORS = "SENSORS"


class DegenerateDataError(ValueError):
    """PCA input has no variance at all."""


class DegenerateLabelsError(ValueError):
    """A classifier needs at least two classes in its training set."""


@dataclass
class PcaModel:
    """Orthonormal principal axes, ordered by decreasing explained variance."""

    mean: np.ndarray
    components: np.ndarray          # (k, d), rows are components
    explained_variance: np.ndarray  # (k,), descending


def fit_pca(states: np.ndarray) -> PcaModel:
    """Eigendecomposition of the sample covariance of the (rows = samples) data."""
    X = np.asarray(states, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    if float(np.abs(cov).max(initial=0.0)) == 0.0:
        raise DegenerateDataError("data has zero variance in every direction")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    return PcaModel(mean=mean,
                    components=np.ascontiguousarray(evecs[:, order].T),
                    explained_variance=np.maximum(evals[order], 0.0))


def project(pca: PcaModel, x: np.ndarray, k: int) -> np.ndarray:
    """Coordinates of ``x`` (vector or rows-matrix) on the first k components."""
    if k > pca.components.shape[0]:
        raise ValueError(f"k={k} exceeds the {pca.components.shape[0]} components")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != pca.mean.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {pca.mean.shape[0]}")
    return (x - pca.mean) @ pca.components[:k].T


@dataclass
class LabeledStateSet:
    """Snapshot rows (reservoir states or sensor vectors) with decision labels."""

    points: np.ndarray
    labels: np.ndarray
    source: str = RESERVOIR

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.points.shape[0] != self.labels.shape[0]:
            raise ValueError("points and labels must have equal row counts")


@dataclass
class KnnClassifier:
    """Brute-force k-nearest-neighbor majority vote."""

    points: np.ndarray
    labels: np.ndarray
    k: int
    classes: np.ndarray = field(init=False)
    _codes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.classes, self._codes = np.unique(self.labels, return_inverse=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p_sq = (self.points ** 2).sum(axis=1)
        out = np.empty(X.shape[0], dtype=self._codes.dtype)
        for lo in range(0, X.shape[0], 4096):
            xb = X[lo:lo + 4096]
            d2 = (xb ** 2).sum(axis=1)[:, None] + p_sq - 2.0 * (xb @ self.points.T)
            # Stable sort keeps the lower training index first on distance ties.
            nearest = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
            votes = self._codes[nearest]
            counts = np.stack([(votes == c).sum(axis=1)
                               for c in range(len(self.classes))], axis=1)
            out[lo:lo + 4096] = np.argmax(counts, axis=1)
        return self.classes[out]


@dataclass
class LinearSvmClassifier:
    """Soft-margin linear separator; decision is sign(w . x + b)."""

    w: np.ndarray
    b: float
    classes: np.ndarray  # classes[0] on the negative side, classes[1] positive

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.w + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[(self.decision(X) > 0).astype(int)]

    @property
    def margin(self) -> float:
        """Width of the separating slab, 2 / ||w||."""
        return 2.0 / float(np.linalg.norm(self.w))


def _check_two_classes(labels: np.ndarray) -> np.ndarray:
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DegenerateLabelsError(f"need two classes, got {classes!r}")
    return classes


def train_knn(train_set: LabeledStateSet, k: int = 5) -> KnnClassifier:
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd number")
    _check_two_classes(train_set.labels)
    return KnnClassifier(points=train_set.points, labels=train_set.labels, k=k)


def train_linear_svm(train_set: LabeledStateSet, C: float = 1.0) -> LinearSvmClassifier:
    classes = _check_two_classes(train_set.labels)
    y = (train_set.labels == classes[1]).astype(int)
    svc = SVC(kernel="linear", C=C)
    svc.fit(train_set.points, y)
    return LinearSvmClassifier(w=svc.coef_.ravel().copy(),
                               b=float(svc.intercept_[0]), classes=classes)


def accuracy(classifier, points: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(classifier.predict(points) == np.asarray(labels)))


def predict_stream(classifier, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-step labels over a time-major state matrix plus the flip indices."""
    labels = classifier.predict(np.asarray(states, dtype=float))
    switches = np.nonzero(labels[1:] != labels[:-1])[0] + 1
    return labels, switches


def _hull_vertices(pts: np.ndarray) -> np.ndarray:
    if pts.shape[0] >= 3:
        try:
            from scipy.spatial import ConvexHull
            return pts[ConvexHull(pts).vertices]
        except Exception:
            # Collinear cloud: its hull is the segment between the extremes.
            centered = pts - pts.mean(axis=0)
            direction = np.linalg.svd(centered, full_matrices=False)[2][0]
            proj = centered @ direction
            return pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
    return pts


def _edges(poly: np.ndarray):
    n = poly.shape[0]
    if n < 2:
        return np.empty((0, 2)), np.empty((0, 2))
    if n == 2:
        return poly[:1], poly[1:2] - poly[:1]
    return poly, np.roll(poly, -1, axis=0) - poly


def _point_in_hull(p: np.ndarray, poly: np.ndarray) -> bool:
    if poly.shape[0] < 3:
        return False
    a, d = _edges(poly)
    cross = d[:, 0] * (p[1] - a[:, 1]) - d[:, 1] * (p[0] - a[:, 0])
    return bool(np.all(cross >= -1e-12) or np.all(cross <= 1e-12))


def _segment_distance2(a0, d0, a1, d1) -> float:
    # Min squared distance between segments via endpoint-to-segment checks.
    best = np.inf
    for p, a, d in ((a0, a1, d1), (a0 + d0, a1, d1), (a1, a0, d0), (a1 + d1, a0, d0)):
        dd = float(d @ d)
        t = 0.0 if dd == 0.0 else float(np.clip((p - a) @ d / dd, 0.0, 1.0))
        e = p - a - t * d
        best = min(best, float(e @ e))
    return best


def _hulls_overlap_or_distance(P: np.ndarray, Q: np.ndarray) -> float:
    """0.0 when the hulls intersect, else their minimum distance."""
    a0, d0 = _edges(P)
    a1, d1 = _edges(Q)
    for i in range(a0.shape[0]):
        for j in range(a1.shape[0]):
            denom = d0[i, 0] * d1[j, 1] - d0[i, 1] * d1[j, 0]
            q = a1[j] - a0[i]
            if abs(denom) > 1e-15:
                t = (q[0] * d1[j, 1] - q[1] * d1[j, 0]) / denom
                s = (q[0] * d0[i, 1] - q[1] * d0[i, 0]) / denom
                if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= s <= 1 + 1e-12:
                    return 0.0
    if _point_in_hull(P[0], Q) or _point_in_hull(Q[0], P):
        return 0.0
    best = np.inf
    for i in range(a0.shape[0]):
        for j in range(a1.shape[0]):
            best = min(best, _segment_distance2(a0[i], d0[i], a1[j], d1[j]))
    if not np.isfinite(best):  # single-point "hulls"
        best = float(((P[0] - Q[0]) ** 2).sum())
    return float(np.sqrt(best))


def linear_separability(states: np.ndarray, labels: np.ndarray,
                        n_components: int = 2, C: float = 1.0) -> dict:
    """Hard-margin separability of the two classes in PCA space.

    The maximum-margin slab between two point sets equals the gap between
    their convex hulls, so separability and margin are computed exactly from
    hull geometry (an iterative near-hard-margin SVM stalls on overlapping
    classes). When the hulls overlap, a soft-margin SVM supplies the
    best-effort training accuracy instead.
    """
    labels = np.asarray(labels)
    classes = _check_two_classes(labels)
    pca = fit_pca(states)
    coords = project(pca, states, n_components)
    gap = _hulls_overlap_or_distance(_hull_vertices(coords[labels == classes[0]]),
                                     _hull_vertices(coords[labels == classes[1]]))
    result = {"projection": coords, "pca": pca, "separable": gap > 0.0}
    if gap > 0.0:
        result["accuracy"] = 1.0
        result["margin"] = gap
    else:
        svm = train_linear_svm(LabeledStateSet(coords, labels), C=C)
        result["accuracy"] = accuracy(svm, coords, labels)
        result["margin"] = 0.0
        result["svm"] = svm
    return result


def train_test_split_set(state_set: LabeledStateSet, train_fraction: float = 0.8,
                         seed: int = 0) -> tuple[LabeledStateSet, LabeledStateSet]:
    """Seeded shuffle split preserving the source tag."""
    n = state_set.points.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(n * train_fraction))
    tr, te = order[:cut], order[cut:]
    make = lambda idx: LabeledStateSet(state_set.points[idx], state_set.labels[idx],
                                       state_set.source)
    return make(tr), make(te)


def sample_corridor_set(points: np.ndarray, labels: np.ndarray,
                        candidate_idx: np.ndarray, n_points: int = 900,
                        seed: int = 0, source: str = RESERVOIR) -> LabeledStateSet:
    """Uniform sample (without replacement) of labeled corridor snapshots."""
    candidate_idx = np.asarray(candidate_idx)
    if candidate_idx.shape[0] < n_points:
        raise ValueError(f"only {candidate_idx.shape[0]} corridor records available, "
                         f"need {n_points}")
    pick = np.random.default_rng(seed).choice(candidate_idx.shape[0], size=n_points,
                                              replace=False)
    pick.sort()
    idx = candidate_idx[pick]
    return LabeledStateSet(points[idx], np.asarray(labels)[idx], source)
