"""Grassmannian subspace comparison: principal angles and geodesic distance.

A Subspace is an orthonormal-column basis of a linear subspace of R^D.
Principal angles come from the singular values of Q1^T Q2; the geodesic
distance is sqrt(sum theta_i^2) with the angles in radians, the canonical
metric. That radian convention is forced by internal consistency of the
random-random reference row this module reproduces: recomputing the
distance from the published angles (0.244 rad + nine angles near 1.5 rad)
gives ~4.5, the published distance.

A note on "random" subspaces: orthonormalized bases of matrices with
uniform[0,1) entries all contain a direction close to the constant vector,
so two such subspaces meet at a small first principal angle (~14 deg in
R^3072) while the remaining angles sit near 90 deg. Centered Gaussian bases
have no shared direction and give all angles >= ~84 deg. Both samplers are
provided; the reference row matches the non-centered one.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_f64


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray  # (D, r), orthonormal columns

    def __post_init__(self):
        object.__setattr__(self, "basis", as_f64(self.basis))
        q = self.basis
        if q.ndim != 2:
            raise ValueError("basis must be a D x r matrix")
        gram_err = np.abs(q.T @ q - np.eye(q.shape[1])).max()
        if gram_err > 1e-10:
            raise ValueError(f"basis columns not orthonormal (error {gram_err:.2e})")

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]


def orthonormalize(raw):
    """QR-based orthonormal basis of the column span of `raw`.

    Rejects rank-deficient input (relative singular-value tolerance 1e-12),
    naming how many directions collapsed.
    """
    raw = as_f64(raw)
    if raw.ndim != 2 or raw.shape[0] < raw.shape[1]:
        raise ValueError(f"need a tall D x r matrix, got {raw.shape}")
    sv = np.linalg.svd(raw, compute_uv=False)
    deficient = int(np.sum(sv <= 1e-12 * sv[0]))
    if deficient:
        raise ValueError(
            f"rank-deficient input: {deficient} of {raw.shape[1]} columns collapse"
        )
    q, r = np.linalg.qr(raw)
    return Subspace(q)


def from_rows(directions):
    """Subspace spanned by row vectors (e.g. a tangent basis)."""
    return orthonormalize(as_f64(directions).T)


def principal_angles(s1, s2):
    """Canonical angles in radians, ascending, in [0, pi/2].

    Cosines come from the SVD of Q1^T Q2; angles below pi/4 are recomputed
    from the sine-based SVD of (I - Q1 Q1^T) Q2, which keeps full precision
    where arccos flattens out.
    """
    if s1.ambient_dim != s2.ambient_dim:
        raise ValueError(
            f"ambient dims differ: {s1.ambient_dim} vs {s2.ambient_dim}"
        )
    q1, q2 = s1.basis, s2.basis
    inner = q1.T @ q2
    cos_sv = np.linalg.svd(inner, compute_uv=False)
    theta = np.sort(np.arccos(np.clip(cos_sv, 0.0, 1.0)))
    small = theta < np.pi / 4
    if small.any():
        sin_sv = np.linalg.svd(q2 - q1 @ inner, compute_uv=False)
        sin_asc = np.sort(sin_sv)[: theta.size]
        theta[small] = np.arcsin(np.clip(sin_asc[small], 0.0, 1.0))
    return theta


def geodesic_distance(s1, s2):
    """sqrt(sum of squared principal angles), radians."""
    if s1.rank != s2.rank:
        raise ValueError(f"ranks differ: {s1.rank} vs {s2.rank}")
    th = principal_angles(s1, s2)
    return float(np.sqrt((th * th).sum()))


def sample_subspace(ambient_dim, rank, rng, entries="uniform01"):
    """Random subspace via QR of a random matrix.

    entries="uniform01" draws uniform [0,1) entries (non-centered; matches
    the reference random-random comparison row); entries="gaussian" draws
    standard normals (rotation-invariant).
    """
    if entries == "uniform01":
        raw = rng.random((ambient_dim, rank))
    elif entries == "gaussian":
        raw = rng.standard_normal((ambient_dim, rank))
    else:
        raise ValueError(f"unknown entries kind {entries!r}")
    return orthonormalize(raw)


def rand_rand_protocol(n_pairs=10, ambient_dim=3072, rank=10, seed=0,
                       entries="uniform01"):
    """Average principal angles (degrees) and geodesic distance over pairs of
    random subspaces; the random-random reference comparison."""
    from .rng import make_rng

    rng = make_rng(seed)
    angle_rows = []
    dists = []
    for _ in range(n_pairs):
        s1 = sample_subspace(ambient_dim, rank, rng, entries)
        s2 = sample_subspace(ambient_dim, rank, rng, entries)
        th = principal_angles(s1, s2)
        angle_rows.append(np.degrees(th))
        dists.append(np.sqrt((th * th).sum()))
    return np.mean(angle_rows, axis=0), float(np.mean(dists))
