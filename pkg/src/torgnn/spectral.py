"""Boundary matrices, Hodge Laplacians, spectra and analytic torsion."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from torgnn.complex_core import SimplicialComplex

ABS_ZERO_TOL = 1e-10
REL_ZERO_TOL = 1e-8


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class HodgeSpectrum:
    """Ascending eigenvalues of one Laplacian with the quantities derived from them."""

    p: int
    eigenvalues: np.ndarray
    zero_tol: float
    betti: int
    log_pseudo_det: float

    @property
    def zeta_derivative_at_zero(self) -> float:
        return -self.log_pseudo_det

    @property
    def pseudo_det(self) -> float:
        return float(np.exp(self.log_pseudo_det))


def boundary_matrix(k: SimplicialComplex, p: int) -> np.ndarray:
    """Integer matrix of the boundary map from p-chains to (p-1)-chains.

    Rows follow ``k.simplices[p - 1]``, columns follow ``k.simplices[p]``.
    """
    if not 1 <= p <= k.dimension:
        raise SpectralError(f"boundary dimension p={p} outside [1, {k.dimension}]")
    rows = k.index(p - 1)
    cols = k.simplices[p]
    b = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for j, s in enumerate(cols):
        for i in range(p + 1):
            b[rows[s[:i] + s[i + 1 :]], j] = -1 if i % 2 else 1
    return b


def hodge_laplacian(k: SimplicialComplex, p: int) -> np.ndarray:
    """L_p = B_p^T B_p + B_{p+1} B_{p+1}^T, with B_0 and B_{dim+1} taken as zero."""
    if not 0 <= p <= k.dimension:
        raise SpectralError(f"Laplacian dimension p={p} outside [0, {k.dimension}]")
    size = k.count(p)
    lap = np.zeros((size, size), dtype=np.int64)
    if p >= 1:
        b = boundary_matrix(k, p)
        lap += b.T @ b
    if p + 1 <= k.dimension:
        b = boundary_matrix(k, p + 1)
        lap += b @ b.T
    return lap


def entrywise_laplacian(k: SimplicialComplex, p: int) -> np.ndarray:
    """L_p assembled from simplex adjacency and relative orientation.

    Built without any boundary matrix, so it can check :func:`hodge_laplacian`.
    Diagonal: upper degree (+ p + 1 when p > 0). Off-diagonal: zero for upper
    adjacent pairs, otherwise +-1 for lower adjacent pairs depending on whether
    they induce the same sign on their shared face.
    """
    if not 0 <= p <= k.dimension:
        raise SpectralError(f"Laplacian dimension p={p} outside [0, {k.dimension}]")
    layer = k.simplices[p]
    index = {s: i for i, s in enumerate(layer)}
    size = len(layer)
    lap = np.zeros((size, size), dtype=np.int64)
    cofaces: dict[tuple, list[tuple]] = {s: [] for s in layer}
    for t in k.simplices[p + 1] if p + 1 <= k.dimension else ():
        for s in combinations(t, p + 1):
            cofaces[s].append(t)
    for s, ups in cofaces.items():
        lap[index[s], index[s]] = len(ups) + (p + 1 if p > 0 else 0)

    if p == 0:
        for u, v in k.simplices[1] if k.dimension >= 1 else ():
            lap[index[(u,)], index[(v,)]] = lap[index[(v,)], index[(u,)]] = -1
        return lap

    def face_sign(s, face):
        missing = next(v for v in s if v not in face)
        return -1 if s.index(missing) % 2 else 1

    upper = set(k.simplices[p + 1]) if p + 1 <= k.dimension else set()
    by_face: dict[tuple, list[tuple]] = {}
    for s in layer:
        for face in combinations(s, p):
            by_face.setdefault(face, []).append(s)
    for face, members in by_face.items():
        for a, b in combinations(members, 2):
            if tuple(sorted(set(a) | set(b))) in upper:
                continue
            val = face_sign(a, face) * face_sign(b, face)
            lap[index[a], index[b]] = lap[index[b], index[a]] = val
    return lap


def zero_tolerance(eigenvalues: np.ndarray) -> float:
    """An eigenvalue counts as zero iff it is <= max(1e-10, 1e-8 * largest)."""
    top = float(np.max(np.abs(eigenvalues))) if len(eigenvalues) else 0.0
    return max(ABS_ZERO_TOL, REL_ZERO_TOL * top)


def spectrum(m: np.ndarray, p: int = 0, zero_tol: float | None = None) -> HodgeSpectrum:
    """Full spectrum of a symmetric PSD matrix, pseudo-determinant and kernel size.

    Pass ``zero_tol`` to override the scale-relative default.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        return HodgeSpectrum(p, np.empty(0), ABS_ZERO_TOL, 0, 0.0)
    try:
        ev = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver failed on {m.shape[0]}x{m.shape[0]} matrix") from exc
    tol = zero_tolerance(ev) if zero_tol is None else zero_tol
    zero = ev <= tol
    ev = np.where(np.abs(ev) <= tol, 0.0, ev)
    return HodgeSpectrum(p, ev, tol, int(zero.sum()), float(np.log(ev[~zero]).sum()))


def hodge_spectra(k: SimplicialComplex) -> list[HodgeSpectrum]:
    return [spectrum(hodge_laplacian(k, p), p) for p in range(k.dimension + 1)]


def log_analytic_torsion(k: SimplicialComplex) -> float:
    """log T(K) = 1/2 * sum_p (-1)^(p+1) * p * log|L_p| over the full Hodge Laplacians."""
    if k.dimension < 0:
        raise SpectralError("empty complex")
    return 0.5 * sum(
        (-1) ** (p + 1) * p * s.log_pseudo_det for p, s in enumerate(hodge_spectra(k)) if p
    )


def log_pseudo_det_gram(b: np.ndarray) -> float:
    """log of the pseudo-determinant of B^T B, via the smaller of B^T B and B B^T."""
    if b.size == 0:
        return 0.0
    b = b.astype(np.float64)
    gram = b @ b.T if b.shape[0] <= b.shape[1] else b.T @ b
    return spectrum(gram).log_pseudo_det


def log_analytic_torsion_fast(k: SimplicialComplex) -> float:
    """Same value as :func:`log_analytic_torsion`, from boundary Gram matrices only.

    Each log|L_p| splits into the down part of dimension p and the down part of
    dimension p + 1; regrouping the alternating sum leaves
    1/2 * sum_{q>=1} (-1)^(q+1) * log pdet(B_q^T B_q). For a graph this is
    half the log pseudo-determinant of the vertex Laplacian, which is much
    smaller than the edge Laplacian.
    """
    if k.dimension < 0:
        raise SpectralError("empty complex")
    return 0.5 * sum(
        (-1) ** (q + 1) * log_pseudo_det_gram(boundary_matrix(k, q))
        for q in range(1, k.dimension + 1)
    )


def betti_numbers(k: SimplicialComplex) -> list[int]:
    return [s.betti for s in hodge_spectra(k)]


def dump_laplacians(k: SimplicialComplex) -> str:
    """Debug text: the complex followed by every L_p in row-major decimal."""
    out = [k.dump().rstrip("\n")]
    for p in range(k.dimension + 1):
        out.append(f"# L_{p}")
        out.extend(" ".join(map(str, row)) for row in hodge_laplacian(k, p).tolist())
    return "\n".join(out) + "\n"
