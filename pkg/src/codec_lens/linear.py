"""Classical orthogonal transforms: DCT-II, Walsh-Hadamard, Haar and KLT.

These serve double duty: reference bases to compare learned coders
against, and exact linear oracles for the decomposition machinery
(a linear decoder separates perfectly, so any nonzero separability
error downstream is a bug or a nonlinearity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ImagePlane

__all__ = [
    "ORTHONORMAL_TOL",
    "OrthogonalTransform",
    "Basis2D",
    "dct_matrix",
    "wht_matrix",
    "haar_matrix",
    "klt_from_patches",
    "forward",
    "inverse",
    "linear_basis",
    "basis_2d",
    "separable_2d",
    "block_code_image",
]

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class OrthogonalTransform:
    """A d x d orthonormal matrix whose rows are the basis vectors.

    ``eigenvalues`` is populated only by :func:`klt_from_patches`
    (non-increasing order); it is None for the fixed transforms.
    """

    name: str
    matrix: np.ndarray
    eigenvalues: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64, order="C")
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"transform matrix must be square, got {m.shape}")
        gram_err = np.abs(m @ m.T - np.eye(m.shape[0])).max()
        if gram_err > ORTHONORMAL_TOL:
            raise ValueError(
                f"{self.name}: matrix is not orthonormal (max |HH^T - I| = {gram_err:.3e})"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.eigenvalues is not None:
            ev = np.array(self.eigenvalues, dtype=np.float64)
            ev.setflags(write=False)
            object.__setattr__(self, "eigenvalues", ev)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Basis2D:
    """The n*n separable 2-D basis images of an n-dim transform.

    ``images[u * n + v]`` is the outer product of rows u and v.
    """

    block: int
    images: tuple[np.ndarray, ...]


def _require_pow2(n: int, what: str) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"{what} requires a power-of-two size, got {n}")


def dct_matrix(n: int) -> OrthogonalTransform:
    """Orthonormal DCT-II: row u, column x is c(u) cos(pi (2x+1) u / 2n)."""
    if n < 1:
        raise ValueError(f"dct size must be >= 1, got {n}")
    u = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    c = np.where(u == 0, np.sqrt(1.0 / n), np.sqrt(2.0 / n))
    return OrthogonalTransform(f"dct{n}", c * np.cos(np.pi * (2 * x + 1) * u / (2 * n)))


def wht_matrix(n: int, ordering: str = "sequency") -> OrthogonalTransform:
    """Walsh-Hadamard transform, Sylvester construction scaled by 1/sqrt(n).

    ``sequency`` ordering sorts rows by their sign-change count so row k
    has exactly k sign changes; ``natural`` keeps the Sylvester order.
    """
    _require_pow2(n, "wht")
    if ordering not in ("natural", "sequency"):
        raise ValueError(f"unknown wht ordering {ordering!r}")
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    if ordering == "sequency":
        changes = np.count_nonzero(np.diff(np.sign(h), axis=1), axis=1)
        h = h[np.argsort(changes, kind="stable")]
    return OrthogonalTransform(f"wht{n}", h / np.sqrt(n))


def haar_matrix(n: int) -> OrthogonalTransform:
    """Orthonormal Haar matrix via the standard doubling recursion."""
    _require_pow2(n, "haar")
    h = np.array([[1.0]])
    rt2 = np.sqrt(2.0)
    while h.shape[0] < n:
        m = h.shape[0]
        top = np.kron(h, [1.0, 1.0]) / rt2
        bottom = np.kron(np.eye(m), [1.0, -1.0]) / rt2
        h = np.vstack([top, bottom])
    return OrthogonalTransform(f"haar{n}", h)


def _jacobi_eigh(sym: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm drops to ``tol``.
    Returns (eigenvalues, eigenvectors-as-columns), unsorted.
    """
    a = np.array(sym, dtype=np.float64)
    n = a.shape[0]
    vecs = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), vecs
    for sweep in range(max_sweeps + 1):
        off = np.sqrt(max(np.sum(a * a) - np.sum(a.diagonal() ** 2), 0.0))
        if off <= tol:
            return a.diagonal().copy(), vecs
        if sweep == max_sweeps:
            raise ValueError("jacobi eigendecomposition did not converge")
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p, rot_q = a[p].copy(), a[q].copy()
                a[p] = c * rot_p - s * rot_q
                a[q] = s * rot_p + c * rot_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                vec_p, vec_q = vecs[:, p].copy(), vecs[:, q].copy()
                vecs[:, p] = c * vec_p - s * vec_q
                vecs[:, q] = s * vec_p + c * vec_q
    raise AssertionError("unreachable")


def klt_from_patches(patches) -> OrthogonalTransform:
    """Karhunen-Loeve transform of a sample of d-vectors.

    Rows are eigenvectors of the mean-removed sample covariance, sorted by
    descending eigenvalue. Sign convention: the first component of each row
    larger than 1e-12 in magnitude is made positive, so repeated runs on the
    same data give the identical matrix.
    """
    x = np.array(patches, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"patches must be a list of equal-length vectors, got shape {x.shape}")
    count, d = x.shape
    if count < d:
        raise ValueError(f"need at least {d} patches for a {d}-dim KLT, got {count}")
    if not np.isfinite(x).all():
        raise ValueError("patches contain NaN or Inf")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / count
    peak = np.abs(cov).max()
    if peak == 0.0:
        raise ValueError("sample covariance is zero (all patches identical)")
    # Jacobi on the unit-scaled matrix keeps the absolute convergence
    # threshold meaningful regardless of the data's magnitude.
    evals, evecs = _jacobi_eigh(cov / peak)
    evals = evals * peak
    order = np.argsort(-evals, kind="stable")
    rows = evecs[:, order].T.copy()
    for row in rows:
        nonzero = np.nonzero(np.abs(row) > 1e-12)[0]
        if nonzero.size and row[nonzero[0]] < 0:
            row *= -1.0
    return OrthogonalTransform(f"klt{d}", rows, eigenvalues=evals[order])


def _check_length(t: OrthogonalTransform, v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (t.dim,):
        raise ValueError(f"{what}: expected a length-{t.dim} vector, got shape {v.shape}")
    return v


def forward(t: OrthogonalTransform, x) -> np.ndarray:
    """Transform coefficients of x: apply H."""
    return t.matrix @ _check_length(t, x, "forward")


def inverse(t: OrthogonalTransform, w) -> np.ndarray:
    """Reconstruction from coefficients: apply H^T (= H^-1)."""
    return t.matrix.T @ _check_length(t, w, "inverse")


def linear_basis(t: OrthogonalTransform, index: int) -> np.ndarray:
    """Basis vector ``index``: row i of H, equivalently H^-1 applied to e_i."""
    if not 0 <= index < t.dim:
        raise IndexError(f"basis index {index} out of range for dim {t.dim}")
    return t.matrix[index].copy()


def basis_2d(t: OrthogonalTransform) -> Basis2D:
    """All n*n outer-product basis images of a 1-D transform."""
    n = t.dim
    images = tuple(
        np.outer(t.matrix[u], t.matrix[v]) for u in range(n) for v in range(n)
    )
    return Basis2D(block=n, images=images)


def separable_2d(t: OrthogonalTransform) -> OrthogonalTransform:
    """The n^2-dim transform acting on row-major flattened n x n blocks.

    Row u*n+v equals the flattened (u, v) outer-product basis image, so the
    result drives block decoders whose latent channels are 2-D coefficients.
    """
    return OrthogonalTransform(f"{t.name}x{t.dim}", np.kron(t.matrix, t.matrix))


def block_code_image(
    t: OrthogonalTransform, img: ImagePlane, block: int, keep: int
) -> ImagePlane:
    """Block transform coding: keep the ``keep`` largest coefficients per block.

    ``t`` acts on row-major flattened block vectors, so its dimension must be
    block * block (use :func:`separable_2d` for a separable 2-D transform).
    Image sides that are not multiples of ``block`` are edge-replicated.
    """
    d = t.dim
    if block * block != d:
        raise ValueError(f"transform dim {d} does not match block {block}x{block}")
    if keep > d:
        raise ValueError(f"cannot keep {keep} of {d} coefficients")
    if keep < 0:
        raise ValueError("keep must be nonnegative")
    h, w = img.height, img.width
    pad_h = (-h) % block
    pad_w = (-w) % block
    data = np.pad(img.data, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    nh, nw = data.shape[1] // block, data.shape[2] // block
    out = np.empty_like(data)
    for ch in range(img.channels):
        blocks = (
            data[ch]
            .reshape(nh, block, nw, block)
            .swapaxes(1, 2)
            .reshape(nh * nw, d)
        )
        coeffs = blocks @ t.matrix.T
        if keep < d:
            kept = np.zeros_like(coeffs)
            # stable sort on -|w| makes tie-breaking by index deterministic
            order = np.argsort(-np.abs(coeffs), axis=1, kind="stable")[:, :keep]
            rows = np.arange(coeffs.shape[0])[:, None]
            kept[rows, order] = coeffs[rows, order]
            coeffs = kept
        recon = coeffs @ t.matrix
        out[ch] = (
            recon.reshape(nh, nw, block, block).swapaxes(1, 2).reshape(data.shape[1:])
        )
    return ImagePlane(out[:, :h, :w])
