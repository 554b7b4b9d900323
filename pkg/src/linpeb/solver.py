"""Position error bounds from a banded FIM, plus center-node closed forms.

The numerical kernel is a banded LDL^T factorization followed by the
Takahashi backward recursion, which yields every in-band entry of the
inverse (and hence every diagonal CRB block) in ``O(n p^2)`` work for a
scalar half-bandwidth ``p``. Leading batch axes are processed in lockstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .fim import BlockBandedFim

#: pivot ratio (smallest/largest, after Jacobi scaling) below which a FIM counts as singular
RCOND_THRESHOLD = 1e-13


class SingularFimError(np.linalg.LinAlgError):
    """The FIM cannot be inverted; ``unanchored`` lists 1-based agent index ranges."""

    def __init__(self, message: str, unanchored=(), rcond: float = 0.0):
        super().__init__(message)
        self.unanchored = list(unanchored)
        self.rcond = rcond


# ---------------------------------------------------------------------------
# scalar band storage
#
# "row band" form: R[..., i, t] = A[i, i - p + t] for t = 0..p (t = p is the
# diagonal). Entries with i - p + t < 0 are padding.


def upper_to_row_band(bands: np.ndarray) -> np.ndarray:
    """Convert ``bands[..., j, i] = A[i, i + j]`` into row-band form."""
    bands = np.asarray(bands, dtype=float)
    p = bands.shape[-2] - 1
    n = bands.shape[-1]
    R = np.zeros(bands.shape[:-2] + (n, p + 1))
    for j in range(min(p, n - 1) + 1):
        R[..., j:, p - j] = bands[..., j, :n - j]
    return R


def block_to_row_band(blocks: np.ndarray) -> np.ndarray:
    """Flatten ``(..., k + 1, G, b, b)`` block bands into scalar row-band form."""
    blocks = np.asarray(blocks, dtype=float)
    k1, G, b = blocks.shape[-4], blocks.shape[-3], blocks.shape[-1]
    p = b * k1 - 1
    n = b * G
    R = np.zeros(blocks.shape[:-4] + (n, p + 1))
    for j in range(k1):
        for a in range(b):
            for c in range(b):
                # A[b*(u+j)+c, b*u+a] = block(u, u+j)[a, c]; keep entries on or below the diagonal
                lag = b * j + c - a
                if lag < 0 or (j == 0 and c < a):
                    continue
                rows = b * np.arange(j, G) + c
                R[..., rows, p - lag] = blocks[..., j, :G - j, a, c]
    return R


def row_band_to_dense(R: np.ndarray) -> np.ndarray:
    n, p1 = R.shape[-2], R.shape[-1]
    p = p1 - 1
    A = np.zeros(R.shape[:-2] + (n, n))
    for t in range(p1):
        lag = p - t
        i = np.arange(lag, n)
        A[..., i, i - lag] = R[..., lag:, t]
        A[..., i - lag, i] = R[..., lag:, t]
    return A


@dataclass
class BandedInverse:
    """In-band entries of ``A^{-1}`` in row-band form plus factorization diagnostics."""

    Z: np.ndarray
    rcond: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return self.Z[..., -1]


def banded_ldl_selected_inverse(R: np.ndarray, rcond_threshold: float = RCOND_THRESHOLD) -> BandedInverse:
    """Selected inverse of symmetric positive definite banded matrices.

    Parameters
    ----------
    R : np.ndarray
        ``(..., n, p + 1)`` row-band storage.

    Returns
    -------
    BandedInverse
        ``Z`` in the same storage holding ``A^{-1}`` inside the band.

    Raises
    ------
    SingularFimError
        When a pivot of the Jacobi-scaled matrix drops below
        ``rcond_threshold`` times the largest pivot.
    """
    R = np.asarray(R, dtype=float)
    batch = R.shape[:-2]
    n, p1 = R.shape[-2], R.shape[-1]
    if p1 > n:
        # bandwidth wider than the matrix: drop columns that are pure padding
        R = R[..., p1 - n:]
        p1 = n
    p = p1 - 1
    R = R.reshape((-1, n, p1))
    B = R.shape[0]

    diag = R[:, :, p]
    if np.any(~np.isfinite(R)) or np.any(diag <= 0.0):
        raise SingularFimError("FIM has a non-positive or non-finite diagonal entry")
    s = 1.0 / np.sqrt(diag)
    S = np.zeros_like(R)
    for t in range(p1):
        lag = p - t
        S[:, lag:, t] = R[:, lag:, t] * s[:, lag:] * s[:, :n - lag]

    # LDL^T, row by row; L[:, i, t] = L[i, i - p + t]
    L = np.zeros((B, n, p))
    D = np.zeros((B, n))
    for i in range(n):
        lo = max(0, i - p)
        # y_j = L[i, j] * D[j]
        for j in range(lo, i):
            acc = S[:, i, j - i + p].copy()
            if j > lo:
                ls = np.arange(lo, j)
                acc -= np.einsum("bl,bl,bl->b", L[:, i, ls - i + p], L[:, j, ls - j + p], D[:, ls])
            L[:, i, j - i + p] = acc / D[:, j]
        acc = S[:, i, p].copy()
        if i > lo:
            ls = np.arange(lo, i)
            li = L[:, i, ls - i + p]
            acc -= np.einsum("bl,bl,bl->b", li, li, D[:, ls])
        D[:, i] = acc

    dmax = D.max(axis=1)
    dmin = D.min(axis=1)
    rcond = np.where(dmax > 0.0, dmin / dmax, 0.0)
    if np.any(~(rcond >= rcond_threshold)):
        bad = int(np.argmin(rcond))
        raise SingularFimError(
            f"FIM is singular or ill-conditioned (pivot ratio {rcond[bad]:.3e} < {rcond_threshold:.0e})",
            rcond=float(rcond[bad]))

    # Takahashi recursion for the in-band part of the inverse
    Z = np.zeros((B, n, p1))
    windows = {}
    for j in range(n - 1, -1, -1):
        w = min(p, n - 1 - j)
        if w == 0:
            Z[:, j, p] = 1.0 / D[:, j]
            continue
        if w not in windows:
            a, b = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
            hi, lo_ = np.maximum(a, b), np.minimum(a, b)
            windows[w] = (hi, lo_ - hi + p)
        hi, tcol = windows[w]
        win = Z[:, j + 1 + hi, tcol]  # (B, w, w) symmetric window of Z
        lcol = L[:, j + 1 + np.arange(w), p - 1 - np.arange(w)]  # L[j+1+a, j]
        zcol = -np.einsum("bac,bc->ba", win, lcol)
        Z[:, j + 1 + np.arange(w), p - 1 - np.arange(w)] = zcol
        Z[:, j, p] = 1.0 / D[:, j] - np.einsum("ba,ba->b", lcol, zcol)

    for t in range(p1):
        lag = p - t
        Z[:, lag:, t] *= s[:, lag:] * s[:, :n - lag]
        Z[:, :lag, t] = 0.0
    return BandedInverse(Z.reshape(batch + (n, p1)), rcond.reshape(batch))


def _block_selected_inverse(blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = blocks.shape[-1]
    G = blocks.shape[-3]
    R = block_to_row_band(blocks)
    try:
        inv = banded_ldl_selected_inverse(R)
    except SingularFimError as err:
        raise _with_diagnosis(err, R, b) from None
    Z = inv.Z
    p = Z.shape[-1] - 1
    out = np.zeros(blocks.shape[:-4] + (G, b, b))
    for a in range(b):
        for c in range(b):
            hi, lo = max(a, c), min(a, c)
            out[..., a, c] = Z[..., b * np.arange(G) + hi, p - (hi - lo)]
    return out, inv.rcond


def selected_inverse_diagonal(fim) -> np.ndarray:
    """Diagonal 3x3 blocks of ``fim^{-1}``.

    Accepts a :class:`BlockBandedFim` or a raw ``(..., k + 1, G, 3, 3)`` array.
    Returns ``(..., G, 3, 3)``.
    """
    blocks = fim.blocks if isinstance(fim, BlockBandedFim) else np.asarray(fim, dtype=float)
    return _block_selected_inverse(blocks)[0]


def scalar_bands_inverse_diagonal(bands: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of the inverse for stacked scalar banded matrices ``(..., k + 1, n)``.

    Returns ``(diag, rcond)``.
    """
    R = upper_to_row_band(bands)
    try:
        inv = banded_ldl_selected_inverse(R)
    except SingularFimError as err:
        raise _with_diagnosis(err, R, 1) from None
    return inv.diagonal, inv.rcond


def scalar_bands_center_variance(bands: np.ndarray, index: int) -> np.ndarray:
    """Single diagonal entry ``[A^{-1}]_{index,index}`` for stacked scalar bands ``(..., k + 1, n)``.

    Uses one LAPACK banded Cholesky solve per matrix, which is cheaper than a
    full selected inversion when only one node is of interest.
    """
    bands = np.asarray(bands, dtype=float)
    bands = bands[..., :bands.shape[-1], :]  # bands beyond the matrix size are padding
    lead = bands.shape[:-2]
    k1, n = bands.shape[-2:]
    flat = bands.reshape((-1, k1, n))
    # LAPACK upper storage: ab[k - j, i + j] = A[i, i + j]
    ab = np.zeros_like(flat)
    for j in range(k1):
        ab[:, k1 - 1 - j, j:] = flat[:, j, :n - j]
    diag = flat[:, 0, :]
    if np.any(diag <= 0.0):
        raise SingularFimError("FIM has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(diag)
    for j in range(k1):
        ab[:, k1 - 1 - j, j:] *= s[:, :n - j] * s[:, j:]
    e = np.zeros(n)
    e[index] = 1.0
    out = np.empty(flat.shape[0])
    for b in range(flat.shape[0]):
        try:
            x = solveh_banded(ab[b], e, check_finite=False)
        except np.linalg.LinAlgError:
            R = upper_to_row_band(flat[b])
            raise _with_diagnosis(SingularFimError("banded Cholesky failed: FIM is not positive definite"),
                                  R, 1) from None
        out[b] = x[index] * s[b, index] ** 2
    if np.any(out <= 0.0) or not np.all(np.isfinite(out)):
        raise SingularFimError("non-positive or non-finite center variance")
    return out.reshape(lead)


def _with_diagnosis(err: SingularFimError, R: np.ndarray, block: int) -> SingularFimError:
    ranges = unanchored_agents(R, block)
    if ranges:
        names = ", ".join(f"{a}-{b}" if a != b else f"{a}" for a, b in ranges)
        msg = f"{err} -- agents without anchor information: {names}"
    else:
        msg = str(err)
    return SingularFimError(msg, ranges, err.rcond)


def unanchored_agents(R: np.ndarray, block: int = 3) -> list[tuple[int, int]]:
    """1-based agent index ranges of coupled groups whose FIM rows sum to zero.

    Such a group only has relative information among its members, so its
    absolute positions are unidentifiable.
    """
    R = np.asarray(R, dtype=float)
    R = R.reshape((-1,) + R.shape[-2:])
    n, p1 = R.shape[-2], R.shape[-1]
    p = p1 - 1
    found = []
    for Rb in R:
        rows = Rb.sum(axis=1)
        for t in range(p):
            lag = p - t
            rows[:n - lag] += Rb[lag:, t]
        scale = np.abs(Rb[:, p]).max() or 1.0
        # union consecutive scalars that are coupled, grouped per agent
        G = n // block
        parent = list(range(G))

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        for t in range(p):
            lag = p - t
            idx = np.nonzero(np.abs(Rb[lag:, t]) > 1e-14 * scale)[0]
            for i in idx:
                u, v = (i + lag) // block, i // block
                if u != v:
                    parent[find(u)] = find(v)
        groups = {}
        for u in range(G):
            groups.setdefault(find(u), []).append(u)
        agent_row = np.abs(rows).reshape(G, block).max(axis=1)
        for members in groups.values():
            if agent_row[members].max() <= 1e-9 * scale:
                rng = (min(members) + 1, max(members) + 1)
                if rng not in found:
                    found.append(rng)
    return sorted(found)


@dataclass
class PebReport:
    """Per-agent bounds in meters (agent ``g`` at position ``g - 1``)."""

    total: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    solver_path: str
    condition_estimate: float
    crb_blocks: np.ndarray | None = field(default=None, repr=False)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_variances(cls, var: np.ndarray, solver_path: str, condition: float, blocks=None, **meta):
        var = np.asarray(var, dtype=float)
        if np.any(var <= 0.0) or not np.all(np.isfinite(var)):
            raise SingularFimError("non-positive or non-finite CRB variance")
        coords = np.sqrt(var)
        return cls(np.sqrt(var.sum(axis=-1)), coords[..., 0], coords[..., 1], coords[..., 2],
                   solver_path, float(condition), blocks, dict(meta))

    @property
    def G(self) -> int:
        return self.total.shape[-1]

    def center(self) -> int:
        """Zero-based index of agent ``ceil(G / 2)``, the worst-case node of symmetric lines."""
        return (self.G + 1) // 2 - 1


def peb_all(fim: BlockBandedFim) -> PebReport:
    """Per-agent PEB ``sqrt(tr [J^{-1}]_{gg})`` via banded selected inversion."""
    if fim.is_diagonal():
        var, rcond = scalar_bands_inverse_diagonal(fim.diagonal_bands())
        var = var.T  # (G, 3)
        blocks = None
        rc = float(np.min(rcond))
    else:
        blocks, rcond = _block_selected_inverse(fim.blocks)
        var = np.diagonal(blocks, axis1=-2, axis2=-1)
        rc = float(rcond)
    return PebReport.from_variances(var, "banded", 1.0 / rc, blocks)


def peb_dense(fim: BlockBandedFim) -> PebReport:
    """Reference path: invert the dense matrix."""
    dense = fim.to_dense()
    cond = np.linalg.cond(dense)
    if not np.isfinite(cond) or 1.0 / cond < RCOND_THRESHOLD:
        raise SingularFimError(f"dense FIM is singular (condition {cond:.3e})")
    inv = np.linalg.inv(dense)
    G = fim.G
    blocks = np.stack([inv[3 * g:3 * g + 3, 3 * g:3 * g + 3] for g in range(G)])
    var = np.diagonal(blocks, axis1=-2, axis2=-1)
    return PebReport.from_variances(var, "dense", cond, blocks)


# ---------------------------------------------------------------------------
# closed forms for the symmetric two-anchor line


@dataclass(frozen=True)
class ClosedFormParams:
    """Symmetric line with anchors at both ends.

    ``J_A`` is the one-hop diagonal block, four times a single directional
    neighbour block. ``d`` is the two-hop/one-hop ratio of the angular
    entries (the range entry ratio is ``4 d``).
    """

    J_A: np.ndarray
    d: float
    G: int

    def __post_init__(self):
        object.__setattr__(self, "J_A", np.asarray(self.J_A, dtype=float))
        if self.G < 1:
            raise ValueError("G must be at least 1")


def center_index(G: int) -> int:
    """1-based index of the worst-case (center) agent."""
    return (G + 1) // 2


def one_hop_center_factor(G: int) -> float:
    """Scalar ``c`` with ``C_center = c * J_A^{-1}``, valid for either parity of G."""
    return (2.0 * (G + 1) ** 2 - 1.0 + (-1.0) ** (G + 1)) / (4.0 * (G + 1))


def one_hop_center_factor_even(G: int) -> float:
    return G * (G + 2) / (2.0 * (G + 1))


def closed_form_1hop_center(params: ClosedFormParams) -> tuple[np.ndarray, float]:
    C = one_hop_center_factor(params.G) * np.linalg.inv(params.J_A)
    return C, math.sqrt(np.trace(C))


def second_difference_center(G: int) -> float:
    """Center diagonal entry of ``tri{-2, 1}^{-1}`` (negative)."""
    c = center_index(G)
    return -c * (G + 1 - c) / (G + 1.0)


def tridiagonal_toeplitz_center(d1: float, G: int) -> float:
    """Center diagonal entry of ``tri{d1, 1}^{-1}`` for ``d1 > 2``.

    With ``s1 = (d1 + sqrt(d1^2 - 4)) / 2`` the entry is
    ``(1 - s1^{-2i})(1 - s1^{-2(G+1-i)}) / ((s1 - 1/s1)(1 - s1^{-2(G+1)}))``.
    """
    if not d1 > 2.0:
        raise ValueError(f"d1 must exceed 2 (got {d1}); the square root sqrt(d1^2 - 4) would be complex")
    s1 = 0.5 * (d1 + math.sqrt(d1 * d1 - 4.0))
    i = center_index(G)
    q = 1.0 / (s1 * s1)
    num = (1.0 - q**i) * (1.0 - q ** (G + 1 - i))
    den = (s1 - 1.0 / s1) * (1.0 - q ** (G + 1))
    return num / den


def closed_form_2hop_center(params: ClosedFormParams) -> tuple[np.ndarray, float]:
    """Approximate center CRB for the two-hop line.

    The pentadiagonal FIM equals ``2 J_B`` times a product of the Toeplitz
    tridiagonals ``tri{1/c + 2, 1}`` and ``tri{-2, 1}`` per coordinate (with
    ``c = 4d, d, d``). The center block is approximated by the product of the
    two tridiagonal inverses' center entries times ``(2 J_B)^{-1}``.
    """
    d = params.d
    if not 0.0 < d <= 1.0 / 16.0 + 1e-15:
        raise ValueError(f"two-hop ratio d must lie in (0, 1/16], got {d}")
    single = np.diag(params.J_A) / 4.0  # one directional neighbour block
    ratios = np.array([4.0 * d, d, d])
    t2 = second_difference_center(params.G)
    var = np.empty(3)
    for k in range(3):
        t1 = tridiagonal_toeplitz_center(1.0 / ratios[k] + 2.0, params.G)
        two_jb = -2.0 * ratios[k] * single[k]
        var[k] = t2 * t1 / two_jb
    C = np.diag(var)
    return C, math.sqrt(var.sum())
