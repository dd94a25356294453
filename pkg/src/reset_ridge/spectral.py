"""Spectral representation of a least-squares problem.

Everything downstream works in the eigenbasis of ``H = X^T X``: curvatures
``mu`` (descending), eigenvectors ``V`` (columns), the projected right-hand
side ``b_tilde = V^T X^T y`` and the min-norm OLS coordinates
``w_star_tilde``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError, ParameterError

__all__ = [
    "DesignData",
    "SpectralModel",
    "build_spectral_model",
    "min_norm_ols",
    "ridge_closed_form",
    "load_design_csv",
]

# absolute clip for round-off negatives in a PSD spectrum
NEG_EIG_CLIP = 1e-10
RANK_TOL_REL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DesignData:
    """Design matrix ``X`` (n x d), responses ``y`` and optional ground truth."""

    X: np.ndarray
    y: np.ndarray
    beta0: np.ndarray | None = None
    sigma_eta: float | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InputError(f"design must be at least 1x1, got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InputError(f"y has length {y.shape[0]}, expected {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("design contains non-finite entries")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        if self.beta0 is not None:
            beta0 = np.asarray(self.beta0, dtype=float).reshape(-1)
            if beta0.shape[0] != X.shape[1]:
                raise InputError(f"beta0 has length {beta0.shape[0]}, expected {X.shape[1]}")
            object.__setattr__(self, "beta0", _frozen(beta0))
        if self.sigma_eta is not None and not (self.sigma_eta >= 0 and np.isfinite(self.sigma_eta)):
            raise InputError("sigma_eta must be a finite nonnegative number")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SpectralModel:
    """Eigen-coordinates of ``H = X^T X`` and ``b = X^T y``.

    Use :func:`build_spectral_model` for data, or :meth:`from_spectrum` when
    the curvatures and projected right-hand side are given directly.
    """

    mu: np.ndarray
    V: np.ndarray
    b_tilde: np.ndarray
    w_star_tilde: np.ndarray
    H: np.ndarray
    b: np.ndarray
    rank_tol: float
    nullspace: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def mu_eff(self) -> np.ndarray:
        """Curvatures with numerical-nullspace modes set exactly to zero."""
        return np.where(self.nullspace, 0.0, self.mu)

    def to_original(self, coords):
        """Rotate eigenbasis coordinates (last axis) to the original basis."""
        return np.asarray(coords) @ self.V.T

    def to_eigen(self, vec):
        """Rotate original-basis vectors (last axis) to eigen-coordinates."""
        return np.asarray(vec) @ self.V

    @classmethod
    def from_spectrum(cls, mu, b_tilde, V=None, rank_tol=None):
        """Build a model directly from curvatures and projected right-hand side.

        ``mu`` need not be sorted; modes are reordered descending together
        with ``b_tilde`` and the columns of ``V`` (identity when omitted).
        """
        mu = np.asarray(mu, dtype=float).reshape(-1)
        b_tilde = np.asarray(b_tilde, dtype=float).reshape(-1)
        d = mu.shape[0]
        if b_tilde.shape[0] != d:
            raise InputError("mu and b_tilde must have the same length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(b_tilde))):
            raise InputError("spectrum contains non-finite entries")
        if np.any(mu < -NEG_EIG_CLIP):
            raise InputError("curvatures must be nonnegative")
        V = np.eye(d) if V is None else np.asarray(V, dtype=float)
        if V.shape != (d, d):
            raise InputError(f"V must be {d}x{d}")
        if np.max(np.abs(V.T @ V - np.eye(d))) > 1e-10:
            raise InputError("V must be orthonormal")
        order = np.argsort(-mu, kind="stable")
        mu, b_tilde, V = np.clip(mu[order], 0.0, None), b_tilde[order], V[:, order]
        tol = _default_tol(mu) if rank_tol is None else float(rank_tol)
        null = mu <= tol
        if np.any(np.abs(b_tilde[null]) > 1e-8 * (1.0 + np.linalg.norm(b_tilde))):
            raise InputError("b_tilde must vanish on zero-curvature modes")
        b_tilde = np.where(null, 0.0, b_tilde)
        H = (V * mu) @ V.T
        return cls._assemble(mu, V, b_tilde, H, V @ b_tilde, tol, null)

    @classmethod
    def _assemble(cls, mu, V, b_tilde, H, b, tol, null):
        safe = np.where(null, 1.0, mu)
        w = np.where(null, 0.0, b_tilde / safe)
        return cls(
            mu=_frozen(mu), V=_frozen(V), b_tilde=_frozen(b_tilde), w_star_tilde=_frozen(w),
            H=_frozen(H), b=_frozen(b), rank_tol=float(tol), nullspace=_frozen(null).astype(bool),
        )


def _default_tol(mu):
    top = float(np.max(mu)) if mu.size else 0.0
    # an all-zero spectrum still needs a positive threshold
    return RANK_TOL_REL * top if top > 0 else RANK_TOL_REL


def _canonical_eigh(H):
    try:
        mu, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(V))):
        raise NumericalError("eigendecomposition produced non-finite values")
    # sign convention: first entry with |v| above round-off is positive
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size and col[idx[0]] < 0:
            V[:, j] = -col
    d = mu.shape[0]
    scale = max(float(np.max(np.abs(mu))), 1.0) if d else 1.0
    rounded = np.round(mu / (1e-12 * scale))
    # descending eigenvalue, ties broken by lexicographic eigenvector order
    keys = tuple(V[i, :] for i in range(d - 1, -1, -1)) + (-rounded,)
    order = np.lexsort(keys)
    return mu[order], V[:, order]


def build_spectral_model(data: DesignData, rank_tol: float | None = None) -> SpectralModel:
    """Eigendecompose ``H = X^T X`` and project ``b = X^T y``.

    Parameters
    ----------
    data : DesignData
    rank_tol : float, optional
        Curvatures at or below this value are treated as nullspace.
        Defaults to ``1e-10 * max(mu)``.
    """
    if rank_tol is not None and not rank_tol > 0:
        raise ParameterError("rank_tol must be positive")
    X = data.X
    H = X.T @ X
    H = 0.5 * (H + H.T)
    b = X.T @ data.y
    mu, V = _canonical_eigh(H.copy())
    mu = np.where(np.abs(mu) <= NEG_EIG_CLIP, np.clip(mu, 0.0, None), mu)
    mu = np.clip(mu, 0.0, None)
    tol = _default_tol(mu) if rank_tol is None else float(rank_tol)
    null = mu <= tol
    b_tilde = V.T @ b
    return SpectralModel._assemble(mu, V, b_tilde, H, b, tol, null)


def min_norm_ols(model: SpectralModel) -> np.ndarray:
    """Minimum-norm least-squares solution ``H^+ b`` in the original basis."""
    return model.V @ model.w_star_tilde


def ridge_closed_form(model: SpectralModel, lam: float) -> np.ndarray:
    """Ridge estimator ``(H + lam I)^{-1} b`` via modewise shrinkage."""
    if not lam > 0:
        raise ParameterError(f"ridge penalty must be positive, got {lam}")
    mu = model.mu_eff
    return model.V @ (mu / (mu + lam) * model.w_star_tilde)


def load_design_csv(path) -> DesignData:
    """Read a CSV with header ``x1,...,xd,y`` (extra ``y`` column last)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if "y" not in header:
        raise InputError(f"{path}: missing 'y' column")
    xcols = [i for i, h in enumerate(header) if h != "y"]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InputError(f"{path}: no data rows")
    return DesignData(X=data[:, xcols], y=data[:, header.index("y")])
