"""Small dense linear-algebra and sampling helpers shared by the other modules.

Everything here works in float64.  Random streams are plain
``numpy.random.Generator`` objects seeded through :func:`make_rng`.
"""
import numpy as np

SYMMETRY_TOL = 1e-9
# eigenvalues below -PSD_TOL * max(1, |lambda_max|) are treated as a real defect
PSD_TOL = 1e-6


def make_rng(seed):
    return np.random.default_rng(seed)


def _square(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def quadratic_form(v, A):
    """Return ``v^T A v``."""
    A = _square(A)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != A.shape[0]:
        raise ValueError(f"vector of shape {v.shape} does not match matrix {A.shape}")
    return float(v @ A @ v)


def symmetrize(A):
    A = np.asarray(A, dtype=np.float64)
    return 0.5 * (A + A.T)


def psd_project(A, ridge=0.0):
    """Symmetrize ``A`` and shift its spectrum so the smallest eigenvalue is >= 0.

    The returned matrix is ``sym(A) + s*I`` with ``s = ridge + max(0, -lambda_min)``,
    so an already-PSD input with ``ridge=0`` comes back unchanged.
    """
    A = _square(A)
    S = symmetrize(A)
    if S.shape[0] == 0:
        return S
    lam_min = float(np.linalg.eigvalsh(S)[0])
    shift = ridge + max(0.0, -lam_min)
    if shift == 0.0:
        return S
    return S + shift * np.eye(S.shape[0])


def _gaussian_factor(cov):
    cov = _square(cov)
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("covariance is not symmetric")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance has non-finite entries")
    S = symmetrize(cov)
    lam, V = np.linalg.eigh(S)
    if lam.size and lam[0] < -PSD_TOL * max(1.0, abs(lam[-1])):
        raise ValueError(f"covariance is not positive semi-definite (min eigenvalue {lam[0]:.3g})")
    # clipping instead of adding a ridge keeps degenerate directions exactly degenerate;
    # anything under the eigensolver's roundoff counts as zero
    noise = np.finfo(np.float64).eps * S.shape[0] * (abs(lam[-1]) if lam.size else 0.0)
    lam = np.where(lam > noise, lam, 0.0)
    return V * np.sqrt(lam)


def sample_gaussian(mean, cov, rng, size=None):
    """Draw from ``N(mean, cov)``.

    With ``size=None`` a single vector is returned, otherwise an array of
    shape ``(size, d)``.  A zero covariance returns ``mean`` exactly.
    """
    mean = np.asarray(mean, dtype=np.float64)
    L = _gaussian_factor(cov)
    if L.shape[0] != mean.shape[0]:
        raise ValueError(f"mean of dim {mean.shape[0]} does not match covariance {L.shape}")
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, mean.shape[0]))
    draws = mean + z @ L.T
    return draws[0] if size is None else draws
