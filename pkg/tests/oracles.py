"""Independent reference computations used to freeze expected values.

Nothing here imports the closed-form implementations under test; the
quadratic-form floor is estimated by sphere sampling refined with a local
simplex search, and stationary laws come from a null-space solve.
"""

import numpy as np
from scipy.linalg import eigh, null_space
from scipy.optimize import minimize


def sampled_rho(mat, n_dirs=100_000, seed=0, n_polish=8):
    """min over the unit sphere of |x^T A x|, by sampling plus polish.

    Draws ``n_dirs`` directions, then runs Nelder-Mead on the scale-free
    objective |y^T S y| / |y|^2 from the best sampled starts.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_dirs, sym.shape[0]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = np.abs(np.einsum("kn,nm,km->k", dirs, sym, dirs))
    best = np.argsort(vals)[:n_polish]

    def objective(y):
        nn = y @ y
        if nn == 0.0:
            return np.inf
        return abs(y @ sym @ y) / nn

    out = float(vals[best[0]])
    for k in best:
        res = minimize(
            objective,
            dirs[k],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
        )
        out = min(out, float(res.fun))
    return out


def reference_extremes(mat):
    """Extreme eigenvalues of the symmetric part via scipy's solver."""
    mat = np.asarray(mat, dtype=float)
    w = eigh(0.5 * (mat + mat.T), eigvals_only=True)
    return float(w[-1]), float(w[0])


def nullspace_stationary(q):
    """Stationary row vector of a dense generator via scipy's null space."""
    ns = null_space(np.asarray(q, dtype=float).T)
    if ns.shape[1] != 1:
        raise ValueError(f"null space dimension {ns.shape[1]} != 1")
    v = ns[:, 0]
    v = np.abs(v)
    return v / v.sum()


def ou_family_nu(k):
    """Closed-form stationary weights of the two-base-modes ladder."""
    if k in (1, 2):
        return 1.0 / 3.0
    return 2.0 * 3.0 ** (-(k - 1))


def ladder_nu(k):
    """Closed-form stationary weights of the return-to-base ladder."""
    return 2.0 ** (-k)
