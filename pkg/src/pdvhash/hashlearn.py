"""Learned binary hashing of pixel difference vectors.

Each of ``K`` hash functions is a linear projection followed by a sign
threshold, ``b_k = 1 if w_k . x >= 0 else 0``. The projections ``W`` and the
codes ``B`` are learned jointly by alternating minimization of

    J = J1 + lam1 * J2 + lam2 * J3 - lam3 * J4

with

    J1 = sum_n (sum_{k<K} (b_kn - b_(k+1)n)^2 - 1)^2      (one transition per code)
    J2 = sum_n sum_k ((b_kn - 0.5) - w_k . x_n)^2         (quantization loss)
    J3 = sum_k (sum_n (b_kn - 0.5))^2                     (bit balance)
    J4 = sum_n sum_k (b_kn - mu_k)^2                      (bit variance)

The code terms are not differentiable in ``W`` through the threshold, so the
W-step works on a relaxation in which ``b_kn - 0.5`` is replaced by
``w_k . x_n`` inside ``J1``, ``J3`` and ``J4`` while ``J2`` keeps the current
binary codes. Under that relaxation the B-step (plain thresholding) is the
exact minimizer over codes, so the alternation never increases the relaxed
objective.

The default W-step keeps ``W^T W = I`` by searching along a Cayley curve.
Without that constraint the relaxed objective is unbounded below whenever
``lam3`` outweighs ``lam1`` (as with the default weights): equal projection
columns leave the transition term flat while the variance reward grows
quadratically, so plain gradient steps drive ``W`` to infinity and collapse
the codes. The unconstrained ``"gradient"`` update remains available.
"""

import warnings
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_codes, check_pdvs, scale_from_dim, sign_fix_columns

DEFAULT_LAMBDAS = (1000.0, 100.0, 1000000.0)
DEFAULT_BITS = 15
DEFAULT_ITERS = 20
DEFAULT_W_STEPS = 5
DEFAULT_UPDATE = "cayley"

ARMIJO_STEP = 1.0
ARMIJO_SHRINK = 0.5
ARMIJO_C1 = 1e-4
ARMIJO_MAX_BACKTRACKS = 30

Objective = namedtuple("Objective", ["J", "J1", "J2", "J3", "J4"])


@dataclass(frozen=True, eq=False)
class HashModel:
    """Hash projections for one neighborhood size.

    ``W`` has shape ``(P**3 - 1, K)``; column ``k`` is the ``k``-th
    projection vector. ``history`` holds the training trace and is not
    persisted.
    """
    scale: int
    W: np.ndarray
    lambdas: tuple = DEFAULT_LAMBDAS
    history: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != self.scale ** 3 - 1:
            raise ValueError(f"projection matrix shape {W.shape} does not match scale {self.scale}")
        if not np.all(np.isfinite(W)):
            raise ValueError("projection matrix contains non-finite values")
        lambdas = tuple(float(v) for v in self.lambdas)
        if len(lambdas) != 3 or min(lambdas) < 0:
            raise ValueError(f"lambdas must be three non-negative reals, got {self.lambdas}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def n_bits(self):
        return self.W.shape[1]

    @property
    def dim(self):
        return self.W.shape[0]

    def binarize(self, X):
        return binarize(self, X)


def _unpack(model):
    if isinstance(model, HashModel):
        return model.W, model.lambdas
    W, lambdas = model
    return np.asarray(W, dtype=np.float64), tuple(lambdas)


def binarize(model, X):
    """Codes ``b_kn = 0.5 * (sgn(w_k . x_n) + 1)`` with ``sgn(0) = +1``.

    ``model`` is a :class:`HashModel` or a bare projection matrix.
    Returns a ``uint8`` array of shape ``(N, K)``.
    """
    W = model.W if isinstance(model, HashModel) else np.asarray(model, dtype=np.float64)
    X = check_pdvs(X, dim=W.shape[0])
    return (X @ W >= 0).astype(np.uint8)


def bit_means(B):
    return np.asarray(B, dtype=np.float64).mean(axis=0)


def eval_objective(model, X, B):
    """Evaluate the binary objective exactly.

    Returns ``Objective(J, J1, J2, J3, J4)``, where ``J4`` is the raw
    (non-negative) variance term and ``J = J1 + l1*J2 + l2*J3 - l3*J4``.
    """
    W, (l1, l2, l3) = _unpack(model)
    X = check_pdvs(X, dim=W.shape[0])
    B = check_codes(B, n_bits=W.shape[1])
    if len(B) != len(X):
        raise ValueError(f"{len(X)} PDVs but {len(B)} codes")
    Bf = B.astype(np.float64)
    C = Bf - 0.5
    transitions = np.sum((Bf[:, :-1] - Bf[:, 1:]) ** 2, axis=1)
    J1 = float(np.sum((transitions - 1.0) ** 2))
    J2 = float(np.sum((C - X @ W) ** 2))
    J3 = float(np.sum(C.sum(axis=0) ** 2))
    J4 = float(np.sum((Bf - Bf.mean(axis=0)) ** 2))
    return Objective(J1 + l1 * J2 + l2 * J3 - l3 * J4, J1, J2, J3, J4)


def _relaxed_from_V(V, C, lambdas):
    l1, l2, l3 = lambdas
    diff = V[:, :-1] - V[:, 1:]
    J1 = np.sum((np.sum(diff * diff, axis=1) - 1.0) ** 2)
    J2 = np.sum((C - V) ** 2)
    J3 = np.sum(V.sum(axis=0) ** 2)
    J4 = np.sum((V - V.mean(axis=0)) ** 2)
    return float(J1 + l1 * J2 + l2 * J3 - l3 * J4)


def _relaxed_grad_V(V, C, lambdas):
    l1, l2, l3 = lambdas
    diff = V[:, :-1] - V[:, 1:]
    s = np.sum(diff * diff, axis=1) - 1.0
    g1 = np.zeros_like(V)
    t = 4.0 * s[:, None] * diff
    g1[:, :-1] += t
    g1[:, 1:] -= t
    g2 = -2.0 * (C - V)
    g3 = np.broadcast_to(2.0 * V.sum(axis=0), V.shape)
    g4 = 2.0 * (V - V.mean(axis=0))
    return g1 + l1 * g2 + l2 * g3 - l3 * g4


def _prepare(model, X, B):
    W, lambdas = _unpack(model)
    X = check_pdvs(X, dim=W.shape[0])
    B = check_codes(B, n_bits=W.shape[1])
    if len(B) != len(X):
        raise ValueError(f"{len(X)} PDVs but {len(B)} codes")
    return W, lambdas, X, B.astype(np.float64) - 0.5


def relaxed_objective(model, X, B):
    """Relaxed objective used by the W-step (``B`` held fixed)."""
    W, lambdas, X, C = _prepare(model, X, B)
    return _relaxed_from_V(X @ W, C, lambdas)


def relaxed_gradient(model, X, B):
    """Gradient of :func:`relaxed_objective` with respect to ``W``."""
    W, lambdas, X, C = _prepare(model, X, B)
    return X.T @ _relaxed_grad_V(X @ W, C, lambdas)


def eigen_init(X, n_bits, seed=0):
    """Top ``n_bits`` eigenvectors of ``X^T X`` (uncentered scatter).

    Columns are in descending eigenvalue order with each column's
    largest-magnitude entry made positive. If the scatter has rank below
    ``n_bits`` the missing columns are seeded random unit vectors orthogonal
    to the informative ones, and a ``RuntimeWarning`` is issued.
    """
    X = check_pdvs(X)
    d = X.shape[1]
    if n_bits > d:
        raise ValueError(f"n_bits={n_bits} exceeds PDV dimension {d}")
    evals, evecs = np.linalg.eigh(X.T @ X)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals[0], 0.0) * d * np.finfo(np.float64).eps
    rank = int(np.sum(evals > tol)) if evals[0] > 0 else 0
    W = evecs[:, :n_bits]
    if rank < n_bits:
        warnings.warn(
            f"PDV scatter has rank {rank} < {n_bits} bits; padding with random projections",
            RuntimeWarning, stacklevel=2)
        rng = np.random.default_rng(seed)
        R = rng.standard_normal((d, n_bits - rank))
        Q, _ = np.linalg.qr(np.hstack([W[:, :rank], R]))
        # QR may flip signs of the leading columns; restore the eigenvectors.
        W = np.hstack([W[:, :rank], Q[:, rank:n_bits]])
    return sign_fix_columns(W)


def _armijo(phi, f0, slope, step=ARMIJO_STEP):
    """Backtrack until ``phi(a) <= f0 + c1 * a * slope``; ``None`` on failure."""
    for _ in range(ARMIJO_MAX_BACKTRACKS + 1):
        f = phi(step)
        if np.isfinite(f) and f <= f0 + ARMIJO_C1 * step * slope:
            return step, f
        step *= ARMIJO_SHRINK
    return None, f0


def _w_step_gradient(W, X, C, lambdas, n_steps):
    V = X @ W
    f = _relaxed_from_V(V, C, lambdas)
    for _ in range(n_steps):
        G = X.T @ _relaxed_grad_V(V, C, lambdas)
        gnorm = np.linalg.norm(G)
        if gnorm == 0 or not np.isfinite(gnorm):
            break
        # Unit step moves W by its own Frobenius norm.
        D = -G * (np.linalg.norm(W) / gnorm)
        XD = X @ D
        step, f_new = _armijo(lambda a: _relaxed_from_V(V + a * XD, C, lambdas),
                              f, float(np.sum(G * D)))
        if step is None:
            break
        W = W + step * D
        V = X @ W
        f = f_new
    return W, f


def _w_step_cayley(W, X, C, lambdas, n_steps):
    # Curvilinear search on the Stiefel manifold: the Cayley curve
    # W(t) = (I + t/2 A)^-1 (I - t/2 A) W with skew A = G W^T - W G^T keeps
    # W^T W fixed. Writing A = U V^T with U = [G, W], V = [W, -G] gives
    # W(t) = W - t U (I + t/2 V^T U)^-1 V^T W, so trial points only need X U.
    K = W.shape[1]
    V = X @ W
    f = _relaxed_from_V(V, C, lambdas)
    for _ in range(n_steps):
        G = X.T @ _relaxed_grad_V(V, C, lambdas)
        A_norm = np.linalg.norm(G @ W.T - W @ G.T)
        if A_norm == 0 or not np.isfinite(A_norm):
            break
        U = np.hstack([G, W]) / A_norm
        Vt = np.hstack([W, -G]).T
        VtU, VtW = Vt @ U, Vt @ W
        XU = X @ U
        eye = np.eye(2 * K)

        def coef(t, VtU=VtU, VtW=VtW):
            return t * np.linalg.solve(eye + 0.5 * t * VtU, VtW)

        # d/dt f(W(t)) at t=0 is -||A||^2 / 2, i.e. -||A|| / 2 once A is normalized.
        step, f_new = _armijo(lambda t: _relaxed_from_V(V - XU @ coef(t), C, lambdas),
                              f, -0.5 * A_norm)
        if step is None:
            break
        W = W - U @ coef(step)
        V = X @ W
        f = f_new
    return W, f


def train_hash(X, n_bits=DEFAULT_BITS, lambdas=DEFAULT_LAMBDAS, n_iter=DEFAULT_ITERS,
               seed=0, update=DEFAULT_UPDATE, w_steps=DEFAULT_W_STEPS, scale=None):
    """Learn hash projections by alternating B- and W-steps.

    Parameters
    ----------
    X : array of shape (N, P**3 - 1)
        Training PDVs.
    n_bits : int
        Number of hash functions ``K``.
    lambdas : tuple of 3 floats
        Weights of the quantization, balance and variance terms.
    n_iter : int
        Number of outer (B-step, W-step) iterations.
    seed : int
        Seed for padding projections when the scatter is rank deficient.
    update : {"cayley", "gradient"}
        ``"cayley"`` backtracks along the orthogonality-preserving Cayley
        curve; ``"gradient"`` takes unconstrained Armijo-backtracked steps
        along the negative gradient, scaled so a unit step moves ``W`` by its
        own norm.
    w_steps : int
        Line-searched steps per W-step.

    Returns
    -------
    HashModel
        ``history`` holds per-iteration arrays ``relaxed_before`` and
        ``relaxed_after`` (relaxed objective around each W-step),
        ``objective`` (exact binary objective after each B-step) and
        ``relaxed_init``.
    """
    X = check_pdvs(X)
    scale = scale_from_dim(X.shape[1]) if scale is None else int(scale)
    n_bits = int(n_bits)
    if n_bits < 2:
        raise ValueError("n_bits must be >= 2")
    if len(X) < n_bits:
        raise ValueError(f"need at least n_bits={n_bits} PDVs, got {len(X)}")
    if update not in ("gradient", "cayley"):
        raise ValueError(f"unknown update {update!r}")
    lambdas = tuple(float(v) for v in lambdas)
    step_fn = _w_step_gradient if update == "gradient" else _w_step_cayley

    W = eigen_init(X, n_bits, seed=seed)
    hist = {k: [] for k in ("relaxed_before", "relaxed_after", "objective")}
    C = binarize(W, X).astype(np.float64) - 0.5
    relaxed_init = _relaxed_from_V(X @ W, C, lambdas)
    for _ in range(int(n_iter)):
        B = binarize(W, X)
        C = B.astype(np.float64) - 0.5
        hist["objective"].append(eval_objective((W, lambdas), X, B).J)
        hist["relaxed_before"].append(_relaxed_from_V(X @ W, C, lambdas))
        W, f = step_fn(W, X, C, lambdas, int(w_steps))
        hist["relaxed_after"].append(f)
    history = {k: np.array(v) for k, v in hist.items()}
    history["relaxed_init"] = relaxed_init
    return HashModel(scale, W, lambdas, history)


class PDVHasher(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`train_hash` / :func:`binarize`.

    ``fit`` takes a PDV matrix; ``transform`` returns binary codes.
    """

    def __init__(self, n_bits=DEFAULT_BITS, lambdas=DEFAULT_LAMBDAS, n_iter=DEFAULT_ITERS,
                 w_steps=DEFAULT_W_STEPS, update=DEFAULT_UPDATE, random_state=0):
        self.n_bits = n_bits
        self.lambdas = lambdas
        self.n_iter = n_iter
        self.w_steps = w_steps
        self.update = update
        self.random_state = random_state

    def fit(self, X, y=None):
        self.model_ = train_hash(X, self.n_bits, self.lambdas, self.n_iter,
                                 seed=self.random_state, update=self.update,
                                 w_steps=self.w_steps)
        self.components_ = self.model_.W
        self.history_ = self.model_.history
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return binarize(self.model_, X)
