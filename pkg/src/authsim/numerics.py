"""Special functions and Gaussian linear-model algebra shared by the schemes.

The chi-square routines evaluate the Poisson mixture

    P[X <= x] = sum_k  Pois(k; mu/2) * P(n + k, x/2),      dof = 2n,

with ``P`` the regularized lower incomplete gamma function.  The upper
tail (Marcum Q) uses the regularized upper gamma in the same mixture so
that neither side is obtained by subtracting from one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.special import erf, erfc, gammainc, gammaincc, gammaln, log_ndtr, xlogy

SERIES_TOL = 1e-13
MAX_TERMS = 10_000
PIVOT_RTOL = 1e-12


class NumericalError(ArithmeticError):
    """A computation could not be carried out to working precision."""


def _check_chi2_args(x, dof, mu):
    if int(dof) != dof or dof <= 0 or dof % 2:
        raise ValueError(f"dof must be a positive even integer, got {dof!r}")
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be nonnegative")
    if np.any(np.asarray(mu) < 0):
        raise ValueError("mu must be nonnegative")


def _mixture(x: float, n: int, mu: float, upper: bool) -> float:
    half = 0.5 * x
    lam = 0.5 * mu
    gamma_fn = gammaincc if upper else gammainc
    if lam == 0.0:
        return float(gamma_fn(n, half))

    k0 = int(math.floor(lam))
    log_w0 = -lam + xlogy(k0, lam) - math.lgamma(k0 + 1)
    total = 0.0
    terms = 0

    # Outward from the Poisson mode; each direction stops once the geometric
    # bound on the remaining weight mass drops below SERIES_TOL.
    k, log_w = k0, log_w0
    while True:
        w = math.exp(log_w)
        total += w * gamma_fn(n + k, half)
        terms += 1
        ratio = lam / (k + 1)
        if w * ratio / (1.0 - ratio) < SERIES_TOL:
            break
        log_w += math.log(lam) - math.log(k + 1)
        k += 1
        if terms > MAX_TERMS:
            raise NumericalError(f"chi-square series did not converge in {MAX_TERMS} terms")

    k, log_w = k0, log_w0
    while k > 0:
        log_w += math.log(k) - math.log(lam)
        k -= 1
        w = math.exp(log_w)
        total += w * gamma_fn(n + k, half)
        terms += 1
        ratio = k / lam
        if ratio < 1.0 and w * ratio / (1.0 - ratio) < SERIES_TOL:
            break
        if terms > MAX_TERMS:
            raise NumericalError(f"chi-square series did not converge in {MAX_TERMS} terms")

    return min(max(total, 0.0), 1.0)


def noncentral_chi2_cdf(x: float, dof: int, mu: float) -> float:
    """CDF of a noncentral chi-square variable with even degrees of freedom.

    >>> round(noncentral_chi2_cdf(2 * math.log(2), 2, 0.0), 12)
    0.5
    """
    _check_chi2_args(x, dof, mu)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return _mixture(float(x), dof // 2, float(mu), upper=False)


def noncentral_chi2_sf(x: float, dof: int, mu: float) -> float:
    """Survival function ``P[X > x]``, summed directly rather than as ``1 - cdf``."""
    _check_chi2_args(x, dof, mu)
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return _mixture(float(x), dof // 2, float(mu), upper=True)


def marcum_q(order: int, a: float, b: float) -> float:
    """Generalized Marcum Q-function ``Q_order(a, b)``."""
    if int(order) != order or order <= 0:
        raise ValueError(f"order must be a positive integer, got {order!r}")
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    return noncentral_chi2_sf(float(b) ** 2, 2 * int(order), float(a) ** 2)


def noncentral_chi2_cdf_grid(x, dof: int, mu, chunk: int = 2048) -> np.ndarray:
    """Vectorized CDF over every pair of ``mu`` values and ``x`` values.

    Returns an array of shape ``(len(mu), len(x))``.  Used by Monte Carlo
    harnesses that need the conditional law for 10^5 noncentralities at once:
    the incomplete-gamma column is shared across all ``mu`` for a given ``x``,
    so only the Poisson weights are computed per element.  Weights are
    truncated at ``mean +/- (12 sd + 40)``, well beyond double precision.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    _check_chi2_args(x, dof, mu)
    n = dof // 2
    out = np.empty((mu.size, x.size))
    order = np.argsort(mu, kind="stable")
    for start in range(0, mu.size, chunk):
        idx = order[start:start + chunk]
        lam = 0.5 * mu[idx]
        lo = max(0, int(math.floor(lam.min() - 12.0 * math.sqrt(lam.min()) - 40.0)))
        hi = int(math.ceil(lam.max() + 12.0 * math.sqrt(lam.max()) + 40.0))
        k = np.arange(lo, hi + 1, dtype=float)
        log_w = xlogy(k[None, :], lam[:, None]) - lam[:, None] - gammaln(k + 1.0)[None, :]
        weights = np.exp(log_w)
        gam = gammainc(n + k[:, None], 0.5 * x[None, :])
        out[idx] = np.clip(weights @ gam, 0.0, 1.0)
    out[:, x == 0] = 0.0
    return out


def erf_real(x):
    """Error function; scalars in, scalars out."""
    if np.ndim(x) == 0:
        return math.erf(float(x))
    return erf(np.asarray(x, dtype=float))


def erf_interval(lo, hi):
    """``erf(hi) - erf(lo)`` without cancellation in either tail."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    # erfc differences only where erf is close to +-1; erf itself elsewhere
    right = lo > 0.5
    left = hi < -0.5
    with np.errstate(invalid="ignore"):
        mid = erf(hi) - erf(lo)
        upper = erfc(lo) - erfc(hi)
        lower = erfc(-hi) - erfc(-lo)
    return np.where(right, upper, np.where(left, lower, mid))


def log_erf_interval(lo, hi):
    """``log(erf(hi) - erf(lo))`` that stays finite far into the tails."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    direct = erf_interval(lo, hi)
    # Reflect so both ends sit on the left tail, where log_ndtr is accurate.
    flip = (lo + hi) > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    log_b = log_ndtr(np.sqrt(2.0) * b)
    log_a = log_ndtr(np.sqrt(2.0) * a)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = math.log(2.0) + log_b + np.log(-np.expm1(log_a - log_b))
        res = np.where(direct > 1e-280, np.log(np.maximum(direct, 1e-300)), tail)
    return np.where(b <= a, -np.inf, res)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, min(center - half, p)), min(1.0, max(center + half, p))


# --- Gaussian linear model --------------------------------------------------


def _as_covariance(K) -> np.ndarray:
    K = np.array(K, dtype=complex if np.iscomplexobj(K) else float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise ValueError(f"covariance must be a nonempty square matrix, got shape {K.shape}")
    if not np.array_equal(K, K.conj().T):
        raise ValueError("covariance must be exactly Hermitian")
    return K


@dataclass(frozen=True, eq=False)
class GaussianLinearModel:
    """Observations ``y = w h + u`` of a complex scalar ``h``, ``u ~ CN(0, K)``.

    ``K`` may be singular only through zero-variance (exact) observations;
    those rows pin ``h`` directly and give a zero-error estimate.
    """

    w: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        w = np.array(self.w).reshape(-1)
        K = _as_covariance(self.K)
        if w.size != K.shape[0]:
            raise ValueError(f"w has {w.size} entries but K is {K.shape[0]}x{K.shape[0]}")
        w.setflags(write=False)
        K.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "K", K)
        self._factor  # validate eagerly

    @property
    def dim(self) -> int:
        return self.w.size

    @cached_property
    def _factor(self):
        d = self.K.diagonal().real
        if np.any(d < 0):
            raise NumericalError("covariance has a negative diagonal entry")
        scale = d.max()
        exact = d <= PIVOT_RTOL * scale if scale > 0 else np.ones(d.size, bool)
        if exact.any():
            off = np.abs(self.K[exact]).max(initial=0.0)
            if off > PIVOT_RTOL * max(scale, 1.0):
                raise NumericalError("zero-variance observation is correlated with others; K is not PSD")
        noisy = ~exact
        chol = None
        if noisy.any():
            Kn = self.K[np.ix_(noisy, noisy)]
            try:
                chol = linalg.cholesky(Kn, lower=True)
            except linalg.LinAlgError as exc:
                raise NumericalError("covariance is not positive definite") from exc
            pivots = np.abs(chol.diagonal()) ** 2
            if np.any(pivots < PIVOT_RTOL * d[noisy]):
                raise NumericalError("covariance is singular to working precision")
        return exact, noisy, chol

    @cached_property
    def weights(self) -> np.ndarray:
        """Vector ``c`` with ``estimate(y) = c^H y``."""
        exact, noisy, chol = self._factor
        c = np.zeros(self.dim, dtype=np.result_type(self.w, self.K, float))
        w_exact = self.w[exact]
        energy = float(np.vdot(w_exact, w_exact).real)
        if energy > 0:
            c[exact] = w_exact / energy
            return c
        info = self.information
        if info <= 0:
            raise NumericalError("regression vector carries no information; estimate undefined")
        c[noisy] = linalg.cho_solve((chol, True), self.w[noisy]) / info
        return c

    @cached_property
    def information(self) -> float:
        """``w^H K^{-1} w``; ``inf`` when an exact observation sees ``h``."""
        exact, noisy, chol = self._factor
        if np.any(self.w[exact] != 0):
            return math.inf
        if chol is None:
            return 0.0
        z = linalg.solve_triangular(chol, self.w[noisy], lower=True)
        return float(np.vdot(z, z).real)

    def score(self, y) -> np.ndarray:
        """``w^H K^{-1} y`` over the noisy rows; observation axis first."""
        exact, noisy, chol = self._factor
        y = np.asarray(y)
        if chol is None:
            return np.zeros(y.shape[1:], dtype=complex)
        v = linalg.cho_solve((chol, True), self.w[noisy])
        return np.tensordot(v.conj(), y[noisy], axes=(0, 0))


def gls_estimate(model: GaussianLinearModel, y):
    """Minimizer of ``(y - w h)^H K^{-1} (y - w h)`` over complex ``h``.

    The first axis of ``y`` indexes observations; any trailing axes are
    treated as independent problems sharing the model.
    """
    y = np.asarray(y)
    if y.shape[0] != model.dim:
        raise ValueError(f"y has {y.shape[0]} observations, model expects {model.dim}")
    est = np.tensordot(model.weights.conj(), y, axes=(0, 0))
    return est[()] if est.ndim == 0 else est


def gls_mse(model: GaussianLinearModel) -> float:
    """Error variance ``(w^H K^{-1} w)^{-1}`` of :func:`gls_estimate`."""
    info = model.information
    if info <= 0:
        raise NumericalError("regression vector carries no information; estimate undefined")
    return 0.0 if math.isinf(info) else 1.0 / info


def ar_observation_model(betas, alpha: float, sigma_e: float,
                         covariance: str = "exact") -> GaussianLinearModel:
    """Model of an eavesdropper's stacked slot estimates as noisy looks at ``h(1)``.

    ``betas[t-1]`` is the correlation between the eavesdropper's channel at
    slot ``t`` and the legitimate one.  With ``covariance="exact"`` the
    cross-slot term carries the AR lag factor ``alpha**|t1 - t2|``;
    ``"lagless"`` drops it.
    """
    betas = np.asarray(betas, dtype=float)
    t = np.arange(1, betas.size + 1)
    w = betas * alpha ** (t - 1)
    tmin = np.minimum.outer(t, t)
    time = np.multiply.outer(betas, betas) * (1.0 - alpha ** (2 * (tmin - 1)))
    if covariance == "exact":
        time = time * alpha ** np.abs(np.subtract.outer(t, t))
    elif covariance != "lagless":
        raise ValueError(f"unknown covariance rule {covariance!r}")
    K = np.diag(sigma_e ** 2 + 1.0 - betas ** 2) + time
    return GaussianLinearModel(w, K)
