"""Population-level theory: closed forms, spectra, and approximations.

Under a one-way Gaussian random-effects model, discriminability is a
closed-form, strictly increasing function of the intraclass correlation;
under the multivariate analogue it is the probability that a certain
indefinite quadratic form is negative, approximated here by matching
moments to an F distribution.  The F distribution function itself is
implemented from scratch via the regularized incomplete beta so that the
numerical core has no dependency to drift against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ComputeError, DomainError, EigenFailure, NotPositiveDefinite, ShapeError

__all__ = [
    "discr_from_icc",
    "discr_star_from_icc",
    "icc_from_discr",
    "fingerprint_from_discr",
    "regularized_incomplete_beta",
    "f_cdf",
    "ManovaPopulation",
    "SpectrumSummary",
    "manova_spectrum",
    "discr_approx_manova",
    "discr_bounds",
    "wilks_lambda",
]


# --- univariate closed form -----------------------------------------------------


def discr_from_icc(icc: float) -> float:
    """Population discriminability of a Gaussian one-way layout.

    D(icc) = 1/2 + arctan( icc / sqrt((1 - icc) (icc + 3)) ) / pi,

    mapping [0, 1] onto [1/2, 1] strictly monotonically, with
    D(0) = 1/2 (no subject effect) and D(1) = 1 (no noise).
    """
    if not (0.0 <= icc <= 1.0) or math.isnan(icc):
        raise DomainError(f"icc must lie in [0, 1], got {icc}")
    if icc == 1.0:
        return 1.0
    return 0.5 + math.atan(icc / math.sqrt((1.0 - icc) * (icc + 3.0))) / math.pi


def discr_star_from_icc(icc: float) -> float:
    """Rescaled discriminability 2 (D - 1/2), mapping [0, 1] onto [0, 1]."""
    return 2.0 * (discr_from_icc(icc) - 0.5)


def icc_from_discr(d: float) -> float:
    """Inverse of :func:`discr_from_icc` on [1/2, 1].

    With theta = tan(pi (d - 1/2)),

        icc = (-theta^2 + theta sqrt(4 theta^2 + 3)) / (1 + theta^2).
    """
    if not (0.5 <= d <= 1.0) or math.isnan(d):
        raise DomainError(f"discriminability must lie in [1/2, 1], got {d}")
    if d == 1.0:
        return 1.0
    theta = math.tan(math.pi * (d - 0.5))
    return (-theta * theta + theta * math.sqrt(4.0 * theta * theta + 3.0)) / (
        1.0 + theta * theta
    )


def fingerprint_from_discr(d: float, rho: float, n: int) -> float:
    """Expected fingerprint fraction implied by discriminability.

    rho is the correlation between the two match indicators a subject
    shares a pair of competitors with; the expectation interpolates
    between the n-independent value d (rho = 1) and the independent-
    competitor value d^(n-1) (rho = 0), and therefore decays with the
    number of subjects n.
    """
    if not (0.0 <= d <= 1.0) or math.isnan(d):
        raise DomainError(f"discriminability must lie in [0, 1], got {d}")
    if not (0.0 <= rho <= 1.0) or math.isnan(rho):
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    return rho * d + (1.0 - rho) * d ** (n - 1)


# --- F distribution from scratch -------------------------------------------------

_BETA_MAX_ITER = 300
_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction of the incomplete beta, modified Lentz scheme."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ComputeError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def _beta_pseries(a: float, b: float, x: float) -> float:
    """Power series for I_x(a, b), effective when b*x is small."""
    ai = 1.0 / a
    t = x * (1.0 - b)
    v = t / (a + 1.0)
    s = v
    n = 2.0
    while True:
        t *= x * (n - b) / n
        v = t / (a + n)
        s += v
        if abs(v) <= _BETA_EPS * (abs(s) + ai):
            break
        n += 1.0
        if n > 10_000:
            raise ComputeError(
                f"incomplete beta series did not converge for a={a}, b={b}, x={x}"
            )
    s += ai
    log_front = a * math.log(x) + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    return math.exp(log_front) * s


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function.

    Continued fraction away from the edges, power series when b*x (or
    symmetrically a*(1-x)) is small.  Absolute accuracy around 1e-13 on
    the parameter ranges used by the F distribution.
    """
    if not (a > 0 and b > 0) or math.isnan(a) or math.isnan(b):
        raise DomainError(f"beta parameters must be positive, got a={a}, b={b}")
    if math.isnan(x) or not (0.0 <= x <= 1.0):
        raise DomainError(f"beta argument must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if b * x <= 1.0 and x <= 0.95:
        return _beta_pseries(a, b, x)
    if a * (1.0 - x) <= 1.0 and x >= 0.05:
        return 1.0 - _beta_pseries(b, a, 1.0 - x)
    log_front = (
        a * math.log(x)
        + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    """Distribution function of the F(d1, d2) law at x.

    Computed as I_y(d1/2, d2/2) with y = d1 x / (d1 x + d2); the
    complementary form is used when y would be close to one, so that both
    tails keep full precision.  Degrees of freedom may be non-integer.
    """
    if not (d1 > 0 and d2 > 0) or math.isnan(d1) or math.isnan(d2):
        raise DomainError(f"degrees of freedom must be positive, got d1={d1}, d2={d2}")
    if math.isnan(x):
        raise DomainError("f_cdf argument is NaN")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    num = d1 * x
    if num <= d2:
        return regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, num / (num + d2))
    return 1.0 - regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (num + d2))


# --- multivariate population and its spectrum ------------------------------------


def _check_covariance(a: np.ndarray, name: str, strict: bool) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise NotPositiveDefinite(f"{name} is not symmetric")
    a = (a + a.T) / 2.0
    try:
        eigs = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition of {name} failed: {exc}") from exc
    if strict:
        if eigs.min() <= 0.0:
            raise NotPositiveDefinite(
                f"{name} must be positive definite, minimal eigenvalue {eigs.min():.3e}"
            )
    elif eigs.min() < -1e-10 * scale:
        raise NotPositiveDefinite(
            f"{name} must be positive semi-definite, minimal eigenvalue {eigs.min():.3e}"
        )
    return a


@dataclass(frozen=True, eq=False)
class ManovaPopulation:
    """Gaussian population with subject covariance and noise covariance.

    Measurements follow x_it = mu_i + e_it with mu_i ~ N(0, sigma_mu) and
    e_it ~ N(0, sigma); ``sigma`` must be positive definite, ``sigma_mu``
    positive semi-definite, both l-by-l.
    """

    sigma: np.ndarray
    sigma_mu: np.ndarray

    def __post_init__(self):
        sigma = _check_covariance(self.sigma, "sigma", strict=True)
        sigma_mu = _check_covariance(self.sigma_mu, "sigma_mu", strict=False)
        if sigma.shape != sigma_mu.shape:
            raise ShapeError(
                f"sigma {sigma.shape} and sigma_mu {sigma_mu.shape} differ in shape"
            )
        sigma.flags.writeable = False
        sigma_mu.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "sigma_mu", sigma_mu)

    @property
    def l(self) -> int:
        return self.sigma.shape[0]

    @property
    def lambda_tr(self) -> float:
        """Trace fraction tr(sigma_mu) / (tr(sigma_mu) + tr(sigma))."""
        tm = float(np.trace(self.sigma_mu))
        ts = float(np.trace(self.sigma))
        return tm / (tm + ts)

    @classmethod
    def compound_symmetry(
        cls, sigma_sq: float, sigma_mu_sq: float, rho: float, l: int
    ) -> "ManovaPopulation":
        """Both covariances proportional to (1-rho) I + rho J."""
        if l < 1:
            raise DomainError(f"l must be at least 1, got {l}")
        if not 0.0 <= rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {rho}")
        if not sigma_sq > 0:
            raise DomainError(f"sigma_sq must be positive, got {sigma_sq}")
        if not sigma_mu_sq >= 0:
            raise DomainError(f"sigma_mu_sq must be non-negative, got {sigma_mu_sq}")
        q = (1.0 - rho) * np.eye(l) + rho * np.ones((l, l))
        return cls(sigma_sq * q, sigma_mu_sq * q)


@dataclass(frozen=True)
class SpectrumSummary:
    """Signed eigenvalue summary of the discriminability quadratic form.

    v1/w1 are the sum and sum of squares of the positive eigenvalues,
    v2/w2 those of the absolute negative eigenvalues.  Sylvester's law
    forces exactly l of each sign.
    """

    v1: float
    w1: float
    v2: float
    w2: float
    n_pos: int
    n_neg: int
    eigenvalues: tuple[float, ...]

    @property
    def h1(self) -> float:
        """Effective degrees of freedom v1^2 / w1 of the positive part."""
        return self.v1 * self.v1 / self.w1

    @property
    def h2(self) -> float:
        return self.v2 * self.v2 / self.w2


def manova_spectrum(pop: ManovaPopulation) -> SpectrumSummary:
    """Eigenvalues of the signed covariance form behind discriminability.

    The within-minus-between comparison is the quadratic form z' M z on
    the stacked Gaussian z with covariance

        P = [[2 sigma,  sigma            ],
             [  sigma,  2 sigma + 2 sigma_mu]],    M = diag(I, -I),

    whose generalized spectrum is computed from the symmetric similar
    matrix P^(1/2) M P^(1/2).  Discriminability is P(z' M z < 0).
    """
    l = pop.l
    p = np.block(
        [
            [2.0 * pop.sigma, pop.sigma],
            [pop.sigma, 2.0 * pop.sigma + 2.0 * pop.sigma_mu],
        ]
    )
    try:
        w, u = np.linalg.eigh(p)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition of the joint covariance failed: {exc}") from exc
    if w.min() <= 0.0:
        raise NotPositiveDefinite(
            f"joint covariance not positive definite, minimal eigenvalue {w.min():.3e}"
        )
    sqrt_p = (u * np.sqrt(w)) @ u.T
    m = np.diag(np.concatenate([np.ones(l), -np.ones(l)]))
    k = sqrt_p @ m @ sqrt_p
    k = (k + k.T) / 2.0
    try:
        eigs = np.linalg.eigvalsh(k)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition of the signed form failed: {exc}") from exc
    pos = eigs[eigs > 0.0]
    neg = eigs[eigs < 0.0]
    return SpectrumSummary(
        v1=float(pos.sum()),
        w1=float((pos * pos).sum()),
        v2=float(-neg.sum()),
        w2=float((neg * neg).sum()),
        n_pos=int(pos.size),
        n_neg=int(neg.size),
        eigenvalues=tuple(float(e) for e in eigs),
    )


def discr_approx_manova(pop: ManovaPopulation) -> float:
    """Moment-matched F approximation of multivariate discriminability.

    Each signed half of the eigenvalue spectrum is matched to a scaled
    chi-square, giving

        D  ~=  F_cdf(v2 / v1;  v1^2 / w1,  v2^2 / w2).

    Exact for l = 1; for l > 1 the two dispersion parameters v_j^2 / w_j
    lie in [1, l] and the approximation stays within a few percent on
    compound-symmetry populations.
    """
    spec = manova_spectrum(pop)
    return f_cdf(spec.v2 / spec.v1, spec.h1, spec.h2)


def discr_bounds(lambda_tr: float, h1: float, h2: float) -> tuple[float, float]:
    """Bounds on the F-approximated discriminability at a trace fraction.

    The generalized F argument v2/v1 is bracketed by

        f1 = 1 + r  and  f2 = 1 + (4/3) r,   r = lambda_tr / (1 - lambda_tr),

    so the approximation lies between F_cdf(f1; h1, h2) and
    F_cdf(f2; h1, h2) for dispersions h1, h2.
    """
    if not (0.0 <= lambda_tr < 1.0) or math.isnan(lambda_tr):
        raise DomainError(f"lambda_tr must lie in [0, 1), got {lambda_tr}")
    r = lambda_tr / (1.0 - lambda_tr)
    lower = f_cdf(1.0 + r, h1, h2)
    upper = f_cdf(1.0 + (4.0 / 3.0) * r, h1, h2)
    return lower, upper


def wilks_lambda(pop: ManovaPopulation) -> float:
    """Determinant fraction det(sigma_mu) / (det(sigma) + det(sigma_mu)).

    Population analogue of the trace fraction; defined here only at the
    population level.
    """
    dm = float(np.linalg.det(pop.sigma_mu))
    ds = float(np.linalg.det(pop.sigma))
    if dm + ds == 0.0:
        raise DomainError("both determinants vanish, ratio undefined")
    return dm / (dm + ds)
