"""Densities, samplers and maximum-likelihood fitters.

Families
--------
gaussian               mean, sd
laplace                loc, scale
ged                    loc, scale, shape  (exponential power / Subbotin)
lognormal              mu, sigma
exponential            mean
yule_powerlaw_cutoff   exponent, cutoff, kmin  (discrete, k >= kmin)
eq4                    vg, loc  (growth-rate law of proportionately growing
                       units with preferentially attached links)

The growth-rate law has density

    P(g) = 2 V / (s * (|g| + s)**2),   s = sqrt(g**2 + 2 V)

which integrates in closed form: with u = |g| + s the upper tail mass is
V / u**2. CDF, quantile and sampling use that closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import DegenerateDataError, DomainError, InsufficientTailError, NumericError

FAMILIES = {
    "gaussian": ("mean", "sd"),
    "laplace": ("loc", "scale"),
    "ged": ("loc", "scale", "shape"),
    "lognormal": ("mu", "sigma"),
    "exponential": ("mean",),
    "yule_powerlaw_cutoff": ("exponent", "cutoff", "kmin"),
    "eq4": ("vg", "loc"),
}
ALIASES = {"gauss": "gaussian", "normal": "gaussian", "subbotin": "ged", "yule": "yule_powerlaw_cutoff"}
DEFAULTS = {"eq4": {"loc": 0.0}, "yule_powerlaw_cutoff": {"kmin": 1, "cutoff": math.inf}}
DISCRETE = {"yule_powerlaw_cutoff"}

CDF_ABS_TOL = 1e-9
QUANTILE_REL_TOL = 1e-8
# Largest explicit pmf table for the discrete law; the remainder is summed
# by Euler-Maclaurin.
K_TABLE_MAX = 2_000_000


def canonical_family(name: str) -> str:
    name = name.lower()
    name = ALIASES.get(name, name)
    if name not in FAMILIES:
        raise DomainError(f"unknown family {name!r}; expected one of {sorted(FAMILIES)}")
    return name


@dataclass(frozen=True)
class DistributionModel:
    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        family = canonical_family(self.family)
        params = dict(DEFAULTS.get(family, {}))
        params.update({k: float(v) for k, v in dict(self.params).items()})
        missing = [p for p in FAMILIES[family] if p not in params]
        extra = [p for p in params if p not in FAMILIES[family]]
        if missing or extra:
            raise DomainError(f"{family}: missing {missing}, unexpected {extra}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)
        _check(family, params)

    def __getitem__(self, key):
        return self.params[key]

    @property
    def discrete(self) -> bool:
        return self.family in DISCRETE

    def mean(self) -> float:
        return model_mean(self)

    def variance(self) -> float:
        return model_variance(self)


def _check(family, p):
    def positive(*names):
        for n in names:
            if not (p[n] > 0) or math.isnan(p[n]):
                raise DomainError(f"{family}: {n} must be > 0, got {p[n]}")

    for k, v in p.items():
        if math.isnan(v) or (math.isinf(v) and not (family == "yule_powerlaw_cutoff" and k == "cutoff")):
            raise DomainError(f"{family}: {k} must be finite, got {v}")
    if family == "gaussian":
        positive("sd")
    elif family in ("laplace",):
        positive("scale")
    elif family == "ged":
        positive("scale", "shape")
    elif family == "lognormal":
        positive("sigma")
    elif family == "exponential":
        positive("mean")
    elif family == "eq4":
        positive("vg")
    elif family == "yule_powerlaw_cutoff":
        positive("cutoff")
        if p["kmin"] < 1 or p["kmin"] != int(p["kmin"]):
            raise DomainError("yule_powerlaw_cutoff: kmin must be an integer >= 1")
        if math.isinf(p["cutoff"]) and p["exponent"] <= 1:
            raise DomainError("pure power law needs exponent > 1")


@dataclass
class FitResult:
    model: DistributionModel | None
    loglik: float
    n: int
    converged: bool
    iterations: int
    message: str = ""


# ---------------------------------------------------------------------------
# growth-rate law


def _eq4_u(absg, vg):
    return absg + np.sqrt(absg * absg + 2.0 * vg)


def _eq4_pdf(g, vg):
    a = np.abs(g)
    s = np.sqrt(a * a + 2.0 * vg)
    # at the centre the ratio 2V/(a+s)**2 is exactly 1
    return np.where(a == 0, 1.0 / s, 2.0 * vg / (s * (a + s) ** 2))


def _eq4_cdf(g, vg):
    g = np.asarray(g, dtype=float)
    tail = vg / _eq4_u(np.abs(g), vg) ** 2
    return np.where(g >= 0, 1.0 - tail, tail)


def _eq4_quantile(p, vg):
    p = np.asarray(p, dtype=float)
    tail = np.minimum(p, 1.0 - p)
    u2 = vg / tail
    mag = (u2 - 2.0 * vg) / (2.0 * np.sqrt(u2))
    return np.where(p >= 0.5, mag, -mag)


# ---------------------------------------------------------------------------
# discrete power law with exponential cutoff


class _YuleTable:
    """Normalizer and cumulative table for k**-phi * exp(-k/c), k >= kmin."""

    def __init__(self, phi, cutoff, kmin):
        self.phi, self.cutoff, self.kmin = phi, cutoff, int(kmin)
        if math.isinf(cutoff):
            span = 200_000
        else:
            span = int(min(math.ceil(60.0 * cutoff) + 10, K_TABLE_MAX))
        self.k = np.arange(self.kmin, self.kmin + span, dtype=float)
        self.f = self.weight(self.k)
        self.k_hi = self.kmin + span - 1
        self.rest = self.remainder(self.k_hi + 1)
        self.z = math.fsum(self.f) + self.rest
        self.cum = np.cumsum(self.f) / self.z

    def weight(self, k):
        k = np.asarray(k, dtype=float)
        out = k ** -self.phi
        if not math.isinf(self.cutoff):
            out = out * np.exp(-k / self.cutoff)
        return out

    def remainder(self, k0):
        """Sum of weights for k >= k0 (Euler-Maclaurin)."""
        f0 = float(self.weight(k0))
        if f0 == 0.0:
            return 0.0
        if math.isinf(self.cutoff):
            return float(special.zeta(self.phi, k0))
        integral, _ = integrate.quad(lambda x: float(self.weight(x)), k0, np.inf, limit=200)
        dlog = -self.phi / k0 - 1.0 / self.cutoff
        return integral + 0.5 * f0 - f0 * dlog / 12.0

    def cdf(self, x):
        x = np.floor(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        inside = (x >= self.kmin) & (x <= self.k_hi)
        out[inside] = self.cum[(x[inside] - self.kmin).astype(np.int64)]
        beyond = x > self.k_hi
        if beyond.any():
            out[beyond] = [1.0 - self.remainder(v + 1) / self.z for v in x[beyond]]
        return out

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        idx = np.searchsorted(self.cum, p - 1e-15, side="left")
        out = self.k[np.minimum(idx, self.k.shape[0] - 1)]
        over = idx >= self.k.shape[0]
        for i in np.flatnonzero(over):
            target = (1.0 - p.flat[i]) * self.z
            lo, hi = float(self.k_hi), float(self.k_hi) * 2.0
            while self.remainder(hi + 1) > target:
                lo, hi = hi, hi * 2.0
            while hi - lo > 1:
                mid = math.floor((lo + hi) / 2)
                if self.remainder(mid + 1) > target:
                    lo = mid
                else:
                    hi = mid
            out.flat[i] = hi
        return out


def _yule(p):
    return _YuleTable(p["exponent"], p["cutoff"], p["kmin"])


# ---------------------------------------------------------------------------
# public API


def pdf(model: DistributionModel, x):
    """Density (pmf for the discrete family) at ``x``."""
    p = model.params
    x = np.asarray(x, dtype=float)
    fam = model.family
    if fam == "gaussian":
        out = stats.norm.pdf(x, p["mean"], p["sd"])
    elif fam == "laplace":
        out = stats.laplace.pdf(x, p["loc"], p["scale"])
    elif fam == "ged":
        out = stats.gennorm.pdf(x, p["shape"], p["loc"], p["scale"])
    elif fam == "lognormal":
        out = stats.lognorm.pdf(x, p["sigma"], scale=math.exp(p["mu"]))
    elif fam == "exponential":
        out = stats.expon.pdf(x, scale=p["mean"])
    elif fam == "eq4":
        out = _eq4_pdf(x - p["loc"], p["vg"])
    else:
        table = _yule(p)
        on_support = (x >= p["kmin"]) & (x == np.floor(x))
        out = np.where(on_support, table.weight(np.maximum(x, 1.0)) / table.z, 0.0)
    return out[()] if np.ndim(out) == 0 else out


def logpdf(model: DistributionModel, x):
    with np.errstate(divide="ignore"):
        return np.log(pdf(model, x))


def cdf(model: DistributionModel, x):
    """P(X <= x)."""
    p = model.params
    x = np.asarray(x, dtype=float)
    fam = model.family
    if fam == "gaussian":
        out = stats.norm.cdf(x, p["mean"], p["sd"])
    elif fam == "laplace":
        out = stats.laplace.cdf(x, p["loc"], p["scale"])
    elif fam == "ged":
        out = stats.gennorm.cdf(x, p["shape"], p["loc"], p["scale"])
    elif fam == "lognormal":
        out = stats.lognorm.cdf(x, p["sigma"], scale=math.exp(p["mu"]))
    elif fam == "exponential":
        out = stats.expon.cdf(x, scale=p["mean"])
    elif fam == "eq4":
        out = _eq4_cdf(x - p["loc"], p["vg"])
    else:
        out = _yule(p).cdf(np.atleast_1d(x)).reshape(x.shape)
    if np.any(np.isnan(out)):
        raise NumericError(f"{fam}: CDF evaluation produced NaN")
    return out[()] if np.ndim(out) == 0 else out


def quantile(model: DistributionModel, q):
    """Inverse CDF; for the discrete family the smallest k with F(k) >= q."""
    p = model.params
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise DomainError("quantile probabilities must lie in [0, 1]")
    fam = model.family
    if fam == "gaussian":
        out = stats.norm.ppf(q, p["mean"], p["sd"])
    elif fam == "laplace":
        out = stats.laplace.ppf(q, p["loc"], p["scale"])
    elif fam == "ged":
        out = stats.gennorm.ppf(q, p["shape"], p["loc"], p["scale"])
    elif fam == "lognormal":
        out = stats.lognorm.ppf(q, p["sigma"], scale=math.exp(p["mu"]))
    elif fam == "exponential":
        out = stats.expon.ppf(q, scale=p["mean"])
    elif fam == "eq4":
        with np.errstate(divide="ignore"):
            out = _eq4_quantile(q, p["vg"]) + p["loc"]
    else:
        out = _yule(p).quantile(np.atleast_1d(q)).reshape(q.shape)
    return out[()] if np.ndim(out) == 0 else out


def sample(model: DistributionModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be >= 1")
    p = model.params
    fam = model.family
    if fam == "gaussian":
        return rng.normal(p["mean"], p["sd"], n)
    if fam == "laplace":
        return rng.laplace(p["loc"], p["scale"], n)
    if fam == "lognormal":
        return rng.lognormal(p["mu"], p["sigma"], n)
    if fam == "exponential":
        return rng.exponential(p["mean"], n)
    if fam == "ged":
        # |X - loc| / scale = G**(1/shape) with G ~ Gamma(1/shape)
        mag = rng.gamma(1.0 / p["shape"], 1.0, n) ** (1.0 / p["shape"])
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return p["loc"] + p["scale"] * sign * mag
    u = rng.random(n)
    # keep strictly inside (0, 1) for the unbounded inverse
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return np.asarray(quantile(model, u), dtype=float)


def model_mean(model: DistributionModel) -> float:
    p = model.params
    fam = model.family
    if fam == "gaussian":
        return p["mean"]
    if fam in ("laplace", "ged", "eq4"):
        return p["loc"]
    if fam == "lognormal":
        return math.exp(p["mu"] + p["sigma"] ** 2 / 2)
    if fam == "exponential":
        return p["mean"]
    t = _yule(p)
    return float((t.k * t.f).sum() / t.z)


def model_variance(model: DistributionModel) -> float:
    """Model variance. For ``eq4`` the variance diverges and ``vg`` is returned."""
    p = model.params
    fam = model.family
    if fam == "gaussian":
        return p["sd"] ** 2
    if fam == "laplace":
        return 2.0 * p["scale"] ** 2
    if fam == "ged":
        b = p["shape"]
        return p["scale"] ** 2 * math.gamma(3.0 / b) / math.gamma(1.0 / b)
    if fam == "lognormal":
        s2 = p["sigma"] ** 2
        return (math.exp(s2) - 1.0) * math.exp(2 * p["mu"] + s2)
    if fam == "exponential":
        return p["mean"] ** 2
    if fam == "eq4":
        return p["vg"]
    t = _yule(p)
    m = (t.k * t.f).sum() / t.z
    return float((t.k ** 2 * t.f).sum() / t.z - m * m)


# ---------------------------------------------------------------------------
# fitting


def _loglik(model, x):
    return float(np.sum(logpdf(model, x)))


def _fit_ged(x):
    n = x.shape[0]

    def profile(theta):
        loc, shape = theta[0], math.exp(theta[1])
        s = np.mean(np.abs(x - loc) ** shape) * shape
        if s <= 0:
            return np.inf
        scale = s ** (1.0 / shape)
        ll = n * (math.log(shape) - math.log(2.0) - special.gammaln(1.0 / shape)
                  - math.log(scale) - 1.0 / shape)
        return -ll

    start = np.array([np.median(x), 0.0])
    res = optimize.minimize(profile, start, method="Nelder-Mead",
                            options={"xatol": 1e-7, "fatol": 1e-9, "maxiter": 2000})
    loc, shape = res.x[0], math.exp(res.x[1])
    scale = (shape * np.mean(np.abs(x - loc) ** shape)) ** (1.0 / shape)
    model = DistributionModel("ged", {"loc": loc, "scale": scale, "shape": shape})
    return model, bool(res.success), int(res.nit), str(res.message)


def _fit_eq4(x, loc):
    centred = x - loc
    # Laplace-like centre: scale sets the starting bracket
    guess = max(float(np.mean(np.abs(centred))) ** 2, 1e-12)

    def nll(logv):
        return -float(np.sum(np.log(_eq4_pdf(centred, math.exp(logv)))))

    lo, hi = math.log(guess) - 12.0, math.log(guess) + 12.0
    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10, "maxiter": 500})
    at_edge = min(res.x - lo, hi - res.x) < 1e-6
    model = DistributionModel("eq4", {"vg": math.exp(res.x), "loc": loc})
    return model, bool(res.success) and not at_edge, int(res.nfev), str(res.message)


def _fit_yule(x, kmin=None):
    kmin = int(x.min()) if kmin is None else int(kmin)
    x = x[x >= kmin]
    n = x.shape[0]
    s_log, s_lin = float(np.log(x).sum()), float(x.sum())

    def nll(theta):
        phi, cutoff = theta[0], math.exp(theta[1])
        if not (-5.0 < phi < 10.0):
            return np.inf
        t = _YuleTable(phi, cutoff, kmin)
        return phi * s_log + s_lin / cutoff + n * math.log(t.z)

    start = np.array([2.0, math.log(max(float(x.mean()), 1.0))])
    res = optimize.minimize(nll, start, method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 1000})
    model = DistributionModel("yule_powerlaw_cutoff",
                              {"exponent": res.x[0], "cutoff": math.exp(res.x[1]), "kmin": kmin})
    return model, bool(res.success), int(res.nit), str(res.message)


def fit_mle(family: str, samples, *, loc: float | None = None, kmin: int | None = None) -> FitResult:
    """Maximum-likelihood fit of ``family`` to ``samples``.

    Parameters
    ----------
    family : str
    samples : array_like
        At least 10 finite values.
    loc : float, optional
        ``eq4`` only: centre of the law. Defaults to the sample median, which
        leaves a one-dimensional likelihood search in ``vg``.
    kmin : int, optional
        ``yule_powerlaw_cutoff`` only: lower support bound (default: sample min).

    Returns
    -------
    FitResult
        ``converged=False`` with ``model=None`` when the optimizer fails to
        produce admissible parameters.
    """
    family = canonical_family(family)
    x = np.asarray(samples, dtype=float).ravel()
    n = x.shape[0]
    if n < 10:
        raise DegenerateDataError(f"need at least 10 samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise DegenerateDataError("samples must be finite")
    if np.all(x == x[0]):
        raise DegenerateDataError("samples have zero variance")
    if family in ("lognormal", "exponential", "yule_powerlaw_cutoff") and np.any(x <= 0):
        raise DegenerateDataError(f"{family} requires positive samples")

    iterations, message, converged = 0, "closed form", True
    try:
        if family == "gaussian":
            model = DistributionModel(family, {"mean": x.mean(), "sd": x.std()})
        elif family == "laplace":
            med = float(np.median(x))
            model = DistributionModel(family, {"loc": med, "scale": np.mean(np.abs(x - med))})
        elif family == "lognormal":
            lx = np.log(x)
            model = DistributionModel(family, {"mu": lx.mean(), "sigma": lx.std()})
        elif family == "exponential":
            model = DistributionModel(family, {"mean": x.mean()})
        elif family == "ged":
            model, converged, iterations, message = _fit_ged(x)
        elif family == "eq4":
            centre = float(np.median(x)) if loc is None else float(loc)
            model, converged, iterations, message = _fit_eq4(x, centre)
        else:
            if np.any(x != np.floor(x)):
                raise DegenerateDataError("yule_powerlaw_cutoff requires integer samples")
            model, converged, iterations, message = _fit_yule(x, kmin)
    except DomainError as exc:
        return FitResult(None, math.nan, n, False, iterations, f"inadmissible optimum: {exc}")

    if model.family == "yule_powerlaw_cutoff":
        x = x[x >= model["kmin"]]
    ll = _loglik(model, x)
    if not math.isfinite(ll):
        converged = False
    return FitResult(model, ll, n, converged, iterations, message)


@dataclass
class PowerLawFit:
    exponent: float
    xmin: float
    cutoff: float | None
    n_tail: int
    ks: float
    discrete: bool
    cutoff_exponent: float | None = None

    def __iter__(self):
        return iter((self.exponent, self.xmin, self.cutoff))


def _discrete_tail_fit(tail_sorted, xmin):
    n = tail_sorted.shape[0]
    s_log = float(np.log(tail_sorted).sum())

    def nll(alpha):
        return alpha * s_log + n * math.log(special.zeta(alpha, xmin))

    res = optimize.minimize_scalar(nll, bounds=(1.0001, 8.0), method="bounded",
                                   options={"xatol": 1e-8})
    alpha = float(res.x)
    vals, counts = np.unique(tail_sorted, return_counts=True)
    emp = np.cumsum(counts) / n
    model = 1.0 - special.zeta(alpha, vals + 1.0) / special.zeta(alpha, xmin)
    emp_left = np.concatenate([[0.0], emp[:-1]])
    # model cdf just below each value is the cdf at the previous integer
    model_left = 1.0 - special.zeta(alpha, vals) / special.zeta(alpha, xmin)
    ks = float(max(np.max(np.abs(emp - model)), np.max(np.abs(emp_left - model_left))))
    return alpha, ks


def _continuous_tail_fit(tail_sorted, xmin):
    n = tail_sorted.shape[0]
    alpha = 1.0 + n / float(np.log(tail_sorted / xmin).sum())
    model = 1.0 - (tail_sorted / xmin) ** (1.0 - alpha)
    i = np.arange(1, n + 1)
    ks = float(max(np.max(i / n - model), np.max(model - (i - 1) / n)))
    return alpha, ks


def fit_powerlaw_tail(samples, *, discrete: bool | None = None, xmin: float | None = None,
                      cutoff: bool = False, min_tail: int = 10,
                      max_candidates: int = 200) -> PowerLawFit:
    """Power-law tail fit with KS-minimizing lower bound.

    Every candidate ``xmin`` (at most ``max_candidates``, log-spaced among the
    distinct sample values) gets an MLE exponent; the candidate with the
    smallest KS distance over its tail wins. With ``cutoff=True`` the tail is
    refitted as ``k**-phi * exp(-k/c)`` and ``c`` is reported.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.shape[0] < 50:
        raise InsufficientTailError(f"need at least 50 samples, got {x.shape[0]}")
    if np.any(x <= 0):
        raise DomainError("power-law tail fit requires positive samples")
    if discrete is None:
        discrete = bool(np.all(x == np.floor(x)))
    fit_one = _discrete_tail_fit if discrete else _continuous_tail_fit

    if xmin is None:
        uniq = np.unique(x)
        n_above = x.shape[0] - np.searchsorted(x, uniq, side="left")
        cands = uniq[n_above >= min_tail]
        if not discrete:
            cands = cands[cands < x[-1]]
        if cands.shape[0] == 0:
            raise InsufficientTailError(f"fewer than {min_tail} points in every candidate tail")
        if cands.shape[0] > max_candidates:
            pick = np.unique(np.round(np.geomspace(1, cands.shape[0], max_candidates)).astype(int) - 1)
            cands = cands[pick]
        best = None
        for c in cands:
            tail = x[np.searchsorted(x, c, side="left"):]
            alpha, ks = fit_one(tail, c)
            if best is None or ks < best[2]:
                best = (c, alpha, ks)
        xmin, alpha, ks = best
    tail = x[np.searchsorted(x, xmin, side="left"):]
    if tail.shape[0] < min_tail:
        raise InsufficientTailError(f"only {tail.shape[0]} points at or beyond xmin={xmin}")
    alpha, ks = fit_one(tail, xmin)

    cut, cut_exp = None, None
    if cutoff:
        if discrete:
            res = fit_mle("yule_powerlaw_cutoff", tail, kmin=int(xmin))
            if res.model is not None:
                cut, cut_exp = res.model["cutoff"], res.model["exponent"]
        else:
            cut_exp, cut = _fit_continuous_cutoff(tail, xmin)
    return PowerLawFit(float(alpha), float(xmin), cut, int(tail.shape[0]), float(ks),
                       discrete, cut_exp)


def _fit_continuous_cutoff(tail, xmin):
    s_log, s_lin, n = float(np.log(tail).sum()), float(tail.sum()), tail.shape[0]

    def nll(theta):
        phi, lam = theta[0], math.exp(theta[1])
        z, _ = integrate.quad(lambda v: v ** -phi * math.exp(-v * lam), xmin, np.inf, limit=200)
        if not z > 0:
            return np.inf
        return phi * s_log + lam * s_lin + n * math.log(z)

    res = optimize.minimize(nll, [2.0, -math.log(tail.mean())], method="Nelder-Mead")
    return float(res.x[0]), float(math.exp(-res.x[1]))


# ---------------------------------------------------------------------------
# report serialization

FIT_TABLE_HEADER = "family\tparam_name\tvalue\tloglik\tn"


def fit_report_text(result: FitResult) -> str:
    """Flat ``key=value`` rendering of a fit."""
    lines = [f"family={result.model.family if result.model else 'none'}"]
    if result.model is not None:
        lines += [f"{k}={v!r}" for k, v in result.model.params.items()]
    lines += [f"loglik={result.loglik!r}", f"n={result.n}",
              f"converged={int(result.converged)}", f"iterations={result.iterations}"]
    return "\n".join(lines) + "\n"


def fit_report_rows(results) -> str:
    rows = [FIT_TABLE_HEADER]
    for r in results:
        if r.model is None:
            continue
        for k, v in r.model.params.items():
            rows.append(f"{r.model.family}\t{k}\t{v!r}\t{r.loglik!r}\t{r.n}")
    return "\n".join(rows) + "\n"
