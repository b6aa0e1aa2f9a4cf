"""Radial interaction kernels, their potentials and dimensional constants.

A kernel is a radial density rho(z) = profile(|z|) supported in the closed
ball of radius `eps` (the horizon; infinite for the fractional family).
Supported families:

* ``fractional``            profile(r) = scale * r^-(d-1+alpha), horizon inf.
  The plain Gagliardo convention has scale = 1; the Riesz-normalized
  variant (used by the distributional gradient D^alpha) carries
  scale = frac_constant(d, alpha).
* ``truncated_fractional``  profile(r) = scale * r^-(d-1+alpha) on (0, eps].
* ``bump``                  profile(r) = scale * exp(amp/(r^2-eps^2)) * r^-sing
  on (0, eps); smooth vanishing at the horizon.
* ``tabulated``             monotone-cubic interpolation of (radius, value)
  samples on a log-log grid; horizon = largest sample radius.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as _gamma

from .errors import DomainError, PreconditionError, UnsupportedKernelError

FAMILIES = ("fractional", "truncated_fractional", "bump", "tabulated")
NORMALIZATIONS = ("none", "unit_mass", "mass_d")

_TABLE_SIZE = 4096  # geometric radial grid for non-closed-form potentials


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / _gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d (2 for d=1)."""
    return 2 * math.pi ** (d / 2) / _gamma(d / 2)


def ball_covariogram(d: int, t, radius: float = 1.0):
    """|B_r(0) & B_r(t e_1)| as a function of the center distance t."""
    t = np.asarray(t, dtype=float) / radius
    if d == 1:
        g = np.maximum(0.0, 2.0 - t)
    elif d == 2:
        tt = np.minimum(t / 2.0, 1.0)
        g = np.where(t < 2.0, 2.0 * np.arccos(tt) - (t / 2.0) * np.sqrt(np.maximum(4.0 - t * t, 0.0)), 0.0)
    elif d == 3:
        g = np.where(t < 2.0, (np.pi / 12.0) * (4.0 + t) * (2.0 - t) ** 2, 0.0)
    else:
        raise DomainError(f"unsupported dimension {d}")
    return g * radius ** d


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a radial interaction kernel."""

    family: str
    d: int
    eps: float = math.inf
    alpha: float | None = None
    amp: float = 0.1
    sing: float = 1.5
    scale: float = 1.0
    normalization: str = "none"
    # exponents/radius for the monotonicity hypotheses (H1)/(H3)/(H4)
    sigma: float = 0.5
    gamma_exp: float = 0.5
    nu: float = 0.5
    eta: float | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.normalization not in NORMALIZATIONS:
            raise DomainError(f"unknown normalization {self.normalization!r}")
        if self.d not in (1, 2, 3):
            raise DomainError(f"unsupported dimension {self.d}")
        if self.family == "fractional":
            if not math.isinf(self.eps):
                raise DomainError("fractional kernels have an infinite horizon")
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise DomainError("fractional kernels need alpha in (0,1)")
        elif self.family == "truncated_fractional":
            if not (math.isfinite(self.eps) and self.eps > 0):
                raise DomainError("truncated kernels need a finite positive horizon")
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise DomainError("truncated kernels need alpha in (0,1)")
        elif self.family == "bump":
            if not (math.isfinite(self.eps) and self.eps > 0):
                raise DomainError("bump kernels need a finite positive horizon")
            if self.amp <= 0:
                raise DomainError("bump amplitude exponent must be positive")
        elif self.family == "tabulated":
            if self.table is None or len(self.table[0]) < 2:
                raise DomainError("tabulated kernels need at least two samples")

    # ---- constructors ----------------------------------------------------
    @classmethod
    def fractional_gagliardo(cls, d: int, alpha: float) -> "KernelSpec":
        """Plain fractional kernel r^-(d+alpha-1) of the Gagliardo perimeter."""
        return cls("fractional", d, math.inf, alpha=alpha, scale=1.0)

    @classmethod
    def fractional_riesz(cls, d: int, alpha: float) -> "KernelSpec":
        """Riesz-normalized fractional kernel c_{d,alpha} r^-(d-1+alpha)."""
        return cls("fractional", d, math.inf, alpha=alpha, scale=frac_constant(d, alpha))

    @classmethod
    def truncated_fractional(cls, d: int, alpha: float, eps: float) -> "KernelSpec":
        return cls("truncated_fractional", d, eps, alpha=alpha)

    @classmethod
    def bump(cls, d: int, eps: float, amp: float = 0.1, sing: float = 1.5) -> "KernelSpec":
        return cls("bump", d, eps, amp=amp, sing=sing)

    @classmethod
    def figure_bump(cls, d: int = 2) -> "KernelSpec":
        """The bump kernel exp(0.1/(|z|^2-(3/4)^2)) 1_{B_{3/4}} |z|^{-3/2}."""
        return cls("bump", d, 0.75, amp=0.1, sing=1.5, eta=0.375)

    @classmethod
    def tabulated(cls, d: int, radii, values) -> "KernelSpec":
        radii = tuple(float(r) for r in radii)
        values = tuple(float(v) for v in values)
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise DomainError("tabulated radii must be strictly increasing")
        if any(v < 0 for v in values):
            raise DomainError("tabulated kernel values must be nonnegative")
        return cls("tabulated", d, radii[-1], table=(radii, values))

    # ---- evaluation ------------------------------------------------------
    @property
    def eta_eff(self) -> float:
        """Radius on which the (H3)/(H4) hypotheses are checked."""
        if self.eta is not None:
            return self.eta
        return self.eps / 2 if math.isfinite(self.eps) else 1.0

    @property
    def singularity_exponent(self) -> float:
        """Exponent p with profile(r) ~ r^-p as r -> 0."""
        if self.family in ("fractional", "truncated_fractional"):
            return self.d - 1 + float(self.alpha)
        if self.family == "bump":
            return self.sing
        radii, values = self.table
        r0, r1, v0, v1 = radii[0], radii[1], values[0], values[1]
        if v0 <= 0 or v1 <= 0 or r0 <= 0:
            return 0.0
        return max(0.0, -math.log(v1 / v0) / math.log(r1 / r0))

    def profile(self, r):
        """Radial profile rho-bar(r); 0 beyond the horizon, 0 at r<=0."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        if self.family in ("fractional", "truncated_fractional"):
            inside = (r > 0) & (r <= self.eps) if math.isfinite(self.eps) else (r > 0)
            out[inside] = self.scale * r[inside] ** -(self.d - 1 + self.alpha)
        elif self.family == "bump":
            inside = (r > 0) & (r < self.eps)
            ri = r[inside]
            out[inside] = self.scale * np.exp(self.amp / (ri * ri - self.eps * self.eps)) * ri ** -self.sing
        else:
            radii, values = self.table
            inside = (r >= radii[0]) & (r <= radii[-1])
            out[inside] = self.scale * _tabulated_interp(self)(r[inside])
            below = (r > 0) & (r < radii[0])
            if below.any():
                p = self.singularity_exponent
                out[below] = self.scale * values[0] * (r[below] / radii[0]) ** -p
        return out

    def profile_derivative(self, r):
        """d/dr of the radial profile (analytic per family, spline for tables)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        if self.family in ("fractional", "truncated_fractional"):
            p = self.d - 1 + self.alpha
            inside = (r > 0) & (r < self.eps) if math.isfinite(self.eps) else (r > 0)
            out[inside] = -p * self.scale * r[inside] ** -(p + 1)
        elif self.family == "bump":
            inside = (r > 0) & (r < self.eps)
            ri = r[inside]
            val = self.scale * np.exp(self.amp / (ri * ri - self.eps * self.eps)) * ri ** -self.sing
            out[inside] = val * (-self.sing / ri - 2 * self.amp * ri / (ri * ri - self.eps * self.eps) ** 2)
        else:
            radii, _ = self.table
            inside = (r > radii[0]) & (r < radii[-1])
            out[inside] = self.scale * _tabulated_interp(self).derivative()(r[inside])
        return out

    def mass(self) -> float:
        """Total integral of the kernel over R^d."""
        return kernel_mass(self)

    # ---- serialization ---------------------------------------------------
    def to_json(self) -> str:
        obj = {
            "family": self.family,
            "d": self.d,
            "eps": self.eps if math.isfinite(self.eps) else "inf",
            "normalization": self.normalization,
            "sigma": self.sigma,
            "gamma": self.gamma_exp,
            "nu": self.nu,
            "scale": self.scale,
        }
        if self.alpha is not None:
            obj["alpha"] = self.alpha
        if self.family == "bump":
            obj["amp"] = self.amp
            obj["sing"] = self.sing
        if self.eta is not None:
            obj["eta"] = self.eta
        if self.table is not None:
            obj["radii"] = list(self.table[0])
            obj["values"] = list(self.table[1])
        return json.dumps(obj, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        obj = json.loads(text)
        eps = obj.get("eps", "inf")
        eps = math.inf if eps in ("inf", None) else float(eps)
        table = None
        if "radii" in obj:
            table = (tuple(float(x) for x in obj["radii"]), tuple(float(x) for x in obj["values"]))
        return cls(
            family=obj["family"],
            d=int(obj.get("d", 2)),
            eps=eps,
            alpha=obj.get("alpha"),
            amp=float(obj.get("amp", 0.1)),
            sing=float(obj.get("sing", 1.5)),
            scale=float(obj.get("scale", 1.0)),
            normalization=obj.get("normalization", "none"),
            sigma=float(obj.get("sigma", 0.5)),
            gamma_exp=float(obj.get("gamma", 0.5)),
            nu=float(obj.get("nu", 0.5)),
            eta=obj.get("eta"),
            table=table,
        )


@lru_cache(maxsize=64)
def _tabulated_interp(spec: KernelSpec) -> PchipInterpolator:
    radii, values = spec.table
    return PchipInterpolator(np.asarray(radii), np.asarray(values), extrapolate=False)


def eval_kernel(spec: KernelSpec, z) -> float:
    """Kernel density rho(z) at a point z (radial: depends on |z| only)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    r = float(np.linalg.norm(z))
    if r == 0.0:
        raise DomainError("kernel is singular at the origin")
    return float(spec.profile(np.array([r]))[0])


@lru_cache(maxsize=64)
def kernel_mass(spec: KernelSpec) -> float:
    """Integral of rho over R^d via radial quadrature."""
    if spec.family == "fractional":
        return math.inf
    surf = sphere_area(spec.d)
    f = lambda r: spec.profile(np.array([r]))[0] * r ** (spec.d - 1)
    if spec.family == "truncated_fractional":
        # exact: scale * int_0^eps r^{-alpha} dr * |S^{d-1}|
        return surf * spec.scale * spec.eps ** (1 - spec.alpha) / (1 - spec.alpha)
    lo = spec.table[0][0] if spec.family == "tabulated" else 0.0
    val, _ = integrate.quad(f, lo, spec.eps, limit=400, epsabs=1e-14, epsrel=1e-10)
    if spec.family == "tabulated" and lo > 0:
        # extrapolated power-law head
        head, _ = integrate.quad(f, lo * 1e-8, lo, limit=200, epsabs=1e-14, epsrel=1e-8)
        val += head
    return surf * val


@lru_cache(maxsize=64)
def _potential_table(spec: KernelSpec):
    """Geometric-grid table of Q(r) = int_r^eps profile(t)/t dt with pchip in log-log."""
    eps = spec.eps
    rs = np.geomspace(eps * 1e-8, eps, _TABLE_SIZE)
    gauss_x, gauss_w = np.polynomial.legendre.leggauss(10)
    vals = np.zeros(rs.size)
    acc = 0.0
    for i in range(rs.size - 1, 0, -1):
        a, b = rs[i - 1], rs[i]
        nodes = (a + b) / 2 + (b - a) / 2 * gauss_x
        acc += float(np.sum(spec.profile(nodes) / nodes * gauss_w) * (b - a) / 2)
        vals[i - 1] = acc
    logr = np.log(rs)
    logv = np.log(np.maximum(vals, 1e-300))
    interp = PchipInterpolator(logr, logv, extrapolate=True)
    return rs[0], vals[0], interp


def potential_Q(spec: KernelSpec, r):
    """Radial potential Q(r) = int_r^inf profile(t)/t dt.

    Closed form for the fractional families; adaptive table otherwise.
    """
    scalar = np.isscalar(r)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise DomainError("potential requires r > 0")
    out = np.zeros_like(r)
    if spec.family in ("fractional", "truncated_fractional"):
        p = spec.d - 1 + spec.alpha
        if math.isinf(spec.eps):
            out = spec.scale * r ** -p / p
        else:
            m = r < spec.eps
            out[m] = spec.scale * (r[m] ** -p - spec.eps ** -p) / p
    else:
        r0, v0, interp = _potential_table(spec)
        m = (r < spec.eps) & (r >= r0)
        out[m] = np.exp(interp(np.log(r[m])))
        out[r < r0] = v0
    return float(out[0]) if scalar else out


def frac_constant(d: int, a: float) -> float:
    """c_{d,a} = 2^a pi^{-d/2} Gamma((d+a+1)/2) / Gamma((1-a)/2).

    Accepts negative a (the reconstruction constant c_{d,-alpha}).
    """
    if (1 - a) / 2 <= 0 and float(1 - a) / 2 == int((1 - a) / 2):
        raise DomainError(f"Gamma pole at a={a}")
    num = _gamma((d + a + 1) / 2)
    den = _gamma((1 - a) / 2)
    if not (math.isfinite(num) and math.isfinite(den)) or den == 0:
        raise DomainError(f"Gamma evaluation not finite for d={d}, a={a}")
    return 2.0 ** a * math.pi ** (-d / 2) * num / den


def localization_constant(d: int) -> float:
    """K_d: spherical average of |e_1 . sigma| over S^{d-1}."""
    if d == 1:
        return 1.0
    if d == 2:
        return 2.0 / math.pi
    if d == 3:
        return 0.5
    raise DomainError(f"unsupported dimension {d}")


@lru_cache(maxsize=32)
def profile_constant(d: int, alpha: float) -> float:
    """Small-mass isoperimetric profile constant c(d, alpha).

    Limit of P_eps(B_m) / m^{(d-alpha)/d} as m -> 0 for the truncated
    fractional kernel, in the same factor-2 normalization as the
    perimeter itself.  Computed by radial quadrature of the unit-ball
    covariogram.
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must be in (0,1)")
    vol = ball_volume(d)
    surf = sphere_area(d)
    f = lambda t: t ** (-1 - alpha) * (vol - float(ball_covariogram(d, t)))
    body, _ = integrate.quad(f, 0, 2, limit=400, epsabs=1e-13, epsrel=1e-11)
    tail = vol * 2.0 ** -alpha / alpha
    c_lit = vol ** (-(d - alpha) / d) * surf * (body + tail)
    return 2.0 * c_lit


def normalize_kernel(spec: KernelSpec, mode: str) -> KernelSpec:
    """Rescale so the kernel integrates to 1 ('unit_mass') or d ('mass_d')."""
    if mode not in ("unit_mass", "mass_d"):
        raise DomainError(f"unknown normalization mode {mode!r}")
    if spec.family == "fractional":
        raise UnsupportedKernelError("fractional kernels are not integrable")
    target = 1.0 if mode == "unit_mass" else float(spec.d)
    mass = kernel_mass(spec)
    if not math.isfinite(mass) or mass <= 0:
        raise UnsupportedKernelError("kernel mass is not finite and positive")
    return replace(spec, scale=spec.scale * target / mass, normalization=mode)


def rescale_kernel(spec: KernelSpec, s: float) -> KernelSpec:
    """Mass-preserving rescaling rho_s(z) = s^-d rho(z/s) (horizon *= s)."""
    if s <= 0:
        raise DomainError("rescaling factor must be positive")
    if not math.isfinite(spec.eps):
        raise PreconditionError("rescaling requires a finite horizon")
    if spec.family == "truncated_fractional":
        # s^-d (r/s)^-(d-1+a) = s^(a-1) r^-(d-1+a)
        return replace(spec, eps=spec.eps * s, scale=spec.scale * s ** (spec.alpha - 1))
    if spec.family == "bump":
        return replace(
            spec,
            eps=spec.eps * s,
            amp=spec.amp * s * s,
            scale=spec.scale * s ** (spec.sing - spec.d),
            eta=None if spec.eta is None else spec.eta * s,
        )
    radii, values = spec.table
    new_radii = tuple(r * s for r in radii)
    new_values = tuple(v * s ** -spec.d for v in values)
    return replace(spec, eps=spec.eps * s, table=(new_radii, new_values))


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    function: str
    interval: tuple[float, float]
    worst_ratio: float
    passed: bool


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...]
    h2_status: str = "unverified"
    exponents: dict = field(default_factory=dict)

    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def validate_hypotheses(spec: KernelSpec, samples, tol: float = 1e-9) -> HypothesisReport:
    """Sampled monotonicity checks of (H1), (H3), (H4).

    Reports, per hypothesis, the worst violation ratio over consecutive
    sample pairs; (H2) is never checked and is flagged 'unverified'.
    """
    samples = np.asarray(sorted(float(s) for s in samples))
    if samples.size < 2:
        raise PreconditionError("need at least 2 sample radii")
    if np.any(samples <= 0) or (math.isfinite(spec.eps) and np.any(samples >= spec.eps)):
        raise PreconditionError("sample radii must lie strictly inside (0, eps)")
    eta = spec.eta_eff
    d = spec.d

    def worst(values, direction: str) -> float:
        # 'noninc': ratio f(r_{i+1})/f(r_i) must be <= 1; report the max
        values = np.maximum(values, 1e-300)
        ratios = values[1:] / values[:-1]
        if direction == "nondec":
            ratios = 1.0 / ratios
        return float(ratios.max()) if ratios.size else 1.0

    prof = spec.profile(samples)
    in_eta = samples < eta
    checks = []

    f1 = samples ** (d - 2) * prof
    checks.append(HypothesisCheck("H1", "r^(d-2) rho(r) nonincreasing on (0, eps)",
                                  (float(samples[0]), float(samples[-1])),
                                  worst(f1, "noninc"), worst(f1, "noninc") <= 1 + tol))
    if in_eta.sum() >= 2:
        f1n = samples[in_eta] ** spec.nu * f1[in_eta]
        checks.append(HypothesisCheck("H1-nu", "r^nu f_rho(r) nonincreasing on (0, eta)",
                                      (float(samples[in_eta][0]), float(samples[in_eta][-1])),
                                      worst(f1n, "noninc"), worst(f1n, "noninc") <= 1 + tol))
        f3 = samples[in_eta] ** (d + spec.sigma - 1) * prof[in_eta]
        checks.append(HypothesisCheck("H3", "r^(d+sigma-1) rho(r) almost nonincreasing on (0, eta)",
                                      (float(samples[in_eta][0]), float(samples[in_eta][-1])),
                                      worst(f3, "noninc"), worst(f3, "noninc") <= 1 + tol))
        f4 = samples[in_eta] ** (d + spec.gamma_exp - 1) * prof[in_eta]
        checks.append(HypothesisCheck("H4", "r^(d+gamma-1) rho(r) almost nondecreasing on (0, eta)",
                                      (float(samples[in_eta][0]), float(samples[in_eta][-1])),
                                      worst(f4, "nondec"), worst(f4, "nondec") <= 1 + tol))
    return HypothesisReport(
        checks=tuple(checks),
        h2_status="unverified",
        exponents={"sigma": spec.sigma, "gamma": spec.gamma_exp, "nu": spec.nu, "eta": eta},
    )
