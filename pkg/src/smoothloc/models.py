"""Translation families f^lambda(x) = f(x - lambda).

Four one-dimensional shapes (Gaussian, Laplace, finite Gaussian mixture,
Gaussian plus sawtooth ripple) and their products, each with exact pdf,
cdf, quantile, and sampler.  Every family carries an explicit location
shift so estimators can form f^lambda without touching family parameters.

Instances are frozen and hashable; downstream quadrature caches key on
them directly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import ModelSpecError, PreconditionError
from .rng import RngSeed

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(u):
    return np.exp(-0.5 * np.square(u)) / _SQRT2PI


def _return_like(x, values):
    # scalar in -> float out, array in -> array out
    if np.ndim(x) == 0:
        return float(values)
    return values


class Density1d:
    """Shared behavior for the one-dimensional families.

    Subclasses implement the shape at shift 0 (_pdf_std and friends);
    this class applies the location shift and the generic quantile
    bisection.
    """

    shift: float

    # -- shape at shift 0, implemented per family ---------------------

    def _pdf_std(self, u):
        raise NotImplementedError

    def _cdf_std(self, u):
        raise NotImplementedError

    def _quantile_std(self, p):
        # generic bisection; closed-form families override
        lo, hi = self._bracket_std()
        return _bisect_cdf(self._cdf_std, p, lo, hi)

    def _bracket_std(self):
        raise NotImplementedError

    def _draw_std(self, gen: np.random.Generator, n: int):
        raise NotImplementedError

    def _mean_std(self) -> float:
        raise NotImplementedError

    def _variance_std(self) -> float:
        raise NotImplementedError

    def _breakpoints_std(self):
        # x-locations where the pdf is not smooth; () when C^inf
        return ()

    # -- public surface ------------------------------------------------

    def pdf(self, x):
        u = np.asarray(x, dtype=float) - self.shift
        return _return_like(x, self._pdf_std(u))

    def cdf(self, x):
        u = np.asarray(x, dtype=float) - self.shift
        return _return_like(x, self._cdf_std(u))

    def quantile(self, p):
        parr = np.asarray(p, dtype=float)
        if np.any(parr <= 0.0) or np.any(parr >= 1.0):
            raise PreconditionError("quantile requires 0 < p < 1")
        return _return_like(p, self._quantile_std(parr) + self.shift)

    def sample(self, n: int, seed: RngSeed):
        if n < 1:
            raise PreconditionError("sample requires n >= 1")
        gen = seed.generator()
        return self._draw_std(gen, int(n)) + self.shift

    def iqr(self) -> float:
        q = self._quantile_std(np.array([0.25, 0.75]))
        return float(q[1] - q[0])

    def mean(self) -> float:
        return self._mean_std() + self.shift

    def variance(self) -> float:
        return self._variance_std()

    def breakpoints(self):
        return tuple(b + self.shift for b in self._breakpoints_std())

    def shifted(self, c: float) -> "Density1d":
        from dataclasses import replace

        return replace(self, shift=self.shift + float(c))

    def quadrature_extent(self):
        """(lo_center, hi_center, sigma_max) for truncated integrals.

        Tail integrands decay at least like the widest component's
        Gaussian/Laplace tail outside [lo - k*sigma, hi + k*sigma].
        """
        raise NotImplementedError


def _bisect_cdf(cdf, p, lo, hi, tol=1e-10):
    p = np.asarray(p, dtype=float)
    flat = np.atleast_1d(p)
    a = np.full(flat.shape, float(lo))
    b = np.full(flat.shape, float(hi))
    # 60 halvings take any desk-scale bracket below 1e-10
    for _ in range(60):
        mid = 0.5 * (a + b)
        left = cdf(mid) < flat
        a = np.where(left, mid, a)
        b = np.where(left, b, mid)
        if np.max(b - a) <= tol:
            break
    return (0.5 * (a + b)).reshape(p.shape)


@dataclass(frozen=True)
class Gaussian(Density1d):
    mu: float
    sigma: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise PreconditionError("gaussian sigma must be > 0")

    def _pdf_std(self, u):
        return _phi((u - self.mu) / self.sigma) / self.sigma

    def _cdf_std(self, u):
        return special.ndtr((u - self.mu) / self.sigma)

    def _quantile_std(self, p):
        return self.mu + self.sigma * special.ndtri(p)

    def _draw_std(self, gen, n):
        return self.mu + self.sigma * gen.standard_normal(n)

    def _mean_std(self):
        return self.mu

    def _variance_std(self):
        return self.sigma**2

    def quadrature_extent(self):
        c = self.mu + self.shift
        return (c, c, self.sigma)


@dataclass(frozen=True)
class Laplace(Density1d):
    mu: float
    b: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.b > 0:
            raise PreconditionError("laplace scale b must be > 0")

    def _pdf_std(self, u):
        return np.exp(-np.abs(u - self.mu) / self.b) / (2.0 * self.b)

    def _cdf_std(self, u):
        t = (np.asarray(u, dtype=float) - self.mu) / self.b
        return np.where(t <= 0, 0.5 * np.exp(t), 1.0 - 0.5 * np.exp(-t))

    def _quantile_std(self, p):
        p = np.asarray(p, dtype=float)
        lower = self.mu + self.b * np.log(2.0 * p)
        upper = self.mu - self.b * np.log(2.0 * (1.0 - p))
        return np.where(p <= 0.5, lower, upper)

    def _draw_std(self, gen, n):
        return gen.laplace(self.mu, self.b, n)

    def _mean_std(self):
        return self.mu

    def _variance_std(self):
        return 2.0 * self.b**2

    def _breakpoints_std(self):
        return (self.mu,)

    def quadrature_extent(self):
        c = self.mu + self.shift
        # sd of Laplace is sqrt(2) b; tails are heavier than Gaussian but
        # 12 of these still leave mass ~ exp(-17)
        return (c, c, math.sqrt(2.0) * self.b)


@dataclass(frozen=True)
class GaussianMixture(Density1d):
    weights: tuple
    means: tuple
    sigmas: tuple
    shift: float = 0.0

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        m = tuple(float(v) for v in self.means)
        s = tuple(float(v) for v in self.sigmas)
        if not (len(w) == len(m) == len(s)) or len(w) == 0:
            raise PreconditionError("mixture needs matching, nonempty parameter tuples")
        if any(v <= 0 for v in w):
            raise PreconditionError("mixture weights must be positive")
        if abs(sum(w) - 1.0) > 1e-9:
            raise PreconditionError("mixture weights must sum to 1 within 1e-9")
        if any(v <= 0 for v in s):
            raise PreconditionError("mixture component sigmas must be > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sigmas", s)

    def _arrays(self):
        return (np.asarray(self.weights), np.asarray(self.means), np.asarray(self.sigmas))

    def _pdf_std(self, u):
        w, m, s = self._arrays()
        u = np.asarray(u, dtype=float)
        t = (u[..., None] - m) / s
        comp = np.exp(-0.5 * np.square(t)) / (s * _SQRT2PI)
        return np.sum(w * comp, axis=-1)

    def _cdf_std(self, u):
        w, m, s = self._arrays()
        u = np.asarray(u, dtype=float)
        return np.sum(w * special.ndtr((u[..., None] - m) / s), axis=-1)

    def _bracket_std(self):
        w, m, s = self._arrays()
        return (float(np.min(m - 14.0 * s)), float(np.max(m + 14.0 * s)))

    def _draw_std(self, gen, n):
        w, m, s = self._arrays()
        comp = gen.choice(len(self.weights), size=n, p=w / w.sum())
        return m[comp] + s[comp] * gen.standard_normal(n)

    def _mean_std(self):
        w, m, _ = self._arrays()
        return float(np.sum(w * m))

    def _variance_std(self):
        w, m, s = self._arrays()
        mu = np.sum(w * m)
        return float(np.sum(w * (s**2 + m**2)) - mu**2)

    def quadrature_extent(self):
        _, m, s = self._arrays()
        return (
            float(np.min(m)) + self.shift,
            float(np.max(m)) + self.shift,
            float(np.max(s)),
        )


def _tri_wave(t):
    # odd triangle wave, period 2, slope +-1, peaks +-1/2 at half-integers
    return np.abs(np.mod(t - 0.5, 2.0) - 1.0) - 0.5


def _tri_wave_integral(t):
    # G(t) = int_0^t tri(s) ds; even, period 2, ranges [0, 1/4]
    tau = np.mod(t + 0.5, 2.0) - 0.5
    return np.where(tau < 0.5, 0.5 * tau * tau, 0.25 - 0.5 * np.square(tau - 1.0))


@dataclass(frozen=True)
class GaussianSawtooth(Density1d):
    """Standard Gaussian plus a triangular ripple of period 2w.

    The ripple has peak amplitude w*slope/2, integrates to zero over
    each tooth, and occupies whole teeth inside [-1, 1], so the total
    mass stays exactly 1 and the density stays positive whenever
    w*slope/2 <= 0.2 < min standard-normal pdf on [-1, 1].
    slope = 0 degenerates to the pure Gaussian (control runs).
    """

    w: float
    slope: float
    shift: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.w <= 0.5:
            raise PreconditionError("sawtooth tooth width w must be in (0, 0.5]")
        if self.slope < 0:
            raise PreconditionError("sawtooth slope must be >= 0")
        if self.w * self.slope / 2.0 > 0.2 + 1e-12:
            raise PreconditionError(
                "sawtooth amplitude w*slope/2 must be <= 0.2 to keep the pdf positive"
            )

    @property
    def n_teeth(self) -> int:
        # whole teeth on each side of 0 inside [-1, 1]
        return int(math.floor(1.0 / self.w + 1e-9))

    def _ripple(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        self._add_ripple(u.reshape(-1), out.reshape(-1))
        return out

    def _add_ripple(self, flat_u, flat_out):
        # ripple support is narrow; evaluate the wave only inside it
        inside = np.abs(flat_u) <= self.n_teeth * self.w
        if np.any(inside):
            flat_out[inside] += self.w * self.slope * _tri_wave(flat_u[inside] / self.w)

    def _pdf_std(self, u):
        u = np.asarray(u, dtype=float)
        out = _phi(u)
        self._add_ripple(u.reshape(-1), out.reshape(-1))
        return out

    def _cdf_std(self, u):
        u = np.asarray(u, dtype=float)
        edge = self.n_teeth * self.w
        t = np.clip(u, -edge, edge) / self.w
        ripple_mass = (
            self.w**2
            * self.slope
            * (_tri_wave_integral(t) - _tri_wave_integral(np.float64(self.n_teeth)))
        )
        return special.ndtr(u) + ripple_mass

    def _bracket_std(self):
        return (-14.0, 14.0)

    def _draw_std(self, gen, n):
        # rejection from the Gaussian envelope; batch size depends only
        # on the remaining count, so the accepted stream is reproducible
        amp = 0.5 * self.w * self.slope
        m_env = 1.0 + amp / float(_phi(1.0))
        out = np.empty(n)
        k = 0
        while k < n:
            batch = max(1024, int(1.2 * (n - k) * m_env) + 1)
            y = gen.standard_normal(batch)
            u = gen.random(batch)
            accepted = y[u * m_env * _phi(y) <= self._pdf_std(y)]
            take = min(n - k, accepted.shape[0])
            out[k : k + take] = accepted[:take]
            k += take
        return out

    def _mean_std(self):
        # int x*ripple dx = -int Ripple(x) dx by parts; the tooth-count
        # parity decides the sign of the leftover quadratic areas
        nt = self.n_teeth
        sign = -1.0 if nt % 2 == 0 else 1.0
        return sign * self.w**3 * self.slope * nt / 4.0

    def _variance_std(self):
        # int x^2 * ripple dx vanishes (odd integrand after parts)
        return 1.0 - self._mean_std() ** 2

    def _breakpoints_std(self):
        nt = self.n_teeth
        pts = [self.w * (k + 0.5) for k in range(-nt, nt)]
        pts += [-nt * self.w, nt * self.w]
        return tuple(sorted(pts))

    def quadrature_extent(self):
        return (self.shift, self.shift, 1.0)


@dataclass(frozen=True)
class ProductDensity:
    """Product of independent 1-d components; the high-d model."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1 or not all(isinstance(c, Density1d) for c in comps):
            raise PreconditionError("product needs >= 1 one-dimensional components")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return len(self.components)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise PreconditionError(f"expected points of dimension {self.dim}")
        out = np.ones(pts.shape[0])
        for j, c in enumerate(self.components):
            out *= c.pdf(pts[:, j])
        return float(out[0]) if squeeze else out

    def sample(self, n: int, seed: RngSeed):
        if n < 1:
            raise PreconditionError("sample requires n >= 1")
        gen = seed.generator()
        cols = [c._draw_std(gen, int(n)) + c.shift for c in self.components]
        return np.column_stack(cols)

    def covariance(self):
        return np.diag([c.variance() for c in self.components])

    def mean(self):
        return np.array([c.mean() for c in self.components])

    def shift_vector(self):
        return np.array([c.shift for c in self.components])

    def shifted(self, c):
        c = np.broadcast_to(np.asarray(c, dtype=float), (self.dim,))
        return ProductDensity(
            tuple(comp.shifted(ci) for comp, ci in zip(self.components, c))
        )


DensityHd = ProductDensity


# -- free-function forms used throughout tests and the harness --------


def pdf(model, x):
    return model.pdf(x)


def cdf(model, x):
    return model.cdf(x)


def quantile(model, p):
    return model.quantile(p)


def sample(model, n, seed):
    return model.sample(n, seed)


def iqr(model):
    return model.iqr()


def covariance(model: ProductDensity):
    return model.covariance()


# -- model-spec grammar ------------------------------------------------
#
#   gaussian(mu,sigma) | laplace(mu,b) | sawtooth(w,delta)
#   mixture(w1*gaussian(m1,s1)+w2*gaussian(m2,s2)+...)
#   product(SPEC^d) | product(SPEC,SPEC,...)
#
# Whitespace-insensitive; numbers decimal or scientific.

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<sym>[(),*+^-])"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ModelSpecError(f"unexpected character {text[pos]!r}", position=pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.take()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise ModelSpecError(f"expected {want!r}, found {tok[1] or 'end of input'!r}",
                                 position=tok[2])
        return tok

    def number(self) -> float:
        sign = 1.0
        kind, text, pos = self.peek()
        if kind == "sym" and text in "+-":
            self.take()
            sign = -1.0 if text == "-" else 1.0
            kind, text, pos = self.peek()
        if kind != "num":
            raise ModelSpecError(f"expected a number, found {text or 'end of input'!r}",
                                 position=pos)
        self.take()
        return sign * float(text)

    def integer(self) -> int:
        kind, text, pos = self.peek()
        v = self.number()
        if v != int(v) or v < 1:
            raise ModelSpecError("expected a positive integer", position=pos)
        return int(v)

    def density(self):
        kind, name, pos = self.take()
        if kind != "name":
            raise ModelSpecError(f"expected a family name, found {name or 'end of input'!r}",
                                 position=pos)
        if name == "gaussian":
            mu, sigma = self._two_args()
            return self._validated(Gaussian, pos, mu, sigma)
        if name == "laplace":
            mu, b = self._two_args()
            return self._validated(Laplace, pos, mu, b)
        if name == "sawtooth":
            w, delta = self._two_args()
            return self._validated(GaussianSawtooth, pos, w, delta)
        if name == "mixture":
            return self._mixture(pos)
        if name == "product":
            return self._product(pos)
        raise ModelSpecError(f"unknown family {name!r}", position=pos)

    def _two_args(self):
        self.expect("sym", "(")
        a = self.number()
        self.expect("sym", ",")
        b = self.number()
        self.expect("sym", ")")
        return a, b

    def _validated(self, ctor, pos, *args):
        try:
            return ctor(*args)
        except PreconditionError as exc:
            raise ModelSpecError(str(exc), position=pos) from exc

    def _mixture(self, pos):
        self.expect("sym", "(")
        weights, means, sigmas = [], [], []
        while True:
            weights.append(self.number())
            self.expect("sym", "*")
            _, name, npos = self.take()
            if name != "gaussian":
                raise ModelSpecError("mixture components must be gaussian", position=npos)
            m, s = self._two_args()
            means.append(m)
            sigmas.append(s)
            kind, text, _ = self.peek()
            if kind == "sym" and text == "+":
                self.take()
                continue
            break
        self.expect("sym", ")")
        return self._validated(GaussianMixture, pos,
                               tuple(weights), tuple(means), tuple(sigmas))

    def _product(self, pos):
        self.expect("sym", "(")
        first = self.density()
        if isinstance(first, ProductDensity):
            raise ModelSpecError("product components must be one-dimensional", position=pos)
        kind, text, _ = self.peek()
        if kind == "sym" and text == "^":
            self.take()
            d = self.integer()
            self.expect("sym", ")")
            return ProductDensity((first,) * d)
        comps = [first]
        while True:
            kind, text, cpos = self.peek()
            if kind == "sym" and text == ",":
                self.take()
                comp = self.density()
                if isinstance(comp, ProductDensity):
                    raise ModelSpecError("product components must be one-dimensional",
                                         position=cpos)
                comps.append(comp)
                continue
            break
        self.expect("sym", ")")
        return ProductDensity(tuple(comps))


def parse_model(text: str):
    """Parse a model-spec string into a Density1d or ProductDensity."""
    p = _Parser(text)
    model = p.density()
    kind, tok, pos = p.peek()
    if kind != "end":
        raise ModelSpecError(f"trailing input {tok!r}", position=pos)
    return model


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def format_model(model) -> str:
    """Canonical spec string; inverse of parse_model for shift-0 models."""
    if isinstance(model, ProductDensity):
        comps = model.components
        if len(comps) > 1 and all(c == comps[0] for c in comps[1:]):
            return f"product({format_model(comps[0])}^{len(comps)})"
        return "product(" + ",".join(format_model(c) for c in comps) + ")"
    if getattr(model, "shift", 0.0) != 0.0:
        raise ModelSpecError("the model-spec grammar cannot express a location shift")
    if isinstance(model, Gaussian):
        return f"gaussian({_fmt_num(model.mu)},{_fmt_num(model.sigma)})"
    if isinstance(model, Laplace):
        return f"laplace({_fmt_num(model.mu)},{_fmt_num(model.b)})"
    if isinstance(model, GaussianSawtooth):
        return f"sawtooth({_fmt_num(model.w)},{_fmt_num(model.slope)})"
    if isinstance(model, GaussianMixture):
        terms = [
            f"{_fmt_num(w)}*gaussian({_fmt_num(m)},{_fmt_num(s)})"
            for w, m, s in zip(model.weights, model.means, model.sigmas)
        ]
        return "mixture(" + "+".join(terms) + ")"
    raise ModelSpecError(f"cannot format {type(model).__name__}")

