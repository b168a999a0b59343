"""Update functions: Lipschitz maps for first-order steps, strongly convex penalties for saddle steps.

Every oracle is called as ``f(z, history, aux)`` where ``history`` and ``aux``
are sequences of column vectors (index 0 is the first iterate / first
auxiliary draw; negative indices count from the latest). Arrays may carry
leading batch axes, so the same oracle evaluates one empirical vector of
shape ``(m,)`` or a whole Monte Carlo bank of shape ``(R, m)``.

Separable maps can act in coordinate scale (``normalized=True``): a vector
with N(0, 1/m) entries is multiplied by sqrt(m), the scalar function is
applied, and the result is divided back by sqrt(m).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidArgument, SolverFailure


def _index_map(spec):
    """Column-coefficient mapping from a dict (string or int keys) or a list of pairs."""
    if spec is None:
        return ()
    items = spec.items() if isinstance(spec, dict) else spec
    out = []
    for key, coef in items:
        out.append((int(key), float(coef)))
    return tuple(out)


@dataclass(frozen=True)
class LinearForm:
    """a*z + sum_j c_j history[j] + sum_j b_j aux[j] + const * 1/sqrt(m)."""

    z: float = 0.0
    history: tuple = ()
    aux: tuple = ()
    const: float = 0.0

    @classmethod
    def from_params(cls, params, prefix="", default_z=0.0, allow_z=True):
        z = params.get(prefix + "z", default_z)
        if not allow_z and z:
            raise InvalidArgument("this oracle does not take the matrix-product argument")
        return cls(z=float(z), history=_index_map(params.get(prefix + "history")),
                   aux=_index_map(params.get(prefix + "aux")),
                   const=float(params.get(prefix + "const", 0.0)))

    def __call__(self, z, history, aux, shape=None):
        out = None

        def acc(term):
            nonlocal out
            out = term.copy() if out is None else out + term

        if self.z and z is not None:
            acc(self.z * z)
        for j, c in self.history:
            acc(c * history[j])
        for j, c in self.aux:
            acc(c * aux[j])
        if shape is None:
            shape = _shape_of(z, history, aux)
        if out is None:
            out = np.zeros(shape)
        if self.const:
            out = out + self.const / np.sqrt(shape[-1])
        return out

    @property
    def bound(self):
        return abs(self.z) + sum(abs(c) for _, c in self.history) + sum(abs(c) for _, c in self.aux)

    @property
    def max_history(self):
        return max((j + 1 if j >= 0 else -j for j, _ in self.history), default=0)

    @property
    def max_aux(self):
        return max((j + 1 if j >= 0 else -j for j, _ in self.aux), default=0)

    def references(self):
        return [("history", j) for j, _ in self.history] + [("aux", j) for j, _ in self.aux]

    def describe(self, prefix=""):
        out = {}
        if self.z:
            out[prefix + "z"] = self.z
        if self.history:
            out[prefix + "history"] = {str(j): c for j, c in self.history}
        if self.aux:
            out[prefix + "aux"] = {str(j): c for j, c in self.aux}
        if self.const:
            out[prefix + "const"] = self.const
        return out


def _shape_of(z, history, aux):
    if z is not None:
        return np.shape(z)
    if len(history):
        return np.shape(history[0])
    if len(aux):
        return np.shape(aux[0])
    raise InvalidArgument("cannot infer dimension: no argument, history or auxiliary column")


def _coord(x, normalized):
    return np.sqrt(x.shape[-1]) if normalized else 1.0


# ---------------------------------------------------------------- first-order maps


class LipschitzMap:
    """Base class for first-order update maps f(z; history, aux)."""

    id = "custom"
    lipschitz_bound = np.inf

    def __call__(self, z, history=(), aux=()):
        raise NotImplementedError

    def describe(self):
        return {"id": self.id}

    def references(self):
        return []

    @property
    def uses_argument(self):
        return True


class Identity(LipschitzMap):
    id = "identity"
    lipschitz_bound = 1.0

    def __call__(self, z, history=(), aux=()):
        return np.array(z, dtype=float, copy=True)


class LinearCombo(LipschitzMap):
    id = "linear-combo"

    def __init__(self, form):
        self.form = form
        self.lipschitz_bound = form.bound

    def __call__(self, z, history=(), aux=()):
        return self.form(z, history, aux)

    def describe(self):
        return {"id": self.id, **self.form.describe()}

    def references(self):
        return self.form.references()

    @property
    def uses_argument(self):
        return self.form.z != 0.0


class SoftThreshold(LipschitzMap):
    """Soft thresholding at level t of a linear form of the inputs."""

    id = "soft-threshold"

    def __init__(self, t, form=LinearForm(z=1.0), normalized=False):
        if t < 0:
            raise InvalidArgument("threshold must be non-negative")
        self.t, self.form, self.normalized = float(t), form, bool(normalized)
        self.lipschitz_bound = form.bound

    def __call__(self, z, history=(), aux=()):
        w = self.form(z, history, aux)
        t = self.t / _coord(w, self.normalized)
        return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)

    def describe(self):
        return {"id": self.id, "t": self.t, "normalized": self.normalized, **self.form.describe()}

    def references(self):
        return self.form.references()


class ScaledNonlinearity(LipschitzMap):
    """a * psi(b * w) with psi in {tanh, sign} applied to a linear form w."""

    id = "scaled-nonlinearity"

    def __init__(self, kind="tanh", a=1.0, b=1.0, form=LinearForm(z=1.0), normalized=False):
        if kind not in ("tanh", "sign"):
            raise InvalidArgument(f"unknown nonlinearity {kind!r}")
        self.kind, self.a, self.b = kind, float(a), float(b)
        self.form, self.normalized = form, bool(normalized)
        # sign is discontinuous; it is accepted but carries no finite bound
        self.lipschitz_bound = abs(self.a * self.b) * form.bound if kind == "tanh" else np.inf

    def __call__(self, z, history=(), aux=()):
        w = self.form(z, history, aux)
        s = _coord(w, self.normalized)
        psi = np.tanh(self.b * s * w) if self.kind == "tanh" else np.sign(w)
        return self.a * psi / s

    def describe(self):
        return {"id": self.id, "kind": self.kind, "a": self.a, "b": self.b,
                "normalized": self.normalized, **self.form.describe()}

    def references(self):
        return self.form.references()


# ---------------------------------------------------------------- saddle penalties


class ConvexPenalty:
    """A mu-strongly convex, L-smooth function phi(x; history, aux).

    Subclasses provide ``gradient``; separable ones may add ``hessian_diag``
    so that prox and shifted solves use elementwise Newton steps. Diagonal
    quadratics advertise themselves through ``diagonal_quadratic``, which the
    empirical saddle solver uses for an exact linear solve.
    """

    id = "custom"
    mu = 1.0
    L = 1.0
    grad_zero_bound = np.inf
    solve_tol = 1e-12
    max_solve_iter = 10000

    def value(self, x, history=(), aux=()):
        raise NotImplementedError

    def gradient(self, x, history=(), aux=()):
        raise NotImplementedError

    def hessian_diag(self, x, history=(), aux=()):
        return None

    def diagonal_quadratic(self, history=(), aux=(), shape=None):
        """(a, t) with gradient(x) = a*x - t, or None when phi is not a diagonal quadratic."""
        return None

    def solve_shifted(self, r, c, history=(), aux=()):
        """The x with c*x + gradient(x) = r, i.e. the minimizer of phi + c/2 |x|^2 - <r, x>."""
        quad = self.diagonal_quadratic(history, aux, np.shape(r))
        if quad is not None:
            a, t = quad
            return (r + t) / (a + c)
        x = np.zeros_like(r)
        scale = 1.0 + np.abs(r)
        for it in range(self.max_solve_iter):
            res = c * x + self.gradient(x, history, aux) - r
            if np.max(np.abs(res) / scale) <= self.solve_tol:
                return x
            h = self.hessian_diag(x, history, aux)
            x = x - res / (c + (self.L if h is None else h))
        raise SolverFailure(f"{self.id}: shifted gradient solve did not converge",
                            residuals=[float(np.max(np.abs(res)))])

    def prox(self, x, tau, history=(), aux=()):
        """argmin_p phi(p) + |p - x|^2 / (2 tau)."""
        if tau <= 0:
            raise InvalidArgument("prox parameter must be positive")
        return self.solve_shifted(np.asarray(x, dtype=float) / tau, 1.0 / tau, history, aux)

    def grad_inverse(self, r, history=(), aux=()):
        return self.solve_shifted(np.asarray(r, dtype=float), 0.0, history, aux)

    def minimizer(self, history=(), aux=(), shape=None):
        return self.grad_inverse(np.zeros(shape), history, aux)

    def describe(self):
        return {"id": self.id}

    def references(self):
        return []


def _declared(obj, mu, L):
    if mu is not None:
        obj.mu = float(mu)
    if L is not None:
        obj.L = float(L)


class QuadraticPenalty(ConvexPenalty):
    """gamma/2 |x|^2 - <t, x> with a linear tilt t built from history/aux columns."""

    id = "quadratic-penalty"

    def __init__(self, gamma, tilt=LinearForm(), mu=None, L=None):
        if not gamma > 0 or not np.isfinite(gamma):
            raise InvalidArgument(f"{self.id}: need 0 < gamma < inf, got {gamma}")
        if tilt.z:
            raise InvalidArgument("penalty tilts cannot reference the matrix-product argument")
        self.gamma, self.tilt = float(gamma), tilt
        self.mu = self.L = self.gamma
        _declared(self, mu, L)

    def _t(self, history, aux, shape):
        return self.tilt(None, history, aux, shape=shape)

    def value(self, x, history=(), aux=()):
        return 0.5 * self.gamma * np.sum(x * x, -1) - np.sum(self._t(history, aux, x.shape) * x, -1)

    def gradient(self, x, history=(), aux=()):
        return self.gamma * x - self._t(history, aux, np.shape(x))

    def hessian_diag(self, x, history=(), aux=()):
        return np.full(np.shape(x), self.gamma)

    def diagonal_quadratic(self, history=(), aux=(), shape=None):
        return self.gamma, self._t(history, aux, shape)

    def describe(self):
        return {"id": self.id, "gamma": self.gamma, **self.tilt.describe()}

    def references(self):
        return self.tilt.references()


class RidgePenalty(QuadraticPenalty):
    id = "ridge-penalty"

    def __init__(self, lam, mu=None, L=None):
        super().__init__(lam, LinearForm(), mu=mu, L=L)

    def describe(self):
        return {"id": self.id, "lam": self.gamma}


class LogcoshPenalty(ConvexPenalty):
    """(a/2)|x|^2 + (b/m) sum log cosh(sqrt(m) x_i) - <t, x>; strongly convex and smooth, not quadratic."""

    id = "logcosh-penalty"

    def __init__(self, a, b, tilt=LinearForm(), mu=None, L=None):
        if not a > 0 or b < 0:
            raise InvalidArgument(f"{self.id}: need a > 0 and b >= 0")
        self.a, self.b, self.tilt = float(a), float(b), tilt
        self.mu, self.L = self.a, self.a + self.b
        _declared(self, mu, L)

    def value(self, x, history=(), aux=()):
        s = np.sqrt(x.shape[-1])
        t = self.tilt(None, history, aux, shape=x.shape)
        lc = np.logaddexp(s * x, -s * x) - np.log(2.0)
        return 0.5 * self.a * np.sum(x * x, -1) + self.b * np.sum(lc, -1) / s**2 - np.sum(t * x, -1)

    def gradient(self, x, history=(), aux=()):
        s = np.sqrt(np.shape(x)[-1])
        t = self.tilt(None, history, aux, shape=np.shape(x))
        return self.a * x + self.b * np.tanh(s * x) / s - t

    def hessian_diag(self, x, history=(), aux=()):
        s = np.sqrt(np.shape(x)[-1])
        return self.a + self.b / np.cosh(s * x) ** 2

    def describe(self):
        return {"id": self.id, "a": self.a, "b": self.b, **self.tilt.describe()}

    def references(self):
        return self.tilt.references()


class ConjugateQuadraticLoss(ConvexPenalty):
    """|D^{-1} u|^2 / 2 + <D^{-1} r, u> with D and r built from past columns.

    D is diagonal with entries dmin + (dmax - dmin) * sigmoid(sqrt(m) s_i) for
    a linear form s of the history, which plays the role of derivatives of a
    strictly increasing link at the previous fit.
    """

    id = "conjugate-quadratic-loss"

    def __init__(self, dmin, dmax, scale_form=LinearForm(), resid_form=LinearForm(), mu=None, L=None):
        if not 0 < dmin <= dmax < np.inf:
            raise InvalidArgument(f"{self.id}: need 0 < dmin <= dmax < inf")
        self.dmin, self.dmax = float(dmin), float(dmax)
        self.scale_form, self.resid_form = scale_form, resid_form
        self.mu, self.L = 1.0 / self.dmax**2, 1.0 / self.dmin**2
        _declared(self, mu, L)

    def _dr(self, history, aux, shape):
        s = self.scale_form(None, history, aux, shape=shape)
        D = self.dmin + (self.dmax - self.dmin) * expit(np.sqrt(shape[-1]) * s)
        r = self.resid_form(None, history, aux, shape=shape)
        return D, r

    def value(self, x, history=(), aux=()):
        D, r = self._dr(history, aux, x.shape)
        return 0.5 * np.sum((x / D) ** 2, -1) + np.sum(r / D * x, -1)

    def gradient(self, x, history=(), aux=()):
        D, r = self._dr(history, aux, np.shape(x))
        return x / D**2 + r / D

    def diagonal_quadratic(self, history=(), aux=(), shape=None):
        D, r = self._dr(history, aux, shape)
        return 1.0 / D**2, -r / D

    def describe(self):
        return {"id": self.id, "dmin": self.dmin, "dmax": self.dmax,
                **self.scale_form.describe("scale_"), **self.resid_form.describe()}

    def references(self):
        return self.scale_form.references() + self.resid_form.references()


def em_weight(s, y, sigma):
    """Posterior weight of the + component in a symmetric two-component mixture of regressions."""
    return expit(2.0 * y * s / sigma**2)


class WeightedLSTilt(ConvexPenalty):
    """|u|^2 / 2 + <y * w(s, y), u> where y and the previous fit s are linear forms of past columns.

    The weight is evaluated in coordinate scale; ``weight`` is one of
    ``em`` (mixture-of-regressions posterior), ``sign`` (alternating
    minimization for phase retrieval) or ``one``.
    """

    id = "weighted-ls-tilt"

    def __init__(self, y_form, fit_form=LinearForm(), weight="em", sigma=1.0, mu=None, L=None):
        if weight not in ("em", "sign", "one"):
            raise InvalidArgument(f"unknown weight {weight!r}")
        self.y_form, self.fit_form, self.weight, self.sigma = y_form, fit_form, weight, float(sigma)
        self.mu = self.L = 1.0
        _declared(self, mu, L)

    def _tilt(self, history, aux, shape):
        y = self.y_form(None, history, aux, shape=shape)
        s = self.fit_form(None, history, aux, shape=shape)
        c = np.sqrt(shape[-1])
        if self.weight == "em":
            w = em_weight(c * s, c * y, self.sigma)
        elif self.weight == "sign":
            w = np.sign(s)
        else:
            w = np.ones(shape)
        return y * w

    def value(self, x, history=(), aux=()):
        return 0.5 * np.sum(x * x, -1) + np.sum(self._tilt(history, aux, x.shape) * x, -1)

    def gradient(self, x, history=(), aux=()):
        return x + self._tilt(history, aux, np.shape(x))

    def diagonal_quadratic(self, history=(), aux=(), shape=None):
        return 1.0, -self._tilt(history, aux, shape)

    def describe(self):
        return {"id": self.id, "weight": self.weight, "sigma": self.sigma,
                **self.y_form.describe("y_"), **self.fit_form.describe()}

    def references(self):
        return self.y_form.references() + self.fit_form.references()


# ---------------------------------------------------------------- registry


def _form(params, **kw):
    return LinearForm.from_params(params, **kw)


_BUILTINS = {
    "identity": lambda p: Identity(),
    "linear-combo": lambda p: LinearCombo(_form(p)),
    "soft-threshold": lambda p: SoftThreshold(p.get("t", 1.0), _form(p, default_z=1.0),
                                              p.get("normalized", False)),
    "scaled-nonlinearity": lambda p: ScaledNonlinearity(p.get("kind", "tanh"), p.get("a", 1.0),
                                                        p.get("b", 1.0), _form(p, default_z=1.0),
                                                        p.get("normalized", False)),
    "quadratic-penalty": lambda p: QuadraticPenalty(p.get("gamma", 1.0), _form(p, allow_z=False),
                                                    p.get("mu"), p.get("L")),
    "ridge-penalty": lambda p: RidgePenalty(p.get("lam", 1.0), p.get("mu"), p.get("L")),
    "logcosh-penalty": lambda p: LogcoshPenalty(p.get("a", 1.0), p.get("b", 1.0),
                                                _form(p, allow_z=False), p.get("mu"), p.get("L")),
    "conjugate-quadratic-loss": lambda p: ConjugateQuadraticLoss(
        p.get("dmin", 0.5), p.get("dmax", 2.0), _form(p, prefix="scale_", allow_z=False),
        _form(p, allow_z=False), p.get("mu"), p.get("L")),
    "weighted-ls-tilt": lambda p: WeightedLSTilt(
        _form(p, prefix="y_", allow_z=False), _form(p, allow_z=False), p.get("weight", "em"),
        p.get("sigma", 1.0), p.get("mu"), p.get("L")),
}

MAP_IDS = ("identity", "linear-combo", "soft-threshold", "scaled-nonlinearity")
PENALTY_IDS = ("quadratic-penalty", "ridge-penalty", "logcosh-penalty",
               "conjugate-quadratic-loss", "weighted-ls-tilt")


def builtin(id, params=None):
    """Construct a registered oracle from its id and a parameter mapping."""
    params = dict(params or {})
    params.pop("id", None)
    if id not in _BUILTINS:
        raise InvalidArgument(f"unknown update id {id!r}; known: {sorted(_BUILTINS)}")
    return _BUILTINS[id](params)


def from_descriptor(desc):
    desc = dict(desc)
    return builtin(desc.pop("id"), desc)


# ---------------------------------------------------------------- validation


@dataclass
class OracleReport:
    prox_residual: float
    monotonicity_gap: float
    smoothness_gap: float
    grad_zero: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _column_need(p):
    nh = na = 0
    for kind, j in p.references():
        need = j + 1 if j >= 0 else -j
        if kind == "history":
            nh = max(nh, need)
        else:
            na = max(na, need)
    return nh, na


def validate_oracle(p, trial_count=100, m=50, seed=0):
    """Check prox/gradient consistency, strong monotonicity and smoothness on random inputs.

    Violations are collected in the report rather than raised.
    """
    rng = np.random.default_rng(seed)
    nh, na = _column_need(p)
    worst_prox = worst_mono = worst_smooth = 0.0
    grad_zero = 0.0
    for _ in range(trial_count):
        hist = [rng.standard_normal(m) / np.sqrt(m) for _ in range(nh)]
        aux = [rng.standard_normal(m) / np.sqrt(m) for _ in range(na)]
        x = 2.0 * rng.standard_normal(m) / np.sqrt(m)
        tau = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
        q = p.prox(x, tau, hist, aux)
        res = np.linalg.norm(q + tau * p.gradient(q, hist, aux) - x) / (1.0 + np.linalg.norm(x))
        worst_prox = max(worst_prox, float(res))
        a = rng.standard_normal(m) / np.sqrt(m)
        b = rng.standard_normal(m) / np.sqrt(m)
        diff = a - b
        inner = float((p.gradient(a, hist, aux) - p.gradient(b, hist, aux)) @ diff)
        sq = float(diff @ diff)
        worst_mono = max(worst_mono, (p.mu * sq - inner) / sq)
        worst_smooth = max(worst_smooth, (inner - p.L * sq) / sq)
        grad_zero = max(grad_zero, float(np.linalg.norm(p.gradient(np.zeros(m), hist, aux))))
    violations = []
    if worst_prox > 1e-9:
        violations.append(f"prox/gradient residual {worst_prox:.3g}")
    if worst_mono > 1e-9:
        violations.append(f"strong monotonicity fails by {worst_mono:.3g} (declared mu={p.mu})")
    if worst_smooth > 1e-9:
        violations.append(f"smoothness fails by {worst_smooth:.3g} (declared L={p.L})")
    if grad_zero > p.grad_zero_bound:
        violations.append(f"|grad(0)| = {grad_zero:.3g} exceeds declared bound")
    return OracleReport(worst_prox, worst_mono, worst_smooth, grad_zero, violations)


def scalar_prox(penalty):
    """prox(x, tau) of an untilted separable penalty viewed as a scalar function."""

    def prox(x, tau):
        x = np.asarray(x, dtype=float)
        return penalty.prox(x[..., None], tau)[..., 0]

    return prox


def conjugate_prox(prox_conj):
    """prox of rho from the prox of its convex conjugate, by Moreau's identity."""

    def prox(x, tau):
        return x - tau * prox_conj(x / tau, 1.0 / tau)

    return prox
