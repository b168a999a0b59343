"""Declarative iteration plans and a few ready-made encodings of classical algorithms."""

import hashlib
import json
from dataclasses import dataclass, field

from .errors import InvalidArgument
from .updates import (ConvexPenalty, LinearCombo, LinearForm, LipschitzMap, LogcoshPenalty,
                      QuadraticPenalty, RidgePenalty, ScaledNonlinearity, SoftThreshold,
                      from_descriptor)

INIT, FIRST_ORDER, SADDLE = "init", "first-order", "saddle"


@dataclass
class Step:
    kind: str
    u: object
    v: object

    def __post_init__(self):
        if self.kind in (INIT, FIRST_ORDER):
            ok = isinstance(self.u, LipschitzMap) and isinstance(self.v, LipschitzMap)
        elif self.kind == SADDLE:
            ok = isinstance(self.u, ConvexPenalty) and isinstance(self.v, ConvexPenalty)
        else:
            raise InvalidArgument(f"unknown step kind {self.kind!r}")
        if not ok:
            raise InvalidArgument(f"{self.kind} step got oracles of the wrong type")

    def describe(self):
        return {"kind": self.kind, "u": self.u.describe(), "v": self.v.describe()}

    @classmethod
    def from_descriptor(cls, desc):
        return cls(desc["kind"], from_descriptor(desc["u"]), from_descriptor(desc["v"]))


@dataclass
class UpdatePlan:
    """Step 0 initializes (u_1, v_1) from auxiliary draws; later steps are first-order or saddle."""

    steps: list
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.steps or self.steps[0].kind != INIT:
            raise InvalidArgument("a plan starts with an init step")
        if any(s.kind == INIT for s in self.steps[1:]):
            raise InvalidArgument("only the first step may be an init step")
        for i, s in enumerate(self.steps):
            for side in ("u", "v"):
                for kind, j in getattr(s, side).references():
                    limit = i if kind == "history" else i + 1
                    if not (-limit <= j < limit):
                        raise InvalidArgument(
                            f"step {i + 1} ({s.kind}) {side}-oracle references {kind} column {j}, "
                            f"but only {limit} are available")

    @property
    def T(self):
        return len(self.steps)

    @property
    def kinds(self):
        return [s.kind for s in self.steps]

    @property
    def all_first_order(self):
        return all(s.kind != SADDLE for s in self.steps)

    def describe(self):
        return {"name": self.name, "steps": [s.describe() for s in self.steps]}

    def signature(self):
        blob = json.dumps([s.describe() for s in self.steps], sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_descriptor(cls, desc):
        return cls([Step.from_descriptor(s) for s in desc["steps"]], desc.get("name", "custom"))


def _copy():
    return LinearCombo(LinearForm(history=((-1, 1.0),)))


def _const(c):
    return LinearCombo(LinearForm(const=float(c)))


def unit_init(u_norm=1.0, v_norm=1.0):
    """Deterministic flat initial iterates with the given norms."""
    return Step(INIT, _const(u_norm), _const(v_norm))


def amp_linear_plan(sigma2=1.0, lam=0.5, aspect=2.0, macro_steps=4, v1_norm=1.0):
    """Linear AMP on pure noise y = sigma * eps_{u,1}, as alternating first-order steps.

    u_{2k} = y - X v_{2k-1} + lambda_{k-1} u_{2k-1},  v_{2k+1} = lambda_k (Xᵀ u_{2k} + aspect v_{2k}),
    with u_1 = 0. ``lam`` is a scalar or the sequence (lambda_1, lambda_2, ...); the plan has
    2 * macro_steps steps and ends on u_{2K}.
    """
    K = int(macro_steps)
    lams = [float(lam)] * (K - 1) if _is_scalar(lam) else [float(x) for x in lam]
    if len(lams) < K - 1:
        raise InvalidArgument(f"need {K - 1} step sizes for {K} macro-steps")
    sigma = float(sigma2) ** 0.5
    steps = [Step(INIT, _const(0.0), _const(v1_norm))]
    for k in range(1, K + 1):
        lam_prev = lams[k - 2] if k >= 2 else 0.0
        steps.append(Step(FIRST_ORDER,
                          LinearCombo(LinearForm(z=-1.0, aux=((0, sigma),), history=((-1, lam_prev),))),
                          _copy()))
        if k < K:
            lk = lams[k - 1]
            steps.append(Step(FIRST_ORDER, _copy(),
                              LinearCombo(LinearForm(z=-lk, history=((-1, lk * aspect),)))))
    return UpdatePlan(steps, "amp-linear", {"sigma2": sigma2, "lambdas": lams[:K - 1], "aspect": aspect,
                                            "v1_norm": v1_norm})


def _is_scalar(x):
    return not hasattr(x, "__len__")


def gradient_descent_plan(eta=0.2, iterations=3, sigma=1.0):
    """Gradient descent on |y - X theta|^2 / 2 with y = sigma * eps_{u,1}; theta_t = v_{2t-1}."""
    steps = [unit_init(0.0, 1.0)]
    for _ in range(iterations):
        steps.append(Step(FIRST_ORDER, LinearCombo(LinearForm(z=1.0, aux=((0, -sigma),))), _copy()))
        steps.append(Step(FIRST_ORDER, _copy(), LinearCombo(LinearForm(z=eta, history=((-1, 1.0),)))))
    return UpdatePlan(steps, "gradient-descent", {"eta": eta, "iterations": iterations, "sigma": sigma})


def quadratic_saddle_plan(gamma=1.0, sigma=1.0):
    """Unit init, then the ridge saddle: phi_u = |u|^2/2 - sigma<eps_{u,1}, u>, phi_v = gamma/2 |v|^2.

    The v iterate equals -sigma (gamma I + XᵀX)^{-1} Xᵀ eps_{u,1}.
    """
    steps = [unit_init(), Step(SADDLE, QuadraticPenalty(1.0, LinearForm(aux=((0, sigma),))),
                               RidgePenalty(gamma))]
    return UpdatePlan(steps, "quadratic-saddle", {"gamma": gamma, "sigma": sigma})


def m_estimation_plan(lam=1.0, a=1.0, b=1.0, sigma=1.0):
    """One saddle step for squared loss on pure noise with separable penalty lam*(a x^2/2 + b log cosh x)."""
    steps = [unit_init(), Step(SADDLE, QuadraticPenalty(1.0, LinearForm(aux=((0, sigma),))),
                               LogcoshPenalty(lam * a, lam * b))]
    return UpdatePlan(steps, "m-estimation", {"lam": lam, "a": a, "b": b, "sigma": sigma})


def soft_ridge_plan(eta=0.5, t=0.5, sigma=1.0, lam=1.0):
    """Unit init, one thresholded gradient step, then a proximal-point ridge saddle anchored at v_2."""
    steps = [
        unit_init(),
        Step(FIRST_ORDER, LinearCombo(LinearForm(z=1.0, aux=((0, -sigma),))),
             SoftThreshold(t, LinearForm(z=eta, history=((0, 1.0),)), normalized=True)),
        Step(SADDLE, QuadraticPenalty(1.0, LinearForm(aux=((0, sigma),), history=((1, 0.5),))),
             QuadraticPenalty(lam, LinearForm(history=((1, lam),)))),
    ]
    return UpdatePlan(steps, "soft-ridge", {"eta": eta, "t": t, "sigma": sigma, "lam": lam})


def first_order_plan(eta=0.5, t=0.5, sigma=1.0):
    """Unit init followed by two nonlinear first-order steps (threshold, then tanh)."""
    steps = [
        unit_init(),
        Step(FIRST_ORDER, LinearCombo(LinearForm(z=1.0, aux=((0, -sigma),))),
             SoftThreshold(t, LinearForm(z=eta, history=((0, 1.0),)), normalized=True)),
        Step(FIRST_ORDER,
             ScaledNonlinearity("tanh", 1.0, 1.0, LinearForm(z=1.0, history=((1, -0.5),)), normalized=True),
             ScaledNonlinearity("tanh", 1.0, 1.0, LinearForm(z=eta, history=((1, 1.0),)), normalized=True)),
    ]
    return UpdatePlan(steps, "first-order", {"eta": eta, "t": t, "sigma": sigma})


PRESETS = {
    "amp-linear": amp_linear_plan,
    "gradient-descent": gradient_descent_plan,
    "quadratic-saddle": quadratic_saddle_plan,
    "m-estimation": m_estimation_plan,
    "soft-ridge": soft_ridge_plan,
    "first-order": first_order_plan,
}


def preset(name, **params):
    if name not in PRESETS:
        raise InvalidArgument(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name](**params)
