"""Deterministic state-evolution predictor realized on a Monte Carlo replicate bank.

The SE probability space is simulated by R replicates at dimensions
(n_mc, d_mc) with the aspect ratio held fixed. Inner products between
columns are averaged over replicates; Gaussian columns g, h are produced by
mixing fixed innovations with rows of the factors of K^g, K^h, so their
covariances are exact and only the iterates carry Monte Carlo error.

Index conventions: columns are 0-based (column j holds step j+1);
row l of L^u / L^v holds the coefficients of uhat_l / vhat_l on u_0..u_l.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import io as sio
from .ensembles import (TAG_SE_AUX_U, TAG_SE_AUX_V, TAG_XI_G, TAG_XI_H, InnovationBank,
                        extend_factor, gram_solve, min_eigen)
from .errors import FixedPointFailure, InconsistentMoments, InvalidArgument
from .plans import FIRST_ORDER, INIT, SADDLE


def _border(M, row, diag):
    k = M.shape[0]
    out = np.zeros((k + 1, k + 1))
    out[:k, :k] = M
    out[k, :k] = row
    out[:k, k] = row
    out[k, k] = diag
    return out


def _border_lower(M, row):
    k = M.shape[0]
    out = np.zeros((k + 1, k + 1))
    out[:k, :k] = M
    out[k, :k + 1] = row
    return out


@dataclass
class SEParameters:
    """K^g, K^h (Gram matrices of u and v), L^u, L^v (span coefficients) and the factor rows."""

    aspect: float
    kinds: list = field(default_factory=list)
    K_g: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    K_h: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    L_u: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    L_v: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    beta: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    diagnostics: list = field(default_factory=list)
    plan_signature: str = ""
    pinv: bool = False

    @property
    def T(self):
        return self.K_g.shape[0]

    @property
    def all_first_order(self):
        return all(k != SADDLE for k in self.kinds)

    def to_dict(self):
        return {"aspect": self.aspect, "kinds": self.kinds, "K_g": self.K_g, "K_h": self.K_h,
                "L_u": self.L_u, "L_v": self.L_v, "alpha": self.alpha, "beta": self.beta,
                "diagnostics": self.diagnostics, "plan_signature": self.plan_signature,
                "pinv": self.pinv}

    @classmethod
    def from_dict(cls, d):
        arr = {k: np.array(d[k], dtype=float).reshape(len(d["kinds"]), len(d["kinds"]))
               for k in ("K_g", "K_h", "L_u", "L_v", "alpha", "beta")}
        return cls(aspect=d["aspect"], kinds=list(d["kinds"]), diagnostics=d.get("diagnostics", []),
                   plan_signature=d.get("plan_signature", ""), pinv=d.get("pinv", False), **arr)


class SEBank:
    """R replicates of the SE random matrices, stored as lists of (R, m) columns."""

    def __init__(self, R, d_mc, n_mc, seed, aspect):
        self.R, self.d_mc, self.n_mc, self.seed = int(R), int(d_mc), int(n_mc), int(seed)
        self.aspect = float(aspect)
        self.xi_g = InnovationBank(R, d_mc, seed, TAG_XI_G)
        self.xi_h = InnovationBank(R, n_mc, seed, TAG_XI_H)
        self.aux_u = InnovationBank(R, n_mc, seed, TAG_SE_AUX_U)
        self.aux_v = InnovationBank(R, d_mc, seed, TAG_SE_AUX_V)
        self.u, self.v, self.g, self.h, self.uhat, self.vhat = [], [], [], [], [], []
        self.plan_signature = ""
        self.kinds = []

    @property
    def T(self):
        return len(self.u)

    def columns(self, side):
        if side == "v":
            return {"v": self.v, "g": self.g, "vhat": self.vhat}
        if side == "u":
            return {"u": self.u, "h": self.h, "uhat": self.uhat}
        raise InvalidArgument(f"side must be 'u' or 'v', got {side!r}")

    def aux(self, side, count):
        bank = self.aux_u if side == "u" else self.aux_v
        return bank.columns(count)

    def save(self, path):
        arrays = {name: np.stack(getattr(self, name), axis=-1)
                  for name in ("u", "v", "g", "h", "uhat", "vhat")}
        meta = np.array([self.R, self.d_mc, self.n_mc, self.seed], dtype=np.int64)
        sio.write_npz(path, meta=meta, aspect=np.array(self.aspect), kinds=np.array(self.kinds),
                      signature=np.array(self.plan_signature), **arrays)

    @classmethod
    def load(cls, path):
        z = sio.read_npz(path)
        R, d_mc, n_mc, seed = (int(x) for x in z["meta"])
        bank = cls(R, d_mc, n_mc, seed, float(z["aspect"]))
        for name in ("u", "v", "g", "h", "uhat", "vhat"):
            arr = z[name]
            setattr(bank, name, [arr[..., j] for j in range(arr.shape[-1])])
        bank.plan_signature = str(z["signature"])
        bank.kinds = [str(k) for k in z["kinds"]]
        return bank


def _mean_inner(cols, x):
    R = x.shape[0]
    return np.array([np.einsum("rm,rm->", c, x) / R for c in cols])


def _mean_sq(x):
    return float(np.einsum("rm,rm->", x, x) / x.shape[0])


def _combine(cols, coeffs, like):
    out = np.zeros_like(like)
    for c, col in zip(coeffs, cols):
        if c != 0.0:
            out += c * col
    return out


def _as_bank(x, R, m):
    return np.broadcast_to(np.asarray(x, dtype=float), (R, m)).copy()


def _append(se, bank, kind, u, v, Lu_row, Lv_row, kg=None, kh=None, g=None, h=None,
            alpha_row=None, beta_row=None, diag=None):
    """Extend (se, bank) by one column on each side."""
    k = se.T
    if kg is None:
        kg = (_mean_inner(bank.u, u), _mean_sq(u))
    if kh is None:
        kh = (_mean_inner(bank.v, v), _mean_sq(v))
    if g is None:
        coeffs, last = extend_factor(se.alpha, se.K_g, kg[0], kg[1], pinv=se.pinv)
        alpha_row = np.append(coeffs, last)
        g = _combine(bank.xi_g.columns(k + 1), alpha_row, np.zeros((bank.R, bank.d_mc)))
    if h is None:
        coeffs, last = extend_factor(se.beta, se.K_h, kh[0], kh[1], pinv=se.pinv)
        beta_row = np.append(coeffs, last)
        h = _combine(bank.xi_h.columns(k + 1), beta_row, np.zeros((bank.R, bank.n_mc)))
    bank.u.append(u)
    bank.v.append(v)
    bank.g.append(g)
    bank.h.append(h)
    bank.uhat.append(_combine(bank.u, Lu_row, u))
    bank.vhat.append(_combine(bank.v, Lv_row, v))
    se.K_g = _border(se.K_g, kg[0], kg[1])
    se.K_h = _border(se.K_h, kh[0], kh[1])
    se.L_u = _border_lower(se.L_u, Lu_row)
    se.L_v = _border_lower(se.L_v, Lv_row)
    se.alpha = _border_lower(se.alpha, alpha_row)
    se.beta = _border_lower(se.beta, beta_row)
    se.kinds.append(kind)
    bank.kinds.append(kind)
    info = {"kind": kind, "min_eig_g": min_eigen(se.K_g), "min_eig_h": min_eigen(se.K_h)}
    info.update(diag or {})
    se.diagnostics.append(info)


def init_se(init, R=2000, d_mc=400, n_mc=None, seed=0, aspect=None, pinv=False, plan_signature=""):
    """Base case: iterates from the init maps at MC dimensions, g_1 = |u_1| xi_g, h_1 = |v_1| xi_h.

    ``init`` is the plan's init step. Give either ``n_mc`` or ``aspect``.
    """
    if init.kind != INIT:
        raise InvalidArgument("init_se needs the plan's init step")
    if n_mc is None:
        if aspect is None:
            raise InvalidArgument("give n_mc or aspect")
        n_mc = int(round(aspect * d_mc))
    aspect = n_mc / d_mc
    bank = SEBank(R, d_mc, n_mc, seed, aspect)
    bank.plan_signature = plan_signature
    se = SEParameters(aspect=aspect, plan_signature=plan_signature, pinv=pinv)
    eu, ev = bank.aux("u", 1), bank.aux("v", 1)
    u = _as_bank(init.u(eu[0], [], eu), R, n_mc)
    v = _as_bank(init.v(ev[0], [], ev), R, d_mc)
    _append(se, bank, INIT, u, v, np.zeros(1), np.zeros(1),
            diag={"degenerate": bool(_mean_sq(u) == 0.0 or _mean_sq(v) == 0.0)})
    return se, bank


def se_first_order_step(se, bank, f_u, f_v):
    """u = f_u(sqrt(aspect) h_k - uhat_k), v = f_v(g_k - vhat_k); hat rows solve the Stein system."""
    k = se.T
    sq = math.sqrt(se.aspect)
    zu = sq * bank.h[-1] - bank.uhat[-1]
    zv = bank.g[-1] - bank.vhat[-1]
    u = _as_bank(f_u(zu, bank.u, bank.aux("u", k + 1)), bank.R, bank.n_mc)
    v = _as_bank(f_v(zv, bank.v, bank.aux("v", k + 1)), bank.R, bank.d_mc)
    Lu_row = np.append(gram_solve(se.K_g, _mean_inner(bank.g, v), pinv=se.pinv), 0.0)
    Lv_row = np.append(gram_solve(se.K_h, sq * _mean_inner(bank.h, u), pinv=se.pinv), 0.0)
    _append(se, bank, FIRST_ORDER, u, v, Lu_row, Lv_row)
    return se, bank


@dataclass
class SaddleMoments:
    """Deterministic unknowns of one saddle step.

    m_uU = <<U_k, u>>, m_uH = <<H_k, u>>, q_u = |u|^2, s_h = <xi_h, u>, and the
    v-side mirrors m_vV, m_vG, q_v, s_g = <xi_g, v>. p_u, p_v are the norms of
    the parts orthogonal to the past; c_gv, c_hu are <g_{k+1}, v>, <h_{k+1}, u>.
    """

    m_uU: np.ndarray
    m_uH: np.ndarray
    q_u: float
    s_h: float
    m_vV: np.ndarray
    m_vG: np.ndarray
    q_v: float
    s_g: float
    p_u: float = 0.0
    p_v: float = 0.0
    c_gv: float = 0.0
    c_hu: float = 0.0

    def pack(self):
        return np.concatenate([self.m_uU, self.m_uH, [self.q_u, self.s_h],
                               self.m_vV, self.m_vG, [self.q_v, self.s_g]])

    @classmethod
    def unpack(cls, x, k):
        x = np.asarray(x, dtype=float)
        a = 2 * k + 2
        return cls(x[:k], x[k:2 * k], float(x[2 * k]), float(x[2 * k + 1]),
                   x[a:a + k], x[a + k:a + 2 * k], float(x[a + 2 * k]), float(x[a + 2 * k + 1]))

    @classmethod
    def zeros(cls, k):
        return cls.unpack(np.zeros(4 * k + 4), k)

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else float(v)) for k, v in self.__dict__.items()}


@dataclass
class _SaddleContext:
    se: SEParameters
    bank: SEBank
    phi_u: object
    phi_v: object
    au: list
    av: list
    Ag: np.ndarray
    Ah: np.ndarray
    w: np.ndarray
    z: np.ndarray
    diag_floor: float
    p_floor: float


def _orth_norm(q, m, A, scale, strict=False):
    # iterates away from the fixed point may be inconsistent; only the converged point is checked
    p2 = q - m @ A @ m
    if strict and p2 < -1e-6 * max(1.0, scale):
        raise InconsistentMoments(f"negative orthogonal mass {p2:.3g}")
    return math.sqrt(max(p2, 0.0))


def _solve_side(phi, r, c, hist, aux, floor):
    # prox form when the diagonal coefficient is positive, gradient equation otherwise
    if c > floor:
        return phi.prox(r / c, 1.0 / c, hist, aux)
    return phi.grad_inverse(r, hist, aux)


def _saddle_sweep(theta, ctx, forced_c=None):
    """One pass of the saddle fixed-point map; returns (theta', realized columns, coefficients)."""
    se, bank = ctx.se, ctx.bank
    sq = math.sqrt(se.aspect)
    k = se.T
    scale = max(1.0, np.max(np.abs(np.diag(se.K_g))), np.max(np.abs(np.diag(se.K_h))))
    p_u = _orth_norm(theta.q_u, theta.m_uU, ctx.Ag, scale)
    p_v = _orth_norm(theta.q_v, theta.m_vV, ctx.Ah, scale)
    a_g = ctx.Ag @ theta.m_uU
    a_h = ctx.Ah @ theta.m_vV
    if forced_c is not None:
        c_u, c_v = forced_c
    else:
        c_v = sq * theta.s_h / p_v if p_v > ctx.p_floor else 0.0
        c_u = theta.s_g / p_u if p_u > ctx.p_floor else 0.0
    beta_v = ctx.Ah @ (sq * theta.m_uH - c_v * theta.m_vV)
    beta_u = ctx.Ag @ (theta.m_vG - c_u * theta.m_uU)

    g = _combine(bank.g, a_g, ctx.w) + p_u * ctx.w
    h = _combine(bank.h, a_h, ctx.z) + p_v * ctx.z
    r_v = g - _combine(bank.v, beta_v, g)
    r_u = sq * h - _combine(bank.u, beta_u, h)
    v = _solve_side(ctx.phi_v, r_v, c_v, bank.v, ctx.av, ctx.diag_floor)
    u = _solve_side(ctx.phi_u, r_u, c_u, bank.u, ctx.au, ctx.diag_floor)

    new = SaddleMoments(_mean_inner(bank.u, u), _mean_inner(bank.h, u), _mean_sq(u),
                        float(_mean_inner([ctx.z], u)[0]),
                        _mean_inner(bank.v, v), _mean_inner(bank.g, v), _mean_sq(v),
                        float(_mean_inner([ctx.w], v)[0]))
    new.p_u = _orth_norm(new.q_u, new.m_uU, ctx.Ag, scale, strict=True)
    new.p_v = _orth_norm(new.q_v, new.m_vV, ctx.Ah, scale, strict=True)
    new.c_gv = float(_mean_inner([g], v)[0])
    new.c_hu = float(_mean_inner([h], u)[0])
    coeffs = {"p_u": p_u, "p_v": p_v, "c_u": c_u, "c_v": c_v, "beta_u": beta_u, "beta_v": beta_v,
              "a_g": a_g, "a_h": a_h}
    return new, {"u": u, "v": v, "g": g, "h": h}, coeffs


def se_saddle_step(se, bank, phi_u, phi_v, damping=0.5, tol=1e-10, max_iter=5000, init=None,
                   diag_floor=1e-10, p_floor=1e-12, min_damping=1.0 / 256):
    """Solve the saddle fixed point on (m, q, s) by damped iteration with common random numbers.

    ``init`` is a SaddleMoments start; by default a surrogate sweep with the
    diagonal coefficients set to the strong-convexity moduli provides it.
    Returns ``(se, bank, theta)``.
    """
    if not 0 < damping <= 1:
        raise InvalidArgument("damping must lie in (0, 1]")
    k = se.T
    ctx = _SaddleContext(se, bank, phi_u, phi_v, bank.aux("u", k + 1), bank.aux("v", k + 1),
                         gram_solve(se.K_g, np.eye(k), pinv=se.pinv),
                         gram_solve(se.K_h, np.eye(k), pinv=se.pinv),
                         bank.xi_g.draw(k), bank.xi_h.draw(k), diag_floor, p_floor)
    if init is None:
        start = SaddleMoments.zeros(k)
        start.q_u = start.q_v = 1.0
        theta, _, _ = _saddle_sweep(start, ctx, forced_c=(phi_u.mu, phi_v.mu))
    else:
        theta = init
    x = theta.pack()
    eta = damping
    history = []
    prev = None
    for it in range(1, max_iter + 1):
        new, cols, coef = _saddle_sweep(SaddleMoments.unpack(x, k), ctx)
        y = new.pack()
        step = y - x
        res = float(np.max(np.abs(step)))
        history.append(res)
        if not np.isfinite(res):
            raise FixedPointFailure("saddle fixed point produced non-finite moments", history)
        if res <= tol:
            break
        # oscillation: the fixed-point residual flips direction between sweeps
        if prev is not None and step @ prev < -0.5 * np.linalg.norm(step) * np.linalg.norm(prev):
            eta = max(0.5 * eta, min_damping)
        prev = step
        x = x + eta * step
    else:
        raise FixedPointFailure(f"saddle fixed point did not reach tol {tol:g} in {max_iter} sweeps "
                                f"(last residual {history[-1]:.3g})", history)
    theta = SaddleMoments.unpack(x, k)
    theta.p_u, theta.p_v = coef["p_u"], coef["p_v"]
    theta.c_gv, theta.c_hu = new.c_gv, new.c_hu
    c_u, c_v = coef["c_u"], coef["c_v"]
    Lu_row = np.append(coef["beta_u"], c_u)
    Lv_row = np.append(coef["beta_v"], c_v)
    alpha_row = np.append(se.alpha.T @ coef["a_g"], coef["p_u"])
    beta_row = np.append(se.beta.T @ coef["a_h"], coef["p_v"])
    q_u = coef["p_u"] ** 2 + theta.m_uU @ coef["a_g"]
    q_v = coef["p_v"] ** 2 + theta.m_vV @ coef["a_h"]
    diag = {"iterations": it, "residual": history[-1], "final_damping": eta, "theta": theta.to_dict(),
            "c_u": c_u, "c_v": c_v,
            "sign_ok": bool(theta.s_g >= -1e-8 and theta.s_h >= -1e-8),
            "zero_pair_ok": bool((coef["p_u"] <= 1e-6) == (coef["p_v"] <= 1e-6))}
    _append(se, bank, SADDLE, cols["u"], cols["v"], Lu_row, Lv_row,
            kg=(theta.m_uU, q_u), kh=(theta.m_vV, q_v), g=cols["g"], h=cols["h"],
            alpha_row=alpha_row, beta_row=beta_row, diag=diag)
    return se, bank, theta


def run_state_evolution(plan, aspect, R=2000, d_mc=400, n_mc=None, seed=0, damping=0.5, tol=1e-10,
                        max_iter=5000, pinv=False, diag_floor=1e-10):
    """Advance the SE through every step of ``plan``; returns (se, bank)."""
    se, bank = init_se(plan.steps[0], R, d_mc, n_mc, seed, aspect, pinv, plan.signature())
    for step in plan.steps[1:]:
        if step.kind == FIRST_ORDER:
            se_first_order_step(se, bank, step.u, step.v)
        else:
            se_saddle_step(se, bank, step.u, step.v, damping, tol, max_iter, diag_floor=diag_floor)
    return se, bank


def query_expectation(bank, psi, side=None):
    """Replicate mean and standard error of a test function on the bank."""
    side = side or psi.side
    if side != psi.side:
        raise InvalidArgument(f"test function reads the {psi.side}-side, asked for {side}")
    vals = np.asarray(psi.evaluate(bank.columns(side)), dtype=float)
    if vals.shape != (bank.R,):
        raise InvalidArgument("test function must return one value per replicate")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(bank.R)) if bank.R > 1 else 0.0


def amp_tau_recursion(sigma2, aspect, lambdas, v1_norm2=1.0):
    """tau_1^2 = sigma2 + aspect*|v_1|^2, tau_k^2 = sigma2 + aspect*lambda_{k-1}^2*tau_{k-1}^2."""
    if sigma2 < 0 or aspect <= 0:
        raise InvalidArgument("need sigma2 >= 0 and aspect > 0")
    taus = [sigma2 + aspect * v1_norm2]
    for lam in lambdas:
        taus.append(sigma2 + aspect * lam**2 * taus[-1])
    return np.array(taus)


# ---------------------------------------------------------------- scalar M-estimation system


@dataclass
class ScalarFixedPoint:
    alpha: float
    beta: float
    kappa: float
    nu: float
    residuals: np.ndarray
    iterations: int
    degenerate: bool


def _gh(nodes):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return x, w / w.sum()


def _dprox(prox, x, tau, h=1e-6):
    return (prox(x + h, tau) - prox(x - h, tau)) / (2 * h)


def m_estimation_residuals(rho_prox, f_prox, lam, aspect, alpha, beta, kappa, nu, sigma=0.0, nodes=81):
    """Residuals of the four scalar equations (noise sigma enters the loss argument)."""
    x, w = _gh(nodes)
    sd = math.sqrt(alpha**2 + sigma**2 / aspect)
    V = f_prox(beta * x / nu, lam / nu)
    S = sd * x
    Q = S - rho_prox(S, kappa)
    e_wq = alpha * np.sum(w * x * Q) / sd if sd > 0 else 0.0
    return np.array([
        alpha**2 - np.sum(w * V**2),
        beta**2 * kappa**2 / aspect - np.sum(w * Q**2),
        nu * alpha * kappa / aspect - e_wq,
        kappa * beta - np.sum(w * x * V),
    ])


def scalar_m_estimation_fixed_point(rho_prox, f_prox, lam, aspect, quadrature_nodes=81, damping=0.5,
                                    tol=1e-12, max_iter=10000, init=(1.0, 1.0), sigma=0.0):
    """Damped iteration on (alpha, beta, kappa, nu) with Gauss-Hermite expectations.

    kappa and nu are updated in their Gaussian-integration-by-parts forms,
    which stay defined at alpha = beta = 0.
    """
    if quadrature_nodes < 21:
        raise InvalidArgument("use at least 21 quadrature nodes")
    x, w = _gh(quadrature_nodes)
    a2, b2 = float(init[0]) ** 2, float(init[1]) ** 2
    kappa = nu = 1.0
    for it in range(1, max_iter + 1):
        a, b = math.sqrt(a2), math.sqrt(b2)
        sd = math.sqrt(a2 + sigma**2 / aspect)
        arg = b * x / nu
        V = f_prox(arg, lam / nu)
        k_new = np.sum(w * _dprox(f_prox, arg, lam / nu)) / nu
        S = sd * x
        Q = S - rho_prox(S, kappa)
        n_new = aspect * (1.0 - np.sum(w * _dprox(rho_prox, S, kappa))) / kappa
        a2_new = np.sum(w * V**2)
        b2_new = aspect * np.sum(w * Q**2) / kappa**2
        old = np.array([a2, b2, kappa, nu])
        new = np.array([a2_new, b2_new, k_new, n_new])
        step = old + damping * (new - old)
        a2, b2, kappa, nu = float(max(step[0], 0.0)), float(max(step[1], 0.0)), float(step[2]), float(step[3])
        if not np.all(np.isfinite(step)) or kappa <= 0 or nu <= 0:
            raise FixedPointFailure("scalar system left the admissible region", [it])
        # test on (alpha, beta) rather than their squares so the trivial point is reached to tol
        moved = np.abs(np.sqrt(np.maximum(new[:2], 0.0)) - np.sqrt(np.maximum(old[:2], 0.0)))
        if max(np.max(moved), np.max(np.abs(new[2:] - old[2:]))) <= tol:
            break
    else:
        raise FixedPointFailure(f"scalar system did not converge in {max_iter} iterations")
    alpha, beta = math.sqrt(a2), math.sqrt(b2)
    res = m_estimation_residuals(rho_prox, f_prox, lam, aspect, alpha, beta, kappa, nu, sigma,
                                 quadrature_nodes)
    degenerate = bool(alpha < 1e-8 and beta < 1e-8)
    return ScalarFixedPoint(alpha, beta, kappa, nu, res, it, degenerate)


def ridge_closed_form(lam, aspect, sigma, tol=1e-15, max_iter=100000):
    """Scalar system for squared loss and ridge penalty, solved by its explicit recursions."""
    kappa = nu = 1.0
    for _ in range(max_iter):
        k_new = 1.0 / (nu + lam)
        n_new = aspect / (1.0 + k_new)
        done = abs(k_new - kappa) + abs(n_new - nu) <= tol
        kappa, nu = k_new, n_new
        if done:
            break
    # alpha^2 = beta^2 kappa^2 and beta^2 = aspect (alpha^2 + sigma^2/aspect) / (1 + kappa)^2
    c = aspect * kappa**2 / (1.0 + kappa) ** 2
    a2 = sigma**2 * kappa**2 / (1.0 + kappa) ** 2 / (1.0 - c)
    b2 = a2 / kappa**2
    return math.sqrt(a2), math.sqrt(b2), kappa, nu


# ---------------------------------------------------------------- rate envelopes


def delta0(aspect, T, n, delta):
    return 1.0 + math.sqrt(aspect) + math.sqrt(2 * aspect * (T * math.log(3 + 6 * T) + math.log(1 / delta)) / n)


def delta1_exponent(k, first_order=False):
    return 0.5 if first_order else 2.0 ** (-k)


def delta1_rate(k, T, n, delta, first_order=False):
    """(k!)^2 ((T log(3+6T) + log(1/delta))/n)^{2^{-k}} with unit constant; exponent 1/2 for first-order plans."""
    if not 1 <= k <= T:
        raise InvalidArgument(f"need 1 <= k <= T, got k={k}, T={T}")
    base = (T * math.log(3 + 6 * T) + math.log(1 / delta)) / n
    return math.factorial(k) ** 2 * base ** delta1_exponent(k, first_order)
