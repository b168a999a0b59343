"""Run an update plan on a sampled data matrix and form the corrected iterates g_k, h_k."""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import io as sio
from .ensembles import (TAG_AUX_U, TAG_AUX_V, gaussian_vector, gram_solve, min_eigen,
                        operator_norm)
from .errors import InvalidArgument, SolverFailure
from .plans import FIRST_ORDER, INIT, SADDLE


@dataclass
class SaddleSolution:
    u: np.ndarray
    v: np.ndarray
    kkt_u: float
    kkt_v: float
    iterations: int
    method: str
    bound_ok: bool
    history: list = field(default_factory=list)


def _kkt(X, phi_u, phi_v, u, v, hu, au, hv, av):
    ru = X @ v - phi_u.gradient(u, hu, au)
    rv = X.T @ u + phi_v.gradient(v, hv, av)
    return float(np.linalg.norm(ru)), float(np.linalg.norm(rv))


def solve_saddle(X, phi_u, phi_v, history=((), ()), aux=((), ()), tol=1e-10, max_iter=100000,
                 method="auto", x_norm=None):
    """Saddle point of uᵀXv - phi_u(u) + phi_v(v) (max over u, min over v).

    ``history`` and ``aux`` are (u-side, v-side) pairs of column sequences.
    ``method`` is ``direct`` (both penalties diagonal quadratics; conjugate
    gradients on the normal equations), ``extragradient``, or ``auto``.
    Both KKT residuals end below ``tol * (1 + |u| + |v|)``.
    """
    if phi_u.mu <= 0 or phi_v.mu <= 0:
        raise InvalidArgument("saddle penalties must be strongly convex")
    if tol <= 0:
        raise InvalidArgument("tolerance must be positive")
    n, d = X.shape
    hu, hv = history
    au, av = aux
    if x_norm is None:
        x_norm = operator_norm(X.__matmul__, X.T.__matmul__, d)
    qu = phi_u.diagonal_quadratic(hu, au, (n,))
    qv = phi_v.diagonal_quadratic(hv, av, (d,))
    if method == "auto":
        method = "direct" if qu is not None and qv is not None else "extragradient"
    if method == "direct":
        if qu is None or qv is None:
            raise InvalidArgument("direct saddle solve needs two diagonal quadratics")
        u, v, iters, hist = _direct(X, qu, qv, tol)
    elif method == "extragradient":
        u, v, iters, hist = _extragradient(X, phi_u, phi_v, hu, au, hv, av, tol, max_iter, x_norm)
    else:
        raise InvalidArgument(f"unknown saddle method {method!r}")
    ku, kv = _kkt(X, phi_u, phi_v, u, v, hu, au, hv, av)
    scale = 1.0 + np.linalg.norm(u) + np.linalg.norm(v)
    if max(ku, kv) > tol * scale:
        raise SolverFailure(f"{method} saddle solve stopped with KKT residuals ({ku:.3g}, {kv:.3g})",
                            residuals=hist + [max(ku, kv)])
    u0 = phi_u.minimizer(hu, au, (n,))
    v0 = phi_v.minimizer(hv, av, (d,))
    gu0 = np.linalg.norm(phi_u.gradient(np.zeros(n), hu, au))
    gv0 = np.linalg.norm(phi_v.gradient(np.zeros(d), hv, av))
    slack = 1.0 + 1e-8
    bound_ok = (np.linalg.norm(v) <= slack * (2 / phi_v.mu) * (x_norm * np.linalg.norm(u0) + gv0) + 1e-12
                and np.linalg.norm(u) <= slack * (2 / phi_u.mu) * (x_norm * np.linalg.norm(v0) + gu0) + 1e-12)
    return SaddleSolution(u, v, ku, kv, iters, method, bool(bound_ok), hist)


def _direct(X, qu, qv, tol):
    au, tu = qu
    av, tv = qv
    n, d = X.shape
    au = np.broadcast_to(np.asarray(au, dtype=float), (n,))
    av = np.broadcast_to(np.asarray(av, dtype=float), (d,))
    tu = np.broadcast_to(np.asarray(tu, dtype=float), (n,))
    tv = np.broadcast_to(np.asarray(tv, dtype=float), (d,))
    # eliminate u = (Xv + t_u)/a_u, then (Xᵀ A_u⁻¹ X + A_v) v = t_v - Xᵀ(t_u/a_u)
    rhs = tv - X.T @ (tu / au)
    op = LinearOperator((d, d), matvec=lambda x: X.T @ ((X @ x) / au) + av * x, dtype=float)
    counter = []
    v, info = cg(op, rhs, rtol=min(tol, 1e-12) * 1e-2, atol=0.0, maxiter=10 * d,
                 callback=lambda xk: counter.append(1))
    if info != 0:
        raise SolverFailure("conjugate gradients did not converge on the saddle normal equations")
    u = (X @ v + tu) / au
    return u, v, len(counter), []


def _extragradient(X, phi_u, phi_v, hu, au, hv, av, tol, max_iter, x_norm):
    n, d = X.shape
    u, v = np.zeros(n), np.zeros(d)
    step = 1.0 / (max(phi_u.L, phi_v.L) + 1.05 * x_norm)
    hist = []

    def field_(u, v):
        return phi_u.gradient(u, hu, au) - X @ v, X.T @ u + phi_v.gradient(v, hv, av)

    for it in range(1, max_iter + 1):
        fu, fv = field_(u, v)
        if it % 10 == 1:
            res = max(np.linalg.norm(fu), np.linalg.norm(fv))
            hist.append(float(res))
            if res <= 0.5 * tol * (1.0 + np.linalg.norm(u) + np.linalg.norm(v)):
                return u, v, it - 1, hist
        uh, vh = u - step * fu, v - step * fv
        fu, fv = field_(uh, vh)
        u, v = u - step * fu, v - step * fv
    raise SolverFailure(f"extragradient did not converge in {max_iter} iterations", residuals=hist)


@dataclass
class StepRecord:
    kind: str
    kkt_u: float = 0.0
    kkt_v: float = 0.0
    iterations: int = 0
    method: str = ""
    bound_ok: bool = True


@dataclass
class Trajectory:
    """Empirical iterates (columns are steps) with the corrected Gaussian iterates when L is known."""

    U: np.ndarray
    V: np.ndarray
    E_u: np.ndarray
    E_v: np.ndarray
    records: list
    seed: int
    plan_signature: str
    aspect: float
    G: np.ndarray = None
    H: np.ndarray = None
    data: object = field(default=None, repr=False)

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def d(self):
        return self.V.shape[0]

    @property
    def T(self):
        return self.U.shape[1]

    def columns(self, side):
        """Column lists keyed by matrix name for one side: v-side (v, g) or u-side (u, h)."""
        if side == "v":
            return {"v": list(self.V.T), "g": None if self.G is None else list(self.G.T)}
        return {"u": list(self.U.T), "h": None if self.H is None else list(self.H.T)}

    def metadata(self):
        return {"n": self.n, "d": self.d, "T": self.T, "aspect": self.aspect, "seed": self.seed,
                "data_seed": None if self.data is None else self.data.seed,
                "plan_signature": self.plan_signature,
                "steps": [r.__dict__ for r in self.records]}

    def write(self, stem):
        """Write ``<stem>_u.csv``, ``<stem>_v.csv`` and ``<stem>.json``."""
        T = self.T
        ucols, uhead = [self.U, self.E_u], [f"u_{k + 1}" for k in range(T)] + [f"eps_u_{k + 1}" for k in range(T)]
        vcols, vhead = [self.V, self.E_v], [f"v_{k + 1}" for k in range(T)] + [f"eps_v_{k + 1}" for k in range(T)]
        if self.H is not None:
            ucols.append(self.H)
            uhead += [f"h_{k + 1}" for k in range(T)]
            vcols.append(self.G)
            vhead += [f"g_{k + 1}" for k in range(T)]
        sio.write_csv(f"{stem}_u.csv", uhead, list(np.hstack(ucols).T))
        sio.write_csv(f"{stem}_v.csv", vhead, list(np.hstack(vcols).T))
        sio.write_json(f"{stem}.json", self.metadata())

    @classmethod
    def read(cls, stem):
        meta = sio.read_json(f"{stem}.json")
        T = meta["T"]
        u = _read_csv(f"{stem}_u.csv")
        v = _read_csv(f"{stem}_v.csv")
        out = cls(U=u[:, :T], V=v[:, :T], E_u=u[:, T:2 * T], E_v=v[:, T:2 * T],
                  records=[StepRecord(**r) for r in meta["steps"]], seed=meta["seed"],
                  plan_signature=meta["plan_signature"], aspect=meta["aspect"])
        if u.shape[1] >= 3 * T:
            out.H, out.G = u[:, 2 * T:3 * T], v[:, 2 * T:3 * T]
        return out


def _read_csv(path):
    import os

    from .errors import MissingArtifact
    if not os.path.exists(path):
        raise MissingArtifact(f"missing artifact: {path}")
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def run_plan(data, plan, se=None, seed=0, saddle_tol=1e-10, saddle_method="auto", max_iter=100000):
    """Execute ``plan`` on ``data.X``.

    Auxiliary draws eps_{u,k} ~ N(0, I_n/n), eps_{v,k} ~ N(0, I_d/d) come from
    substreams of ``seed``; one fresh column per step, visible to that step
    and all later ones. When ``se`` is given its L matrices define g_k, h_k.
    """
    X = data.X
    n, d = X.shape
    T = plan.T
    E_u = np.column_stack([gaussian_vector(n, seed, TAG_AUX_U, k) for k in range(T)])
    E_v = np.column_stack([gaussian_vector(d, seed, TAG_AUX_V, k) for k in range(T)])
    eu, ev = list(E_u.T), list(E_v.T)
    U, V, records = [], [], []
    for k, step in enumerate(plan.steps):
        au, av = eu[:k + 1], ev[:k + 1]
        if step.kind == INIT:
            u = step.u(eu[0], [], au)
            v = step.v(ev[0], [], av)
            rec = StepRecord(INIT)
        elif step.kind == FIRST_ORDER:
            u = step.u(X @ V[-1], U, au)
            v = step.v(-(X.T @ U[-1]), V, av)
            rec = StepRecord(FIRST_ORDER)
        elif step.kind == SADDLE:
            sol = solve_saddle(X, step.u, step.v, (U, V), (au, av), tol=saddle_tol,
                               method=saddle_method, x_norm=data.op_norm(), max_iter=max_iter)
            u, v = sol.u, sol.v
            rec = StepRecord(SADDLE, sol.kkt_u, sol.kkt_v, sol.iterations, sol.method, sol.bound_ok)
        U.append(np.asarray(u, dtype=float).reshape(n))
        V.append(np.asarray(v, dtype=float).reshape(d))
        records.append(rec)
    traj = Trajectory(np.column_stack(U), np.column_stack(V), E_u, E_v, records, int(seed),
                      plan.signature(), data.aspect, data=data)
    if se is not None:
        attach_corrected(traj, se)
    return traj


def attach_corrected(traj, se):
    """g_l = sum_j L^v[l, j] v_j - Xᵀu_l and h_l = (sum_j L^u[l, j] u_j + X v_l) / sqrt(aspect)."""
    if se.T < traj.T:
        raise InvalidArgument(f"state evolution covers {se.T} steps, trajectory has {traj.T}")
    X = traj.data.X
    T = traj.T
    Lu, Lv = se.L_u[:T, :T], se.L_v[:T, :T]
    traj.G = traj.V @ Lv.T - X.T @ traj.U
    traj.H = (traj.U @ Lu.T + X @ traj.V) / np.sqrt(traj.aspect)
    return traj


@dataclass
class XDecompositionReport:
    k: int
    residual: float
    x_norm: float
    min_eig_g: float
    min_eig_h: float


def _perp(M):
    """Function applying the projector onto the orthogonal complement of span(M)."""
    if M.shape[1] == 0 or not np.any(M):
        return lambda x: x
    Q, s, _ = np.linalg.svd(M, full_matrices=False)
    Q = Q[:, s > 1e-12 * s[0]]
    return lambda x: x - Q @ (Q.T @ x)


def x_decomposition_diagnostic(traj, se, k, pinv=False, iters=50, seed=0):
    """Operator norm of X^par - (-T_gᵀ + T_h) after k steps, by power iteration.

    T_g = G_k (K^g_k)^{-1} U_kᵀ, T_h = sqrt(aspect) H_k (K^h_k)^{-1} V_kᵀ and
    X^par = X - P⊥_U X P⊥_V. An all-zero U_k (or V_k) gives a zero T term.
    """
    if traj.G is None:
        attach_corrected(traj, se)
    X = traj.data.X
    n, d = X.shape
    U, V, G, H = traj.U[:, :k], traj.V[:, :k], traj.G[:, :k], traj.H[:, :k]
    Kg, Kh = se.K_g[:k, :k], se.K_h[:k, :k]
    sq = np.sqrt(traj.aspect)
    Ag = gram_solve(Kg, np.eye(k), pinv=pinv) if np.any(U) else np.zeros((k, k))
    Ah = gram_solve(Kh, np.eye(k), pinv=pinv) if np.any(V) else np.zeros((k, k))
    pu, pv = _perp(U), _perp(V)

    def matvec(x):
        return X @ x - pu(X @ pv(x)) + U @ (Ag @ (G.T @ x)) - sq * (H @ (Ah @ (V.T @ x)))

    def rmatvec(y):
        return X.T @ y - pv(X.T @ pu(y)) + G @ (Ag @ (U.T @ y)) - sq * (V @ (Ah @ (H.T @ y)))

    res = operator_norm(matvec, rmatvec, d, iters=iters, seed=seed)
    return XDecompositionReport(k, res, traj.data.op_norm(), min_eigen(Kg), min_eigen(Kh))
