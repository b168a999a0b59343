"""Compare empirical trajectories with state-evolution predictions.

Test functions are order-2 pseudo-Lipschitz functionals of the columns of
one side: (V, G) on the d-side or (U, H) on the n-side. Steps are 1-based in
test-function descriptors.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io as sio
from .empirical import run_plan, x_decomposition_diagnostic
from .ensembles import sample_data
from .errors import ContractViolation, InvalidArgument, NumericalFailure
from .state_evolution import delta1_rate, query_expectation, run_state_evolution

SIDES = {"v": ("v", "g", "vhat"), "u": ("u", "h", "uhat")}

_LOSSES = {
    "square": (lambda t: t * t, 1.0),
    "abs": (np.abs, 1.0),
    "logcosh": (lambda t: np.logaddexp(t, -t) - math.log(2.0), 1.0),
}


class TestFunction:
    """A pseudo-Lipschitz functional of the iterates on one side.

    kinds: ``inner`` <a_i, b_j>, ``norm2`` |a_i|^2, ``coord-mean``
    (1/m) sum_k loss(sqrt(m) a_i[k]) and ``constant``.
    """

    __test__ = False

    def __init__(self, kind, side="v", args=(), loss="square", value=1.0, name=None):
        if side not in SIDES:
            raise InvalidArgument(f"side must be 'u' or 'v', got {side!r}")
        self.kind, self.side, self.loss, self.value = kind, side, loss, float(value)
        self.args = tuple(args)
        names = SIDES[side]
        if kind == "inner":
            a, i, b, j = self.args
            self._check(a, i)
            self._check(b, j)
            self.lipschitz = 1.0
        elif kind in ("norm2", "coord-mean"):
            a, i = self.args
            self._check(a, i)
            if kind == "coord-mean" and loss not in _LOSSES:
                raise InvalidArgument(f"unknown loss {loss!r}; known: {sorted(_LOSSES)}")
            self.lipschitz = 1.0 if kind == "norm2" else _LOSSES[loss][1]
        elif kind == "constant":
            self.lipschitz = 0.0
        else:
            raise InvalidArgument(f"unknown test-function kind {kind!r}")
        self.name = name or self._default_name()
        self._names = names

    def _check(self, mat, step):
        if mat not in SIDES[self.side][:2]:
            raise InvalidArgument(f"{self.side}-side test functions read {SIDES[self.side][:2]}, got {mat!r}")
        if int(step) < 1:
            raise InvalidArgument("steps are 1-based")

    def _default_name(self):
        if self.kind == "inner":
            a, i, b, j = self.args
            return f"<{a}{i},{b}{j}>"
        if self.kind == "norm2":
            return f"|{self.args[0]}{self.args[1]}|^2"
        if self.kind == "coord-mean":
            return f"mean-{self.loss}({self.args[0]}{self.args[1]})"
        return f"const({self.value:g})"

    @property
    def max_step(self):
        if self.kind == "inner":
            return max(self.args[1], self.args[3])
        if self.kind in ("norm2", "coord-mean"):
            return self.args[1]
        return 0

    def reads(self):
        if self.kind == "inner":
            return {self.args[0], self.args[2]}
        if self.kind in ("norm2", "coord-mean"):
            return {self.args[0]}
        return set()

    def evaluate(self, columns):
        """Value(s) from a dict of column lists; arrays of shape (..., m) give one value per leading index."""
        for mat in self.reads():
            if columns.get(mat) is None:
                raise InvalidArgument(f"{self.name} needs the {mat!r} columns")
            if len(columns[mat]) < self.max_step:
                raise InvalidArgument(f"{self.name} needs {self.max_step} steps, have {len(columns[mat])}")
        if self.kind == "constant":
            some = next((c for c in columns.values() if c), None)
            return np.full(() if some is None else np.shape(some[0])[:-1], self.value)
        a = columns[self.args[0]][self.args[1] - 1]
        if self.kind == "inner":
            b = columns[self.args[2]][self.args[3] - 1]
            return np.sum(a * b, axis=-1)
        if self.kind == "norm2":
            return np.sum(a * a, axis=-1)
        m = np.shape(a)[-1]
        return np.mean(_LOSSES[self.loss][0](math.sqrt(m) * a), axis=-1)

    def arrays(self, x):
        """Evaluate on a flat dict {name: array} holding just the columns this function reads."""
        return self.evaluate({k: [v] * max(self.max_step, 1) for k, v in x.items()})

    def describe(self):
        out = {"kind": self.kind, "side": self.side, "args": list(self.args), "name": self.name}
        if self.kind == "coord-mean":
            out["loss"] = self.loss
        if self.kind == "constant":
            out["value"] = self.value
        return out

    @classmethod
    def from_descriptor(cls, desc):
        return cls(desc["kind"], desc.get("side", "v"), desc.get("args", ()), desc.get("loss", "square"),
                   desc.get("value", 1.0), desc.get("name"))


def builtin_tests(T, side="v"):
    """All pairwise inner products among the side's iterate and Gaussian columns up to step T."""
    a, b = SIDES[side][:2]
    out = []
    for i in range(1, T + 1):
        for j in range(1, i + 1):
            out += [TestFunction("inner", side, (a, i, a, j)), TestFunction("inner", side, (b, i, a, j)),
                    TestFunction("inner", side, (b, i, b, j))]
            if i != j:
                out.append(TestFunction("inner", side, (b, j, a, i)))
    return out


def pseudo_lipschitz_check(psi, m=50, trials=200, seed=0, scale=3.0):
    """Largest ratio |psi(x) - psi(x')| / (L (1 + |x| + |x'|) |x - x'|) over random pairs."""
    rng = np.random.default_rng(seed)
    names = sorted(psi.reads()) or [SIDES[psi.side][0]]
    worst = 0.0
    for _ in range(trials):
        s = scale * rng.exponential()
        x = {k: s * rng.standard_normal(m) / math.sqrt(m) for k in names}
        xp = {k: x[k] + rng.exponential() * rng.standard_normal(m) / math.sqrt(m) for k in names}
        lhs = abs(float(psi.arrays(x)) - float(psi.arrays(xp)))
        nx = sum(np.linalg.norm(x[k]) for k in names)
        nxp = sum(np.linalg.norm(xp[k]) for k in names)
        dist = sum(np.linalg.norm(x[k] - xp[k]) for k in names)
        bound = psi.lipschitz * (1 + nx + nxp) * dist
        if lhs == 0.0:
            continue
        worst = max(worst, lhs / bound if bound > 0 else np.inf)
    return worst


@dataclass
class DeviationReport:
    rows: list
    n: int
    d: int
    T: int
    plan_signature: str
    seeds: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def write(self, stem):
        sio.write_json(f"{stem}.json", self.to_dict())
        sio.write_rows(f"{stem}.csv", ["test", "empirical", "se_estimate", "se_std_error", "deviation",
                                       "delta1_reference"],
                       [[r["test"], r["empirical"], r["se_estimate"], r["se_std_error"], r["deviation"],
                         r["delta1_reference"]] for r in self.rows])


def _check_signature(traj, bank):
    if bank.plan_signature and traj.plan_signature != bank.plan_signature:
        raise ContractViolation(f"trajectory plan {traj.plan_signature} does not match SE bank "
                                f"plan {bank.plan_signature}")


def se_estimates(bank, tests):
    """{test name: (estimate, std error)} from the replicate bank."""
    return {psi.name: query_expectation(bank, psi) for psi in tests}


def compare(traj, bank, tests, delta=0.05):
    """One row per test function: empirical value, SE estimate and error, deviation, rate reference."""
    _check_signature(traj, bank)
    return compare_estimates(traj, se_estimates(bank, tests), tests, bank.kinds, delta)


def compare_estimates(traj, estimates, tests, kinds, delta=0.05):
    """``compare`` against stored SE estimates instead of a live bank."""
    first_order = all(k != "saddle" for k in kinds)
    T = traj.T
    ref = delta1_rate(T, T, traj.n, delta, first_order)
    rows = []
    for psi in tests:
        if psi.name not in estimates:
            raise ContractViolation(f"no SE estimate stored for test function {psi.name}")
        est, err = estimates[psi.name]
        emp = float(psi.evaluate(traj.columns(psi.side)))
        rows.append({"test": psi.name, "descriptor": psi.describe(), "empirical": emp, "se_estimate": est,
                     "se_std_error": err, "deviation": abs(emp - est), "delta1_reference": ref})
    return DeviationReport(rows, traj.n, traj.d, T, traj.plan_signature, [traj.seed])


def pool_reports(reports):
    """Average the empirical values of per-trial reports into one row per test function."""
    if not reports:
        raise InvalidArgument("no reports to pool")
    first = reports[0]
    rows = []
    for i, row in enumerate(first.rows):
        vals = [r.rows[i]["empirical"] for r in reports]
        emp = float(np.mean(vals))
        rows.append(dict(row, empirical=emp, empirical_values=vals, deviation=abs(emp - row["se_estimate"])))
    seeds = [s for r in reports for s in r.seeds]
    return DeviationReport(rows, first.n, first.d, first.T, first.plan_signature, seeds)


# ---------------------------------------------------------------- rate sweeps


def trial_seed(seed, n, trial):
    return int(np.random.SeedSequence([int(seed), int(n), int(trial)]).generate_state(1)[0])


def _trial(args):
    plan, se, n, d, seed, tests = args
    try:
        data = sample_data(n, d, seed)
        traj = run_plan(data, plan, se=se, seed=seed)
        return [float(psi.evaluate(traj.columns(psi.side))) for psi in tests], None
    except NumericalFailure as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


@dataclass
class SweepReport:
    n_list: list
    tests: list
    medians: dict
    slopes: dict
    degenerate: dict
    se_estimates: dict
    deviations: dict
    failures: dict
    aspect: float
    plan_signature: str
    delta1: list

    def to_dict(self):
        return asdict(self)

    def write(self, outdir):
        sio.write_json(f"{outdir}/sweep.json", self.to_dict())
        paths = []
        for name in self.tests:
            path = f"{outdir}/sweep_{slug(name)}.csv"
            sio.write_csv(path, ["n", "median_deviation", "delta1_reference"],
                          [self.n_list, self.medians[name], self.delta1])
            paths.append(path)
        return paths


def slug(name):
    keep = [c if c.isalnum() else "_" for c in name]
    return "".join(keep).strip("_") or "test"


def fit_slope(n_list, values):
    """Least-squares slope of log(value) against log(n); None when any value is zero."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        return None
    return float(np.polyfit(np.log(n_list), np.log(values), 1)[0])


def rate_sweep(plan, tests, n_list, trials=20, seed=0, aspect=2.0, se=None, bank=None, R=2000, d_mc=400,
               workers=1, delta=0.05, pinv=False):
    """Median deviation per n over independent trials, with a log-log slope per test function."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidArgument("n_list must be strictly increasing with at least 3 entries")
    if se is None or bank is None:
        se, bank = run_state_evolution(plan, aspect, R=R, d_mc=d_mc, seed=seed, pinv=pinv)
    est = {psi.name: query_expectation(bank, psi)[0] for psi in tests}
    devs = {psi.name: [] for psi in tests}
    failures = {}
    for n in n_list:
        d = int(round(n / aspect))
        jobs = [(plan, se, n, d, trial_seed(seed, n, t), tests) for t in range(trials)]
        results = _map(_trial, jobs, workers)
        fails = [msg for vals, msg in results if vals is None]
        failures[str(n)] = fails
        for psi_i, psi in enumerate(tests):
            devs[psi.name].append([abs(vals[psi_i] - est[psi.name]) for vals, _ in results if vals is not None])
    medians = {k: [float(np.median(v)) if v else float("nan") for v in rows] for k, rows in devs.items()}
    slopes = {k: fit_slope(n_list, m) for k, m in medians.items()}
    T = plan.T
    ref = [delta1_rate(T, T, n, delta, plan.all_first_order) for n in n_list]
    return SweepReport(n_list, [psi.name for psi in tests], medians, slopes,
                       {k: s is None for k, s in slopes.items()}, est, devs, failures, aspect,
                       plan.signature(), ref)


def x_decomposition_sweep(plan, n_list, seeds=10, seed=0, aspect=2.0, se=None, R=2000, d_mc=400, k=None,
                          pinv=False):
    """Median operator-norm residual of the X decomposition per n."""
    if se is None:
        se, _ = run_state_evolution(plan, aspect, R=R, d_mc=d_mc, seed=seed, pinv=pinv)
    k = plan.T if k is None else k
    out = {}
    for n in n_list:
        d = int(round(n / aspect))
        vals = []
        for t in range(seeds):
            s = trial_seed(seed, n, t)
            traj = run_plan(sample_data(n, d, s), plan, se=se, seed=s)
            vals.append(x_decomposition_diagnostic(traj, se, k, pinv=pinv).residual)
        out[n] = float(np.median(vals))
    return out


# ---------------------------------------------------------------- fix-pt audit


def _gram_stats(A, B):
    """Replicate mean and std error of <A_i, B_j> for lists of (R, m) columns."""
    a = np.stack(A, axis=1)
    b = np.stack(B, axis=1)
    vals = np.einsum("rim,rjm->rij", a, b)
    R = vals.shape[0]
    return vals.mean(0), vals.std(0, ddof=1) / math.sqrt(R)


def _block(lhs, rhs, mask=None):
    m1, s1 = lhs
    m2, s2 = rhs
    scale = 1e-10 * (1.0 + max(np.max(np.abs(m1)), np.max(np.abs(m2))))
    z = np.abs(m1 - m2) / (np.sqrt(s1**2 + s2**2) + scale)
    if mask is not None:
        z = np.where(mask, z, 0.0)
    return {"max_residual": float(np.max(z)) if z.size else 0.0,
            "max_abs_difference": float(np.max(np.abs(m1 - m2) * (1 if mask is None else mask))) if z.size else 0.0,
            "residuals": z}


def fixpoint_audit(se, bank):
    """Max residual, in MC standard errors, of each moment-matching block and the first-order hat identities.

    Hat iterates are rebuilt from the L matrices in ``se``, so a corrupted row
    shows up even though the bank was realized with the correct one.
    """
    T = se.T
    sq = math.sqrt(se.aspect)
    U, V, G, H = bank.u[:T], bank.v[:T], bank.g[:T], bank.h[:T]
    Uhat = [sum(se.L_u[j, l] * U[l] for l in range(j + 1)) for j in range(T)]
    Vhat = [sum(se.L_v[j, l] * V[l] for l in range(j + 1)) for j in range(T)]
    GV, UUh = _gram_stats(G, V), _gram_stats(U, Uhat)
    HU, VVh = _gram_stats(H, U), _gram_stats(V, Vhat)
    blocks = {
        "a_GG_UU": _block(_gram_stats(G, G), _gram_stats(U, U)),
        "b_HH_VV": _block(_gram_stats(H, H), _gram_stats(V, V)),
        "c_GV_UUhat": _block(GV, UUh),
        "d_HU_VVhat": _block((sq * HU[0], sq * HU[1]), VVh),
    }
    fo = np.array([k == "first-order" for k in se.kinds])
    # <uhat_j, u_l> = <v_j, g_l> and the mirror, on first-order rows, l <= j
    causal = np.tril(np.ones((T, T), dtype=bool)).T & fo[None, :]
    blocks["hat_u"] = _block(GV, UUh, causal)
    blocks["hat_v"] = _block((sq * HU[0], sq * HU[1]), VVh, causal)
    return {name: {k: v for k, v in b.items() if k != "residuals"} | {"residuals": b["residuals"].tolist()}
            for name, b in blocks.items()}


def audit_max(audit):
    return max(b["max_residual"] for b in audit.values())
