"""The p-round variational loop, approximation-ratio metrics and the optimizer."""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize as sopt
from scipy import stats

from .dynamics import DEFAULT_EVOLUTION, Propagator
from .errors import InvalidArgument
from .graph import GraphFamily, cost_values, random_instance
from .hilbert import StateVector, basis_configs, enumerate_feasible, feasibility_masks, require_same_basis
from .operators import SparseHermitianOperator, build_mixer, cost_hamiltonian, expectation
from .prep import MIXER_EVOLVED, MIXER_GROUND_STATE, PrepStrategy, mixer_basis, prepare_initial

GAMMA_MAX = 2 * math.pi
BETA_MAX = math.pi
STEP_CAP = 200
MIXERS = ("X", "QED", "RQED")


class DegenerateInstanceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QaoaSchedule:
    gammas: tuple
    betas: tuple

    def __post_init__(self):
        g = tuple(float(x) for x in self.gammas)
        b = tuple(float(x) for x in self.betas)
        if len(g) != len(b):
            raise InvalidArgument("need as many gammas as betas")
        if any(not 0 <= x <= GAMMA_MAX for x in g):
            raise InvalidArgument("gammas must lie in [0, 2*pi]")
        if any(not 0 <= x <= BETA_MAX for x in b):
            raise InvalidArgument("betas must lie in [0, pi]")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def p(self):
        return len(self.gammas)

    def vector(self):
        return np.array(self.gammas + self.betas)

    @classmethod
    def from_vector(cls, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        p = x.size // 2
        return cls(tuple(np.minimum(x[:p], GAMMA_MAX)), tuple(np.minimum(x[p:], BETA_MAX)))

    @staticmethod
    def bounds(p):
        return [(0.0, GAMMA_MAX)] * p + [(0.0, BETA_MAX)] * p


@dataclass(frozen=True)
class OptimizerConfig:
    popsize: int = 15
    mutation: float = 0.8
    recombination: float = 0.7
    de_maxiter: int = STEP_CAP
    de_tol: float = 0.01
    local_maxiter: int = STEP_CAP
    fd_step: float = 1e-4
    seed: int = 0
    # "shifted": minimise <Pi H_C Pi> - C_max <Pi> (equivalently maximise AR);
    # "projected": minimise <Pi H_C Pi> as written
    objective: str = "shifted"

    def __post_init__(self):
        if self.de_maxiter > STEP_CAP or self.local_maxiter > STEP_CAP:
            raise InvalidArgument(f"optimizer stages are capped at {STEP_CAP} steps")
        if self.de_maxiter < 0 or self.local_maxiter < 0:
            raise InvalidArgument("step counts must be non-negative")
        if self.popsize < 1 or self.fd_step <= 0:
            raise InvalidArgument("popsize must be positive and fd_step > 0")
        if self.objective not in ("shifted", "projected"):
            raise InvalidArgument(f"unknown objective {self.objective!r}")


# ---------------------------------------------------------------------------
# states and metrics
# ---------------------------------------------------------------------------


def qaoa_state(H_C, H_M, schedule, psi0, propagator=None):
    """Alternate cost phases and mixer evolutions, first round first."""
    if not H_C.is_diagonal:
        raise InvalidArgument("cost Hamiltonian must be diagonal")
    require_same_basis(H_C.basis, psi0.basis)
    require_same_basis(H_M.basis, psi0.basis)
    prop = propagator or Propagator(H_M)
    psi = psi0.amplitudes
    for g, b in zip(schedule.gammas, schedule.betas):
        psi = np.exp(-1j * g * H_C.diagonal) * psi
        psi = prop.apply(psi, b)
    return StateVector(psi / np.linalg.norm(psi), psi0.basis)


def projected_cost(state, H_C, Pi=None):
    """``<psi| Pi H_C Pi |psi>``; ``Pi=None`` means the identity."""
    require_same_basis(H_C.basis, state.basis)
    if Pi is None:
        return expectation(H_C, state)
    require_same_basis(Pi.basis, state.basis)
    if H_C.is_diagonal and Pi.is_diagonal:
        return float(state.probabilities() @ (Pi.diagonal * H_C.diagonal * Pi.diagonal))
    v = Pi.matvec(state.amplitudes)
    return float(np.vdot(v, H_C.matvec(v)).real)


def feasible_weight(state, Pi=None):
    if Pi is None:
        return 1.0
    return expectation(Pi, state)


def approximation_ratio(state, H_C, Pi, c_min, c_max):
    """``<Pi (C_max - H_C) Pi> / (C_max - C_min)``.

    When ``C_max == C_min`` the ratio is taken to be ``<Pi>`` and a
    :class:`DegenerateInstanceWarning` is emitted.
    """
    w = feasible_weight(state, Pi)
    if c_max - c_min <= 1e-12 * max(1.0, abs(c_max)):
        warnings.warn("all feasible solutions cost the same", DegenerateInstanceWarning, stacklevel=2)
        return w
    return (c_max * w - projected_cost(state, H_C, Pi)) / (c_max - c_min)


# ---------------------------------------------------------------------------
# problem setup
# ---------------------------------------------------------------------------


@dataclass
class QaoaSetup:
    """Everything a run needs, built once per (instance, mixer)."""

    inst: object
    mixer: str
    basis: object
    H_C: object
    H_cost: object
    H_M: object
    Pi: object
    c_min: float
    c_max: float
    n_feasible: int
    propagator: object

    @property
    def degenerate(self):
        return self.c_max - self.c_min <= 1e-12 * max(1.0, abs(self.c_max))


def feasible_cost_range(inst, cap=None):
    """Exhaustive ``(C_min, C_max, count)`` over the loopless feasible set."""
    kw = {} if cap is None else {"cap": cap}
    b = enumerate_feasible(inst, loopless=True, **kw)
    costs = cost_values(b.configs, inst)
    return float(costs.min()), float(costs.max()), b.dim


def setup(inst, mixer, evolution=DEFAULT_EVOLUTION, basis=None, cap=None):
    kind = mixer.upper()
    if kind not in MIXERS:
        raise InvalidArgument(f"unknown mixer {mixer!r}")
    basis = basis or mixer_basis(inst, kind, cap)
    H_cost = cost_hamiltonian(inst, basis)
    H_C = cost_hamiltonian(inst, basis, penalty=inst.penalty) if kind == "X" else H_cost
    if kind == "RQED":
        Pi = None
    else:
        _, clean = feasibility_masks(basis)
        Pi = SparseHermitianOperator(basis, diagonal=clean.astype(float), name="Pi")
    H_M = build_mixer(kind, inst, basis)
    c_min, c_max, n = feasible_cost_range(inst, cap)
    return QaoaSetup(inst, kind, basis, H_C, H_cost, H_M, Pi, c_min, c_max, n, Propagator(H_M, evolution))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class SampleResult:
    best_config: list | None
    best_cost: float | None
    histogram: dict
    shots: int
    n_feasible: int
    n_infeasible: int
    n_loop: int

    @property
    def empty(self):
        return self.n_feasible == 0

    @property
    def violation_fraction(self):
        return (self.n_infeasible + self.n_loop) / self.shots


def sample_and_postprocess(state, inst, shots, rng):
    """Born-rule samples; keep feasible loop-free ones and report the cheapest."""
    if shots < 1:
        raise InvalidArgument("need at least one shot")
    rng = np.random.default_rng(rng)
    probs = state.probabilities()
    draws = rng.choice(probs.size, size=int(shots), p=probs / probs.sum())
    feas, clean = feasibility_masks(state.basis)
    idx, counts = np.unique(draws, return_counts=True)
    n_infeasible = int(counts[~feas[idx]].sum())
    n_loop = int(counts[feas[idx] & ~clean[idx]].sum())
    keep = clean[idx]
    idx, counts = idx[keep], counts[keep]
    configs = basis_configs(state.basis)
    hist = {}
    best_cfg, best_cost = None, None
    if idx.size:
        costs = cost_values(configs[idx], inst)
        for j, c in zip(idx, counts):
            hist[",".join(map(str, configs[j].reshape(-1).tolist()))] = int(c)
        b = int(np.argmin(costs))
        best_cfg, best_cost = configs[idx[b]].tolist(), float(costs[b])
    return SampleResult(best_cfg, best_cost, hist, int(shots), int(counts.sum()), n_infeasible, n_loop)


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    mixer: str
    p: int
    prep: str
    gammas: list
    betas: list
    objective: float
    projected_cost: float
    approximation_ratio: float
    feasible_probability: float
    c_min: float
    c_max: float
    best_sample_config: list | None
    best_sample_cost: float | None
    sample_histogram: dict
    sample_violation_fraction: float
    eval_count: int
    de_evals: int
    local_evals: int
    de_iterations: int
    local_iterations: int
    stalled: bool
    degenerate: bool
    instance_seed: int | None = None
    optimizer_seed: int | None = None
    prep_info: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    wall_time: float = 0.0

    VOLATILE = ("wall_time",)

    def to_dict(self, include_volatile=True):
        d = asdict(self)
        if not include_volatile:
            for k in self.VOLATILE:
                d.pop(k, None)
        return d

    def to_json(self, include_volatile=True):
        return json.dumps(_jsonable(self.to_dict(include_volatile)), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d.setdefault("wall_time", 0.0)
        return cls(**d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


class _Objective:
    """Counts evaluations and records the incumbent after each one."""

    def __init__(self, S, psi0, p, kind):
        self.S, self.psi0, self.p, self.kind = S, psi0, p, kind
        self.evals = 0
        self.best = np.inf
        self.best_x = None
        self.history = []
        cost = S.H_cost.diagonal
        if S.Pi is None:
            self.weights = cost - S.c_max if kind == "shifted" else cost
        else:
            pi = S.Pi.diagonal
            self.weights = pi * (cost - S.c_max) if kind == "shifted" else pi * cost
        self.phase_diag = S.H_C.diagonal

    def state(self, x):
        psi = self.psi0.amplitudes
        g, b = x[: self.p], x[self.p :]
        for gj, bj in zip(g, b):
            psi = np.exp(-1j * gj * self.phase_diag) * psi
            psi = self.S.propagator.apply(psi, bj)
        return psi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        psi = self.state(x)
        val = float((np.abs(psi) ** 2) @ self.weights)
        self.evals += 1
        if val < self.best:
            self.best = val
            self.best_x = x.copy()
        self.history.append(self.best)
        return val

    def gradient(self, x, h, bounds):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        for j, (lo, hi) in enumerate(bounds):
            up, dn = min(x[j] + h, hi), max(x[j] - h, lo)
            xu, xd = x.copy(), x.copy()
            xu[j], xd[j] = up, dn
            g[j] = (self(xu) - self(xd)) / (up - dn)
        return g


def optimize(inst, mixer, p, prep=None, opt=None, evolution=DEFAULT_EVOLUTION, shots=1000, S=None, psi0=None):
    """Two-stage (differential evolution, then L-BFGS-B) schedule search."""
    opt = opt or OptimizerConfig()
    if p < 0:
        raise InvalidArgument("p must be non-negative")
    t0 = time.perf_counter()
    S = S or setup(inst, mixer, evolution)
    prep = prep or default_prep(S.mixer, seed=inst.seed if inst.seed is not None else opt.seed)
    prep_info = {}
    if psi0 is None:
        psi0, prep_info = prepare_initial(inst, prep, S.mixer, basis=S.basis, H=S.H_M)
    f = _Objective(S, psi0, p, opt.objective)
    bounds = QaoaSchedule.bounds(p)
    de_iter = loc_iter = 0
    stalled = False
    if p == 0:
        x_best = np.zeros(0)
        f(x_best)
        de_evals = loc_evals = 0
    else:
        de = sopt.differential_evolution(
            f,
            bounds,
            popsize=opt.popsize,
            mutation=opt.mutation,
            recombination=opt.recombination,
            maxiter=opt.de_maxiter,
            tol=opt.de_tol,
            seed=opt.seed,
            polish=False,
            init="latinhypercube",
        )
        de_evals = f.evals
        de_iter = int(de.nit)
        loc = None
        if opt.local_maxiter > 0:
            loc = sopt.minimize(
                f,
                de.x,
                method="L-BFGS-B",
                jac=lambda x: f.gradient(x, opt.fd_step, bounds),
                bounds=bounds,
                options={"maxiter": opt.local_maxiter},
            )
            loc_iter = int(loc.nit)
            stalled = not loc.success and loc_iter < opt.local_maxiter
        loc_evals = f.evals - de_evals
        x_best = f.best_x
    sched = QaoaSchedule.from_vector(x_best)
    psi = f.state(sched.vector())
    state = StateVector(psi / np.linalg.norm(psi), S.basis)
    pc = projected_cost(state, S.H_cost, S.Pi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateInstanceWarning)
        ar = approximation_ratio(state, S.H_cost, S.Pi, S.c_min, S.c_max)
    samples = sample_and_postprocess(state, inst, shots, np.random.default_rng([opt.seed, 1]))
    return RunResult(
        mixer=S.mixer,
        p=p,
        prep=prep.kind,
        gammas=list(sched.gammas),
        betas=list(sched.betas),
        objective=float(f.best),
        projected_cost=pc,
        approximation_ratio=float(ar),
        feasible_probability=feasible_weight(state, S.Pi),
        c_min=S.c_min,
        c_max=S.c_max,
        best_sample_config=samples.best_config,
        best_sample_cost=samples.best_cost,
        sample_histogram=samples.histogram,
        sample_violation_fraction=samples.violation_fraction,
        eval_count=f.evals,
        de_evals=de_evals,
        local_evals=loc_evals,
        de_iterations=de_iter,
        local_iterations=loc_iter,
        stalled=bool(stalled),
        degenerate=S.degenerate,
        instance_seed=inst.seed,
        optimizer_seed=opt.seed,
        prep_info=_jsonable(prep_info),
        history=list(f.history),
        wall_time=time.perf_counter() - t0,
    )


def default_prep(mixer, seed=None, t_sat=None):
    """X starts in its own ground state, the gauge mixers from an evolved seed path."""
    if mixer.upper() == "X":
        return PrepStrategy(MIXER_GROUND_STATE, seed=seed)
    return PrepStrategy(MIXER_EVOLVED, t_sat=t_sat, seed=seed)


def uniform_feasible_ar(inst):
    """AR of the equal superposition of loop-free feasible paths (the random baseline)."""
    b = enumerate_feasible(inst, loopless=True)
    costs = cost_values(b.configs, inst)
    lo, hi = costs.min(), costs.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return 1.0
    return float(np.mean((hi - costs) / (hi - lo)))


# ---------------------------------------------------------------------------
# averages over random instances
# ---------------------------------------------------------------------------


@dataclass
class AarResult:
    mean: float
    ci_low: float
    ci_high: float
    ars: list
    runs: list


def bootstrap_ci(values, confidence=0.9, seed=0, n_resamples=2000):
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.all(values == values[0]):
        m = float(values.mean())
        return m, m
    res = stats.bootstrap(
        (values,),
        np.mean,
        confidence_level=confidence,
        n_resamples=n_resamples,
        method="percentile",
        random_state=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def instance_seeds(root_seed, n):
    """Independent per-instance integer seeds derived from one root seed."""
    children = np.random.SeedSequence(root_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def aar(
    family,
    n_instances,
    mixer,
    p,
    prep_kind=None,
    kind="sssp",
    root_seed=0,
    k=2,
    penalty=1.0,
    opt=None,
    t_sat=None,
    confidence=0.9,
    instances=None,
    shots=1000,
):
    """Mean AR over random instances with a bootstrap confidence interval."""
    if n_instances < 1:
        raise InvalidArgument("need at least one instance")
    if isinstance(family, str):
        family = GraphFamily.parse(family)
    opt = opt or OptimizerConfig()
    seeds = instance_seeds(root_seed, n_instances)
    runs = []
    for j, s in enumerate(seeds):
        inst = instances[j] if instances is not None else random_instance(family, kind, s, k=k, penalty=penalty)
        if prep_kind is None:
            prep = default_prep(mixer, seed=s, t_sat=t_sat)
        else:
            prep = PrepStrategy(prep_kind, t_sat=t_sat, seed=s)
        runs.append(optimize(inst, mixer, p, prep, opt, shots=shots))
    ars = [r.approximation_ratio for r in runs]
    lo, hi = bootstrap_ci(ars, confidence, seed=root_seed)
    return AarResult(float(np.mean(ars)), lo, hi, ars, runs)
