"""Initial-state preparation and the IPR / flow-entropy saturation diagnostics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_EVOLUTION, Propagator, ground_state
from .errors import InvalidArgument, PreconditionViolation
from .graph import seed_path
from .hilbert import (
    FeasibleBasis,
    StateVector,
    basis_configs,
    basis_state,
    embed,
    enumerate_feasible,
    full_basis,
    product_state,
    uniform_superposition,
)
from .operators import build_mixer

MIXER_EVOLVED = "mixer_evolved"
UNIFORM_FEASIBLE = "uniform_feasible"
MIXER_GROUND_STATE = "mixer_ground_state"
PREP_KINDS = (MIXER_EVOLVED, UNIFORM_FEASIBLE, MIXER_GROUND_STATE)

SCAN_DT = 0.25
SCAN_STOP = 15.0
SCAN_WINDOW = 10
SCAN_THETA = 0.02


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def ipr(state):
    amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    return float(np.sum(np.abs(amps) ** 4))


def edge_probabilities(state, inst=None, commodity=0):
    """``p_e = <E_e^2> / sum_e <E_e^2>`` for one commodity."""
    probs = state.probabilities()
    flows = basis_configs(state.basis)[:, commodity, :].astype(float)
    weight = probs @ (flows * flows)
    total = weight.sum()
    if total <= 0:
        raise PreconditionViolation("state carries no flow; edge distribution is undefined")
    return weight / total


def entropy_of(p):
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum() / (p.size * np.log(2.0)))


def flow_entropy(state, inst=None, commodity=0):
    """Normalised Shannon entropy of the edge-flow distribution."""
    return entropy_of(edge_probabilities(state, inst, commodity))


def flow_entropy_ceiling(n_edges):
    """Value of the flow entropy when every edge is equally likely."""
    return float(np.log(n_edges) / (n_edges * np.log(2.0)))


def sample_edge_probabilities(state, shots, rng, commodity=0):
    """Estimate ``p_e`` from computational-basis samples."""
    rng = np.random.default_rng(rng)
    probs = state.probabilities()
    draws = rng.choice(probs.size, size=int(shots), p=probs / probs.sum())
    flows = basis_configs(state.basis)[draws, commodity, :].astype(float)
    counts = (flows * flows).sum(axis=0)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# saturation scan
# ---------------------------------------------------------------------------


def detect_plateau(values, window=SCAN_WINDOW, theta=SCAN_THETA):
    """Index at which the curve is first seen to have flattened.

    A window of ``window`` consecutive points counts as flat when its range is
    below ``theta`` times the curve's total rise ``max(values) - values[0]``.
    The window is causal: the returned index is the last point of the first
    flat window, i.e. the earliest time the plateau can be recognised.
    """
    values = np.asarray(values, dtype=float)
    if window < 2:
        raise InvalidArgument("plateau window must span at least two points")
    if values.size < window:
        return None
    rise = values.max() - values[0]
    if rise <= 0:
        rise = abs(values).max()
    if rise == 0:
        return window - 1
    for end in range(window - 1, values.size):
        chunk = values[end - window + 1 : end + 1]
        if (chunk.max() - chunk.min()) / rise < theta:
            return end
    return None


@dataclass
class SaturationScan:
    times: np.ndarray
    ipr: np.ndarray
    entropy: np.ndarray
    t_sat: float | None
    detected: bool
    window: int = SCAN_WINDOW
    theta: float = SCAN_THETA
    ground_state_ipr: float | None = None
    uniform_ipr_floor: float | None = None
    extra: dict = field(default_factory=dict)

    def saturated_ipr(self):
        """Mean IPR from ``t_sat`` to the end of the scan."""
        if not self.detected:
            return None
        return float(self.ipr[self.times >= self.t_sat - 1e-12].mean())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "ipr", "flow_entropy"])
        for t, a, s in zip(self.times, self.ipr, self.entropy):
            w.writerow([f"{t:.6g}", repr(float(a)), repr(float(s))])
        return buf.getvalue()

    def summary(self):
        return {
            "t_sat": self.t_sat,
            "detected": self.detected,
            "ground_state_ipr": self.ground_state_ipr,
            "uniform_ipr_floor": self.uniform_ipr_floor,
            "saturated_ipr": self.saturated_ipr(),
            "window": self.window,
            "theta": self.theta,
            **self.extra,
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def mixer_basis(inst, mixer, cap=None):
    """The basis a given mixer is simulated on."""
    kind = mixer.upper()
    kw = {} if cap is None else {"cap": cap}
    if kind == "X":
        return full_basis(inst, **kw)
    if kind == "QED":
        return enumerate_feasible(inst, loopless=False, **kw)
    if kind == "RQED":
        return enumerate_feasible(inst, loopless=True, **kw)
    raise InvalidArgument(f"unknown mixer {mixer!r}")


def saturation_scan(
    inst,
    seed_cfg,
    mixer="RQED",
    stop=SCAN_STOP,
    dt=SCAN_DT,
    window=SCAN_WINDOW,
    theta=SCAN_THETA,
    with_ground_state=True,
    evolution=DEFAULT_EVOLUTION,
    cap=None,
):
    """Evolve a seed path under the mixer and look for the flow-entropy plateau.

    Single commodity only; pass ``inst.single(i)`` for the others.
    """
    if inst.k != 1:
        raise InvalidArgument("saturation scans are per commodity; pass a single-commodity instance")
    if dt <= 0 or stop < 0:
        raise InvalidArgument("need dt > 0 and stop >= 0")
    basis = mixer_basis(inst, mixer, cap)
    H = build_mixer(mixer, inst, basis)
    prop = Propagator(H, evolution)
    state = basis_state(seed_cfg, basis)
    n_steps = int(round(stop / dt))
    times = dt * np.arange(n_steps + 1)
    iprs = np.empty(times.size)
    ents = np.empty(times.size)
    psi = state.amplitudes
    for j in range(times.size):
        if j:
            psi = prop.apply(psi, dt)
            psi = psi / np.linalg.norm(psi)
        st = StateVector(psi, basis)
        iprs[j] = ipr(st)
        ents[j] = flow_entropy(st)
    idx = detect_plateau(ents, window, theta)
    gs_ipr = ipr(ground_state(H).state) if with_ground_state else None
    floor = 1.0 / basis.dim if isinstance(basis, FeasibleBasis) else None
    return SaturationScan(
        times,
        iprs,
        ents,
        None if idx is None else float(times[idx]),
        idx is not None,
        window,
        theta,
        gs_ipr,
        floor,
        {"mixer": mixer.upper(), "dim": basis.dim},
    )


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrepStrategy:
    """How to build the QAOA starting state.

    ``t_sat`` overrides the scan for :data:`MIXER_EVOLVED`; without it the
    flow-entropy scan is run per commodity and ``fallback_t`` is used when no
    plateau shows up.
    """

    kind: str = MIXER_EVOLVED
    t_sat: float | None = None
    seed: int | None = None
    seed_method: str = "uniform"
    fallback_t: float = SCAN_STOP
    scan_stop: float = SCAN_STOP
    scan_dt: float = SCAN_DT
    scan_window: int = SCAN_WINDOW
    scan_theta: float = SCAN_THETA

    def __post_init__(self):
        if self.kind not in PREP_KINDS:
            raise InvalidArgument(f"unknown prep strategy {self.kind!r}")
        if self.t_sat is not None and self.t_sat < 0:
            raise InvalidArgument("t_sat must be non-negative")


def _seed_and_time(sub, strategy, mixer_kind, rng):
    """Seed path and evolution time for one single-commodity instance."""
    cfg = seed_path(sub, 0, rng, method=strategy.seed_method)
    if strategy.t_sat is not None:
        return cfg, strategy.t_sat, {"t_sat": strategy.t_sat, "detected": None, "seed_cfg": cfg.tolist()}
    scan = saturation_scan(
        sub,
        cfg,
        mixer_kind,
        strategy.scan_stop,
        strategy.scan_dt,
        strategy.scan_window,
        strategy.scan_theta,
        with_ground_state=False,
    )
    t = scan.t_sat if scan.detected else strategy.fallback_t
    return cfg, t, {"t_sat": t, "detected": scan.detected, "seed_cfg": cfg.tolist()}


def prepare_initial(inst, strategy, mixer, basis=None, H=None):
    """Initial state on the basis the mixer runs on.

    Returns ``(state, info)``.  ``mixer`` is ``"X"``, ``"QED"`` or ``"RQED"``;
    ``basis``/``H`` may be passed in to reuse already built objects.
    """
    kind = mixer.upper()
    if basis is None:
        basis = mixer_basis(inst, kind)
    if strategy.kind == UNIFORM_FEASIBLE:
        if isinstance(basis, FeasibleBasis) and basis.loopless:
            return uniform_superposition(basis), {}
        return embed(uniform_superposition(enumerate_feasible(inst, loopless=True)), basis), {}
    if H is None:
        H = build_mixer(kind, inst, basis)
    if strategy.kind == MIXER_GROUND_STATE:
        gs = ground_state(H, seed=strategy.seed or 0)
        return gs.state, {"energy": gs.energy, "degenerate": gs.degenerate}

    # an unset seed is 0 so preparation is always reproducible
    rng = np.random.default_rng(0 if strategy.seed is None else strategy.seed)
    seeds = [_seed_and_time(inst.single(i), strategy, kind, rng) for i in range(inst.k)]
    infos = [info for _, _, info in seeds]
    if isinstance(basis, FeasibleBasis) and basis.factors is not None:
        parts = []
        for (cfg, t, _), fac, fac_H in zip(seeds, basis.factors, H.factors):
            parts.append(Propagator(fac_H).evolve(basis_state(cfg, fac), t))
        return product_state(parts, basis), {"commodities": infos}
    times = {t for _, t, _ in seeds}
    if len(times) > 1:
        # the joint register evolves under a single time; X is site-wise so
        # equal times reproduce the per-commodity tensor product exactly
        raise InvalidArgument("per-commodity evolution times differ on a joint register")
    cfg = np.concatenate([c for c, _, _ in seeds], axis=0)
    return Propagator(H).evolve(basis_state(cfg, basis), times.pop()), {"commodities": infos}
