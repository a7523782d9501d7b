"""Command-line experiment driver.

Every subcommand takes an optional JSON parameter file plus ``--set key=value``
overrides, validates the merged parameters against a schema before doing any
work, and tags every artifact it writes with a hash of those parameters.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration, 3 resource
cap exceeded.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import multiprocessing
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .duality import apply_heights, dual_heights, path_transform, trace_json, transform_regions
from .dynamics import EvolutionConfig
from .errors import ConfigValidationError, InvalidArgument, QedQaoaError, ResourceCapError
from .graph import EDP, SSSP, Commodity, GraphFamily, ProblemInstance, all_simple_paths, cost_values, random_instance
from .graph import seed_path
from .hilbert import (
    DEFAULT_FEASIBLE_CAP,
    DEFAULT_FULL_CAP,
    census_row,
    enumerate_feasible,
    format_census,
)
from .prep import PREP_KINDS, PrepStrategy, prepare_initial, saturation_scan
from .qaoa import MIXERS, OptimizerConfig, bootstrap_ci, default_prep, instance_seeds, optimize, setup

EXIT_OK, EXIT_FAILURE, EXIT_INVALID, EXIT_CAP = 0, 1, 2, 3

DELTA_SWEEP = [0.5, 1.0, 2.0, 4.0]
SWEEP_FIELDS = ["instance_seed", "mixer", "p", "prep", "ar", "eval_count", "wall_ms"]
SWEEP_EXTRA_FIELDS = ["family", "kind", "penalty", "root_seed", "optimizer_seed", "status", "error", "config_hash"]
SUMMARY_FIELDS = ["family", "kind", "mixer", "p", "prep", "penalty", "n", "n_failed", "aar", "ci_low", "ci_high"]

# ---------------------------------------------------------------------------
# schemas and defaults
# ---------------------------------------------------------------------------

_FAMILY = {"type": "string"}
_KIND = {"enum": [SSSP, EDP]}
_MIXER = {"enum": list(MIXERS)}
_PREP = {"enum": [None, *PREP_KINDS]}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG = {"type": "number", "minimum": 0}
_VERTEX = {"type": ["integer", "null"], "minimum": 0}

_OPTIMIZER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "popsize": _POS_INT,
        "mutation": {"type": "number"},
        "recombination": {"type": "number"},
        "de_maxiter": {"type": "integer", "minimum": 0},
        "de_tol": _NONNEG,
        "local_maxiter": {"type": "integer", "minimum": 0},
        "fd_step": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "objective": {"enum": ["shifted", "projected"]},
    },
}
_EVOLUTION = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "krylov_dim": {"type": "integer", "minimum": 2},
        "max_substeps": _POS_INT,
    },
}

SCHEMAS = {
    "census": {
        "families": {"type": "array", "items": _FAMILY, "minItems": 1},
        "kind": _KIND,
        "commodities": {
            "type": ["array", "null"],
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        },
        "with_loops": {"type": "boolean"},
    },
    "satscan": {
        "family": _FAMILY,
        "source": _VERTEX,
        "sink": _VERTEX,
        "mixer": {"enum": ["QED", "RQED"]},
        "stop": _NONNEG,
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "window": {"type": "integer", "minimum": 2},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "seed_method": {"enum": ["uniform", "lerw"]},
        "with_ground_state": {"type": "boolean"},
        "evolution": _EVOLUTION,
    },
    "run": {
        "family": _FAMILY,
        "kind": _KIND,
        "k": _POS_INT,
        "penalty": _NONNEG,
        "mixer": _MIXER,
        "p": {"type": "integer", "minimum": 0},
        "prep": _PREP,
        "t_sat": {"type": ["number", "null"], "minimum": 0},
        "shots": {"type": "integer", "minimum": 0},
        "instance_seed": {"type": ["integer", "null"], "minimum": 0},
        "optimizer": _OPTIMIZER,
        "evolution": _EVOLUTION,
    },
    "sweep": {
        "families": {"type": "array", "items": _FAMILY, "minItems": 1},
        "kind": _KIND,
        "k": _POS_INT,
        "mixers": {"type": "array", "items": _MIXER, "minItems": 1},
        "ps": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "preps": {"type": "array", "items": _PREP, "minItems": 1},
        "penalties": {"type": "array", "items": _NONNEG, "minItems": 1},
        "n_instances": _POS_INT,
        "t_sat": {"type": ["number", "null"], "minimum": 0},
        "shots": {"type": "integer", "minimum": 0},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "workers": _POS_INT,
        "optimizer": _OPTIMIZER,
        "evolution": _EVOLUTION,
    },
    "oracle": {
        "family": _FAMILY,
        "kind": _KIND,
        "k": _POS_INT,
        "penalty": _NONNEG,
        "instance_seed": {"type": ["integer", "null"], "minimum": 0},
        "list_states": {"type": "boolean"},
    },
    "transform": {
        "family": _FAMILY,
        "source": _VERTEX,
        "sink": _VERTEX,
        "path_a": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "path_b": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
    },
}

DEFAULTS = {
    "census": {
        "families": ["triangle:2", "triangle:3", "triangle:4"],
        "kind": SSSP,
        "commodities": None,
        "with_loops": False,
    },
    "satscan": {
        "family": "grid:5x5",
        "source": None,
        "sink": None,
        "mixer": "RQED",
        "stop": 15.0,
        "dt": 0.25,
        "window": 10,
        "theta": 0.02,
        "seed_method": "uniform",
        "with_ground_state": True,
        "evolution": {},
    },
    "run": {
        "family": "triangle:2",
        "kind": SSSP,
        "k": 2,
        "penalty": 1.0,
        "mixer": "RQED",
        "p": 1,
        "prep": None,
        "t_sat": None,
        "shots": 1000,
        "instance_seed": None,
        "optimizer": {},
        "evolution": {},
    },
    "sweep": {
        "families": ["triangle:2"],
        "kind": SSSP,
        "k": 2,
        "mixers": ["RQED"],
        "ps": [1],
        "preps": [None],
        "penalties": [1.0],
        "n_instances": 10,
        "t_sat": None,
        "shots": 1000,
        "confidence": 0.9,
        "workers": 1,
        "optimizer": {},
        "evolution": {},
    },
    "oracle": {
        "family": "triangle:2",
        "kind": SSSP,
        "k": 2,
        "penalty": 1.0,
        "instance_seed": None,
        "list_states": True,
    },
    "transform": {
        "family": "grid:3x3",
        "source": None,
        "sink": None,
        "path_a": None,
        "path_b": None,
    },
}


def _schema(command):
    return {"type": "object", "additionalProperties": False, "properties": SCHEMAS[command]}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(params, assignment):
    """Apply one ``dotted.key=value`` override in place; values are parsed as JSON."""
    if "=" not in assignment:
        raise ConfigValidationError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = params
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigValidationError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = _parse_value(value)


def resolve_config(command, file_params=None, overrides=(), seed=0, cap=None):
    """Merge defaults, file and overrides; validate; return ``(params, hash)``.

    The hash covers the validated parameters, the root seed and the cap, so
    two invocations that would compute the same thing share it.
    """
    if command not in SCHEMAS:
        raise ConfigValidationError(f"unknown command {command!r}")
    user = copy.deepcopy(file_params or {})
    if not isinstance(user, dict):
        raise ConfigValidationError("configuration file must hold a JSON object")
    for o in overrides:
        apply_override(user, o)
    try:
        jsonschema.validate(user, _schema(command))
    except jsonschema.ValidationError as exc:
        where = ".".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigValidationError(f"{where}: {exc.message}") from None
    params = copy.deepcopy(DEFAULTS[command])
    for key, value in user.items():
        if isinstance(params.get(key), dict) and isinstance(value, dict):
            params[key].update(value)
        else:
            params[key] = value
    _semantic_checks(command, params)
    if cap is not None and cap < 1:
        raise ConfigValidationError("--cap must be positive")
    return params, config_hash(command, params, seed, cap)


def _semantic_checks(command, p):
    """Checks the schema language cannot express; run before any compute."""
    fams = p.get("families", [p.get("family")])
    for f in fams:
        try:
            GraphFamily.parse(f)
        except InvalidArgument as exc:
            raise ConfigValidationError(str(exc)) from None
    try:
        if "optimizer" in p:
            OptimizerConfig(**p["optimizer"])
        if "evolution" in p:
            EvolutionConfig(**p["evolution"])
    except InvalidArgument as exc:
        raise ConfigValidationError(str(exc)) from None
    if command == "transform" and (p["path_a"] is None) != (p["path_b"] is None):
        raise ConfigValidationError("give both path_a and path_b or neither")


def config_hash(command, params, seed, cap):
    blob = json.dumps({"command": command, "params": params, "seed": seed, "cap": cap}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


class StageError(QedQaoaError):
    """Failure inside one pipeline stage; keeps the stage tag and the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _caps(cap):
    return (DEFAULT_FULL_CAP, DEFAULT_FEASIBLE_CAP) if cap is None else (cap, cap)


def _basis_cap(mixer, cap):
    full, feas = _caps(cap)
    return full if mixer.upper() == "X" else feas


def _default_pair(net):
    if "source_corner" in net.meta:
        return net.meta["source_corner"], net.meta["sink_corner"]
    return 0, net.n_vertices - 1


def _endpoints(net, p, rng):
    s, t = p.get("source"), p.get("sink")
    if s is None and t is None:
        s, t = (int(x) for x in rng.choice(net.n_vertices, size=2, replace=False))
    elif s is None or t is None:
        raise ConfigValidationError("give both source and sink or neither")
    if not (0 <= s < net.n_vertices and 0 <= t < net.n_vertices) or s == t:
        raise ConfigValidationError(f"invalid endpoints ({s}, {t}) for a {net.n_vertices}-vertex graph")
    return s, t


def _instance(p, seed):
    family = GraphFamily.parse(p["family"])
    inst_seed = p["instance_seed"] if p.get("instance_seed") is not None else instance_seeds(seed, 1)[0]
    return random_instance(family, p["kind"], inst_seed, k=p.get("k", 1), penalty=p.get("penalty", 1.0))


def _prep_for(mixer, prep_kind, seed, t_sat):
    if prep_kind is None:
        return default_prep(mixer, seed=seed, t_sat=t_sat)
    return PrepStrategy(prep_kind, t_sat=t_sat, seed=seed)


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _with_hash_column(csv_text, h):
    rows = list(csv.reader(io.StringIO(csv_text)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rows[0] + ["config_hash"])
    for r in rows[1:]:
        w.writerow(r + [h])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_census(params, seed, out_dir, cap, h):
    """Total versus feasible state counts per family; a cap hit yields an error row."""
    rows = []
    failed = None
    _, feas_cap = _caps(cap)
    for text in params["families"]:
        family = GraphFamily.parse(text)
        net = family.build()
        if params["commodities"] is None:
            pairs = [_default_pair(net)]
        else:
            pairs = params["commodities"]
        try:
            comms = tuple(Commodity(int(s), int(t)) for s, t in pairs)
            # SSSP is single-commodity; other commodity counts are counted as EDP
            kind = params["kind"] if len(comms) == 1 else EDP
            inst = ProblemInstance(net, comms, kind)
            rows.append(census_row(inst, family.label, params["with_loops"], cap=feas_cap))
        except ResourceCapError as exc:
            rows.append({"graph": family.label, "total_states": "", "feasible_states": f"error: {exc}", "fraction": ""})
            failed = exc
            break
        except InvalidArgument as exc:
            raise ConfigValidationError(str(exc)) from None
    text = format_census(rows, params["with_loops"])
    _write(Path(out_dir) / "census.csv", _with_hash_column(text, h))
    sys.stdout.write(text)
    if failed is not None:
        raise failed
    return rows


def cmd_satscan(params, seed, out_dir, cap, h):
    family = GraphFamily.parse(params["family"])
    net = family.build()
    rng = np.random.default_rng(seed)
    s, t = _endpoints(net, params, rng)
    inst = ProblemInstance(net, (Commodity(s, t),), SSSP, seed=seed)
    cfg = seed_path(inst, 0, rng, method=params["seed_method"])
    scan = saturation_scan(
        inst,
        cfg,
        params["mixer"],
        params["stop"],
        params["dt"],
        params["window"],
        params["theta"],
        with_ground_state=params["with_ground_state"],
        evolution=EvolutionConfig(**params["evolution"]),
        cap=_caps(cap)[1],
    )
    summary = scan.summary()
    summary.update(
        graph=family.label,
        source=s,
        sink=t,
        seed=seed,
        seed_path=cfg[0].tolist(),
        config_hash=h,
    )
    _write(Path(out_dir) / "satscan.csv", _with_hash_column(scan.to_csv(), h))
    _write(Path(out_dir) / "satscan.json", _dump(summary))
    sys.stdout.write(_dump(summary))
    return summary


def _run_pipeline(inst, mixer, p, prep, opt, evolution, shots, cap):
    """Pre-process, prepare, optimise, post-process; failures carry the stage tag."""
    try:
        S = setup(inst, mixer, evolution, cap=_basis_cap(mixer, cap))
    except Exception as exc:
        raise StageError("preprocess", exc) from exc
    try:
        psi0, info = prepare_initial(inst, prep, S.mixer, basis=S.basis, H=S.H_M)
    except Exception as exc:
        raise StageError("prepare", exc) from exc
    try:
        result = optimize(inst, mixer, p, prep, opt, evolution, shots=shots, S=S, psi0=psi0)
    except Exception as exc:
        raise StageError("optimize", exc) from exc
    result.prep_info = json.loads(_dump(info))
    return result


def cmd_run(params, seed, out_dir, cap, h):
    inst = _instance(params, seed)
    opt = OptimizerConfig(**params["optimizer"])
    prep = _prep_for(params["mixer"], params["prep"], inst.seed, params["t_sat"])
    evolution = EvolutionConfig(**params["evolution"])
    t0 = time.perf_counter()
    result = _run_pipeline(inst, params["mixer"], params["p"], prep, opt, evolution, params["shots"], cap)
    wall = time.perf_counter() - t0
    record = result.to_dict(include_volatile=False)
    record.update(
        command="run",
        graph=GraphFamily.parse(params["family"]).label,
        kind=inst.kind,
        commodities=[[c.source, c.sink] for c in inst.commodities],
        penalty=inst.penalty,
        root_seed=seed,
        config_hash=h,
    )
    _write(Path(out_dir) / "run.json", _dump(record))
    _write(Path(out_dir) / "run_timing.json", _dump({"wall_time": wall, "config_hash": h}))
    sys.stdout.write(
        f"{result.mixer} p={result.p} AR={result.approximation_ratio:.6f} "
        f"feasible={result.feasible_probability:.6f} evals={result.eval_count}\n"
    )
    return record


def _sweep_task(task):
    """One (family, mixer, p, prep, penalty, instance) cell; runs in a worker."""
    family = GraphFamily.parse(task["family"])
    inst = random_instance(family, task["kind"], task["instance_seed"], k=task["k"], penalty=task["penalty"])
    opt = OptimizerConfig(**task["optimizer"])
    prep = _prep_for(task["mixer"], task["prep"], task["instance_seed"], task["t_sat"])
    evolution = EvolutionConfig(**task["evolution"])
    t0 = time.perf_counter()
    try:
        r = _run_pipeline(inst, task["mixer"], task["p"], prep, opt, evolution, task["shots"], task["cap"])
        status, error, ar, evals = "ok", "", r.approximation_ratio, r.eval_count
        prep_name = r.prep
    except Exception as exc:  # recorded per row so the sweep continues
        status, error, ar, evals = "error", str(exc), None, 0
        prep_name = prep.kind
    return {
        "instance_seed": task["instance_seed"],
        "mixer": task["mixer"],
        "p": task["p"],
        "prep": prep_name,
        "ar": ar,
        "eval_count": evals,
        "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
        "family": family.label,
        "kind": task["kind"],
        "penalty": task["penalty"],
        "root_seed": task["root_seed"],
        "optimizer_seed": opt.seed,
        "status": status,
        "error": error,
        "config_hash": task["config_hash"],
    }


def _cell_name(task):
    prep = task["prep"] or "default"
    label = GraphFamily.parse(task["family"]).label
    return f"{label}_{task['mixer']}_p{task['p']}_{prep}_d{task['penalty']:g}_{task['instance_seed']}.json"


def sweep_tasks(params, seed, cap, h):
    seeds = instance_seeds(seed, params["n_instances"])
    tasks = []
    for fam in params["families"]:
        for mixer in params["mixers"]:
            for p in params["ps"]:
                for prep in params["preps"]:
                    for pen in params["penalties"]:
                        for s in seeds:
                            tasks.append(
                                {
                                    "family": fam,
                                    "kind": params["kind"],
                                    "k": params["k"],
                                    "mixer": mixer,
                                    "p": p,
                                    "prep": prep,
                                    "penalty": float(pen),
                                    "instance_seed": s,
                                    "t_sat": params["t_sat"],
                                    "shots": params["shots"],
                                    "optimizer": params["optimizer"],
                                    "evolution": params["evolution"],
                                    "root_seed": seed,
                                    "cap": cap,
                                    "config_hash": h,
                                }
                            )
    return tasks


def _load_cell(path, h):
    row = json.loads(path.read_text())
    if row.get("config_hash") != h:
        raise ConfigValidationError(f"{path} was written by a different configuration; refusing to resume")
    return row


def cmd_sweep(params, seed, out_dir, cap, h):
    """AAR grid over (family, mixer, p, prep, penalty); resumable per instance."""
    out = Path(out_dir)
    cells = out / "sweep_runs"
    manifest = out / "sweep_manifest.json"
    if manifest.exists():
        old = json.loads(manifest.read_text())
        if old.get("config_hash") != h:
            raise ConfigValidationError(
                f"{out} holds a sweep with config hash {old.get('config_hash')}, not {h}; use a fresh --out-dir"
            )
    _write(manifest, _dump({"config_hash": h, "params": params, "root_seed": seed, "cap": cap}))
    cells.mkdir(parents=True, exist_ok=True)
    tasks = sweep_tasks(params, seed, cap, h)
    rows, todo = {}, []
    for j, task in enumerate(tasks):
        path = cells / _cell_name(task)
        if path.exists():
            row = _load_cell(path, h)
            if row["status"] == "ok":
                rows[j] = row
                continue
        todo.append(j)

    def record(j, row):
        # the parent process is the only writer
        _write(cells / _cell_name(tasks[j]), _dump(row))
        rows[j] = row

    if params["workers"] > 1 and len(todo) > 1:
        # fork is unsafe once the OpenMP runtime behind numba is initialised
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=params["workers"], mp_context=ctx) as pool:
            for j, row in zip(todo, pool.map(_sweep_task, [tasks[j] for j in todo])):
                record(j, row)
    else:
        for j in todo:
            record(j, _sweep_task(tasks[j]))

    ordered = [rows[j] for j in range(len(tasks))]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS + SWEEP_EXTRA_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in ordered:
        w.writerow({**row, "ar": "" if row["ar"] is None else repr(row["ar"])})
    _write(out / "sweep.csv", buf.getvalue())

    summary = _summarise(ordered, params, seed)
    sbuf = io.StringIO()
    sw = csv.DictWriter(sbuf, fieldnames=SUMMARY_FIELDS + ["root_seed", "config_hash"], lineterminator="\n")
    sw.writeheader()
    for row in summary:
        sw.writerow({**row, "root_seed": seed, "config_hash": h})
    _write(out / "sweep_summary.csv", sbuf.getvalue())
    sys.stdout.write(sbuf.getvalue())
    return summary


def _summarise(rows, params, seed):
    groups = {}
    for r in rows:
        key = (r["family"], r["kind"], r["mixer"], r["p"], r["prep"], r["penalty"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        ars = [r["ar"] for r in rs if r["status"] == "ok"]
        mean = float(np.mean(ars)) if ars else None
        lo, hi = bootstrap_ci(ars, params["confidence"], seed=seed) if ars else (None, None)
        out.append(dict(zip(SUMMARY_FIELDS[:6], key), n=len(ars), n_failed=len(rs) - len(ars), aar=mean, ci_low=lo, ci_high=hi))
    return out


def cmd_oracle(params, seed, out_dir, cap, h):
    """Exhaustive C_min / C_max / feasible-set dump for one instance."""
    inst = _instance(params, seed)
    basis = enumerate_feasible(inst, loopless=True, cap=_caps(cap)[1])
    costs = cost_values(basis.configs, inst)
    c_min, c_max = float(costs.min()), float(costs.max())
    optimal = np.flatnonzero(np.isclose(costs, c_min, rtol=0, atol=1e-12))
    record = {
        "graph": GraphFamily.parse(params["family"]).label,
        "kind": inst.kind,
        "commodities": [[c.source, c.sink] for c in inst.commodities],
        "weights": inst.network.weights.tolist(),
        "instance_seed": inst.seed,
        "root_seed": seed,
        "c_min": c_min,
        "c_max": c_max,
        "n_feasible": basis.dim,
        "optimal_configs": basis.configs[optimal].tolist(),
        "config_hash": h,
    }
    if params["list_states"]:
        record["feasible"] = [{"config": c.tolist(), "cost": float(v)} for c, v in zip(basis.configs, costs)]
    _write(Path(out_dir) / "oracle.json", _dump(record))
    sys.stdout.write(f"C_min={c_min!r} C_max={c_max!r} feasible={basis.dim}\n")
    return record


def cmd_transform(params, seed, out_dir, cap, h):
    """Plaquette-move sequence between two simple paths via face heights."""
    net = GraphFamily.parse(params["family"]).build()
    rng = np.random.default_rng(seed)
    if params["path_a"] is not None:
        a, b = params["path_a"], params["path_b"]
        for path in (a, b):
            for u, v in zip(path[:-1], path[1:]):
                if not net.has_edge(u, v):
                    raise ConfigValidationError(f"({u}, {v}) is not an edge")
        P1, P2 = net.path_flow(a), net.path_flow(b)
    else:
        s, t = _endpoints(net, params, rng)
        paths = all_simple_paths(net, s, t)
        i, j = rng.choice(len(paths), size=2, replace=len(paths) < 2)
        P1, P2 = paths[i], paths[j]
    h_field = dual_heights(net, P1, P2)
    ops = path_transform(net, P1, P2)
    regions = transform_regions(net, P1, P2)
    back = apply_heights(net, P1, h_field)
    record = {
        "graph": net.name,
        "P1": P1.tolist(),
        "P2": P2.tolist(),
        "heights": h_field.tolist(),
        "max_abs_height": int(np.abs(h_field).max(initial=0)),
        "op_count": len(ops),
        "operations": json.loads(trace_json(ops)),
        "regions": [list(r) for r in regions.regions],
        "regions_consistent": regions.consistent,
        "round_trip": bool(np.array_equal(back, P2)),
        "root_seed": seed,
        "config_hash": h,
    }
    _write(Path(out_dir) / "transform.json", _dump(record))
    sys.stdout.write(f"ops={len(ops)} max|h|={record['max_abs_height']} round_trip={record['round_trip']}\n")
    return record


COMMANDS = {
    "census": cmd_census,
    "satscan": cmd_satscan,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "transform": cmd_transform,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="qedqaoa", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "census": "total vs feasible Hilbert-space dimensions",
        "satscan": "IPR / flow-entropy scan of mixer dynamics",
        "run": "one QAOA optimisation",
        "sweep": "resumable AAR grid over random instances",
        "oracle": "exhaustive cost range and feasible-set dump",
        "transform": "plaquette moves between two paths",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="JSON parameter file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
        p.add_argument("--out-dir", type=Path, default=Path("results"))
        p.add_argument("--cap", type=int, default=None, help="maximum basis dimension")
        if name == "census":
            p.add_argument("--with-loops", action="store_true", help="also count loop-carrying feasible states")
        if name == "sweep":
            p.add_argument("--delta-sweep", action="store_true", help=f"penalty axis {DELTA_SWEEP}")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.overrides)
    if getattr(args, "with_loops", False):
        overrides.append("with_loops=true")
    if getattr(args, "delta_sweep", False):
        overrides.append("penalties=" + json.dumps(DELTA_SWEEP))
    try:
        file_params = json.loads(args.config.read_text()) if args.config else None
        params, h = resolve_config(args.command, file_params, overrides, args.seed, args.cap)
    except (OSError, json.JSONDecodeError, ConfigValidationError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        COMMANDS[args.command](params, args.seed, args.out_dir, args.cap, h)
    except ConfigValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ResourceCapError, MemoryError) as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except StageError as exc:
        if isinstance(exc.cause, (ResourceCapError, MemoryError)):
            print(f"resource cap exceeded in {exc.stage}: {exc.cause}", file=sys.stderr)
            return EXIT_CAP
        print(json.dumps({"stage": exc.stage, "error": type(exc.cause).__name__, "message": str(exc.cause)}), file=sys.stderr)
        return EXIT_FAILURE
    except QedQaoaError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
