"""Experiment orchestration: single runs with metadata sidecars, and parameter sweeps."""

import csv
import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import _rng
from ._errors import ConfigError, SDFEELError
from .bounds import BoundParams, check_learning_rate, reference_gap, theorem_bound
from .config import SWEEP_AXES
from .latency import scheme_charges
from .learner import AssumptionConstants, estimate_constants
from .protocol import run_scheme, write_trace_csv
from .topology import build_mixing_matrix

__all__ = [
    "ExperimentOutput",
    "SweepOutput",
    "SWEEP_COLUMNS",
    "build_id",
    "estimate_inputs",
    "analyse_bound",
    "run_experiment",
    "run_sweep",
    "parse_axis_values",
]

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("axis", "value", "seed", "k", "sim_time_s", "train_loss", "test_acc")


def build_id():
    """Short content hash of the package sources: identifies the code that produced a file."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parent
    for path in sorted(root.glob("*.py")):
        h.update(path.name.encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def _bound_schedule(scheme, cfg, zeta):
    """``(zeta, alpha, tau1, tau2)`` under which ``scheme`` is an instance of SD-FEEL."""
    s = cfg.schedule
    if scheme == "sdfeel":
        return zeta, s.alpha, s.tau1, s.tau2
    if scheme == "hierfavg":
        return 0.0, 1, s.tau1, s.tau2
    if scheme == "fedavg":
        return 0.0, 1, s.period, 1
    return None  # client scheduling falls outside the analysis


def estimate_inputs(cfg, problem):
    """Empirical ``L, sigma, kappa`` and the initial gap ``Delta`` for the bound."""
    train, plan = problem.train, problem.plan
    consts = estimate_constants(train, plan, cfg.bounds.probe_points,
                                _rng.stream_seed(cfg.seed, _rng.PROBE),
                                batch_size=cfg.train.batch_size)
    w0 = np.zeros(train.num_classes * (train.dim + 1))
    delta, f_ref, _ = reference_gap(w0, train, steps=cfg.bounds.reference_steps)
    return {"constants": asdict(consts), "delta": delta, "reference_loss": f_ref}


def _bound_entry(cfg, problem, inputs, scheme, zeta):
    sched = _bound_schedule(scheme, cfg, zeta)
    if sched is None:
        return None
    z, a, t1, t2 = sched
    params = BoundParams(z, a, t1, t2, cfg.train.eta, cfg.train.iterations,
                         AssumptionConstants(**inputs["constants"]), problem.weights,
                         inputs["delta"])
    check = check_learning_rate(params)
    entry = {"zeta": z, "alpha": a, "tau1": t1, "tau2": t2, "admissible": bool(check),
             "first_lhs": check.first_lhs, "second_lhs": check.second_lhs}
    if check:
        b = theorem_bound(params)
        entry.update(Lambda=b.Lambda, V1=b.V1, V2=b.V2, V3=b.V3,
                     optimization=b.optimization, sampling=b.sampling,
                     drift_noise=b.drift_noise, drift_noniid=b.drift_noniid,
                     rhs_total=b.rhs_total)
    return entry


def analyse_bound(cfg, problem, scheme="sdfeel", zeta=None):
    """Empirical constants, initial gap and the bound breakdown for ``scheme``.

    Returns a JSON-ready dict. ``bound`` is ``None`` if the scheme is not
    covered (FEEL's client scheduling), and carries ``admissible: false`` with
    both left-hand sides when the learning rate violates the step-size
    conditions.
    """
    if zeta is None:
        zeta = build_mixing_matrix(cfg.graph(), problem.cluster_sizes).zeta
    out = estimate_inputs(cfg, problem)
    out["bound"] = _bound_entry(cfg, problem, out, scheme, zeta)
    return out


@dataclass
class ExperimentOutput:
    traces: dict  # scheme -> list of TraceRecord
    files: list  # written paths
    metadata: dict


def _atomic_write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_trace(path, records):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write_trace_csv(tmp, records)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(cfg, out_dir=None, analyse=None):
    """Run every scheme of ``cfg`` on one shared problem and write the artifacts.

    For each scheme ``s`` this writes ``<out>/<s>_trace.csv`` and a JSON sidecar
    ``<out>/<s>_trace.meta.json`` holding the resolved configuration, the
    constant estimates, the bound breakdown, latency per round and the build
    identifier. Outputs are a pure function of the configuration and the code.

    Parameters
    ----------
    cfg : RunConfig
    out_dir : path, optional
        Defaults to ``cfg.output``.
    analyse : bool, optional
        Estimate constants and the bound; defaults to ``cfg.bounds.enabled``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    analyse = cfg.bounds.enabled if analyse is None else analyse
    problem = cfg.problem()
    graph = cfg.graph()
    settings = cfg.settings()
    mixing = build_mixing_matrix(graph, problem.cluster_sizes)
    bid = build_id()

    traces, files, meta_all = {}, [], {}
    inputs = None
    for scheme in cfg.schemes:
        logger.info("running %s (K=%d, seed=%d)", scheme, settings.iterations, cfg.seed)
        try:
            result = run_scheme(scheme, problem, graph, settings)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{scheme} run with seed {cfg.seed}: {exc}") from exc
        traces[scheme] = result.trace
        path = out / f"{scheme}_trace.csv"
        _atomic_trace(path, result.trace)
        files.append(path)

        meta = {
            "build_id": bid,
            "scheme": scheme,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "topology": {"zeta": mixing.zeta, "eigenvalues": list(mixing.eigenvalues)},
            "partition": {"client_sizes": problem.plan.sizes().tolist()},
            "latency": scheme_charges(scheme, cfg.schedule, cfg.latency).round_breakdown(),
            "final": asdict(result.trace[-1]),
        }
        if analyse:
            if inputs is None:
                inputs = estimate_inputs(cfg, problem)
            analysis = dict(inputs)
            analysis["bound"] = _bound_entry(cfg, problem, inputs, scheme, mixing.zeta)
            bound = analysis["bound"]
            if bound and bound["admissible"]:
                # average over iterations before the last, as in the bound's left-hand side
                measured = float(np.mean([r.grad_sq_norm for r in result.trace[:-1]]))
                analysis["diagnostic_ratio"] = measured / bound["rhs_total"]
            meta["analysis"] = analysis
        mpath = out / f"{scheme}_trace.meta.json"
        _atomic_write_text(mpath, json.dumps(meta, indent=2, sort_keys=True) + "\n")
        files.append(mpath)
        meta_all[scheme] = meta
    return ExperimentOutput(traces, files, meta_all)


def parse_axis_values(axis, text):
    """Split a comma list and convert each item to the axis' type."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    if not items:
        raise ConfigError("--values needs at least one value")
    out = []
    for t in items:
        if axis in ("topology", "scheme"):
            out.append(t)
            continue
        try:
            v = float(t)
        except ValueError:
            raise ConfigError(f"sweep value {t!r} for axis {axis!r} is not a number") from None
        out.append(int(v) if v == int(v) and axis not in ("beta", "eta", "concentration") else v)
    return out


@dataclass
class SweepOutput:
    path: Path
    rows: int
    failures: list  # (value, seed, message)


def _cell_rows(base, axis, value, seed):
    cfg = replace(base.with_value(SWEEP_AXES[axis], value), seed=int(seed))
    if len(cfg.schemes) != 1:
        raise ConfigError("a sweep cell must select a single scheme (not 'all')")
    problem = cfg.problem()
    result = run_scheme(cfg.schemes[0], problem, cfg.graph(), cfg.settings())
    return [[axis, str(value), int(seed), r.k, repr(r.sim_time_s), repr(r.train_loss),
             repr(r.test_acc)] for r in result.trace]


def _cell_job(args):
    base, axis, value, seed, cell_path = args
    try:
        rows = _cell_rows(base, axis, value, seed)
    except (SDFEELError, FloatingPointError, ValueError) as exc:
        return value, seed, f"{type(exc).__name__}: {exc}"
    fd, tmp = tempfile.mkstemp(dir=Path(cell_path).parent, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    os.replace(tmp, cell_path)
    return value, seed, None


def run_sweep(spec, out_path, jobs=1):
    """Run every ``(value, seed)`` cell and collect a long-format CSV.

    Each cell is written atomically to ``<out_path>.cells/`` as it finishes; a
    failing cell is logged and listed in ``failures`` while the rest proceed.
    The final CSV has columns :data:`SWEEP_COLUMNS`, cells in ``spec`` order.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    cell_dir = out_path.with_name(out_path.name + ".cells")
    cell_dir.mkdir(exist_ok=True)
    tasks = [(spec.base, spec.axis, v, s, cell_dir / f"{i:04d}_{spec.axis}={v}_seed={s}.csv")
             for i, (v, s) in enumerate(spec.cells())]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, tasks))
    else:
        results = [_cell_job(t) for t in tasks]

    failures = []
    for value, seed, err in results:
        if err is not None:
            logger.error("sweep cell %s=%s seed=%s failed: %s", spec.axis, value, seed, err)
            failures.append((value, seed, err))

    lines = 0
    fd, tmp = tempfile.mkstemp(dir=out_path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for (_, _, _, _, cell_path), (_, _, err) in zip(tasks, results):
            if err is not None:
                continue
            with open(cell_path, newline="") as src:
                for row in csv.reader(src):
                    w.writerow(row)
                    lines += 1
    os.replace(tmp, out_path)
    return SweepOutput(out_path, lines, failures)
