"""Command-line front end.

Subcommands: generate, calibrate, rank, subsample, reliability, design, risk.

Configuration comes from an optional JSON file (``--config``) with flag
overrides on top; anything unset falls back to :data:`DEFAULTS`. Outputs
depend only on the configuration and the input files, since all randomness
derives from the root seed.

Exit codes: 0 ok, 1 domain/config error, 2 solver error, 3 simulator
protocol error.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .aleatory import WeightPolytope, build_polytopes, representative_realizations, rmin_rmax
from .design import KWParams, KWTrace, RobustObjective, design_report, kw_optimize, robust_objective
from .eligibility import (
    EligibilitySet,
    aleatory_sample,
    build_lp,
    construct_eligibility_set,
    rank_parameters,
    reduce_set,
    simulate_summaries,
    subsample_study,
)
from .errors import DomainError, DrocalError, ProtocolError, SolverError
from .external import ExternalSimulator
from .io import (
    config_hash,
    read_json,
    read_trajectory_dir,
    write_csv,
    write_json,
    write_trajectory_csv,
)
from .ksstat import threshold
from .model import OSC2, Box, Osc2, Trajectory
from .rng import derive_seed
from .summary import SummarySpec, default_spec, summarize_batch

log = logging.getLogger("drocal")

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "data": {"dir": None, "n1": 50, "channels": 1},
    "model": {"kind": "osc2", "command": None, "timeout": 30.0, "T": 127, "dt": 0.1},
    "A": None,
    "E0": None,
    "n2": 200,
    "k": 500,
    "alpha": 0.05,
    "bands": None,
    "resample_per_e": False,
    "ties": "exact",
    "threads": 1,
    "theta": [0.8, 0.5],
    "kw": {"c0": 0.1, "a0": 0.1, "n_max": 8, "k": 300, "e_cap": 10},
    "risk_levels": [0, 2, 4, 6, 8, 10],
    "subsample": {"sizes": [10, 25, 50], "replications": 3},
}

EXIT_OK, EXIT_DOMAIN, EXIT_SOLVER, EXIT_PROTOCOL = 0, 1, 2, 3


# ---------------------------------------------------------------- config


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise DomainError(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclasses.dataclass
class RunConfig:
    raw: dict

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = copy.deepcopy(DEFAULTS)
        if path is not None:
            file_cfg = read_json(path)
            if not isinstance(file_cfg, dict):
                raise DomainError(f"{path}: top level must be a JSON object")
            cfg = _merge(cfg, file_cfg)
        if overrides:
            cfg = _merge(cfg, overrides)
        out = cls(cfg)
        out.validate()
        return out

    def validate(self) -> None:
        c = self.raw
        if not 0.0 < float(c["alpha"]) < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        for key in ("n2", "k", "threads"):
            if int(c[key]) < 1:
                raise DomainError(f"{key} must be at least 1")
        if c["data"]["n1"] is not None and int(c["data"]["n1"]) < 1:
            raise DomainError("data.n1 must be at least 1")
        if c["ties"] not in ("exact", "literal"):
            raise DomainError("ties must be 'exact' or 'literal'")
        kind = c["model"]["kind"]
        if kind not in ("osc2", "external"):
            raise DomainError("model.kind must be 'osc2' or 'external'")
        if kind == "external" and not c["model"]["command"]:
            raise DomainError("model.command is required for an external simulator")
        if c["data"]["dir"] is not None and not Path(c["data"]["dir"]).is_dir():
            raise DomainError(f"data directory {c['data']['dir']} does not exist")
        if c["bands"] is not None and (len(c["bands"]) != 2 or any(len(b) != 2 for b in c["bands"])):
            raise DomainError("bands must be two [lo, hi] pairs")
        _ = (self.A, self.E0)  # parse both boxes so bad bounds fail here
        KWParams(c["kw"]["c0"], c["kw"]["a0"], int(c["kw"]["n_max"]))

    # convenience views
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def data_dir(self) -> Path:
        d = self.raw["data"]["dir"]
        return Path(d) if d is not None else self.out / "data"

    @property
    def A(self) -> Box:
        return Box.from_dict(self.raw["A"]) if self.raw["A"] else OSC2.A

    @property
    def E0(self) -> Box:
        return Box.from_dict(self.raw["E0"]) if self.raw["E0"] else OSC2.E0

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def osc2(self) -> Osc2:
        m = self.raw["model"]
        return dataclasses.replace(OSC2, A=self.A, E0=self.E0, T=int(m["T"]), dt=float(m["dt"]),
                                   n_channels=int(self.raw["data"]["channels"]))

    def spec(self) -> SummarySpec:
        m = self.raw["model"]
        bands = None if self.raw["bands"] is None else tuple(tuple(b) for b in self.raw["bands"])
        return default_spec(int(m["T"]) + 1, float(m["dt"]), int(self.raw["data"]["channels"]), bands)

    def provenance(self, **seeds) -> dict:
        return {"config_hash": self.hash, "config": self.raw, "seeds": {"root": self.seed, **seeds}}


class _ExternalModel:
    """External trajectories with the built-in requirement functions."""

    def __init__(self, sim: ExternalSimulator, base: Osc2):
        self.sim, self.base = sim, base
        self.A, self.E0, self.T, self.dt = base.A, base.E0, base.T, base.dt
        self.n_channels = base.n_channels
        self.design_dim = base.design_dim

    def simulate_batch(self, a_points, e, theta=None, T=None, dt=None, check=True):
        if check:
            self.A.check(np.atleast_2d(a_points), "a")
            self.E0.check(e, "e")
        return self.sim.simulate_batch(a_points, e, theta, T, dt)

    def requirements_batch(self, a_points, e, theta):
        return self.base.requirements_batch(a_points, e, theta)

    def close(self):
        self.sim.close()


def _model(cfg: RunConfig):
    base = cfg.osc2()
    m = cfg.raw["model"]
    if m["kind"] == "osc2":
        return base
    sim = ExternalSimulator(m["command"], timeout=float(m["timeout"]), A=base.A, E0=base.E0,
                            T=base.T, dt=base.dt, n_channels=base.n_channels)
    return _ExternalModel(sim, base)


# ---------------------------------------------------------------- helpers


def _load_data(cfg: RunConfig) -> tuple[list[Trajectory], np.ndarray]:
    trajs = read_trajectory_dir(cfg.data_dir, cfg.raw["data"]["n1"])
    spec = cfg.spec()
    lens = {len(t) for t in trajs}
    if len(lens) != 1:
        raise DomainError("data trajectories have different lengths")
    dt = float(cfg.raw["model"]["dt"])
    if any(abs(t.dt - dt) > 1e-9 * dt for t in trajs):
        raise DomainError(f"data time step {trajs[0].dt} differs from model.dt={dt}")
    # summarize at the model's dt so data and simulated frequencies coincide exactly
    stack = np.stack([t.channels for t in trajs])
    return trajs, summarize_batch(stack, dt, spec)


def _load_set(cfg: RunConfig) -> EligibilitySet:
    path = cfg.out / "eligibility.json"
    d = read_json(path)
    try:
        return EligibilitySet.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{path}: malformed eligibility file ({exc})") from None


def _check_set_matches(cfg: RunConfig, eset: EligibilitySet) -> None:
    if eset.provenance.get("seed") != cfg.seed:
        raise DomainError("eligibility.json was produced with a different seed; rerun calibrate")


def _write_summaries(path: Path, spec: SummarySpec, summaries: np.ndarray) -> None:
    write_csv(path, ["record", *spec.labels()], ([i, *row] for i, row in enumerate(summaries)))


def _polytopes_for(cfg, eset: EligibilitySet, model, data, q, records=None) -> list[WeightPolytope]:
    records = eset.eligible if records is None else records
    if not records:
        return []
    pts = np.array([r.e for r in records])
    idx = [r.index for r in records]
    return build_polytopes(pts, data, model, cfg.spec(), cfg.A, int(eset.provenance["k"]), cfg.seed, q,
                           bool(eset.provenance.get("resample_per_e", False)), idx, ties=cfg.raw["ties"])


def _theta(cfg: RunConfig) -> np.ndarray:
    return np.asarray(cfg.raw["theta"], dtype=float)


# ---------------------------------------------------------------- commands


def cmd_generate(cfg: RunConfig) -> dict:
    """Synthetic observed data from the osc2 ground truth."""
    model = cfg.osc2()
    n1 = int(cfg.raw["data"]["n1"])
    data_seed = derive_seed(cfg.seed, "data")
    a = model.sample_truth(n1, data_seed)
    e_true = np.asarray(model.truth.e_true)
    outputs = model.simulate_batch(a, e_true)
    out = cfg.data_dir
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("traj_*.csv"):
        old.unlink()
    for i in range(n1):
        write_trajectory_csv(out / f"traj_{i:04d}.csv", Trajectory(outputs[i], model.dt))
    spec = cfg.spec()
    _write_summaries(out / "summaries.csv", spec, summarize_batch(outputs, model.dt, spec))
    write_json(out / "truth.json", {
        "e_true": e_true.tolist(),
        "a_points": a.tolist(),
        "marginals": [dataclasses.asdict(m) for m in model.truth.marginals],
        "provenance": cfg.provenance(data=data_seed),
    })
    return {"n1": n1, "dir": str(out)}


def cmd_calibrate(cfg: RunConfig) -> dict:
    """Eligibility set plus the q* table."""
    _, data = _load_data(cfg)
    spec = cfg.spec()
    thr = threshold(float(cfg.raw["alpha"]), spec.m, data.shape[0])
    model = _model(cfg)
    try:
        eset = construct_eligibility_set(data, model, cfg.E0, cfg.A, int(cfg.raw["n2"]), int(cfg.raw["k"]),
                                         spec, thr, cfg.seed, bool(cfg.raw["resample_per_e"]),
                                         int(cfg.raw["threads"]), keep_weights=False)
    finally:
        getattr(model, "close", lambda: None)()
    eset.provenance["ties"] = cfg.raw["ties"]
    doc = eset.to_dict()
    doc["provenance"] = cfg.provenance()
    write_json(cfg.out / "eligibility.json", doc)
    dim = cfg.E0.dim
    write_csv(cfg.out / "qstar.csv", ["index", *[f"e{d + 1}" for d in range(dim)], "q_star", "eligible"],
              ([r.index, *r.e, r.q_star, r.eligible] for r in eset.records))
    return {"n2": len(eset.records), "eligible": len(eset.eligible), "threshold": thr.q}


def cmd_rank(cfg: RunConfig) -> dict:
    eset = _load_set(cfg)
    scores, ranking = rank_parameters(eset, cfg.E0)
    place = {d: p + 1 for p, d in enumerate(ranking)}
    write_csv(cfg.out / "ranking.csv", ["parameter", "score", "rank"],
              ([f"e{d + 1}", scores[d], place[d]] for d in range(scores.size)))
    return {"ranking": [f"e{d + 1}" for d in ranking]}


def cmd_subsample(cfg: RunConfig) -> dict:
    eset = _load_set(cfg)
    _check_set_matches(cfg, eset)
    _, data = _load_data(cfg)
    spec = cfg.spec()
    e_points = np.array([r.e for r in eset.records])
    model = _model(cfg)
    try:
        sims = simulate_summaries(model, spec, e_points, cfg.A, int(eset.provenance["k"]), cfg.seed,
                                  bool(eset.provenance.get("resample_per_e", False)), int(cfg.raw["threads"]))
    finally:
        getattr(model, "close", lambda: None)()
    sub = cfg.raw["subsample"]
    sizes = [s for s in sub["sizes"] if s <= data.shape[0]]
    rows = subsample_study(data, sims, e_points, sizes, int(sub["replications"]), float(cfg.raw["alpha"]),
                           derive_seed(cfg.seed, "subsample"), int(cfg.raw["threads"]))
    write_csv(cfg.out / "subsample.csv", ["n1", "replications", "eligible_fraction", "q_threshold"],
              ([r["n1"], r["replications"], r["eligible_fraction"], r["q_threshold"]] for r in rows))
    return {"rows": rows}


def cmd_reliability(cfg: RunConfig, theta=None) -> dict:
    theta = _theta(cfg) if theta is None else np.asarray(theta, dtype=float)
    eset = _load_set(cfg)
    _check_set_matches(cfg, eset)
    _, data = _load_data(cfg)
    model = _model(cfg)
    try:
        polys = _polytopes_for(cfg, eset, model, data, eset.threshold.q)
    finally:
        getattr(model, "close", lambda: None)()
    report = design_report(theta, polys, model)
    reps = []
    for U in polys:
        if U.is_empty():
            continue
        groups = representative_realizations(U, theta, model)
        if groups:
            reps.append({"e": U.e.tolist(),
                         "groups": {" ".join(map(str, p)): v.tolist() for p, v in groups.items()}})
    doc = report.to_dict()
    doc["representative"] = reps
    doc["threshold"] = eset.threshold.to_dict()
    doc["provenance"] = cfg.provenance()
    write_json(cfg.out / "reliability.json", doc)
    dim = cfg.E0.dim
    write_csv(cfg.out / "rminmax.csv", [*[f"e{d + 1}" for d in range(dim)], "R_min", "R_max"],
              ([*row["e"], row["R_min"], row["R_max"]] for row in report.per_e))
    return {"objective": report.objective, "ranges": report.ranges}


def cmd_design(cfg: RunConfig) -> dict:
    eset = _load_set(cfg)
    _check_set_matches(cfg, eset)
    _, data = _load_data(cfg)
    kw = cfg.raw["kw"]
    pts = eset.eligible_points
    if pts.shape[0] == 0:
        raise DomainError("eligibility set is empty; nothing to design against")
    kw_seed = derive_seed(cfg.seed, "kw")
    model = _model(cfg)
    try:
        obj = RobustObjective(model, data, cfg.spec(), cfg.A, pts, eset.threshold.q, int(kw["k"]), kw_seed,
                              None if kw["e_cap"] is None else int(kw["e_cap"]), cfg.raw["ties"])
        params = KWParams(float(kw["c0"]), float(kw["a0"]), int(kw["n_max"]))
        base = _theta(cfg)
        theta_new, trace = kw_optimize(base, params, obj)
    finally:
        getattr(model, "close", lambda: None)()
    write_json(cfg.out / "design.json", {
        "theta_baseline": base.tolist(),
        "theta_new": theta_new.tolist(),
        "objective_baseline": trace.initial_objective,
        "objective_new": trace.final_objective,
        "kw": dict(kw),
        "provenance": cfg.provenance(kw=kw_seed),
    })
    write_csv(cfg.out / "kw_trace.csv", KWTrace.COLUMNS, trace.as_rows())
    return {"theta_new": theta_new.tolist(), "objective": [trace.initial_objective, trace.final_objective]}


def cmd_risk(cfg: RunConfig, theta=None) -> dict:
    theta = _theta(cfg) if theta is None else np.asarray(theta, dtype=float)
    eset = _load_set(cfg)
    _check_set_matches(cfg, eset)
    _, data = _load_data(cfg)
    if not eset.eligible:
        raise DomainError("eligibility set is empty")
    model = _model(cfg)
    spec = cfg.spec()
    k = int(eset.provenance["k"])
    per_e = bool(eset.provenance.get("resample_per_e", False))
    # one LP per eligible point, reused at every risk level's band multiplier
    lps = {}
    shared = None if per_e else aleatory_sample(cfg.A, k, cfg.seed)
    try:
        for r in eset.eligible:
            a = shared if shared is not None else aleatory_sample(cfg.A, k, cfg.seed, r.index)
            sims = summarize_batch(model.simulate_batch(a, r.e), model.dt, spec)
            lps[r.index] = (build_lp(data, sims, cfg.raw["ties"]), a)
    finally:
        getattr(model, "close", lambda: None)()
    rows, levels = [], []
    for level in cfg.raw["risk_levels"]:
        red, q_r, alpha_t = reduce_set(eset, float(level))
        polys = [WeightPolytope(lps[r.index][0], q_r, lps[r.index][1], r.e) for r in red.eligible]
        obj = robust_objective(theta, polys, model)
        rmax = max(rmin_rmax(U, theta, model)[1] for U in polys if not U.is_empty())
        rows.append([level, len(red.eligible), q_r, 1.0 - alpha_t, obj, rmax])
        levels.append({"r_percent": level, "size": len(red.eligible), "q_r": q_r, "confidence": 1.0 - alpha_t,
                       "objective": obj, "worst_R_max": rmax})
    write_csv(cfg.out / "risk.csv", ["r_percent", "size", "q_r", "confidence", "objective", "worst_R_max"], rows)
    write_json(cfg.out / "risk.json", {"theta": theta.tolist(), "levels": levels, "provenance": cfg.provenance()})
    return {"levels": levels}


COMMANDS = {
    "generate": cmd_generate,
    "calibrate": cmd_calibrate,
    "rank": cmd_rank,
    "subsample": cmd_subsample,
    "reliability": cmd_reliability,
    "design": cmd_design,
    "risk": cmd_risk,
}


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drocal", description="Distributionally robust calibration toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().split("\n")[0] or None)
        sp.add_argument("--config", type=Path, help="JSON configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", dest="output_dir", help="output directory")
        sp.add_argument("--data-dir", help="directory with traj_*.csv files")
        sp.add_argument("--n1", type=int, help="number of data trajectories to use")
        sp.add_argument("--channels", type=int, choices=(1, 2, 3))
        sp.add_argument("--n2", type=int)
        sp.add_argument("-k", type=int)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--ties", choices=("exact", "literal"))
        sp.add_argument("--resample-per-e", action="store_true", default=None)
        sp.add_argument("--simulator", help="external simulator command (default: built-in osc2)")
        sp.add_argument("--theta", type=float, nargs="+", help="design for reliability/risk, baseline for design")
        sp.add_argument("--risk-levels", type=float, nargs="+")
    return p


def _overrides(ns: argparse.Namespace) -> dict:
    o: dict = {}
    for key in ("seed", "output_dir", "n2", "k", "alpha", "threads", "ties", "resample_per_e", "theta"):
        val = getattr(ns, key)
        if val is not None:
            o[key] = val
    data = {k: v for k, v in (("dir", ns.data_dir), ("n1", ns.n1), ("channels", ns.channels)) if v is not None}
    if data:
        o["data"] = data
    if ns.simulator:
        o["model"] = {"kind": "external", "command": ns.simulator}
    if ns.risk_levels is not None:
        o["risk_levels"] = ns.risk_levels
    return o


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which is reserved for solver failures here
        return EXIT_OK if exc.code in (0, None) else EXIT_DOMAIN
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(ns.config, _overrides(ns))
        result = COMMANDS[ns.command](cfg)
    except ProtocolError as exc:
        print(f"drocal: simulator protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except SolverError as exc:
        print(f"drocal: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DrocalError, ValueError, OSError) as exc:
        print(f"drocal: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    log.info("%s done: %s", ns.command, result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
