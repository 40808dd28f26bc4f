"""Scenario configuration: a single YAML document with fixed sections.

Sections: plant, loads, graph, noise, schedule, algorithm, run. Key names
are frozen in docs/config.md; unknown keys or sections fail fast with a
field-level message. Load parameters are sampled from seed-derived streams
(capacities uniform then rescaled to the total, inverse curvatures uniform
on the configured interval, dead bands as a fraction of capacity) unless
explicit per-load lists are given.

Validation at build time covers everything the simulation relies on:
connected topology, stable plant, observer error-dynamics condition when
the estimator will run, strict convexity when the dual baseline is
selected.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import yaml

from . import graph as graph_mod
from .disutility import DisutilitySpec, flat_quadratic, quadratic
from .dual_baseline import require_strictly_convex
from .errors import ConfigError, DualNeedsStrictConvexity, FlexloadError, NotInvertible
from .estimator import check_prop1
from .gradient_projection import StepSchedule, default_gamma0
from .graph import GraphTopology
from .plant import GenerationSchedule, PlantModel, PlantParams, build_plant, schedule_from_times
from .streams import derive_rng

ALGORITHMS = ("dgp", "dual", "none")
FAMILIES = ("flat_quadratic", "quadratic")

_SCHEMA = {
    "plant": {
        "inertia": 10.0,
        "damping": 1.0,
        "governor_time_constant": 5.0,
        "droop": 0.05,
        "integral_gain": 0.0,
        "tick_interval": 0.1,
    },
    "loads": {
        "count": None,  # required
        "family": "flat_quadratic",
        "total_capacity": 60.0,
        "deadband_fraction": 0.1,
        "inverse_curvature_range": [0.1, 0.3],
        "capacities": None,
        "curvatures": None,
        "deadbands": None,
    },
    "graph": {
        "kind": "band",
        "band_width": 1,
        "edges": None,
        "edge_file": None,
    },
    "noise": {
        "process_std": 0.5,
        "measurement_std": 1e-4,
    },
    "schedule": {
        "nominal": 200.0,
        "steps": [[0.0, 200.0], [20.0, 190.0], [50.0, 170.0]],
    },
    "algorithm": {
        "kind": "dgp",
        "c": 5.0,
        "gamma0": None,  # default: 1.5 * min curvature / count
        "decay_exponent": 0.8,
        "reset_on_disturbance": False,
        "bypass_estimator": False,
    },
    "run": {
        "ticks": None,  # required
        "master_seed": 0,
        "full_trace": False,
        "workers": 1,
        "settling_band": 0.01,
    },
}

_REQUIRED = {("loads", "count"), ("run", "ticks")}


@dataclass(frozen=True)
class Scenario:
    n: int
    specs: list[DisutilitySpec]
    topology: GraphTopology
    model: PlantModel
    schedule: GenerationSchedule
    algorithm: str
    sched: StepSchedule
    sigma_process: float
    sigma_meas: float
    ticks: int
    master_seed: int
    bypass_estimator: bool
    reset_on_disturbance: bool
    full_trace: bool
    workers: int
    settling_band: float
    g_star: float
    T: float

    def uses_estimator(self) -> bool:
        return self.algorithm in ("dgp", "dual") and not self.bypass_estimator

    def with_overrides(self, algorithm=None, full_trace=None) -> "Scenario":
        # note: the master seed feeds load *sampling*, so a seed override must
        # go into the config document before build_scenario, not here
        out = self
        if algorithm is not None and algorithm != self.algorithm:
            out = replace(out, algorithm=algorithm)
        if full_trace is not None:
            out = replace(out, full_trace=bool(full_trace))
        _validate_cross_constraints(out)
        return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping of sections")
    return doc


def _merged_sections(doc: dict) -> dict:
    merged = {}
    for section, defaults in _SCHEMA.items():
        given = doc.get(section, {})
        if given is None:
            given = {}
        if not isinstance(given, dict):
            raise ConfigError(f"section '{section}' must be a mapping")
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(
                f"unknown key(s) in section '{section}': {', '.join(sorted(unknown))}"
            )
        merged[section] = {**defaults, **given}
    unknown_sections = set(doc) - set(_SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown_sections))}")
    for section, key in _REQUIRED:
        if merged[section][key] is None:
            raise ConfigError(f"missing required key '{section}.{key}'")
    return merged


def _positive(section, key, value, allow_zero=False):
    ok = value >= 0 if allow_zero else value > 0
    if not ok:
        cmp = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"'{section}.{key}' must be {cmp}, got {value}")
    return value


def _per_load_list(loads, key, n):
    raw = loads[key]
    if raw is None:
        return None
    if len(raw) != n:
        raise ConfigError(f"'loads.{key}' must have {n} entries, got {len(raw)}")
    return np.asarray(raw, dtype=float)


def _sample_loads(loads: dict, seed: int) -> list[DisutilitySpec]:
    n = int(loads["count"])
    if n < 1:
        raise ConfigError(f"'loads.count' must be >= 1, got {loads['count']}")
    family = loads["family"]
    if family not in FAMILIES:
        raise ConfigError(f"'loads.family' must be one of {FAMILIES}, got {family!r}")

    capacities = _per_load_list(loads, "capacities", n)
    if capacities is None:
        total = _positive("loads", "total_capacity", float(loads["total_capacity"]))
        raw = derive_rng(seed, "capacities").uniform(0.5, 1.5, size=n)
        capacities = raw * (total / raw.sum())
    if np.any(capacities <= 0):
        raise ConfigError("'loads.capacities' must all be > 0")

    curvatures = _per_load_list(loads, "curvatures", n)
    if curvatures is None:
        r = loads["inverse_curvature_range"]
        if not (isinstance(r, (list, tuple)) and len(r) == 2 and 0 < r[0] <= r[1]):
            raise ConfigError(
                f"'loads.inverse_curvature_range' must be [lo, hi] with 0 < lo <= hi, got {r!r}"
            )
        inv_q = derive_rng(seed, "curvatures").uniform(r[0], r[1], size=n)
        curvatures = 1.0 / inv_q
    if np.any(curvatures <= 0):
        raise ConfigError("'loads.curvatures' must all be > 0")

    if family == "quadratic":
        return [quadratic(float(curvatures[i]), -float(capacities[i]), float(capacities[i]))
                for i in range(n)]

    deadbands = _per_load_list(loads, "deadbands", n)
    if deadbands is None:
        frac = float(loads["deadband_fraction"])
        if not 0 <= frac < 1:
            raise ConfigError(f"'loads.deadband_fraction' must be in [0, 1), got {frac}")
        deadbands = frac * capacities
    specs = []
    for i in range(n):
        try:
            specs.append(
                flat_quadratic(
                    float(curvatures[i]), float(deadbands[i]),
                    -float(capacities[i]), float(capacities[i]),
                )
            )
        except FlexloadError as exc:
            raise ConfigError(f"load {i + 1}: {exc}") from exc
    return specs


def _build_topology(graph_cfg: dict, n: int) -> GraphTopology:
    kind = graph_cfg["kind"]
    if kind == "band":
        n0 = int(graph_cfg["band_width"])
        try:
            topo = graph_mod.band_graph(n, n0)
        except FlexloadError as exc:
            raise ConfigError(f"graph: {exc}") from exc
    elif kind == "edges":
        edges = graph_cfg["edges"]
        edge_file = graph_cfg["edge_file"]
        if (edges is None) == (edge_file is None):
            raise ConfigError("graph kind 'edges' needs exactly one of 'edges' or 'edge_file'")
        try:
            if edge_file is not None:
                with open(edge_file) as fh:
                    topo = graph_mod.parse_edge_list(fh.read(), n)
            else:
                pairs = [(int(i) - 1, int(j) - 1) for i, j in edges]  # config ids are 1-based
                for i, j in pairs:
                    if not (0 <= i < n and 0 <= j < n):
                        raise ConfigError(f"edge ({i + 1},{j + 1}) out of range 1..{n}")
                topo = graph_mod.from_edges(n, pairs)
        except FlexloadError as exc:
            raise ConfigError(f"graph: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read edge file: {exc}") from exc
    else:
        raise ConfigError(f"'graph.kind' must be 'band' or 'edges', got {kind!r}")
    if not graph_mod.is_connected(topo):
        raise ConfigError("communication graph must be connected")
    return topo


def _validate_cross_constraints(sc: Scenario):
    if sc.algorithm not in ALGORITHMS:
        raise ConfigError(f"'algorithm.kind' must be one of {ALGORITHMS}, got {sc.algorithm!r}")
    if sc.algorithm == "dual":
        try:
            require_strictly_convex(sc.specs)
        except NotInvertible as exc:
            raise DualNeedsStrictConvexity(str(exc)) from exc
    if sc.uses_estimator() and not check_prop1(sc.model):
        raise ConfigError(
            "observer error dynamics have an eigenvalue on or outside the unit "
            "circle for this plant; refusing to run the estimator "
            "(enable algorithm.bypass_estimator or adjust the plant)"
        )


def build_scenario(doc: dict) -> Scenario:
    """Validated Scenario from a parsed config document."""
    cfg = _merged_sections(doc)
    plant_cfg, loads, graph_cfg = cfg["plant"], cfg["loads"], cfg["graph"]
    noise, schedule_cfg, alg, run = cfg["noise"], cfg["schedule"], cfg["algorithm"], cfg["run"]

    seed = int(run["master_seed"])
    ticks = int(run["ticks"])
    _positive("run", "ticks", ticks)
    workers = int(run["workers"])
    _positive("run", "workers", workers)

    T = _positive("plant", "tick_interval", float(plant_cfg["tick_interval"]))
    sigma_process = _positive("noise", "process_std", float(noise["process_std"]), allow_zero=True)
    sigma_meas = _positive("noise", "measurement_std", float(noise["measurement_std"]), allow_zero=True)
    try:
        params = PlantParams(
            inertia=float(plant_cfg["inertia"]),
            damping=float(plant_cfg["damping"]),
            governor_time_constant=float(plant_cfg["governor_time_constant"]),
            droop=None if plant_cfg["droop"] is None else float(plant_cfg["droop"]),
            integral_gain=float(plant_cfg["integral_gain"]),
        )
        model = build_plant(params, T, sigma_process)
    except FlexloadError as exc:
        raise ConfigError(f"plant: {exc}") from exc

    specs = _sample_loads(loads, seed)
    n = len(specs)
    topology = _build_topology(graph_cfg, n)

    steps = schedule_cfg["steps"]
    if not isinstance(steps, list) or not all(
        isinstance(s, (list, tuple)) and len(s) == 2 for s in steps
    ):
        raise ConfigError("'schedule.steps' must be a list of [time_s, level_MW] pairs")
    try:
        schedule = schedule_from_times(
            [(float(t), float(v)) for t, v in steps], float(schedule_cfg["nominal"]), T
        )
    except FlexloadError as exc:
        raise ConfigError(f"schedule: {exc}") from exc

    gamma0 = alg["gamma0"]
    if gamma0 is None:
        gamma0 = default_gamma0(min(s.q for s in specs), n)
    try:
        sched = StepSchedule(
            gamma0=float(gamma0), exponent=float(alg["decay_exponent"]), c=float(alg["c"])
        )
    except FlexloadError as exc:
        raise ConfigError(f"algorithm: {exc}") from exc

    sc = Scenario(
        n=n,
        specs=specs,
        topology=topology,
        model=model,
        schedule=schedule,
        algorithm=str(alg["kind"]),
        sched=sched,
        sigma_process=sigma_process,
        sigma_meas=sigma_meas,
        ticks=ticks,
        master_seed=seed,
        bypass_estimator=bool(alg["bypass_estimator"]),
        reset_on_disturbance=bool(alg["reset_on_disturbance"]),
        full_trace=bool(run["full_trace"]),
        workers=workers,
        settling_band=float(run["settling_band"]),
        g_star=float(schedule_cfg["nominal"]),
        T=T,
    )
    _validate_cross_constraints(sc)
    return sc
