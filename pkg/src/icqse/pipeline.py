"""End-to-end experiment runs: configuration, staged pipeline, report and plot data."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, QSEError
from .model import (DENSE_ED_MAX_QUBITS, ModelParams, build_hamiltonian, exact_diag, order_parameter_ops,
                    reference_density, sx_theory, szy_theory)
from .pauli import PauliString, PauliSum
from .qse import (SubspaceSpec, assemble_tensors, constrained_minimize, eps_ratio_for_size, eps_sweep,
                  expand_subspace, gevp_sweep, observable_at, select_paulis)
from .shadows import evaluate_paulis, load_table, save_table
from .statesim import NoiseSpec, RootSpec, ShadowDataset, StateHandle, prepare_root, sample_shadows

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("krylov", "krylov+")
MIN_SAMPLES = 100
N_EXCITED = 25
DEFAULT_SWEEP = tuple(float(r) for r in np.round(np.geomspace(0.02, 0.5, 8), 6))


class StageError(QSEError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, g: float, exc: Exception):
        super().__init__(f"stage {stage!r} failed at g={g}: {exc}")
        self.stage = stage


def dataset_seed(seed: int, index: int) -> int:
    """Per-``g`` sampling seed derived from the run seed and the position in the g list."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def detune_for(g: float, detune: float) -> float:
    """Signed detuning pointing from ``g`` toward the transition at ``g = 0``."""
    return -detune if g > 0 else detune


@dataclass
class ExperimentConfig:
    n_qubits: int
    g_values: list[float]
    detune: float = 0.15
    depolarizing_p: float = 0.15
    local_pauli_q: float = 0.0
    n_configs: int = 16384
    shots: int = 8
    seed: int = 0
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    pool_size: int = 150
    weights: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    top_k: int = 5
    selection_seed: int = 0
    score_mode: str = "upper"
    eps_ratio: float | None = None
    observables: list[str] = field(default_factory=lambda: ["sx", "szy"])
    eps_sweep_ratios: list[float] = field(default_factory=lambda: list(DEFAULT_SWEEP))
    max_discard: int | None = None
    pbc: bool = True
    output_dir: str = "run"

    # output location does not change results, so it is excluded from the hash
    _NON_SEMANTIC = ("output_dir",)

    def __post_init__(self):
        self.g_values = [float(g) for g in self.g_values]
        self.weights = [int(w) for w in self.weights]
        self.methods = list(self.methods)
        if not self.g_values:
            raise ConfigError("g_values must not be empty")
        for g in self.g_values:
            if not -1.0 <= g <= 1.0:
                raise ConfigError(f"g = {g} outside [-1, 1]")
            if abs(g + detune_for(g, self.detune)) > 1.0:
                raise ConfigError(f"detuned root parameter outside [-1, 1] at g = {g}")
        if self.n_configs * self.shots < MIN_SAMPLES:
            raise ConfigError(f"n_configs * shots must be at least {MIN_SAMPLES}")
        if self.n_configs < 2:
            raise ConfigError("at least two configurations are needed for error bars")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if self.eps_ratio is not None and not self.eps_ratio > 0:
            raise ConfigError("eps_ratio must be positive")
        NoiseSpec(self.depolarizing_p, self.local_pauli_q)
        for name in self.observables:
            self.observable(name)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {k for k in cls.__dataclass_fields__ if not k.startswith("_")}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if not k.startswith("_")}

    def semantic_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in self._NON_SEMANTIC}

    def config_hash(self) -> str:
        canon = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.depolarizing_p, self.local_pauli_q)

    def resolved_eps_ratio(self) -> float:
        return eps_ratio_for_size(self.n_qubits) if self.eps_ratio is None else self.eps_ratio

    def observable(self, name: str) -> PauliSum:
        if name in ("sx", "szy"):
            sx, szy = order_parameter_ops(self.n_qubits)
            return sx if name == "sx" else szy
        try:
            op = PauliSum.from_text(name, self.n_qubits)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"cannot parse observable {name!r}: {exc}") from exc
        if not op.is_hermitian(1e-12):
            raise ConfigError(f"observable {name!r} is not Hermitian")
        return op


@dataclass
class RunReport:
    config_hash: str
    config: dict
    records: list[dict]
    trace_total: int
    wall_times: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    def to_dict(self, wall_times: bool = True) -> dict:
        out = {"schema": self.schema, "config_hash": self.config_hash, "config": self.config,
               "records": self.records, "trace_total": self.trace_total}
        if wall_times:
            out["wall_times"] = self.wall_times
        return out

    def to_json(self, wall_times: bool = True) -> str:
        return json.dumps(self.to_dict(wall_times), sort_keys=True, indent=2)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunReport":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
        if data.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema {data.get('schema')!r}")
        return cls(data["config_hash"], data["config"], data["records"], data["trace_total"],
                   data.get("wall_times", {}), data["schema"])


def table_cache_key(dataset: ShadowDataset, paulis: list[PauliString]) -> str:
    h = hashlib.sha256(dataset.header())
    h.update(dataset.digest().encode())
    for p in sorted(paulis, key=lambda p: p.key):
        h.update(f"{p.x_mask:x}.{p.z_mask:x};".encode())
    return h.hexdigest()


def cached_table(dataset: ShadowDataset, paulis: list[PauliString], cache_dir: Path | None):
    if cache_dir is None:
        return evaluate_paulis(dataset, paulis)
    path = cache_dir / f"table_{table_cache_key(dataset, paulis)[:16]}.icpt"
    if path.exists():
        return load_table(path)
    table = evaluate_paulis(dataset, paulis)
    save_table(table, path)
    return table


def solve_subspace(dataset: ShadowDataset, spec: SubspaceSpec, ops: dict[str, PauliSum],
                   cache_dir: Path | None = None):
    """Tensors for every named operator from one shared evaluation table."""
    expansions = {name: expand_subspace(spec, op) for name, op in ops.items()}
    keys = set()
    for e in expansions.values():
        keys.update(p.key for p in e.paulis())
    paulis = [PauliString(spec.n_qubits, x, z) for x, z in sorted(keys)]
    table = cached_table(dataset, paulis, cache_dir)
    tensors = {}
    for name, e in expansions.items():
        t = assemble_tensors(table, e)
        t.names = spec.names
        tensors[name] = t
    return tensors, table


def _estimate(est, n_qubits: int | None = None) -> dict:
    e = est.per_site(n_qubits) if n_qubits else est
    return e.to_dict()


class _Stages:
    """Runs named stages, tagging failures and recording wall times."""

    def __init__(self, g: float):
        self.g = g
        self.times: dict[str, float] = {}

    def run(self, name: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except QSEError as exc:
            raise StageError(name, self.g, exc) from exc
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0


def _shadow_dataset(config: ExperimentConfig, params: ModelParams, index: int, cache_dir: Path):
    path = cache_dir / f"shadows_{index}_{config.config_hash()[:12]}.icqs"
    if path.exists():
        return ShadowDataset.load(path)
    root = RootSpec(params, detune_for(params.g, config.detune), config.noise)
    state = prepare_root(root)
    seed = dataset_seed(config.seed, index)
    dataset = sample_shadows(state, config.noise, config.n_configs, config.shots, seed)
    dataset.save(path)
    return dataset


def _exact_references(config: ExperimentConfig, params: ModelParams, h: PauliSum,
                      observables: dict[str, PauliSum]) -> dict:
    n = params.n_qubits
    k = N_EXCITED if n <= DENSE_ED_MAX_QUBITS else 1
    spectrum = exact_diag(params, k)
    gs = StateHandle.from_amplitudes(spectrum.ground_vector)
    ref = {
        "energy_density": reference_density(params, spectrum),
        "ed_energy_density": spectrum.energy_density,
        "lowest_densities": [float(w) / n for w in spectrum.eigenvalues],
        "observables": {name: gs.expectation(op) for name, op in observables.items()},
    }
    if "sx" in observables:
        ref["sx_theory"] = sx_theory(params.g)
    if "szy" in observables:
        ref["szy_theory"] = szy_theory(params.g)
    return ref


def _run_one(config: ExperimentConfig, index: int, g: float, cache_dir: Path) -> tuple[dict, dict]:
    n = config.n_qubits
    stages = _Stages(g)
    params = ModelParams.from_g(n, g, pbc=config.pbc)
    h = build_hamiltonian(params)
    observables = {name: config.observable(name) for name in config.observables}

    dataset = stages.run("gen-shadows", _shadow_dataset, config, params, index, cache_dir)
    digest = dataset.digest()
    record: dict = {"g": g, "n_qubits": n, "dataset_sha256": digest,
                    "detune": detune_for(g, config.detune)}
    traces: dict[str, int] = {}

    if "krylov+" in config.methods:
        pools = {w: config.pool_size for w in config.weights if w <= min(5, n)}
        sel = stages.run("select-paulis", select_paulis, dataset, h, pools, config.top_k,
                         config.selection_seed, score_mode=config.score_mode)
        spec = sel.spec
        record["selected"] = [{"pauli": c.pauli.to_label(), "score": c.score} for c in sel.chosen]
        traces["select-paulis"] = sel.trace_counter
    else:
        spec = SubspaceSpec.krylov(h)
        record["selected"] = []

    ops = {"energy": h, **observables}
    tensors, table = stages.run("tensors", solve_subspace, dataset, spec, ops, cache_dir)
    traces["tensors"] = table.trace_counter

    e1 = np.eye(spec.dim)[0]
    unmit_est = observable_at(tensors["energy"], e1)
    eps_max = config.resolved_eps_ratio() * abs(unmit_est.value)
    record["unmitigated"] = {
        "energy": _estimate(unmit_est, n),
        "observables": {name: _estimate(observable_at(tensors[name], e1)) for name in observables},
    }
    record["eps_max"] = eps_max

    methods = {}
    for method in config.methods:
        t_m = tensors if method == "krylov+" else {k: v.restrict([0, 1]) for k, v in tensors.items()}
        res = stages.run("solve", constrained_minimize, t_m["energy"], eps_max)
        entry = {
            "label": method,
            "subspace": list(t_m["energy"].names),
            "dataset_sha256": digest,
            "c_opt": [float(v) for v in res.c_opt],
            "energy": _estimate(res.energy, n),
            "iterations": res.iterations,
            "hit_iteration_cap": res.hit_iteration_cap,
            "diagnostic": res.diagnostic,
            "observables": {name: _estimate(observable_at(t_m[name], res.c_opt)) for name in observables},
        }
        gevp = stages.run("regularize", gevp_sweep, t_m["energy"], config.max_discard)
        entry["gevp"] = [{"discard": r.discarded_sv_count, "pseudoeigenvalue": r.pseudoeigenvalue / n}
                         for r in gevp]
        methods[method] = entry
    record["methods"] = methods

    sweep_method = "krylov+" if "krylov+" in config.methods else "krylov"
    t_sweep = tensors["energy"] if sweep_method == "krylov+" else tensors["energy"].restrict([0, 1])
    ratios = sorted(config.eps_sweep_ratios)
    sweep = stages.run("eps-sweep", eps_sweep, t_sweep, [r * abs(unmit_est.value) for r in ratios])
    record["eps_sweep"] = {
        "method": sweep_method,
        "points": [{"eps_ratio": r, "eps_max": s.eps_max, "energy": _estimate(s.energy, n),
                    "feasible": not s.diagnostic, "c_opt": [float(v) for v in s.c_opt],
                    "snr": snr(s.energy.value, s.energy.std_error, n)}
                   for r, s in zip(ratios, sweep)],
    }
    record["exact"] = stages.run("exact", _exact_references, config, params, h, observables)
    record["traces"] = traces
    return record, stages.times


def snr(value: float, std_error: float, n_qubits: int) -> float:
    """``|H(c_opt)| / (N eps)``; infinite when the error vanishes."""
    return abs(value) / (n_qubits * std_error) if std_error > 0 else float("inf")


def run_pipeline(config: ExperimentConfig) -> RunReport:
    """Generate, select, solve, regularize and compare with exact references for every ``g``."""
    out = Path(config.output_dir)
    cache = out / "cache"
    try:
        cache.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    records, wall = [], {}
    for index, g in enumerate(config.g_values):
        record, times = _run_one(config, index, g, cache)
        records.append(record)
        wall[f"g={g}"] = times
    total = sum(sum(r["traces"].values()) for r in records)
    # the output location is left out so identical configs give identical reports
    report = RunReport(config.config_hash(), config.semantic_dict(), records, total, wall)
    report.save(out / "report.json")
    return report


def emit_plot_data(report: RunReport, out_dir) -> list[Path]:
    """Write one CSV per figure analog and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "energy.csv": (["g", "method", "value", "err", "n_samples"], []),
        "order_parameters.csv": (["g", "observable", "method", "value", "err", "exact", "theory"], []),
        "eps_sweep.csv": (["g", "method", "eps_ratio", "eps_max", "value", "err", "snr", "feasible"], []),
        "gevp.csv": (["g", "method", "discard", "pseudoeigenvalue"], []),
    }
    for rec in report.records:
        g = rec["g"]
        rows = files["energy.csv"][1]
        u = rec["unmitigated"]["energy"]
        rows.append([g, "unmitigated", u["value"], u["std_error"], u["n_samples"]])
        for name, m in rec["methods"].items():
            e = m["energy"]
            rows.append([g, name, e["value"], e["std_error"], e["n_samples"]])
        rows.append([g, "exact", rec["exact"]["energy_density"], 0.0, 0])

        rows = files["order_parameters.csv"][1]
        for obs, est in rec["unmitigated"]["observables"].items():
            exact = rec["exact"]["observables"][obs]
            theory = rec["exact"].get(f"{obs}_theory", "")
            rows.append([g, obs, "unmitigated", est["value"], est["std_error"], exact, theory])
            for name, m in rec["methods"].items():
                mo = m["observables"][obs]
                rows.append([g, obs, name, mo["value"], mo["std_error"], exact, theory])

        sweep = rec["eps_sweep"]
        for p in sweep["points"]:
            files["eps_sweep.csv"][1].append([g, sweep["method"], p["eps_ratio"], p["eps_max"],
                                              p["energy"]["value"], p["energy"]["std_error"], p["snr"],
                                              int(p["feasible"])])
        for name, m in rec["methods"].items():
            for r in m["gevp"]:
                files["gevp.csv"][1].append([g, name, r["discard"], r["pseudoeigenvalue"]])

    paths = []
    for fname, (header, rows) in files.items():
        path = out / fname
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)
    return paths
