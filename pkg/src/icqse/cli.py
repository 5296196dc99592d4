"""Command-line entry point: ``icqse <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError, ResourceError
from .model import ModelParams, build_hamiltonian, exact_diag, order_parameter_ops, reference_density
from .pauli import PauliSum
from .pipeline import (ExperimentConfig, RunReport, dataset_seed, detune_for, emit_plot_data, run_pipeline,
                       solve_subspace)
from .qse import (SubspaceSpec, constrained_minimize, eps_ratio_for_size, gevp_sweep, landscape_scan,
                  observable_at, select_paulis)
from .statesim import NoiseSpec, RootSpec, ShadowDataset, StateHandle, prepare_root, sample_shadows

log = logging.getLogger("icqse")

EXIT_CODES = ((ConfigError, 2), (NumericalError, 3), (ResourceError, 4))


def _hamiltonian(args, n_qubits: int) -> PauliSum:
    return build_hamiltonian(ModelParams.from_g(n_qubits, args.g, pbc=not args.open))


def _load_dataset(path) -> ShadowDataset:
    try:
        return ShadowDataset.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read shadow file {path}: {exc}") from exc


def _read_subspace(text: str, h: PauliSum) -> SubspaceSpec:
    """One operator per line; ``H`` is the Hamiltonian, the identity is prepended if missing."""
    n = h.n_qubits
    ops, names = [], []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        ops.append(h if line == "H" else PauliSum.from_text(line, n))
        names.append(line)
    if not ops or not ops[0].is_identity:
        ops.insert(0, PauliSum.identity(n))
        names.insert(0, "I")
    return SubspaceSpec(tuple(ops), "custom", tuple(names))


def _subspace(args, dataset: ShadowDataset, h: PauliSum) -> SubspaceSpec:
    choice = args.subspace
    if choice == "krylov":
        return SubspaceSpec.krylov(h)
    if choice == "krylov-plus":
        pools = {w: args.pool_size for w in args.weights if w <= min(5, h.n_qubits)}
        return select_paulis(dataset, h, pools, args.top_k, args.seed).spec
    if choice.startswith("custom:"):
        path = Path(choice[len("custom:"):])
        try:
            return _read_subspace(path.read_text(), h)
        except OSError as exc:
            raise ConfigError(f"cannot read subspace file {path}: {exc}") from exc
    raise ConfigError(f"unknown subspace {choice!r}; use krylov, krylov-plus or custom:<file>")


def _observables(names, n_qubits: int) -> dict[str, PauliSum]:
    out = {}
    for name in names:
        if name == "energy":
            continue
        if name in ("sx", "szy"):
            sx, szy = order_parameter_ops(n_qubits)
            out[name] = sx if name == "sx" else szy
        else:
            out[name] = PauliSum.from_text(name, n_qubits)
    return out


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _write_csv(header, rows, out) -> None:
    fh = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_gen_shadows(args) -> None:
    if args.config:
        config = ExperimentConfig.load(args.config)
        g = config.g_values[0] if args.g is None else args.g
        if g not in config.g_values:
            raise ConfigError(f"g = {g} is not in the config's g_values")
        params = ModelParams.from_g(config.n_qubits, g, pbc=config.pbc)
        noise = config.noise
        root = RootSpec(params, detune_for(g, config.detune), noise)
        shots, n_configs = config.shots, config.n_configs
        seed = dataset_seed(config.seed, config.g_values.index(g))
    else:
        missing = [f for f in ("n_qubits", "g", "n_configs") if getattr(args, f) is None]
        if missing:
            raise ConfigError(f"without --config these flags are required: {missing}")
        params = ModelParams.from_g(args.n_qubits, args.g, pbc=not args.open)
        noise = NoiseSpec(args.depolarizing, args.local_pauli)
        root = RootSpec(params, args.detune, noise)
        shots, n_configs, seed = args.shots, args.n_configs, args.seed
    dataset = sample_shadows(prepare_root(root), noise, n_configs, shots, seed)
    dataset.save(args.out)
    log.info("wrote %s (sha256 %s)", args.out, dataset.digest())


def cmd_exact(args) -> None:
    params = ModelParams.from_g(args.n_qubits, args.g, pbc=not args.open)
    spectrum = exact_diag(params, args.k)
    n = args.n_qubits
    out = {"N": n, "g": args.g,
           "couplings": {"g_zz": params.g_zz, "g_x": params.g_x, "g_zxz": params.g_zxz},
           "energies": [float(w) for w in spectrum.eigenvalues],
           "energy_density": reference_density(params, spectrum),
           "ed_energy_density": spectrum.energy_density}
    if n >= 5:
        gs = StateHandle.from_amplitudes(spectrum.ground_vector)
        sx, szy = order_parameter_ops(n)
        out["sx_exact"] = gs.expectation(sx)
        out["szy_exact"] = gs.expectation(szy)
    _write(json.dumps(out, indent=2) + "\n", args.out)


def cmd_select(args) -> None:
    dataset = _load_dataset(args.shadows)
    h = _hamiltonian(args, dataset.n_qubits)
    pools = {w: args.pool_size for w in args.weights}
    sel = select_paulis(dataset, h, pools, args.top_k, args.seed, score_mode=args.score_mode)
    lines = ["I", "H"]
    for c in sel.chosen:
        lines.append(f"{c.pauli.to_label()}  # score {c.score:.6g}")
    _write("\n".join(lines) + "\n", args.out)


def cmd_solve(args) -> None:
    dataset = _load_dataset(args.shadows)
    n = dataset.n_qubits
    h = _hamiltonian(args, n)
    spec = _subspace(args, dataset, h)
    obs = _observables(args.observables, n)
    tensors, table = solve_subspace(dataset, spec, {"energy": h, **obs})
    e1 = np.eye(spec.dim)[0]
    unmit = observable_at(tensors["energy"], e1)
    ratio = eps_ratio_for_size(n) if args.eps_ratio is None else args.eps_ratio
    res = constrained_minimize(tensors["energy"], ratio * abs(unmit.value))
    out = {
        "dataset_sha256": dataset.digest(),
        "subspace": {"label": spec.label, "operators": list(spec.names)},
        "unmitigated": unmit.per_site(n).to_dict(),
        "eps_ratio": ratio,
        **res.to_dict(),
        "energy_density": res.energy.per_site(n).to_dict(),
        "observables": {k: observable_at(tensors[k], res.c_opt).to_dict() for k in obs},
        "trace_counter": table.trace_counter,
    }
    _write(json.dumps(out, indent=2) + "\n", args.out)


def cmd_regularize(args) -> None:
    dataset = _load_dataset(args.shadows)
    n = dataset.n_qubits
    h = _hamiltonian(args, n)
    spec = _subspace(args, dataset, h)
    tensors, _ = solve_subspace(dataset, spec, {"energy": h})
    rows = [[r.discarded_sv_count, r.pseudoeigenvalue / n, r.singular_values[spec.dim - 1 - r.discarded_sv_count]]
            for r in gevp_sweep(tensors["energy"], args.max_discard)]
    _write_csv(["discard", "pseudoeigenvalue", "smallest_kept_sv"], rows, args.out)


def cmd_landscape(args) -> None:
    dataset = _load_dataset(args.shadows)
    n = dataset.n_qubits
    h = _hamiltonian(args, n)
    spec = _subspace(args, dataset, h)
    tensors, _ = solve_subspace(dataset, spec, {"energy": h})
    i, j = args.dims
    lo, hi = args.range
    grid = np.linspace(lo, hi, args.points)
    value, error = landscape_scan(tensors["energy"], (i, j), grid, grid)
    rows = []
    for a, ci in enumerate(grid):
        for b, cj in enumerate(grid):
            rows.append([ci, cj, value[a, b] / n, error[a, b] / n])
    _write_csv([f"c{i}", f"c{j}", "value", "err"], rows, args.out)


def cmd_run(args) -> None:
    config = ExperimentConfig.load(args.config)
    if args.out_dir:
        config.output_dir = args.out_dir
    report = run_pipeline(config)
    paths = emit_plot_data(report, Path(config.output_dir) / "plot_data")
    log.info("report %s, %d CSV files", Path(config.output_dir) / "report.json", len(paths))


def cmd_report(args) -> None:
    report = RunReport.load(args.report)
    out = args.out_dir or Path(args.report).parent / "plot_data"
    for p in emit_plot_data(report, out):
        print(p)


def _pair(kind):
    def parse(text):
        try:
            a, b = (kind(v) for v in text.split(","))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}") from exc
        return a, b
    return parse


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icqse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p, need_n=True):
        if need_n:
            p.add_argument("--n-qubits", "-n", type=int, required=True)
        p.add_argument("--g", type=float, required=True)
        p.add_argument("--open", action="store_true", help="open boundary conditions")

    def subspace_args(p):
        p.add_argument("--shadows", required=True)
        p.add_argument("--subspace", default="krylov", help="krylov | krylov-plus | custom:<file>")
        p.add_argument("--pool-size", type=int, default=150)
        p.add_argument("--weights", type=_int_list, default=[1, 2, 3, 4, 5])
        p.add_argument("--top-k", type=int, default=5)
        p.add_argument("--seed", type=int, default=0)
        model_args(p, need_n=False)

    p = sub.add_parser("gen-shadows", help="sample randomized single-qubit measurements of a root state")
    p.add_argument("--config", help="experiment JSON; supplies every model and sampling setting")
    p.add_argument("--n-qubits", "-n", type=int)
    p.add_argument("--g", type=float)
    p.add_argument("--open", action="store_true", help="open boundary conditions")
    p.add_argument("--detune", type=float, default=0.0)
    p.add_argument("--depolarizing", type=float, default=0.0)
    p.add_argument("--local-pauli", type=float, default=0.0)
    p.add_argument("--n-configs", type=int)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_shadows)

    p = sub.add_parser("exact", help="exact-diagonalization reference")
    model_args(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("select-paulis", help="rank random Pauli pools and print the chosen subspace")
    p.add_argument("--shadows", required=True)
    model_args(p, need_n=False)
    p.add_argument("--pool-size", type=int, default=150)
    p.add_argument("--weights", type=_int_list, default=[1, 2, 3, 4, 5])
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-mode", choices=("upper", "energy"), default="upper")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("solve", help="error-budgeted subspace optimization")
    subspace_args(p)
    p.add_argument("--eps-ratio", type=float)
    p.add_argument("--observables", type=lambda s: [v for v in s.split(",") if v], default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("regularize", help="truncated-SVD generalized eigenvalue sweep (CSV)")
    subspace_args(p)
    p.add_argument("--max-discard", "--discard", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("landscape", help="estimate and error on a 2-D coefficient slice (CSV)")
    subspace_args(p)
    p.add_argument("--dims", type=_pair(int), default=(0, 1))
    p.add_argument("--range", type=_pair(float), default=(-2.0, 2.0))
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--out")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="write plot-data CSVs from a report JSON")
    p.add_argument("--report", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        # stage errors carry the original exception as their cause
        root = exc.__cause__ if exc.__cause__ is not None and not isinstance(exc, (ConfigError, NumericalError,
                                                                                   ResourceError)) else exc
        for kind, code in EXIT_CODES:
            if isinstance(root, kind):
                print(f"icqse: error: {exc}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
