"""Command-line runs, ensembles, and the on-disk artifact formats.

Subcommands: `run` (one trajectory with invariant diagnostics and binary
snapshots), `ensemble` (seeded member sweep with aggregate statistics),
`picard` (contraction diagnostics), `nit-check` (transformation identities
and the equivalence sweep), `noise-check` (stochastic-convolution
regularity table).  Every command resolves its configuration to JSON before
computing, so a run directory is self-describing and replayable.  Exit
codes separate physics from misuse: 0 success, 1 blow-up or divergence,
2 usage error, 3 I/O failure.
"""

import argparse
import csv
import dataclasses
import json
import math
import os
import struct
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import HypothesisViolation, picard_iterate, wv_regularity_study
from .equations import CoefficientSet, preset, soliton
from .hamiltonian import invariant_report
from .integrators import SCHEMES, StepConfig, evolve_deterministic, evolve_stochastic
from .nit import NitParams, equivalence_experiment
from .noise import NoiseModel
from .spectral import Grid, GridField, sup_norm

__all__ = [
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
    "SnapshotRecord",
    "write_snapshot",
    "read_snapshot",
    "PicardBlock",
    "NitCheckBlock",
    "NoiseCheckBlock",
    "RunConfig",
    "UsageError",
    "run",
    "ensemble",
    "main",
    "EXIT_OK",
    "EXIT_BLOWUP",
    "EXIT_USAGE",
    "EXIT_IO",
]

EXIT_OK = 0
EXIT_BLOWUP = 1
EXIT_USAGE = 2
EXIT_IO = 3

INIT_KINDS = ("soliton", "cosine", "zero")


class UsageError(ValueError):
    """Bad configuration or flags; reported before any artifact is written."""


# ---------------------------------------------------------------------------
# snapshot file format

SNAPSHOT_MAGIC = b"KDV2"
SNAPSHOT_VERSION = 1
# magic, format version, point count, domain length, sample time
_SNAPSHOT_HEADER = struct.Struct("<4sHIdd")


@dataclass(frozen=True)
class SnapshotRecord:
    n_points: int
    length: float
    time: float
    values: np.ndarray


def write_snapshot(path, values: np.ndarray, length: float, time_value: float):
    """One physical field as little-endian f64 after a fixed 26-byte header."""
    values = np.asarray(values, dtype="<f8")
    header = _SNAPSHOT_HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, values.size, float(length), float(time_value)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())


def read_snapshot(path) -> SnapshotRecord:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _SNAPSHOT_HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, n, length, t = _SNAPSHOT_HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, not a snapshot file")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    payload = raw[_SNAPSHOT_HEADER.size :]
    if len(payload) != 8 * n:
        raise ValueError(f"{path}: payload holds {len(payload)} bytes, expected {8 * n}")
    values = np.frombuffer(payload, dtype="<f8").copy()
    return SnapshotRecord(n_points=n, length=length, time=t, values=values)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PicardBlock:
    sigma: float = 0.9
    t_horizon: float = 0.25
    iters: int = 6
    kappa: float = 2.0


@dataclass(frozen=True)
class NitCheckBlock:
    alphas: tuple = (0.1, 0.05, 0.025)
    t_final: float = 1.0
    dt: float = 1e-3


@dataclass(frozen=True)
class NoiseCheckBlock:
    sigma_tilde: float = 0.9
    epsilon: float = 0.5
    paths: int = 200
    grids: tuple = (128, 256, 512)
    t_final: float = 0.25
    dt: float = 2.5e-3
    amp: float = 0.2
    # None resolves to sigma_tilde + 4, comfortably inside the premise
    decay: float = None
    length: float = 2.0 * math.pi


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, resolved; written verbatim into the run directory."""

    preset: str = "kdv"
    n: int = 256
    length: float = 64.0 * math.pi
    alpha: float = 1.0
    beta: float = 1.0
    linear_only: bool = False
    noise_amp: float = 0.0
    noise_decay: float = 2.0
    noise_include_mean: bool = False
    seed: int = 0
    dt: float = 1e-3
    t_final: float = 1.0
    scheme: str = "auto"
    snapshot_stride: int = 100
    blowup_threshold: float = 1e6
    init: str = "soliton"
    init_amp: float = 0.1
    init_c: float = 1.0
    members: int = 4
    out_dir: str = "kdv2_out"
    picard: PicardBlock = field(default_factory=PicardBlock)
    nit_check: NitCheckBlock = field(default_factory=NitCheckBlock)
    noise_check: NoiseCheckBlock = field(default_factory=NoiseCheckBlock)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["nit_check"]["alphas"] = list(self.nit_check.alphas)
        out["noise_check"]["grids"] = list(self.noise_check.grids)
        return out


_BLOCK_TYPES = {"picard": PicardBlock, "nit_check": NitCheckBlock, "noise_check": NoiseCheckBlock}


def _config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        if key in _BLOCK_TYPES:
            block_cls = _BLOCK_TYPES[key]
            block_known = {f.name for f in dataclasses.fields(block_cls)}
            bad = set(value) - block_known
            if bad:
                raise UsageError(f"unknown {key} config key(s) {sorted(bad)}")
            if "alphas" in value:
                value = dict(value, alphas=tuple(value["alphas"]))
            if "grids" in value:
                value = dict(value, grids=tuple(value["grids"]))
            kwargs[key] = block_cls(**value)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def _validated(config: RunConfig) -> RunConfig:
    if config.dt <= 0:
        raise UsageError(f"dt must be positive, got {config.dt}")
    if config.t_final <= 0:
        raise UsageError(f"t_final must be positive, got {config.t_final}")
    if config.n < 8 or config.n % 2 != 0:
        raise UsageError(f"n must be an even number >= 8, got {config.n}")
    if config.length <= 0:
        raise UsageError(f"length must be positive, got {config.length}")
    if config.snapshot_stride < 1:
        raise UsageError(f"snapshot_stride must be >= 1, got {config.snapshot_stride}")
    if config.scheme not in SCHEMES + ("auto",):
        raise UsageError(f"scheme must be one of {SCHEMES + ('auto',)}, got {config.scheme}")
    if config.init not in INIT_KINDS:
        raise UsageError(f"init must be one of {INIT_KINDS}, got {config.init}")
    if config.noise_amp < 0:
        raise UsageError(f"noise_amp must be nonnegative, got {config.noise_amp}")
    if config.members < 1:
        raise UsageError(f"members must be >= 1, got {config.members}")
    try:
        preset(config.preset)
    except (KeyError, ValueError) as exc:
        message = exc.args[0] if exc.args else str(exc)
        raise UsageError(message) from None
    try:
        StepConfig(dt=config.dt, t_final=config.t_final).n_steps
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return config


def _resolved_scheme(config: RunConfig) -> str:
    if config.scheme != "auto":
        return config.scheme
    return "STOCH_EULER_MILD" if config.noise_amp > 0 else "ETD4"


def _build_coeffs(config: RunConfig) -> CoefficientSet:
    coeffs = preset(config.preset, alpha=config.alpha, beta=config.beta)
    if config.linear_only:
        nonlinear = ("c_uux", "c_u2ux", "c_uxu2x", "c_uu3x")
        zeroed = {s: 0 for s in nonlinear if coeffs.prefactor(s) != 0}
        coeffs = coeffs.with_prefactors(name=f"{config.preset}-linear", **zeroed)
    return coeffs


def _build_initial(config: RunConfig, grid: Grid) -> GridField:
    if config.init == "soliton":
        return soliton(grid, c=config.init_c)
    if config.init == "cosine":
        kf = 2.0 * np.pi / grid.length
        return GridField.from_function(grid, lambda x: config.init_amp * np.cos(kf * x))
    return GridField.zeros(grid)


def _build_model(config: RunConfig) -> NoiseModel:
    return NoiseModel(
        amp=config.noise_amp,
        decay=config.noise_decay,
        include_mean_mode=config.noise_include_mean,
        seed=config.seed,
    )


def _write_resolved(config: RunConfig, out: Path):
    text = json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    (out / "config.resolved").write_text(text)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# run and ensemble


def _evolve(config: RunConfig):
    grid = Grid(config.n, config.length)
    coeffs = _build_coeffs(config)
    u0 = _build_initial(config, grid)
    scheme = _resolved_scheme(config)
    cfg = StepConfig(
        dt=config.dt,
        t_final=config.t_final,
        scheme=scheme,
        snapshot_stride=config.snapshot_stride,
        blowup_threshold=config.blowup_threshold,
    )
    if scheme == "STOCH_EULER_MILD":
        return evolve_stochastic(u0, coeffs, _build_model(config), cfg)
    return evolve_deterministic(u0, coeffs, cfg)


def run(config: RunConfig) -> int:
    """One trajectory: config.resolved, invariants.csv, snapshots, summary.json."""
    _validated(config)
    out = Path(config.out_dir)
    started = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, out)

    traj = _evolve(config)

    reports = invariant_report(traj, alpha=config.alpha, beta=config.beta)
    _write_csv(
        out / "invariants.csv",
        ["t", "mass", "l2", "hamiltonian", "mass_drift", "l2_drift", "h_drift"],
        [
            [r.time, r.mass, r.l2, r.hamiltonian, r.mass_drift, r.l2_drift, r.hamiltonian_drift]
            for r in reports
        ],
    )
    for i in range(len(traj)):
        step = int(round(traj.times[i] / config.dt))
        write_snapshot(
            out / f"snapshot_{step:08d}.snap", traj.states[i], config.length, traj.times[i]
        )
    final = traj.final
    summary = {
        "preset": config.preset,
        "seed": config.seed,
        "scheme": _resolved_scheme(config),
        "n_snapshots": len(traj),
        "terminated_early": traj.terminated_early,
        "blow_up_time": traj.blow_up_time,
        "wall_time_s": time.perf_counter() - started,
        "final": {
            "t": traj.t_final,
            "mass": reports[-1].mass,
            "l2": reports[-1].l2,
            "sup": sup_norm(final),
            "hamiltonian": reports[-1].hamiltonian,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_BLOWUP if traj.terminated_early else EXIT_OK


def _worker_count(members: int) -> int:
    env = os.environ.get("KDV2_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError(f"KDV2_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise UsageError(f"KDV2_THREADS must be >= 1, got {cap}")
        return min(cap, members)
    return min(members, os.cpu_count() or 1, 8)


def ensemble(config: RunConfig, out_dir=None) -> int:
    """Independent members (seed = base + index), then a single-threaded reduce."""
    _validated(config)
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, out)

    member_dirs = [out / f"member_{i:03d}" for i in range(config.members)]

    def _member(i: int) -> int:
        member = dataclasses.replace(
            config, seed=config.seed + i, out_dir=str(member_dirs[i])
        )
        return run(member)

    with ThreadPoolExecutor(max_workers=_worker_count(config.members)) as pool:
        codes = list(pool.map(_member, range(config.members)))

    finals = []
    for directory, code in zip(member_dirs, codes):
        summary = json.loads((directory / "summary.json").read_text())
        if code == EXIT_OK:
            finals.append(summary["final"])
    blow_up_fraction = codes.count(EXIT_BLOWUP) / config.members

    rows = []
    for scalar in ("mass", "l2", "sup", "hamiltonian"):
        values = np.array([f[scalar] for f in finals])
        if values.size:
            rows.append([scalar, float(values.mean()), float(values.var())])
        else:
            rows.append([scalar, "", ""])
    rows.append(["blow_up_fraction", blow_up_fraction, ""])
    _write_csv(out / "ensemble.csv", ["scalar", "mean", "variance"], rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# study subcommands


def _picard_study(config: RunConfig, out: Path) -> int:
    block = config.picard
    grid = Grid(config.n, config.length)
    u0 = _build_initial(config, grid)
    coeffs = _build_coeffs(config)
    model = _build_model(config)
    cfg = StepConfig(
        dt=config.dt,
        t_final=block.t_horizon,
        scheme="STOCH_EULER_MILD",
        snapshot_stride=1,
        blowup_threshold=config.blowup_threshold,
    )
    report, _ = picard_iterate(
        u0, coeffs, model, cfg, n_iter=block.iters, sigma=block.sigma, kappa=block.kappa
    )
    rows = []
    diffs = report.successive_diffs
    for m, d in enumerate(diffs, start=1):
        ratio = "" if m == 1 or diffs[m - 2] == 0.0 else d / diffs[m - 2]
        rows.append([m, d, ratio])
    _write_csv(out / "picard.csv", ["iterate", "diff", "ratio"], rows)
    print(
        f"picard: {report.iterates} iterates, fitted ratio {report.contraction_ratio:.4g}, "
        f"R = {report.radius_R:.4g}, M = {report.measured_M:.4g}, "
        f"conditions (i)={report.condition_i_satisfied} (ii)={report.condition_ii_satisfied}"
        + (", halted divergent" if report.halted_divergent else "")
    )
    return EXIT_BLOWUP if report.halted_divergent else EXIT_OK


def _nit_study(config: RunConfig, out: Path) -> int:
    block = config.nit_check
    params = NitParams()
    if params.u2ux_prefactor != 0 or params.uxu2x_prefactor * 6 != 5:
        print("nit-check: rational prefactor identities FAILED", file=sys.stderr)
        return EXIT_BLOWUP
    print("nit-check: rational prefactor identities hold exactly")
    grid = Grid(config.n, config.length)
    u0 = _build_initial(config, grid)
    try:
        result = equivalence_experiment(
            u0, alphas=block.alphas, t_final=block.t_final, dt=block.dt
        )
    except RuntimeError as exc:
        print(f"nit-check: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    slope = result.slope
    rows = [
        [row.alpha, row.beta, row.error_sup, "" if slope is None else slope]
        for row in result.rows
    ]
    _write_csv(out / "nit_check.csv", ["alpha", "beta", "error_sup", "slope_estimate"], rows)
    print(f"nit-check: slope estimate {'n/a' if slope is None else f'{slope:.3f}'}")
    return EXIT_OK


def _noise_study(config: RunConfig, out: Path) -> int:
    block = config.noise_check
    decay = block.sigma_tilde + 4.0 if block.decay is None else block.decay
    model = NoiseModel(
        amp=block.amp,
        decay=decay,
        include_mean_mode=config.noise_include_mean,
        seed=config.seed,
    )
    table = wv_regularity_study(
        model,
        sigma_tilde=block.sigma_tilde,
        epsilon=block.epsilon,
        n_paths=block.paths,
        grids=block.grids,
        length=block.length,
        t_final=block.t_final,
        dt=block.dt,
    )
    _write_csv(
        out / "wv_norms.csv",
        ["N", "norm_a", "norm_b", "xhat_1", "xhat_2", "xhat_3"],
        [[row.n_points, *row.values] for row in table.rows],
    )
    print(
        f"noise-check: {table.n_paths} paths, max relative change between two "
        f"finest grids {table.max_rel_change:.3%}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--preset", help="equation preset name")
    p.add_argument("--n", type=int, help="grid points")
    p.add_argument("--length", type=float, help="domain length")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--t-final", type=float, help="final time")
    p.add_argument("--scheme", help="ETD1 | ETD4 | STOCH_EULER_MILD | auto")
    p.add_argument("--seed", type=int, help="base RNG seed")
    p.add_argument("--alpha", type=float, help="first smallness parameter")
    p.add_argument("--beta", type=float, help="second smallness parameter")
    p.add_argument("--snapshot-stride", type=int, help="steps between snapshots")
    p.add_argument("--blowup-threshold", type=float, help="sup-norm stop guard")
    p.add_argument("--init", choices=INIT_KINDS, help="initial condition family")
    p.add_argument("--init-amp", type=float, help="cosine initial amplitude")
    p.add_argument("--init-c", type=float, help="soliton speed")
    p.add_argument("--noise-amp", type=float, help="noise amplitude (0 disables)")
    p.add_argument("--noise-decay", type=float, help="spectral decay exponent")
    p.add_argument(
        "--noise-mean",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="drive the mean mode as well",
    )
    p.add_argument(
        "--linear-only",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="drop the preset's nonlinear terms",
    )
    p.add_argument("--out", help="output directory")


_FLAG_FIELDS = {
    "preset": "preset",
    "n": "n",
    "length": "length",
    "dt": "dt",
    "t_final": "t_final",
    "scheme": "scheme",
    "seed": "seed",
    "alpha": "alpha",
    "beta": "beta",
    "snapshot_stride": "snapshot_stride",
    "blowup_threshold": "blowup_threshold",
    "init": "init",
    "init_amp": "init_amp",
    "init_c": "init_c",
    "noise_amp": "noise_amp",
    "noise_decay": "noise_decay",
    "noise_mean": "noise_include_mean",
    "linear_only": "linear_only",
    "out": "out_dir",
    "members": "members",
}


def _base_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise UsageError(f"{path}: config must be a JSON object")
    config = _config_from_dict(data)
    overrides = {}
    for arg_name, field_name in _FLAG_FIELDS.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field_name] = value
    return dataclasses.replace(config, **overrides)


def _replace_block(config: RunConfig, name: str, **updates) -> RunConfig:
    cleaned = {k: v for k, v in updates.items() if v is not None}
    if not cleaned:
        return config
    block = dataclasses.replace(getattr(config, name), **cleaned)
    return dataclasses.replace(config, **{name: block})


def _parse_float_list(text: str) -> tuple:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdv2",
        description="Pseudospectral extended-KdV simulator with additive spectral noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one trajectory with snapshots and invariants")
    _add_common_flags(p_run)

    p_ens = sub.add_parser("ensemble", help="independent seeded members plus statistics")
    _add_common_flags(p_ens)
    p_ens.add_argument("--members", type=int, help="ensemble size")

    p_pic = sub.add_parser("picard", help="fixed-point iteration diagnostics")
    _add_common_flags(p_pic)
    p_pic.add_argument("--sigma", type=float, help="contraction-space order")
    p_pic.add_argument("--t-horizon", type=float, help="iteration horizon")
    p_pic.add_argument("--iters", type=int, help="number of map applications")
    p_pic.add_argument("--kappa", type=float, help="safety factor > 1")

    p_nit = sub.add_parser("nit-check", help="transformation identities and equivalence sweep")
    _add_common_flags(p_nit)
    p_nit.add_argument("--alphas", help="comma-separated smallness parameters")

    p_noise = sub.add_parser("noise-check", help="stochastic-convolution regularity table")
    _add_common_flags(p_noise)
    p_noise.add_argument("--sigma-tilde", type=float, help="regularity order")
    p_noise.add_argument("--epsilon", type=float, help="derivative-order concession")
    p_noise.add_argument("--paths", type=int, help="Monte Carlo sample count")
    p_noise.add_argument("--grids", help="comma-separated grid sizes")
    return parser


def _dispatch(args) -> int:
    config = _base_config(args)
    if args.command == "run":
        return run(config)
    if args.command == "ensemble":
        return ensemble(config)

    if args.command == "picard":
        config = _replace_block(
            config,
            "picard",
            sigma=args.sigma,
            t_horizon=args.t_horizon,
            iters=args.iters,
            kappa=args.kappa,
        )
    elif args.command == "nit-check":
        alphas = _parse_float_list(args.alphas) if args.alphas else None
        config = _replace_block(
            config, "nit_check", alphas=alphas, t_final=args.t_final, dt=args.dt
        )
    elif args.command == "noise-check":
        grids = _parse_int_list(args.grids) if args.grids else None
        config = _replace_block(
            config,
            "noise_check",
            sigma_tilde=args.sigma_tilde,
            epsilon=args.epsilon,
            paths=args.paths,
            grids=grids,
            t_final=args.t_final,
            dt=args.dt,
            amp=args.noise_amp,
            decay=args.noise_decay,
            length=args.length,
        )
    _validated(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, out)
    handler = {
        "picard": _picard_study,
        "nit-check": _nit_study,
        "noise-check": _noise_study,
    }[args.command]
    return handler(config, out)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; its exit code 2 matches ours
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"kdv2: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisViolation as exc:
        print(f"kdv2: refusing to run: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"kdv2: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"kdv2: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
