"""Render one figure from the artifact files of a simulation run directory.

This package talks to the simulator exclusively through its published
on-disk formats: binary field snapshots, the CSV diagnostic tables, and the
resolved-config JSON.  The snapshot parser below is an independent
implementation of the byte layout, so the format itself is the contract.

    kdv2-render --run-dir out/ --kind waterfall --out wave.png

Kinds: waterfall (snapshot stack over time), invariant_drift (conservation
drifts on a log scale), convergence_slope (log-log error table with a fitted
slope), ensemble_stats (member statistics with 2-standard-error bands).
Exit codes: 0 success, 1 missing or malformed artifact, 2 usage, 3 output
I/O failure.
"""

import argparse
import csv
import json
import math
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "FigureSpec",
    "KINDS",
    "MalformedArtifact",
    "MissingArtifact",
    "least_squares_slope",
    "main",
    "read_snapshot",
    "render",
]

KINDS = ("waterfall", "invariant_drift", "convergence_slope", "ensemble_stats")

# magic, format version, point count, domain length, sample time
_HEADER = struct.Struct("<4sHIdd")
_MAGIC = b"KDV2"
_VERSION = 1


class MissingArtifact(FileNotFoundError):
    """A required input file is absent; the message names it."""


class MalformedArtifact(ValueError):
    """A required input file exists but does not parse."""


# ---------------------------------------------------------------------------
# artifact readers


def read_snapshot(path):
    """Parse one binary snapshot; returns (time, length, values)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedArtifact(f"{path}: truncated snapshot header")
    magic, version, n, length, t = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise MalformedArtifact(f"{path}: bad magic {magic!r}, not a snapshot file")
    if version != _VERSION:
        raise MalformedArtifact(f"{path}: unsupported snapshot version {version}")
    payload = raw[_HEADER.size :]
    if len(payload) != 8 * n:
        raise MalformedArtifact(
            f"{path}: payload holds {len(payload)} bytes, expected {8 * n}"
        )
    return t, length, np.frombuffer(payload, dtype="<f8").copy()


def _require(run_dir: Path, name: str) -> Path:
    path = run_dir / name
    if not path.is_file():
        raise MissingArtifact(f"{name} not found in {run_dir}")
    return path


def _load_table(path: Path, required, numeric=None) -> dict:
    """Required CSV columns; numeric ones as float arrays, NaN for empties."""
    numeric = required if numeric is None else numeric
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = [c for c in required if c not in names]
        if missing:
            raise MalformedArtifact(f"{path}: missing column(s) {missing}")
        rows = list(reader)
    if not rows:
        raise MalformedArtifact(f"{path}: no data rows")
    out = {}
    for col in required:
        if col in numeric:
            out[col] = np.array(
                [float(r[col]) if r[col] not in ("", None) else math.nan for r in rows]
            )
        else:
            out[col] = [r[col] for r in rows]
    return out


def least_squares_slope(x, y) -> float:
    """Closed-form least-squares slope of y against x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a slope")
    dx = x - x.mean()
    return float(np.sum(dx * (y - y.mean())) / np.sum(dx * dx))


# ---------------------------------------------------------------------------
# figure kinds


def _waterfall(run_dir: Path):
    files = sorted(run_dir.glob("snapshot_*.snap"))
    if not files:
        raise MissingArtifact(f"snapshot_*.snap not found in {run_dir}")
    records = sorted((read_snapshot(p) for p in files), key=lambda rec: rec[0])
    lengths = {length for _, length, _ in records}
    if len(lengths) != 1:
        raise MalformedArtifact(f"{run_dir}: snapshots disagree on domain length")
    length = lengths.pop()
    x = np.linspace(0.0, length, records[0][2].size, endpoint=False)

    fig, ax = plt.subplots(figsize=(7, 5))
    if len(records) == 1:
        t, _, u = records[0]
        ax.plot(x, u, color="navy", lw=1.2)
        ax.set_ylabel("u")
        ax.set_title(f"field profile at t = {t:g}")
    else:
        span = max(float(np.ptp(u)) for _, _, u in records) or 1.0
        step = 1.4 * span
        cmap = plt.get_cmap("viridis")
        ticks, labels = [], []
        stride = max(1, math.ceil(len(records) / 8))
        for i, (t, _, u) in enumerate(records):
            ax.plot(x, u + i * step, color=cmap(i / (len(records) - 1)), lw=0.9)
            if i % stride == 0 or i == len(records) - 1:
                ticks.append(i * step)
                labels.append(f"{t:g}")
        ax.set_yticks(ticks, labels)
        ax.set_ylabel("t")
        ax.set_title(f"{len(records)} snapshots, stacked by time")
    ax.set_xlabel("x")
    ax.set_xlim(0.0, length)
    return fig, {"snapshots": len(records)}


def _invariant_drift(run_dir: Path):
    table = _load_table(
        _require(run_dir, "invariants.csv"),
        required=("t", "mass_drift", "l2_drift", "h_drift"),
    )
    fig, ax = plt.subplots(figsize=(7, 4.5))
    floor = 1e-18  # keeps exactly conserved quantities drawable on a log axis
    for col, label in (("mass_drift", "mass"), ("l2_drift", "L2"), ("h_drift", "H")):
        ax.semilogy(table["t"], np.maximum(np.abs(table[col]), floor), marker=".", label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("relative drift")
    ax.set_title("conserved-quantity drift")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return fig, {"rows": table["t"].size}


def _convergence_slope(run_dir: Path):
    table = _load_table(
        _require(run_dir, "nit_check.csv"), required=("alpha", "error_sup")
    )
    usable = (table["alpha"] > 0) & (table["error_sup"] > 0)
    alphas, errors = table["alpha"][usable], table["error_sup"][usable]
    if alphas.size < 2:
        raise MalformedArtifact(
            f"{run_dir / 'nit_check.csv'}: fewer than two usable rows for a slope"
        )
    slope = least_squares_slope(np.log(alphas), np.log(errors))

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(alphas, errors, "o", color="navy", label="measured")
    anchor = errors[0] * (alphas / alphas[0]) ** slope
    ax.loglog(alphas, anchor, "--", color="gray", label="fit")
    ax.text(
        0.05, 0.9, f"slope = {slope:.6f}", transform=ax.transAxes, fontsize=11
    )
    ax.set_xlabel("alpha")
    ax.set_ylabel("sup error")
    ax.set_title("convergence under the small parameter")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return fig, {"slope": slope, "points": int(alphas.size)}


def _ensemble_stats(run_dir: Path):
    table = _load_table(
        _require(run_dir, "ensemble.csv"),
        required=("scalar", "mean", "variance"),
        numeric=("mean", "variance"),
    )
    config = json.loads(_require(run_dir, "config.resolved").read_text())
    members = int(config.get("members", 0))
    if members < 1:
        raise MalformedArtifact(f"{run_dir / 'config.resolved'}: invalid member count")

    blow_up = None
    panels = []
    for name, mean, var in zip(table["scalar"], table["mean"], table["variance"]):
        if name == "blow_up_fraction":
            blow_up = mean
        elif math.isfinite(mean):
            panels.append((name, mean, 2.0 * math.sqrt(max(var, 0.0) / members)))

    n = max(len(panels), 1)
    fig, axes = plt.subplots(1, n, figsize=(2.4 * n + 1, 3.6), squeeze=False)
    for ax, (name, mean, band) in zip(axes[0], panels):
        ax.errorbar([0.0], [mean], yerr=[band], fmt="o", color="navy", capsize=6)
        ax.set_xticks([])
        ax.set_title(name)
    if not panels:
        axes[0][0].set_axis_off()
        axes[0][0].text(0.5, 0.5, "no surviving members", ha="center", va="center")
    suffix = "" if blow_up is None else f", blow-up fraction {blow_up:g}"
    fig.suptitle(f"{members} members, mean with 2-standard-error band{suffix}")
    fig.tight_layout()
    return fig, {"members": members, "scalars": len(panels), "blow_up_fraction": blow_up}


_RENDERERS = {
    "waterfall": _waterfall,
    "invariant_drift": _invariant_drift,
    "convergence_slope": _convergence_slope,
    "ensemble_stats": _ensemble_stats,
}


# ---------------------------------------------------------------------------
# entry point


@dataclass(frozen=True)
class FigureSpec:
    run_dir: Path
    kind: str
    out: Path

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


def render(spec: FigureSpec) -> dict:
    """Write the figure for `spec` and return its summary statistics."""
    run_dir = Path(spec.run_dir)
    if not run_dir.is_dir():
        raise MissingArtifact(f"run directory {run_dir} not found")
    fig, info = _RENDERERS[spec.kind](run_dir)
    try:
        out = Path(spec.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, dpi=150)
    finally:
        plt.close(fig)
    return info


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kdv2-render", description="render one figure from a run directory"
    )
    parser.add_argument("--run-dir", required=True, help="directory produced by the simulator")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        info = render(FigureSpec(Path(args.run_dir), args.kind, Path(args.out)))
    except (MissingArtifact, MalformedArtifact) as exc:
        print(f"render: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"render: I/O error: {exc}", file=sys.stderr)
        return 3
    extras = ", ".join(f"{k} = {v}" for k, v in info.items() if v is not None)
    print(f"wrote {args.out} ({args.kind}{': ' + extras if extras else ''})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
