"""Command-line front end.

Every command writes ``<label>.csv`` and ``<label>.json`` into the output
directory, where the label defaults to ``<command>-<UTC timestamp>``;
``entropy`` also writes a two-column ``<label>-plot.csv``. The JSON file
embeds the fully resolved configuration. Exit codes: 0 on
success, 1 on invalid input, 2 when a computation fails numerically.

Examples::

    ksgrain entropy --map baker --grid 32x32 --depth 8 --samples 1000000 --seed 7
    ksgrain bound --map rotation:alpha=0.618 --grid 32x32 --depth 96
    ksgrain wigner-check --dim 31 --ensemble 20 --seed 1
    ksgrain --config run.json
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics, entropy, quantum, transfer
from .errors import KsgrainError, NumericalError, ValidationError
from .phase_space import make_partition, named_cell_set, parse_grid, unit_square

COMMANDS = (
    "entropy",
    "bound",
    "correlation",
    "invariant-density",
    "factorization",
    "lyapunov",
    "quantum-mixing",
    "wigner-check",
)


@dataclass
class ExperimentConfig:
    command: str
    map_spec: str | None = None
    grid: str = "32x32"
    depth: int = 8
    stride: int = 1
    samples: int = 1_000_000
    seed: int = 0
    output_dir: str = "."
    label: str | None = None
    shards: int = 1
    series: str = "refinement"
    method: str = "increment-average"
    bias_correction: str | None = None
    set_a: str = "left"
    set_b: str = "bottom"
    sets: list[str] = field(default_factory=lambda: ["bottom", "left", "bottom"])
    t_max: int = 50
    samples_per_cell: int = 1000
    scheme: str = "random"
    tolerance: float = 1e-10
    max_iters: int = 10_000
    point: list[float] | None = None
    steps: int = 10_000
    dim: int = 31
    ensemble: int = 20
    window: list[int] | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        if "command" not in data:
            raise ValidationError("config needs a 'command' entry")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError("config JSON must be an object")
        # a run artifact embeds its configuration next to the result
        if set(data) == {"config", "version", "result"} and isinstance(data["config"], dict):
            data = data["config"]
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        for name in ("depth", "stride", "samples", "shards", "samples_per_cell", "max_iters", "steps", "dim", "ensemble"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"--{name.replace('_', '-')} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"--seed must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.t_max, int) or self.t_max < 0:
            raise ValidationError(f"--t-max must be a non-negative integer, got {self.t_max!r}")
        if not (isinstance(self.tolerance, (int, float)) and self.tolerance > 0):
            raise ValidationError(f"--tolerance must be positive, got {self.tolerance!r}")
        if self.series not in ("refinement", "spreading"):
            raise ValidationError(f"--series must be 'refinement' or 'spreading', got {self.series!r}")
        if self.method not in ("increment-average", "slope-fit"):
            raise ValidationError(f"--method must be 'increment-average' or 'slope-fit', got {self.method!r}")
        if self.scheme not in ("random", "lattice"):
            raise ValidationError(f"--scheme must be 'random' or 'lattice', got {self.scheme!r}")
        if self.bias_correction not in (None, "miller-madow"):
            raise ValidationError(f"--bias-correction must be 'miller-madow', got {self.bias_correction!r}")
        if self.label is not None and (not self.label or "/" in self.label or self.label.startswith(".")):
            raise ValidationError(f"--label must be a plain file stem, got {self.label!r}")
        if self.command in ("quantum-mixing", "wigner-check"):
            if self.dim % 2 == 0 or self.dim < 3:
                raise ValidationError(f"--dim must be odd and >= 3, got {self.dim}")
            if self.window is not None:
                lo, hi = self.window
                if not 0 <= lo < hi <= self.dim:
                    raise ValidationError(f"--window must satisfy 0 <= lo < hi <= dim, got {lo}:{hi}")
        else:
            if not self.map_spec:
                raise ValidationError(f"{self.command} needs --map")
            dynamics.parse_map_spec(self.map_spec)
            parse_grid(self.grid)
        if self.command == "factorization" and len(self.sets) < 2:
            raise ValidationError("factorization needs at least two --set values")


def _partition(cfg: ExperimentConfig):
    cq, cp = parse_grid(cfg.grid)
    return make_partition(unit_square(), cq, cp)


def _series(cfg, m, part):
    if cfg.series == "spreading":
        return entropy.spreading_series(m, part, cfg.depth, cfg.stride, cfg.samples, cfg.seed)
    return entropy.entropy_series(
        m, part, cfg.depth, cfg.stride, cfg.samples, cfg.seed, cfg.shards, cfg.bias_correction
    )


def _fmt(x: float) -> str:
    return f"{x:.3g}" if abs(x) < 1e-2 and x != 0 else f"{x:.3f}"


def cmd_entropy(cfg):
    m, part = dynamics.parse_map_spec(cfg.map_spec), _partition(cfg)
    s = _series(cfg, m, part)
    est = entropy.ks_estimate(s, cfg.method)
    result = {"series": s.to_dict(), "estimate": est.to_dict()}
    summary = (
        f"h_KS={_fmt(est.h_ks)} h_KS_tau={_fmt(est.h_ks_tau)} stride={est.stride} "
        f"window={est.fit_window[0]}-{est.fit_window[1]}"
    )
    return s.write_csv, result, summary, [("-plot.csv", s.write_plot)]


def cmd_bound(cfg):
    m, part = dynamics.parse_map_spec(cfg.map_spec), _partition(cfg)
    s = _series(cfg, m, part)
    est = entropy.ks_estimate(s, cfg.method)
    report = entropy.bound_report(est, part)
    result = {"series": s.to_dict(), "estimate": est.to_dict(), "report": report.to_dict()}
    return s.write_csv, result, report.summary()


def cmd_correlation(cfg):
    m, part = dynamics.parse_map_spec(cfg.map_spec), _partition(cfg)
    A, B = named_cell_set(part, cfg.set_a), named_cell_set(part, cfg.set_b)
    cs = transfer.correlation_series(m, part, A, B, cfg.t_max, cfg.samples, cfg.seed)
    tail = [abs(c) for t, c in zip(cs.times, cs.values) if t >= 1]
    result = {
        "times": cs.times,
        "values": cs.values,
        "stderr": cs.stderr,
        "max_abs_after_0": max(tail) if tail else None,
    }
    summary = f"C(0)={_fmt(cs.values[0])} max|C(t>=1)|={_fmt(max(tail)) if tail else 'n/a'} t_max={cfg.t_max}"
    return cs.write_csv, result, summary


def cmd_invariant_density(cfg):
    m, part = dynamics.parse_map_spec(cfg.map_spec), _partition(cfg)
    op = transfer.build_ulam(m, part, cfg.samples_per_cell, cfg.seed, cfg.scheme)
    f = transfer.fixed_density(op, cfg.tolerance, cfg.max_iters)
    dev = f.l1_distance(transfer.uniform_density(part))
    resid = transfer.stationarity_residual(op, f)
    gap = transfer.spectral_gap(op, f)
    result = {
        "l1_from_uniform": dev,
        "residual": resid,
        "slem": gap.slem,
        "spectral_gap": gap.gap,
        "weights": f.weights.tolist(),
    }
    summary = f"l1_from_uniform={dev:.3g} residual={resid:.3g} spectral_gap={gap.gap:.3f}"
    return f.write_csv, result, summary


def cmd_factorization(cfg):
    m, part = dynamics.parse_map_spec(cfg.map_spec), _partition(cfg)
    sets = [named_cell_set(part, s) for s in cfg.sets]
    rows = transfer.factorization_series(m, part, sets, range(cfg.t_max + 1), cfg.samples, cfg.seed)

    def write(path):
        with open(path, "w", newline="") as fh:
            fh.write("t_gap,residual\n")
            for t, r in rows:
                fh.write(f"{t},{r!r}\n")

    result = {"t_gap": [t for t, _ in rows], "residual": [r for _, r in rows]}
    summary = f"residual(t_gap={rows[-1][0]})={_fmt(rows[-1][1])} min={_fmt(min(r for _, r in rows))}"
    return write, result, summary


def cmd_lyapunov(cfg):
    m = dynamics.parse_map_spec(cfg.map_spec)
    if cfg.point is None:
        pt = np.random.default_rng(cfg.seed).random(2)
        point = [float(pt[0])] if m.dimension == 1 else [float(v) for v in pt]
    else:
        point = [float(v) for v in cfg.point]
    lam = dynamics.lyapunov_max(m, point, cfg.steps, cfg.seed)

    def write(path):
        with open(path, "w", newline="") as fh:
            fh.write("map,n_steps,lambda\n")
            fh.write(f"{m.spec},{cfg.steps},{lam!r}\n")

    return write, {"point": point, "lambda": lam}, f"lambda={lam:.4f} n_steps={cfg.steps}"


def cmd_quantum_mixing(cfg):
    N = cfg.dim
    system = quantum.quantized_cat(N)
    rho0 = quantum.random_pure_state(N, cfg.seed)
    lo, hi = cfg.window if cfg.window is not None else (0, N // 2)
    O = quantum.position_window(N, lo, hi)
    cs = quantum.quantum_correlation_series(system, rho0, O, cfg.t_max)
    period = quantum.quantum_period(system)
    result = {
        "times": cs.times,
        "values": cs.values,
        "mean_abs": cs.mean_abs,
        "fluctuation": cs.fluctuation,
        "quantum_period": period,
        "h_eff": system.h_eff,
    }
    summary = f"mean|C|={cs.mean_abs:.3g} fluctuation={cs.fluctuation:.3g} period={period}"
    return cs.write_csv, result, summary


def cmd_wigner_check(cfg):
    N = cfg.dim
    system = quantum.quantized_cat(N)
    cat = dynamics.cat()
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.ensemble)]
    rows = []
    for k, rng in enumerate(rngs):
        rho0 = quantum.random_pure_state(N, rng)
        O = quantum.random_observable(N, rng)
        star = quantum.stationary_state(system, rho0)
        rows.append(
            (
                k,
                quantum.check_stationarity(system, star),
                quantum.wigner_invariance_residual(star, cat),
                quantum.wigner_transport_residual(system, rho0, cat),
                quantum.wigner_invariance_residual(rho0, cat),
                abs(quantum.expectation_wigner(rho0, O) - quantum.expectation(rho0, O)),
            )
        )
    cols = ["state", "stationarity_residual", "invariance_residual", "transport_residual", "control_residual", "pairing_error"]

    def write(path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join([str(r[0])] + [repr(float(v)) for v in r[1:]]) + "\n")

    arr = np.array([r[1:] for r in rows])
    l2, l3, tr, ctrl, pair = arr.max(axis=0)
    passed = bool(l2 < 1e-10 and l3 < 1e-10 and tr < 1e-10 and pair < 1e-10 and arr[:, 3].min() > 1e-3)
    result = {
        "columns": cols,
        "rows": [list(r) for r in rows],
        "stationarity_max": l2,
        "invariance_max": l3,
        "transport_max": tr,
        "control_min": float(arr[:, 3].min()),
        "pairing_max": pair,
        "passed": passed,
    }
    summary = (
        f"stationarity_max={l2:.2g} invariance_max={l3:.2g} transport_max={tr:.2g} "
        f"control_min={arr[:, 3].min():.2g} passed={str(passed).lower()}"
    )
    return write, result, summary


HANDLERS = {
    "entropy": cmd_entropy,
    "bound": cmd_bound,
    "correlation": cmd_correlation,
    "invariant-density": cmd_invariant_density,
    "factorization": cmd_factorization,
    "lyapunov": cmd_lyapunov,
    "quantum-mixing": cmd_quantum_mixing,
    "wigner-check": cmd_wigner_check,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def output_paths(cfg: ExperimentConfig, now: datetime | None = None) -> tuple[Path, Path]:
    if cfg.label:
        stem = cfg.label
    else:
        now = now or datetime.now(timezone.utc)
        stem = f"{cfg.command}-{now.strftime('%Y%m%dT%H%M%S%fZ')}"
    out = Path(cfg.output_dir)
    return out / f"{stem}.csv", out / f"{stem}.json"


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Run one experiment; returns the process exit code."""
    stream = stream or sys.stdout
    written: list[Path] = []
    try:
        cfg.validate()
        out = Path(cfg.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValidationError(f"cannot create output directory {out}: {exc}") from None
        if not os.access(out, os.W_OK):
            raise ValidationError(f"output directory {out} is not writable")
        write_csv, result, summary, *extra = HANDLERS[cfg.command](cfg)
        csv_path, json_path = output_paths(cfg)
        written.append(csv_path)
        write_csv(csv_path)
        for suffix, writer in extra[0] if extra else []:
            path = csv_path.with_name(csv_path.stem + suffix)
            written.append(path)
            writer(path)
        payload = {"config": cfg.to_dict(), "version": __version__, "result": _jsonable(result)}
        written.append(json_path)
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    except ValidationError as exc:
        _cleanup(written)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _cleanup(written)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except KsgrainError as exc:
        _cleanup(written)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        _cleanup(written)
        raise
    print(summary, file=stream)
    return 0


def _cleanup(paths):
    for p in paths:
        try:
            p.unlink()
        except FileNotFoundError:
            pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _int_list(text):
    return [int(v) for v in text.replace(":", ",").split(",")]


def _float_list(text):
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="ksgrain", description="Coarse-grained chaos experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="JSON file holding an ExperimentConfig")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", dest="sub_config", default=None, help="JSON config; flags override it")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--output-dir", dest="output_dir", default=S)
    common.add_argument("--label", default=S, help="file stem used instead of <command>-<timestamp>")

    classical = _Parser(add_help=False)
    classical.add_argument("--map", dest="map_spec", default=S, help="baker | cat | standard:K=<r> | rotation:alpha=<r> | doubling")
    classical.add_argument("--grid", default=S, help="cells along q and p, e.g. 32x32")
    classical.add_argument("--samples", type=int, default=S)

    p = sub.add_parser("entropy", parents=[common, classical], help="refined-partition entropy series")
    p2 = sub.add_parser("bound", parents=[common, classical], help="entropy estimate against log(q)/tau")
    for sp in (p, p2):
        sp.add_argument("--depth", type=int, default=S)
        sp.add_argument("--stride", type=int, default=S)
        sp.add_argument("--shards", type=int, default=S)
        sp.add_argument("--series", choices=["refinement", "spreading"], default=S)
        sp.add_argument("--method", choices=["increment-average", "slope-fit"], default=S)
        sp.add_argument("--bias-correction", dest="bias_correction", choices=["miller-madow"], default=S)

    p = sub.add_parser("correlation", parents=[common, classical], help="mixing correlation sweep")
    p.add_argument("--set-a", dest="set_a", default=S, help="cell set name, e.g. left, bottom-left, or indices")
    p.add_argument("--set-b", dest="set_b", default=S)
    p.add_argument("--t-max", dest="t_max", type=int, default=S)

    p = sub.add_parser("invariant-density", parents=[common, classical], help="Ulam fixed density")
    p.add_argument("--samples-per-cell", dest="samples_per_cell", type=int, default=S)
    p.add_argument("--scheme", choices=["random", "lattice"], default=S)
    p.add_argument("--tolerance", type=float, default=S)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=S)

    p = sub.add_parser("factorization", parents=[common, classical], help="product factorization residual sweep")
    p.add_argument("--set", dest="sets", action="append", default=S, help="repeat once per set (>= 2)")
    p.add_argument("--t-max", dest="t_max", type=int, default=S, help="largest time gap")

    p = sub.add_parser("lyapunov", parents=[common], help="largest Lyapunov exponent")
    p.add_argument("--map", dest="map_spec", default=S)
    p.add_argument("--point", type=_float_list, default=S, help="seed point q,p")
    p.add_argument("--steps", type=int, default=S)

    p = sub.add_parser("quantum-mixing", parents=[common], help="quantized cat correlation sweep")
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--t-max", dest="t_max", type=int, default=S)
    p.add_argument("--window", type=_int_list, default=S, help="position window lo:hi")

    p = sub.add_parser("wigner-check", parents=[common], help="stationarity and Wigner invariance table")
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--ensemble", type=int, default=S)
    return parser


def resolve_config(argv=None) -> ExperimentConfig:
    """Merge defaults, an optional JSON config and explicit flags."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    config_file = ns.pop("sub_config", None) or ns.pop("config", None)
    ns.pop("config", None)
    command = ns.pop("command", None)
    data: dict = {}
    if config_file:
        try:
            text = Path(config_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config {config_file}: {exc}") from None
        data = ExperimentConfig.from_json(text).to_dict()
        if command and data["command"] != command:
            raise ValidationError(f"config is for {data['command']!r}, not {command!r}")
    elif not command:
        raise ValidationError("a command or --config is required")
    if command:
        data["command"] = command
    data.update(ns)
    if data["command"] in ("quantum-mixing", "wigner-check"):
        data.setdefault("map_spec", "cat")
        data.setdefault("t_max", data.get("dim", 31))
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
