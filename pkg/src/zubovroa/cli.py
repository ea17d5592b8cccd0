"""Command-line driver: label, train, certify, export-levelset, bench.

Settings come from built-in defaults, then an optional ``--config`` file
(key = value lines under [run], [label], [train] and [verify] sections), then
command-line flags. Exit codes: 0 success or Certified, 1 Falsified,
2 Unknown, 3 configuration or model error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import net as netmod
from .dynamics import DynamicsError, SystemDef, load_system
from .net import MlpNetwork, NetParseError, TrainConfig, TrainingError
from .quadratic import (CertificateError, StabilityError, c1_certificate, c2_upper_bound,
                        default_eps, linearize, search_c1, solve_dlyap, vp_eval)
from .verify import (CERTIFIED, EXIT_CODES, FALSIFIED, UNKNOWN, VerifyOptions, bisect_level,
                     calibrate_neural, combine, verify_quadratic)
from .zubov import (STATUSES, UNSAFE, AlphaSpec, Dataset, LabelConfig, SafetySpec,
                    pilot_c_max, sample_dataset)

log = logging.getLogger("zubovroa")

EXIT_OK = 0
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSection:
    n: int = 5000
    horizon: int = 2000
    c_max: float | None = None     # None: pilot run
    c_x: float | None = None
    tol: float = 1e-3
    n_pilot: int = 2000


@dataclass(frozen=True)
class VerifySection:
    eps: float | None = None       # quadratic c1 margin; None: 0.01 lambda_min(Q)
    eps_decrease: float = 1e-4
    tol: float = 1e-3
    max_boxes: int = 2_000_000
    min_width: float = 1e-6
    centered: bool = True
    b_radius: tuple | None = None  # half-widths of B for c1; None: automatic search


@dataclass(frozen=True)
class RunConfig:
    system: str = "vdp"
    output_dir: str = "."
    seed: int = 0
    workers: int = 1
    label: LabelSection = field(default_factory=LabelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    verify: VerifySection = field(default_factory=VerifySection)


SECTIONS = {"run": None, "label": LabelSection, "train": TrainConfig, "verify": VerifySection}
RUN_KEYS = ("system", "output_dir", "seed", "workers")
FLOAT_TUPLE_KEYS = ("b_radius",)


def _convert(text: str, default, name: str):
    text = text.strip()
    if name in FLOAT_TUPLE_KEYS:
        if text.lower() in ("", "none", "auto"):
            return None
        return tuple(float(v) for v in text.replace(",", " ").split())
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(default, tuple):
        return tuple(int(v) for v in text.replace(",", " ").split())
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        if default is None and text.lower() in ("", "none", "auto"):
            return None
        return float(text)
    return text


def _line_of(text: str, section: str, key: str | None) -> int:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(
                rf"\s*{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
            return i
    return 0


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse a config file; unknown sections or keys raise ConfigError."""
    cfg = base or RunConfig()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        line = getattr(e, "lineno", 0)
        raise ConfigError(f"line {line}: {e.message.splitlines()[0]}") from None
    updates = {}
    for section in parser.sections():
        key_section = section.lower()
        if key_section not in SECTIONS:
            raise ConfigError(f"line {_line_of(text, key_section, None)}: "
                              f"unknown section [{section}]")
        if key_section == "run":
            allowed = {k: getattr(cfg, k) for k in RUN_KEYS}
        else:
            current = getattr(cfg, key_section)
            allowed = {f.name: getattr(current, f.name) for f in fields(current)}
        values = {}
        for key, raw in parser.items(section):
            line = _line_of(text, key_section, key)
            if key not in allowed:
                raise ConfigError(f"line {line}: unknown key {key!r} in [{section}]")
            try:
                values[key] = _convert(raw, allowed[key], key)
            except ValueError as e:
                raise ConfigError(f"line {line}: {e}") from None
        updates[key_section] = values
    run = updates.pop("run", {})
    for name, values in updates.items():
        try:
            run[name] = replace(getattr(cfg, name), **values)
        except ValueError as e:
            raise ConfigError(f"[{name}]: {e}") from None
    return replace(cfg, **run)


# ---------------------------------------------------------------------------
# shared plumbing

def _system(cfg: RunConfig) -> SystemDef:
    return load_system(cfg.system)


def _out(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_kv(path: Path, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in rows:
        w.writerow([k, repr(v) if isinstance(v, float) else v])
    path.write_text(buf.getvalue())


def _read_kv(path: Path) -> dict:
    rows = list(csv.reader(io.StringIO(path.read_text())))
    return {r[0]: r[1] for r in rows[1:]}


def _label_config(cfg: RunConfig, sys_: SystemDef, safety: SafetySpec) -> LabelConfig:
    lab = cfg.label
    base = LabelConfig(horizon=lab.horizon, c_x=lab.c_x, tol=lab.tol)
    c_max = lab.c_max
    if c_max is None:
        c_max = pilot_c_max(sys_, safety, base, n_pilot=lab.n_pilot, seed=cfg.seed)
    return replace(base, c_max=c_max)


# ---------------------------------------------------------------------------
# commands

def cmd_label(cfg: RunConfig) -> int:
    sys_ = _system(cfg)
    safety = SafetySpec.of(sys_)
    lcfg = _label_config(cfg, sys_, safety)
    aspec = AlphaSpec(sys_.dt, lcfg.mu)
    ds = sample_dataset(sys_, safety, aspec, lcfg, cfg.label.n, cfg.seed)
    out = _out(cfg)
    (out / "dataset.csv").write_text(ds.to_csv())
    counts = {s: int(np.sum(ds.status == s)) for s in STATUSES}
    _write_kv(out / "label_stats.csv", [
        ("system", sys_.name), ("n", sys_.n), ("rows", len(ds)), ("c_max", float(lcfg.c_max)),
        ("mu", float(lcfg.mu)), ("horizon", lcfg.horizon),
        ("unsafe_fraction", counts[UNSAFE] / len(ds)),
        *[(f"count_{s}", counts[s]) for s in STATUSES]])
    print(f"labeled {len(ds)} states; C_max = {lcfg.c_max:.6g}, mu = {lcfg.mu:.6g}, "
          f"unsafe fraction = {counts[UNSAFE] / len(ds):.4f}")
    return EXIT_OK


def _dataset_and_mu(out: Path) -> tuple[Dataset, float]:
    data = out / "dataset.csv"
    stats = out / "label_stats.csv"
    if not data.exists() or not stats.exists():
        raise ConfigError(f"no labeled dataset in {out}; run 'label' first")
    return Dataset.from_csv(data.read_text()), float(_read_kv(stats)["mu"])


def cmd_train(cfg: RunConfig) -> int:
    sys_ = _system(cfg)
    safety = SafetySpec.of(sys_)
    out = _out(cfg)
    ds, mu = _dataset_and_mu(out)
    if ds.x.shape[1] != sys_.n:
        raise ConfigError("dataset dimension does not match the system")
    aspec = AlphaSpec(sys_.dt, mu)
    tcfg = replace(cfg.train, seed=cfg.seed)
    res = netmod.train(sys_, safety, aspec, ds, tcfg)
    netmod.save(res.net, out / "weights.mlp")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "residual", "data", "total"])
    for i, t in enumerate(res.history):
        w.writerow([i, repr(t.residual), repr(t.data), repr(t.total)])
    (out / "history.csv").write_text(buf.getvalue())
    best = res.history[res.best_epoch]
    print(f"best epoch {res.best_epoch}: residual {best.residual:.4e}, "
          f"data {best.data:.4e}, total {best.total:.4e}")
    return EXIT_OK


@dataclass
class CertifyResult:
    report: str
    status: str
    c1: float
    c2: float | None
    neural: object = None


def certify(sys_: SystemDef, cfg: RunConfig, net: MlpNetwork | None = None) -> CertifyResult:
    safety = sys_.safety
    vcfg = cfg.verify
    opts = VerifyOptions(eps=vcfg.eps_decrease, min_width=vcfg.min_width,
                         max_boxes=vcfg.max_boxes, centered=vcfg.centered)
    A = linearize(sys_)
    Q = np.eye(sys_.n)
    P = solve_dlyap(A, Q)
    eps = default_eps(Q) if vcfg.eps is None else vcfg.eps
    if vcfg.b_radius is None:
        cert = search_c1(sys_, safety, P, Q, eps)
    else:
        if len(vcfg.b_radius) != sys_.n:
            raise ConfigError(f"b_radius needs {sys_.n} values")
        cert = c1_certificate(sys_, safety, P, Q, eps, vcfg.b_radius)
    upper = c2_upper_bound(P, sys_.domain)
    lines = [f"system {sys_.name}", cert.report(), f"c2 upper bound = {upper:.6g}"]
    t0 = time.perf_counter()
    lo = cert.c1 * (1 + 1e-6)
    first = verify_quadratic(sys_, safety, cert, lo, opts=opts)
    if not first.certified:
        lines.append(f"decrease condition fails just above c1: {first.status}")
        lines.append(first.report())
        log.info("quadratic search %.2fs", time.perf_counter() - t0)
        return CertifyResult("\n".join(lines) + "\n", first.status, cert.c1, None)
    c2 = bisect_level(lambda c: verify_quadratic(sys_, safety, cert, c, opts=opts),
                      lo, upper, vcfg.tol * upper)
    final = verify_quadratic(sys_, safety, cert, c2, opts=opts)
    log.info("quadratic bisection %.2fs", time.perf_counter() - t0)
    lines.append(f"c2 = {c2:.6g} (bisection tolerance {vcfg.tol * upper:.3g})")
    lines.append(final.report().rstrip())
    status = final.status
    neural = None
    if net is not None:
        neural = calibrate_neural(sys_, safety, net, cert, c2, opts=opts)
        if neural is None:
            status = UNKNOWN
            lines.append("neural certificate: no admissible (w1, w2) found")
        else:
            v = combine(neural.verdicts)
            status = v.status
            lines.append(f"neural sandwich level c = {neural.c:.6g}")
            lines.append(f"w1 = {neural.w1:.6g}")
            lines.append(f"w2 = {neural.w2:.6g}")
            for label, vd in zip(("W_N <= w1 => V_P <= c", "V_P <= c => W_N <= w2",
                                  "annulus decrease"), neural.verdicts):
                lines.append(f"{label}: {vd.status} ({vd.boxes_processed} boxes)")
    return CertifyResult("\n".join(lines) + "\n", status, cert.c1, c2, neural)


def _load_net(path) -> MlpNetwork | None:
    return None if path is None else netmod.load(path)


def cmd_certify(cfg: RunConfig, weights=None) -> int:
    sys_ = _system(cfg)
    res = certify(sys_, cfg, _load_net(weights))
    out = _out(cfg)
    (out / "certificate.txt").write_text(res.report)
    print(res.report, end="")
    return EXIT_CODES[res.status]


def _grid_axis(lo, hi, resolution):
    t = np.linspace(lo, hi, resolution)
    # keep the origin on the grid exactly when it is a grid node up to rounding
    t[np.abs(t) < 1e-12 * (hi - lo)] = 0.0
    return t


def levelset_grid(sys_: SystemDef, P, net, resolution: int, axes=(0, 1), fixed=None):
    """Grid over two coordinates of the domain; other coordinates at ``fixed``."""
    i, j = axes
    fixed = np.zeros(sys_.n) if fixed is None else np.asarray(fixed, dtype=float)
    u, v = (_grid_axis(sys_.domain.lo[k], sys_.domain.hi[k], resolution) for k in (i, j))
    U, V = np.meshgrid(u, v, indexing="ij")
    x = np.tile(fixed, (U.size, 1))
    x[:, i] = U.ravel()
    x[:, j] = V.ravel()
    cols = {"v_p": vp_eval(P, x)}
    if net is not None:
        cols["w_n"] = net(x)
    return x, cols


def cmd_export_levelset(cfg: RunConfig, weights=None, resolution=101, slice_=None,
                        fixed=None) -> int:
    sys_ = _system(cfg)
    if sys_.n > 2 and slice_ is None:
        raise ConfigError(f"system has n = {sys_.n}; --slice i,j is required")
    axes = (0, 1) if slice_ is None else slice_
    if len(axes) != 2 or axes[0] == axes[1] or not all(0 <= a < sys_.n for a in axes):
        raise ConfigError("slice must name two distinct coordinates")
    if fixed is not None and len(fixed) != sys_.n:
        raise ConfigError(f"--fix needs {sys_.n} values")
    P = solve_dlyap(linearize(sys_), np.eye(sys_.n))
    x, cols = levelset_grid(sys_, P, _load_net(weights), resolution, axes, fixed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{k + 1}" for k in range(sys_.n)] + list(cols))
    values = np.column_stack([x] + [cols[k] for k in cols])
    for row in values:
        w.writerow([repr(float(v)) for v in row])
    out = _out(cfg)
    (out / "levelset.csv").write_text(buf.getvalue())
    print(f"wrote {len(x)} grid points to {out / 'levelset.csv'}")
    return EXIT_OK


# hidden widths used for each benchmark when the run keeps the default width
BENCH_HIDDEN = {"vdp": (30, 30), "two_machine": (30, 30), "power4d": (50, 50)}


def _bench_one(cfg: RunConfig, name: str):
    train_cfg = cfg.train
    if train_cfg.hidden == TrainConfig().hidden:
        train_cfg = replace(train_cfg, hidden=BENCH_HIDDEN.get(name, train_cfg.hidden))
    sub = replace(cfg, system=name, output_dir=str(Path(cfg.output_dir) / name), train=train_cfg)
    t0 = time.perf_counter()
    cmd_label(sub)
    cmd_train(sub)
    code = cmd_certify(sub, Path(sub.output_dir) / "weights.mlp")
    return name, code, time.perf_counter() - t0


def cmd_bench(cfg: RunConfig, systems=("vdp", "two_machine", "power4d")) -> int:
    """Label, train and certify each benchmark; systems run in parallel with --workers."""
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_bench_one, [cfg] * len(systems), systems))
    else:
        results = [_bench_one(cfg, s) for s in systems]
    codes = []
    for name, code, secs in results:
        status = {v: k for k, v in EXIT_CODES.items()}[code]
        print(f"{name}: {status} ({secs:.1f}s)")
        codes.append(code)
    _write_kv(_out(cfg) / "bench.csv", [(n, {v: k for k, v in EXIT_CODES.items()}[c])
                                         for n, c, _ in results])
    if any(c == EXIT_CODES[FALSIFIED] for c in codes):
        return EXIT_CODES[FALSIFIED]
    if any(c == EXIT_CODES[UNKNOWN] for c in codes):
        return EXIT_CODES[UNKNOWN]
    return EXIT_CODES[CERTIFIED]


# ---------------------------------------------------------------------------
# argument parsing

def _ints(text):
    return tuple(int(v) for v in text.split(","))


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zubovroa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--system", help="built-in name (vdp, two_machine, power4d) or file")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    lab = sub.add_parser("label", parents=[common], help="simulate and label states")
    lab.add_argument("--n", type=int, help="number of sampled states (origin is appended)")
    lab.add_argument("--horizon", type=int)
    lab.add_argument("--c-max", type=float)

    tr = sub.add_parser("train", parents=[common], help="train W_N on a labeled dataset")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", dest="learning_rate", type=float)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--n-collocation", type=int)
    tr.add_argument("--lambda-d", type=float)
    tr.add_argument("--hidden", type=_ints, help="comma-separated hidden widths")

    ce = sub.add_parser("certify", parents=[common], help="quadratic and neural certificates")
    ce.add_argument("--weights", help="weight file of a trained W_N")
    ce.add_argument("--eps", type=float, help="margin for the local quadratic certificate")
    ce.add_argument("--eps-decrease", type=float)
    ce.add_argument("--tol", type=float, help="relative bisection tolerance")
    ce.add_argument("--max-boxes", type=int)
    ce.add_argument("--b-radius", type=_floats, help="half-widths of the box B used for c1")

    ex = sub.add_parser("export-levelset", parents=[common], help="grid values of V_P and W_N")
    ex.add_argument("--weights")
    ex.add_argument("--resolution", type=int, default=101)
    ex.add_argument("--slice", type=_ints, help="two zero-based coordinates, e.g. 0,2")
    ex.add_argument("--fix", type=_floats, help="values of all n coordinates off the slice")

    be = sub.add_parser("bench", parents=[common], help="run all three benchmarks end to end")
    be.add_argument("--epochs", type=int)
    be.add_argument("--n", type=int)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = parse_config(Path(args.config).read_text(), cfg)
    run = {k: getattr(args, k) for k in RUN_KEYS if getattr(args, k, None) is not None}
    cfg = replace(cfg, **run)
    lab = {k: getattr(args, a) for k, a in (("n", "n"), ("horizon", "horizon"), ("c_max", "c_max"))
           if getattr(args, a, None) is not None}
    tr = {k: getattr(args, k) for k in ("epochs", "learning_rate", "batch_size", "n_collocation",
                                         "lambda_d", "hidden") if getattr(args, k, None) is not None}
    ve = {k: getattr(args, k) for k in ("eps", "eps_decrease", "tol", "max_boxes", "b_radius")
          if getattr(args, k, None) is not None}
    try:
        return replace(cfg, label=replace(cfg.label, **lab), train=replace(cfg.train, **tr),
                       verify=replace(cfg.verify, **ve))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.workers < 1:
            raise ConfigError("workers must be at least 1")
        if args.command == "label":
            return cmd_label(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "certify":
            return cmd_certify(cfg, args.weights)
        if args.command == "export-levelset":
            return cmd_export_levelset(cfg, args.weights, args.resolution, args.slice, args.fix)
        return cmd_bench(cfg)
    except (ConfigError, DynamicsError, StabilityError, CertificateError, NetParseError,
            TrainingError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
