"""Command-line front end: parameter sweeps to CSV and single-policy reports.

    vrharq sweep --preset fig3 --out fig3.csv
    vrharq sweep --snr-db 0:30:5 --m 1 --K 2 4 --scheme HARQ_IR --rate-mode FIXED VARIABLE --out ir.csv
    vrharq describe --scheme HARQ_IR --rate-mode VARIABLE --snr-db 10 --K 4

Exit codes: 0 success, 1 bad configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import itertools
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelModel, ergodic_stats
from .montecarlo import SimConfig, simulate
from .optimizer import (
    OptimizationResult,
    optimize_fixed_rate,
    optimize_vr,
    optimize_vr_chase,
    optimize_vr_ir,
)
from .outage import MAX_CHASE_ATTEMPTS, Scheme
from .special_math import ConvergenceError

log = logging.getLogger("vrharq")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class RateMode(str, enum.Enum):
    FIXED = "FIXED"
    VARIABLE = "VARIABLE"


@dataclass(frozen=True)
class SweepSpec:
    snr_db: tuple[float, ...]
    m_values: tuple[float, ...]
    k_values: tuple[int, ...]
    schemes: tuple[Scheme, ...]
    rate_modes: tuple[RateMode, ...]
    output_path: str
    grid_points: int = 100
    trials: int | None = None
    seed: int = 0
    refine: bool = False

    def __post_init__(self):
        for name in ("snr_db", "m_values", "k_values", "schemes", "rate_modes"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "rate_modes", tuple(RateMode(r) for r in self.rate_modes))
        if any(not m >= 0.5 for m in self.m_values):
            raise ValueError("Nakagami m values must be >= 0.5")
        if any(int(k) != k or k < 1 for k in self.k_values):
            raise ValueError("K values must be positive integers")
        if not 50 <= self.grid_points <= 400:
            raise ValueError("grid_points must be in [50, 400]")
        if self.trials is not None and self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def k_max(self) -> int:
        return int(max(self.k_values))

    def cells(self):
        """Sweep cells in output order."""
        return itertools.product(
            self.snr_db, self.m_values, self.k_values, self.schemes, self.rate_modes
        )


PRESETS = {
    # throughput versus SNR, Rayleigh
    "fig3": dict(
        snr_db=tuple(float(s) for s in range(0, 31, 2)),
        m_values=(1.0,),
        k_values=(2, 4, 8),
        schemes=(Scheme.HARQ_IR,),
        rate_modes=(RateMode.FIXED, RateMode.VARIABLE),
    ),
    # redundancy profiles, K = 4, both combining schemes
    "fig4": dict(
        snr_db=(10.0, 20.0),
        m_values=(1.0,),
        k_values=(4,),
        schemes=(Scheme.HARQ_IR, Scheme.HARQ_CHASE),
        rate_modes=(RateMode.FIXED, RateMode.VARIABLE),
    ),
    # redundancy profiles versus K
    "fig5": dict(
        snr_db=(10.0,),
        m_values=(1.0,),
        k_values=(2, 4, 6, 8),
        schemes=(Scheme.HARQ_IR,),
        rate_modes=(RateMode.FIXED, RateMode.VARIABLE),
    ),
    # outage profiles f_k
    "fig6": dict(
        snr_db=(10.0,),
        m_values=(1.0,),
        k_values=(4, 6, 8),
        schemes=(Scheme.HARQ_IR,),
        rate_modes=(RateMode.FIXED, RateMode.VARIABLE),
    ),
    # average number of attempts
    "fig7": dict(
        snr_db=tuple(float(s) for s in range(0, 31, 5)),
        m_values=(1.0,),
        k_values=(2, 4, 8),
        schemes=(Scheme.HARQ_IR,),
        rate_modes=(RateMode.FIXED, RateMode.VARIABLE),
    ),
}


def columns(k_max: int) -> list[str]:
    return (
        ["snr_db", "m", "K", "scheme", "rate_mode", "c_bar", "eta_exact", "eta_bound", "chi", "k_avg"]
        + [f"f_{k}" for k in range(1, k_max + 1)]
        + [f"rho_{k}" for k in range(1, k_max + 1)]
        + ["mc_eta", "mc_stderr", "wall_time_ms"]
    )


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def check_cell(scheme: Scheme, mode: RateMode, K: int) -> str | None:
    """Reason a sweep cell cannot be computed, or None."""
    if scheme is Scheme.HARQ_CHASE and K > MAX_CHASE_ATTEMPTS:
        return f"HARQ-CHASE quadrature is limited to K <= {MAX_CHASE_ATTEMPTS}"
    return None


def optimize_cell(
    model: ChannelModel,
    scheme: Scheme,
    mode: RateMode,
    K: int,
    grid_points: int = 100,
    seed: int = 0,
    refine: bool = False,
) -> OptimizationResult:
    if mode is RateMode.FIXED:
        return optimize_fixed_rate(model, scheme, K)
    if scheme is Scheme.HARQ_IR:
        return optimize_vr_ir(model, K, grid_points, refine=refine)
    if scheme is Scheme.HARQ_CHASE:
        return optimize_vr_chase(model, K, seed=seed)
    return optimize_vr(model, scheme, K, seed=seed)


def _row_seed(seed: int, index: int) -> int:
    state = np.random.SeedSequence((int(seed), int(index))).generate_state(1, np.uint64)
    return int(state[0])


def run_cell(spec: SweepSpec, index: int, snr_db, m, K, scheme, mode) -> dict:
    t0 = time.perf_counter()
    model = ChannelModel.from_db(m, snr_db)
    stats = ergodic_stats(model)
    res = optimize_cell(model, scheme, mode, int(K), spec.grid_points, spec.seed, spec.refine)
    rep = res.reported
    if rep.eta > stats.c_bar + 1e-6:
        raise ConvergenceError(f"throughput {rep.eta} above capacity {stats.c_bar} at {model}")
    row = {
        "snr_db": float(snr_db),
        "m": float(m),
        "K": int(K),
        "scheme": scheme.value,
        "rate_mode": mode.value,
        "c_bar": stats.c_bar,
        "eta_exact": rep.eta,
        "eta_bound": res.predicted_eta_bound
        if (scheme is Scheme.HARQ_IR and mode is RateMode.VARIABLE and K > 1)
        else None,
        "chi": rep.chi,
        "k_avg": rep.k_avg,
    }
    for k in range(1, spec.k_max + 1):
        row[f"f_{k}"] = rep.f[k - 1] if k <= K else None
        row[f"rho_{k}"] = res.policy.rho[k - 1] if k <= K else None
    row["mc_eta"] = row["mc_stderr"] = None
    if spec.trials:
        est = simulate(
            SimConfig(scheme, res.policy, model, spec.trials, _row_seed(spec.seed, index))
        )
        row["mc_eta"], row["mc_stderr"] = est.eta_hat, est.eta_stderr
    row["wall_time_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    return row


def manifest_path(output_path: str) -> Path:
    p = Path(output_path)
    return p.with_name(p.stem + ".manifest.json")


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Compute every cell, write the CSV and its JSON manifest; return the rows."""
    rows, skipped = [], []
    for index, (snr_db, m, K, scheme, mode) in enumerate(spec.cells()):
        reason = check_cell(scheme, mode, int(K))
        if reason:
            log.warning("skipping snr=%s m=%s K=%s %s %s: %s", snr_db, m, K, scheme.value, mode.value, reason)
            skipped.append(
                dict(snr_db=snr_db, m=m, K=K, scheme=scheme.value, rate_mode=mode.value, reason=reason)
            )
            continue
        log.info("cell snr=%s m=%s K=%s %s %s", snr_db, m, K, scheme.value, mode.value)
        rows.append(run_cell(spec, index, snr_db, m, K, scheme, mode))

    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = columns(spec.k_max)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in header])
    manifest = {
        "tool": "vrharq",
        "version": __version__,
        "seed": spec.seed,
        "spec": _jsonable(dataclasses.asdict(spec)),
        "columns": header,
        "rows": len(rows),
        "skipped": skipped,
    }
    manifest_path(spec.output_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return rows


def _jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def describe_policy(
    snr_db: float, m: float, scheme: Scheme, K: int, mode: RateMode, grid_points: int = 100,
    seed: int = 0, refine: bool = False,
) -> dict:
    """Optimized policy with its per-attempt quantities, as a JSON-ready dict."""
    scheme, mode = Scheme(scheme), RateMode(mode)
    reason = check_cell(scheme, mode, K)
    if reason:
        raise ValueError(reason)
    model = ChannelModel.from_db(m, snr_db)
    stats = ergodic_stats(model)
    res = optimize_cell(model, scheme, mode, K, grid_points, seed, refine)
    rho = np.asarray(res.policy.rho)
    return {
        "snr_db": snr_db,
        "m": m,
        "K": K,
        "scheme": scheme.value,
        "rate_mode": mode.value,
        "c_bar": stats.c_bar,
        "rho": rho.tolist(),
        "rho_normalized": (rho * stats.c_bar).tolist(),
        "rate": (1.0 / rho).tolist(),
        "f": list(res.reported.f),
        "eta": res.reported.eta,
        "eta_bound": None if math.isnan(res.predicted_eta_bound) else res.predicted_eta_bound,
        "chi": res.reported.chi,
        "k_avg": res.reported.k_avg,
        "diagnostics": list(res.diagnostics),
    }


def format_report(report: dict) -> str:
    lines = [
        f"{report['scheme']} {report['rate_mode']}  m={report['m']:g}  "
        f"snr={report['snr_db']:g} dB  K={report['K']}",
        f"  ergodic capacity  {report['c_bar']:.6f}",
        f"  throughput        {report['eta']:.6f}",
        f"  residual          {report['chi']:.6f}",
        f"  average attempts  {report['k_avg']:.6f}",
        "   k        rho       rho'       rate        f_k",
    ]
    for k in range(report["K"]):
        lines.append(
            f"  {k + 1:2d} {report['rho'][k]:10.5f} {report['rho_normalized'][k]:10.5f} "
            f"{report['rate'][k]:10.5f} {report['f'][k]:10.3e}"
        )
    lines.extend(f"  note: {d}" for d in report["diagnostics"])
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _expand(tokens, cast=float) -> tuple:
    """Values, where ``a:b:step`` expands to an inclusive range."""
    out = []
    for tok in tokens:
        if ":" in str(tok):
            parts = [float(p) for p in str(tok).split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError(f"range {tok!r} must be start:stop:step with step > 0")
            start, stop, step = parts
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            out.extend(cast(start + i * step) for i in range(n))
        else:
            out.append(cast(tok))
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vrharq", description="Throughput-optimal truncated HARQ over Nakagami-m fading.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sw = sub.add_parser("sweep", help="optimize over a grid of scenarios and write CSV")
    sw.add_argument("--preset", choices=sorted(PRESETS), help="pin the sweep axes of a figure")
    sw.add_argument("--snr-db", nargs="+", help="average SNR values in dB (a:b:step allowed)")
    sw.add_argument("--m", nargs="+", help="Nakagami shape values")
    sw.add_argument("--K", nargs="+", help="maximum numbers of attempts")
    sw.add_argument("--scheme", nargs="+", type=str.upper, choices=[s.value for s in Scheme])
    sw.add_argument("--rate-mode", nargs="+", type=str.upper, choices=[r.value for r in RateMode])
    sw.add_argument("--grid-points", type=int, default=100)
    sw.add_argument("--trials", type=int, help="add Monte Carlo columns with this many trials")
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--refine", action="store_true", help="polish VR-IR policies on the exact throughput")
    sw.add_argument("--out", required=True, help="CSV path; the manifest goes next to it")

    de = sub.add_parser("describe", help="print one optimized policy")
    de.add_argument("--scheme", type=str.upper, choices=[s.value for s in Scheme], default="HARQ_IR")
    de.add_argument("--rate-mode", type=str.upper, choices=[r.value for r in RateMode], default="VARIABLE")
    de.add_argument("--snr-db", type=float, default=10.0)
    de.add_argument("--m", type=float, default=1.0)
    de.add_argument("--K", type=int, default=4)
    de.add_argument("--grid-points", type=int, default=100)
    de.add_argument("--seed", type=int, default=0)
    de.add_argument("--refine", action="store_true")
    de.add_argument("--json", action="store_true", help="print JSON only")
    return parser


def spec_from_args(args) -> SweepSpec:
    base = dict(PRESETS[args.preset]) if args.preset else {}
    if args.snr_db:
        base["snr_db"] = _expand(args.snr_db)
    if args.m:
        base["m_values"] = _expand(args.m)
    if args.K:
        base["k_values"] = _expand(args.K, cast=lambda v: int(float(v)))
    if args.scheme:
        base["schemes"] = tuple(args.scheme)
    if args.rate_mode:
        base["rate_modes"] = tuple(args.rate_mode)
    missing = [k for k in ("snr_db", "m_values", "k_values", "schemes", "rate_modes") if k not in base]
    if missing:
        raise ValueError(f"no preset given and missing sweep axes: {', '.join(missing)}")
    return SweepSpec(
        output_path=args.out,
        grid_points=args.grid_points,
        trials=args.trials,
        seed=args.seed,
        refine=args.refine,
        **base,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "sweep":
            rows = run_sweep(spec_from_args(args))
            print(f"wrote {len(rows)} rows to {args.out}")
        else:
            report = describe_policy(
                args.snr_db, args.m, args.scheme, args.K, args.rate_mode,
                args.grid_points, args.seed, args.refine,
            )
            print(json.dumps(report, indent=2) if args.json else format_report(report))
    except ConvergenceError as exc:
        print(f"vrharq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"vrharq: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
