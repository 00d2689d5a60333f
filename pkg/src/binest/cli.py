"""Command-line front end.

Every command prints either an aligned table (default) or one JSON record
per line (``--format json-lines``).  Presets (``--table``) run fixed
reference grids with their parameters hard-coded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Any

from binest import __version__
from binest.design import coverage_two_stage, expected_k_two_stage, k_oracle
from binest.distributions import ModelParams
from binest.errors import (
    DegeneratePilotError,
    DomainError,
    ReplicationError,
    RunawayStoppingError,
    ToleranceError,
)
from binest.estimators import (
    Method,
    PairedSample,
    conditional_coverage,
    coverage_experiment,
    estimate,
    estimate_mean_of_products,
    estimate_product_of_means,
    nhat_single,
    relative_efficiency,
    var_mean_of_products,
)
from binest.nhat_distribution import nhat_median, nhat_moments, nhat_survival
from binest.procedures import Procedure, ProcedureConfig, replicate

EXIT_DOMAIN = 3
EXIT_ABORT = 4
EXIT_TOLERANCE = 5
EXIT_INPUT = 6

TABLE1 = dict(N=300, p=0.4, m=10, grid=list(range(100, 501, 50)))
TABLE2 = [(500, 0.6, m) for m in (10, 20, 30, 40)] + [(500, 0.3, m) for m in (10, 20, 30, 40)]
TABLE3 = [(500, 0.6, m, k) for m in (10, 50) for k in (10, 20, 50, 100, 1000)]
TABLE4 = dict(N=500, p=0.6, m=10, k1=100, gamma=0.01, replicas=1000)
TABLE5 = [
    (500, 0.6, 10, 100, 0.01),
    (500, 0.6, 20, 100, 0.01),
    (500, 0.6, 10, 100, 0.05),
    (500, 0.6, 20, 100, 0.05),
    (100, 0.4, 10, 100, 0.01),
    (100, 0.4, 20, 100, 0.01),
    (100, 0.4, 10, 100, 0.05),
    (100, 0.4, 20, 100, 0.05),
]


class SampleFileError(ValueError):
    pass


@dataclass
class OutputRecord:
    command: str
    inputs: dict[str, Any]
    outputs: dict[str, Any]
    seed: int | None = None
    tool_version: str = __version__

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "OutputRecord":
        return cls(**json.loads(line))


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _fmt(value, precision):
    if value is None:
        return "-"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.{precision}g}"
    return str(value)


def render_table(records: list[OutputRecord], precision: int) -> str:
    if not records:
        return ""
    columns = list(records[0].inputs) + list(records[0].outputs)
    for r in records[1:]:
        for c in list(r.inputs) + list(r.outputs):
            if c not in columns:
                columns.append(c)
    rows = [[_fmt({**r.inputs, **r.outputs}.get(c), precision) for c in columns] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def emit(records: list[OutputRecord], args, out=None) -> None:
    out = out or sys.stdout
    if args.format == "json-lines":
        for r in records:
            out.write(r.to_json() + "\n")
    else:
        out.write(render_table(records, args.precision) + "\n")


def read_sample_file(path: str) -> PairedSample:
    """Parse ``m=<int>`` followed by one ``x t`` pair per line; blank lines and ``#`` comments are skipped."""
    m = None
    xs, ts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if m is None:
                key, sep, val = line.partition("=")
                if not sep or key.strip() != "m":
                    raise SampleFileError(f"{path}:{lineno}: expected header 'm=<int>', got {line!r}")
                try:
                    m = int(val)
                except ValueError:
                    raise SampleFileError(f"{path}:{lineno}: m is not an integer: {val.strip()!r}") from None
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SampleFileError(f"{path}:{lineno}: expected two integers 'x t', got {line!r}")
            try:
                x, t = int(parts[0]), int(parts[1])
            except ValueError:
                raise SampleFileError(f"{path}:{lineno}: non-integer value in {line!r}") from None
            if x < 0 or t < m:
                raise SampleFileError(f"{path}:{lineno}: need x >= 0 and t >= m={m}, got {line!r}")
            xs.append(x)
            ts.append(t)
    if m is None:
        raise SampleFileError(f"{path}: missing header 'm=<int>'")
    if not xs:
        raise SampleFileError(f"{path}: no sample pairs")
    return PairedSample(xs, ts, m)


def _params(args) -> ModelParams:
    missing = [f"--{k}" for k in ("N", "p", "m") if getattr(args, k) is None]
    if missing:
        raise DomainError(f"missing {' '.join(missing)}")
    return ModelParams(args.N, args.p, args.m)


def _pinputs(p: ModelParams) -> dict:
    return {"N": p.n_true, "p": p.p, "m": p.m}


def cmd_survival(args) -> list[OutputRecord]:
    if args.table == 1:
        params = ModelParams(TABLE1["N"], TABLE1["p"], TABLE1["m"])
        grid = TABLE1["grid"]
    else:
        params = _params(args)
        grid = args.xi or _parse_grid(args.grid)
    records = [
        OutputRecord("survival", {**_pinputs(params), "n": xi}, {"survival": nhat_survival(xi, params)})
        for xi in grid
    ]
    if args.median or args.table == 1:
        records.append(OutputRecord("survival", _pinputs(params), {"median": nhat_median(params)}))
    return records


def _parse_grid(spec: str | None) -> list:
    if not spec:
        raise DomainError("give --xi values, --grid start:stop:step or --table 1")
    try:
        start, stop, step = (float(s) for s in spec.split(":"))
    except ValueError:
        raise DomainError(f"bad grid {spec!r}; expected start:stop:step") from None
    if step <= 0 or start < 0:
        raise DomainError("grid needs start >= 0 and step > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    vals = [start + i * step for i in range(n)]
    return [int(v) if float(v).is_integer() else v for v in vals]


def cmd_moments(args) -> list[OutputRecord]:
    rows = TABLE2 if args.table == 2 else [(args.N, args.p, args.m)]
    records = []
    for n, p, m in rows:
        params = ModelParams(n, p, m) if args.table == 2 else _params(args)
        mo = nhat_moments(params)
        records.append(OutputRecord("moments", _pinputs(params), asdict(mo)))
    return records


def cmd_efficiency(args) -> list[OutputRecord]:
    if args.table == 3:
        rows = TABLE3
    else:
        if not args.k:
            raise DomainError("give --k values or --table 3")
        rows = [(args.N, args.p, args.m, k) for k in args.k]
    records = []
    for n, p, m, k in rows:
        params = ModelParams(n, p, m) if args.table == 3 else _params(args)
        records.append(
            OutputRecord(
                "efficiency",
                {**_pinputs(params), "k": k},
                {"relative_efficiency": relative_efficiency(params, k)},
            )
        )
    return records


def cmd_design(args) -> list[OutputRecord]:
    params = _params(args)
    if args.gamma is None:
        raise DomainError("missing --gamma")
    multiplier = 2.0
    if args.z_multiplier:
        from binest.design import PrecisionSpec

        multiplier = PrecisionSpec(args.gamma, args.alpha).multiplier(use_z=True)
    res = k_oracle(params, args.gamma, multiplier)
    outputs = {"k0": res.k_value, "k_exact": res.k_exact, "xi": res.xi, "residual": res.residual}
    inputs = {**_pinputs(params), "gamma": args.gamma, "multiplier": multiplier}
    if args.expect:
        mean, std = expected_k_two_stage(params, args.gamma, args.k1, multiplier)
        k_ts = args.k_ts if args.k_ts is not None else math.ceil(mean)
        inputs.update(k1=args.k1, k_ts=k_ts)
        outputs.update(
            expected_k_ts=mean,
            std_k_ts=std,
            coverage=coverage_two_stage(params, args.gamma, k_ts),
        )
    return [OutputRecord("design", inputs, outputs)]


def _summary_record(config: ProcedureConfig, args) -> OutputRecord:
    s = replicate(config, workers=args.workers)
    p = config.params
    return OutputRecord(
        "simulate",
        {
            **_pinputs(p),
            "k1": config.k1,
            "gamma": config.gamma,
            "procedure": config.procedure.value,
            "replicas": config.replicas,
            "resample": config.resample,
        },
        {
            "mean_k": s.mean_k,
            "std_k": s.std_k,
            "q025_k": s.q025_k,
            "q975_k": s.q975_k,
            "mean_n_hat": s.mean_n_hat,
            "mean_half_width": s.mean_half_width,
            "mean_p_hat": s.mean_p_hat,
            "aborted": s.aborted,
        },
        seed=config.seed,
    )


def simulation_configs(args) -> list[ProcedureConfig]:
    if args.table == 4:
        t = TABLE4
        params = ModelParams(t["N"], t["p"], t["m"])
        # this preset's two-stage row uses the fresh-second-sample variant
        return [
            ProcedureConfig(params, t["k1"], t["gamma"], Procedure.TWO_STAGE, t["replicas"], args.seed, resample=True),
            ProcedureConfig(params, t["k1"], t["gamma"], Procedure.SEQUENTIAL, t["replicas"], args.seed),
        ]
    if args.table == 5:
        return [
            ProcedureConfig(ModelParams(n, p, m), k1, g, Procedure.SEQUENTIAL, 1000, args.seed)
            for n, p, m, k1, g in TABLE5
        ]
    if args.gamma is None:
        raise DomainError("missing --gamma")
    return [
        ProcedureConfig(
            _params(args),
            args.k1,
            args.gamma,
            Procedure(args.procedure),
            args.replicas,
            0 if args.seed is None else args.seed,
            resample=args.compat_resample,
        )
    ]


def cmd_simulate(args) -> list[OutputRecord]:
    return [_summary_record(c, args) for c in simulation_configs(args)]


def cmd_estimate(args) -> list[OutputRecord]:
    if args.samples:
        sample = read_sample_file(args.samples)
        outputs = {
            "k1": len(sample.xs),
            "k2": len(sample.ts),
            "product_of_means": estimate_product_of_means(sample),
            "p_hat": sample.p_hat(),
        }
        if sample.paired:
            outputs["mean_of_products"] = estimate_mean_of_products(sample)
            rep = estimate(sample, args.alpha, Method.MEAN_OF_PRODUCTS)
            outputs.update(ci_low=rep.ci_low, ci_high=rep.ci_high)
        return [OutputRecord("estimate", {"samples": args.samples, "m": sample.m, "alpha": args.alpha}, outputs)]
    if args.x is None or args.t is None or args.m is None:
        raise DomainError("give --x --t --m or --samples FILE")
    n_hat = nhat_single(args.x, args.t, args.m)
    return [
        OutputRecord(
            "estimate",
            {"x": args.x, "t": args.t, "m": args.m},
            {"n_hat": n_hat, "p_hat": args.m / args.t},
        )
    ]


def cmd_coverage(args) -> list[OutputRecord]:
    if args.s2 is not None:
        if args.var is not None:
            var_true = args.var
        else:
            var_true = var_mean_of_products(_params(args), 1)
        return [
            OutputRecord(
                "coverage",
                {"s2": args.s2, "var_true": var_true, "alpha": args.alpha},
                {"conditional_coverage": conditional_coverage(args.s2, var_true, args.alpha)},
            )
        ]
    params = _params(args)
    seed = 0 if args.seed is None else args.seed
    res = coverage_experiment(params, args.k, args.alpha, args.replicas, seed, split=not args.no_split)
    return [
        OutputRecord(
            "coverage",
            {**_pinputs(params), "k": args.k, "alpha": args.alpha, "replicas": args.replicas, "split": not args.no_split},
            {"empirical": res.empirical, "mean_conditional": res.mean_conditional},
            seed=seed,
        )
    ]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["table", "json-lines"], default="table")
    common.add_argument("--precision", type=int, default=6, help="significant digits in table output")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--N", type=int, help="binomial trial count")
    model.add_argument("--p", type=float, help="success probability")
    model.add_argument("--m", type=int, help="Pascal success target")

    parser = argparse.ArgumentParser(prog="binest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("survival", parents=[common, model], help="survival function of N_hat = XT/m")
    p.add_argument("--xi", type=float, nargs="+", help="evaluation points")
    p.add_argument("--grid", help="start:stop:step")
    p.add_argument("--median", action="store_true")
    p.add_argument("--table", type=int, choices=[1], help="preset 1: N=300, p=.4, m=10, n=100..500 step 50")
    p.set_defaults(func=cmd_survival)

    p = sub.add_parser("moments", parents=[common, model], help="exact moments, std and skewness of N_hat")
    p.add_argument("--table", type=int, choices=[2], help="preset 2: N=500, p in {.6,.3}, m in {10,20,30,40}")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("efficiency", parents=[common, model], help="relative efficiency of the two estimators")
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--table", type=int, choices=[3], help="preset 3: N=500, p=.6, m in {10,50}, k in {10,...,1000}")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("design", parents=[common, model], help="fixed-precision sample size")
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--z-multiplier", action="store_true", help="use z_{1-alpha/2} instead of 2")
    p.add_argument("--k1", type=int, default=100, help="pilot size for --expect")
    p.add_argument("--k-ts", type=int, help="sample size for the coverage figure (default: ceil of E K_TS)")
    p.add_argument("--expect", action="store_true", help="asymptotic mean/std of K_TS and two-stage coverage")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", parents=[common, model], help="replicate two-stage or sequential sampling")
    p.add_argument("--gamma", type=float)
    p.add_argument("--k1", type=int, default=100)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--procedure", choices=[e.value for e in Procedure], default="sequential")
    p.add_argument("--compat-resample", action="store_true", help="two-stage: draw a fresh second sample")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.add_argument(
        "--table",
        type=int,
        choices=[4, 5],
        help="preset 4: N=500, p=.6, m=10, k1=100, gamma=.01, both procedures; "
        "preset 5: eight sequential configurations; 1000 replicas each",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate N and p from observed data")
    p.add_argument("--x", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--samples", help="file: header 'm=<int>' then one 'x t' pair per line")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("coverage", parents=[common, model], help="coverage of the CLT interval")
    p.add_argument("--s2", type=float, help="observed S^2; gives the conditional coverage")
    p.add_argument("--var", type=float, help="true Var(N_hat_1); default from --N --p --m")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-split", action="store_true", help="centre and S^2 from the same k estimates")
    p.set_defaults(func=cmd_coverage)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.table and args.seed is None:
        parser.error("--seed is required with --table")
    try:
        records = args.func(args)
    except SampleFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (DegeneratePilotError, RunawayStoppingError, ReplicationError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ToleranceError as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    emit(records, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
