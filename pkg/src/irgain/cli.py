"""Command line front end: ``irgain sweep``, ``irgain verify`` and ``irgain scenarios list``.

Experiment spec files are TOML. Schema (every key optional unless noted)::

    [scenario]   name, description
    [system]     total_gain (required), snr_db (required, one per user, dB),
                 noise_sigma, coding, pulse_rates (series for non pulse-rate sweeps)
    [channel]    taps
    [run]        detectors, target_user, seed, max_errors (0 disables),
                 trials (integer, or table detector -> integer)
    [sweep]      axis (pulse_rate | snr_db | num_users, required), values (required)
    [output]     analytic, csv, svg
    [[variant]]  label (required) plus any of the tables above; each variant
                 is merged over the base and writes label-suffixed outputs.

The CSV header is ``axis,detector,pulse_rate,ber,ci_low,ci_high,analytic``:
``axis`` is the swept value, ``pulse_rate`` the N_f of the row and
``analytic`` the matched-filter closed form (empty when none applies).

Exit codes: 0 success, 1 verification failure, 2 unreadable or malformed
spec, 3 infeasible plan.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis, stats
from .channel import ChannelImpulseResponse, snr_to_energy
from .detectors import DetectorKind
from .model import Coding, SystemConfig
from .montecarlo import SweepAxis, TrialPlan, apply_axis, run_ber
from .rng import key_of, stream
from .svg import Series, render

log = logging.getLogger("irgain")

CSV_HEADER = ["axis", "detector", "pulse_rate", "ber", "ci_low", "ci_high", "analytic"]
EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INFEASIBLE = 0, 1, 2, 3

_SCHEMA = {
    "scenario": {"name", "description"},
    "system": {"total_gain", "snr_db", "noise_sigma", "coding", "pulse_rates"},
    "channel": {"taps"},
    "run": {"detectors", "target_user", "seed", "max_errors", "trials"},
    "sweep": {"axis", "values"},
    "output": {"analytic", "csv", "svg"},
}
_DEFAULTS = {
    "scenario": {"name": "experiment", "description": ""},
    "system": {"noise_sigma": 1.0, "coding": "coded", "pulse_rates": [1]},
    "channel": {"taps": [1.0]},
    "run": {"detectors": ["MF"], "target_user": 0, "seed": 0, "max_errors": 2000, "trials": 100000},
    "sweep": {},
    "output": {"analytic": True},
}


class SpecError(Exception):
    """Malformed spec (exit code 2)."""


class InfeasibleError(Exception):
    """Well-formed spec that cannot be run (exit code 3)."""


@dataclass
class ExperimentSpec:
    """A validated sweep: one series per (detector, pulse rate) pair."""

    name: str
    description: str
    label: str
    axis: SweepAxis
    values: list
    detectors: list[DetectorKind]
    pulse_rates: list[int]
    trials: dict[DetectorKind, int]
    seed: int
    analytic: bool
    csv_path: str
    svg_path: str | None
    plans: dict = field(default_factory=dict)

    def series_keys(self):
        return list(itertools.product(self.detectors, self.pulse_rates))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_schema(doc: dict, where: str = "") -> None:
    for section, body in doc.items():
        if section == "variant" and not where:
            if not isinstance(body, list):
                raise SpecError("'variant' must be an array of tables ([[variant]])")
            for v in body:
                if "label" not in v:
                    raise SpecError("every [[variant]] needs a label")
                _check_schema({k: x for k, x in v.items() if k != "label"}, "variant.")
            continue
        if section not in _SCHEMA:
            raise SpecError(f"unknown table [{where}{section}]")
        if not isinstance(body, dict):
            raise SpecError(f"[{where}{section}] must be a table")
        unknown = set(body) - _SCHEMA[section]
        if unknown:
            raise SpecError(f"unknown key(s) in [{where}{section}]: {', '.join(sorted(unknown))}")


def parse_spec_text(text: str, source: str = "<spec>") -> dict:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        where = f"{source}:{line}:{col}" if line is not None else source
        raise SpecError(f"{where}: {getattr(exc, 'msg', exc)}") from None
    _check_schema(doc)
    return doc


def _trials_table(raw, detectors):
    if isinstance(raw, dict):
        table = {DetectorKind.parse(k): int(v) for k, v in raw.items()}
        missing = [d.value for d in detectors if d not in table]
        if missing:
            raise SpecError(f"run.trials has no entry for {', '.join(missing)}")
        return table
    return {d: int(raw) for d in detectors}


def build_specs(doc: dict, overrides: dict | None = None, outdir: Path | None = None) -> list[ExperimentSpec]:
    """Resolve defaults, variants and command-line overrides into runnable specs."""
    base = _merge(_DEFAULTS, {k: v for k, v in doc.items() if k != "variant"})
    variants = doc.get("variant") or [{"label": ""}]
    specs = []
    for variant in variants:
        merged = _merge(base, {k: v for k, v in variant.items() if k != "label"})
        merged = _merge(merged, overrides or {})
        specs.append(_resolve(merged, str(variant["label"]), outdir or Path(".")))
    return specs


def _with_label(path: str | None, label: str, outdir: Path) -> str | None:
    if path is None:
        return None
    p = Path(path)
    if label:
        p = p.with_name(f"{p.stem}_{label}{p.suffix}")
    return str(p if p.is_absolute() else outdir / p)


def _resolve(d: dict, label: str, outdir: Path) -> ExperimentSpec:
    try:
        sysd, run, sweep, out = d["system"], d["run"], d["sweep"], d["output"]
        for key in ("total_gain", "snr_db"):
            if key not in sysd:
                raise SpecError(f"[system] needs '{key}'")
        for key in ("axis", "values"):
            if key not in sweep:
                raise SpecError(f"[sweep] needs '{key}'")
        axis = SweepAxis.parse(sweep["axis"])
        detectors = [DetectorKind.parse(x) for x in run["detectors"]]
        values = list(sweep["values"])
        if not values:
            raise SpecError("sweep.values is empty")
        trials = _trials_table(run["trials"], detectors)
        coding = Coding.parse(sysd["coding"])
        max_errors = int(run["max_errors"]) or None
        seed = int(run["seed"])
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from None
    name = d["scenario"]["name"]
    csv_path = _with_label(out.get("csv", f"{name}.csv"), label, outdir)
    spec = ExperimentSpec(
        name=name,
        description=d["scenario"]["description"],
        label=label,
        axis=axis,
        values=values,
        detectors=detectors,
        pulse_rates=[] if axis is SweepAxis.PULSE_RATE else [int(x) for x in sysd["pulse_rates"]],
        trials=trials,
        seed=seed,
        analytic=bool(out["analytic"]),
        csv_path=csv_path,
        svg_path=_with_label(out.get("svg"), label, outdir),
    )
    # build every plan up front so infeasible settings fail before any computation
    try:
        sigma = float(sysd["noise_sigma"])
        energies = tuple(snr_to_energy(float(s), sigma) for s in sysd["snr_db"])
        channel = ChannelImpulseResponse(tuple(float(t) for t in d["channel"]["taps"]))
        rates = [None] if axis is SweepAxis.PULSE_RATE else spec.pulse_rates
        for det, nf in itertools.product(detectors, rates):
            cfg = SystemConfig(int(sysd["total_gain"]), nf or 1, energies, sigma, coding)
            base = TrialPlan(cfg, trials[det], seed, det, channel, int(run["target_user"]), max_errors)
            for v in values:
                spec.plans[(det, nf, _key(v))] = apply_axis(base, axis, v)
    except ValueError as exc:
        raise InfeasibleError(f"{name}{'/' + label if label else ''}: {exc}") from None
    return spec


def _key(v):
    return float(v)


def _num(x) -> str:
    return repr(float(x)) if not float(x).is_integer() or isinstance(x, float) else str(int(x))


def run_spec(spec: ExperimentSpec, threads: int | None = None) -> list[list[str]]:
    """Run every point and return CSV rows (without the header)."""
    rows = []
    rates = [None] if spec.axis is SweepAxis.PULSE_RATE else spec.pulse_rates
    for det, nf in itertools.product(spec.detectors, rates):
        for v in spec.values:
            plan = spec.plans[(det, nf, _key(v))]
            est = run_ber(plan, threads)
            analytic = ""
            if spec.analytic and det is DetectorKind.MF:
                pred = analysis.predict_mf_ber(plan.config, plan.channel, plan.target_user)
                analytic = "" if pred is None else repr(pred.probability)
            rows.append([
                _num(v), det.value, str(plan.config.pulses_per_symbol),
                repr(est.ber), repr(est.ci_low), repr(est.ci_high), analytic,
            ])
            log.info("%s %s N_f=%s %s=%s ber=%.4g (%d/%d)", spec.name, det.value,
                     plan.config.pulses_per_symbol, spec.axis.value, v, est.ber, est.errors, est.trials)
    return rows


def format_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def plot_rows(spec: ExperimentSpec, rows) -> str:
    series = {}
    analytic = {}
    for axis, det, nf, ber, *_rest, an in rows:
        key = det if spec.axis is SweepAxis.PULSE_RATE else f"{det} N_f={nf}"
        s = series.setdefault(key, Series(key, [], []))
        s.x.append(float(axis))
        s.y.append(float(ber))
        if spec.analytic and an:
            a = analytic.setdefault(key, Series(f"{key} analytic", [], [], dashed=True))
            a.x.append(float(axis))
            a.y.append(float(an))
    out = []
    for key, s in series.items():
        out.append(s)
        if key in analytic:
            out.append(analytic[key])
    title = spec.name + (f" ({spec.label})" if spec.label else "")
    return render(out, title=title, xlabel=spec.axis.value)


# ---- built-in scenarios --------------------------------------------------------


def scenario_names() -> list[str]:
    root = resources.files("irgain.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def scenario_text(name: str) -> str:
    path = resources.files("irgain.scenarios") / f"{name}.toml"
    if not path.is_file():
        raise SpecError(f"unknown scenario {name!r}; available: {', '.join(scenario_names())}")
    return path.read_text(encoding="utf-8")


# ---- verification suite --------------------------------------------------------


@dataclass(frozen=True)
class VerifyScale:
    samples: int
    frames: int
    relax: float


SCALES = {"full": VerifyScale(100_000, 1_000_000, 1.0), "quick": VerifyScale(10_000, 100_000, 2.0)}


def _streams(seed: int, name: str):
    for attempt in itertools.count():
        yield stream(seed, key_of(name), attempt)


def _sufficient_condition_draws(rng, count: int, N: int):
    """Random (E1, E2) with sigma = 1 satisfying both sufficient conditions."""
    out = []
    while len(out) < count:
        e1, e2 = np.exp(rng.uniform(np.log(1e-3), np.log(N), size=2))
        if analysis.mf_monotonicity_conditions(e1, e2, 1.0, N).conditions_met:
            out.append((float(e1), float(e2)))
    return out


def analytic_reports(seed: int) -> list[stats.VerificationReport]:
    """Deterministic structural checks of the closed forms."""
    reports = []
    h = ChannelImpulseResponse((1.0, 0.9, 0.8))
    cases = [(N, e) for N in (64, 128, 256) for e in ((3.98, 3.98), (7.96, 7.96, 15.9), tuple([7.96] * 8))]
    bad = sum(not analysis.isi_argument_monotone(e, h, 1.0, N) for N, e in cases)
    reports.append(stats.VerificationReport("isi_argument_monotone_in_N_c", float(bad), 0.0, len(cases)))
    rng = stream(seed, key_of("sufficient_conditions"))
    draws = [(N, e1, e2) for N in (64, 128, 256) for e1, e2 in _sufficient_condition_draws(rng, 50, N)]
    bad = sum(not analysis.mf_monotonicity_conditions(e1, e2, 1.0, N).grid_check for N, e1, e2 in draws)
    reports.append(stats.VerificationReport("sufficient_conditions_vs_grid", float(bad), 0.0, len(draws)))
    return reports


def verification_checks(scale: VerifyScale):
    """(name, callable, args, kwargs) of every stochastic check at the given scale."""
    n, r = scale.samples, scale.relax
    return [
        ("rho_normality", stats.check_rho_normality, (4096, 64, n), {"ks_threshold": stats.RHO_NORMALITY_KS * r}),
        ("uncoded_moments_128_8", stats.check_uncoded_moments, (128, 8, n), {"rtol": stats.VARIANCE_RTOL * r, "n_se": stats.MEAN_SE * r}),
        ("uncoded_moments_1024_16", stats.check_uncoded_moments, (1024, 16, n), {"rtol": stats.VARIANCE_RTOL * r, "n_se": stats.MEAN_SE * r}),
        ("fsd_256_4_64", stats.check_fsd_dominance, (256, 4, 64, n), {"slack_scale": r}),
        ("fsd_128_8_32", stats.check_fsd_dominance, (128, 8, 32, n), {"slack_scale": r}),
        ("interference", stats.check_interference_distribution, (1.0, 1.0, 0.5, 4, 4096, 64, n),
         {"rtol": stats.VARIANCE_RTOL * r, "ks_threshold": stats.INTERFERENCE_KS * r}),
        ("self_collision", stats.check_self_collision_probability, (4, 64, scale.frames), {"n_se": stats.MEAN_SE * r}),
    ]


def run_verification(seed: int, scale_name: str) -> list[stats.VerificationReport]:
    scale = SCALES[scale_name]
    reports = []
    for name, fn, args, kwargs in verification_checks(scale):
        report, retried = stats.with_retry(fn, _streams(seed, name), *args, **kwargs)
        if retried:
            log.warning("%s retried: %s", name, "pass" if report.passed else "fail")
        reports.append(report)
    reports.extend(analytic_reports(seed))
    return reports


def format_report(reports) -> str:
    return "check,statistic,threshold,result\n" + "".join(r.line() + "\n" for r in reports)


# ---- argument parsing ----------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _values(text: str) -> list:
    out = []
    for x in text.split(","):
        x = x.strip()
        if x:
            v = float(x)
            out.append(int(v) if v.is_integer() and "." not in x else v)
    return out


def _set_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected section.key=value")
    key, val = text.split("=", 1)
    if "." not in key:
        raise argparse.ArgumentTypeError("expected section.key=value")
    section, name = key.strip().split(".", 1)
    try:
        parsed = tomllib.loads(f"v = {val}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = val
    return section, name, parsed


def overrides_from_args(args) -> dict:
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    put("run", "seed", args.seed)
    put("run", "trials", args.trials)
    put("run", "max_errors", args.max_errors)
    put("run", "detectors", args.detectors.split(",") if args.detectors else None)
    put("run", "target_user", args.target_user)
    put("sweep", "axis", args.axis)
    put("sweep", "values", _values(args.values) if args.values else None)
    put("system", "snr_db", _floats(args.snr_db) if args.snr_db else None)
    put("system", "pulse_rates", [int(v) for v in _floats(args.pulse_rates)] if args.pulse_rates else None)
    put("system", "total_gain", args.total_gain)
    put("system", "coding", args.coding)
    put("system", "noise_sigma", args.noise_sigma)
    put("channel", "taps", _floats(args.taps) if args.taps else None)
    put("output", "csv", args.csv)
    put("output", "svg", args.svg)
    if args.no_analytic:
        put("output", "analytic", False)
    for section, key, value in args.set or []:
        put(section, key, value)
    _check_schema(o)
    return o


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irgain", description="Pulse-rate BER experiments for impulse-radio CDMA.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run a sweep from a spec file or built-in scenario")
    s.add_argument("spec", nargs="?", help="TOML spec file")
    s.add_argument("--scenario", help="built-in scenario name (see 'scenarios list')")
    s.add_argument("--variant", action="append", help="only run the variant(s) with this label")
    s.add_argument("--outdir", type=Path, default=Path("."), help="directory for relative output paths")
    s.add_argument("--threads", type=int, help="worker threads (default: $IRGAIN_THREADS or CPU count)")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int, help="trials per point for every detector")
    s.add_argument("--max-errors", type=int, help="early-stop error count; 0 disables")
    s.add_argument("--detectors", help="comma list, e.g. MF,ML")
    s.add_argument("--target-user", type=int)
    s.add_argument("--axis", choices=[a.value for a in SweepAxis])
    s.add_argument("--values", help="comma list of sweep values")
    s.add_argument("--snr-db", help="comma list, one SNR per user")
    s.add_argument("--pulse-rates", help="comma list of N_f series (non pulse-rate sweeps)")
    s.add_argument("--total-gain", type=int)
    s.add_argument("--coding", choices=[c.value for c in Coding])
    s.add_argument("--noise-sigma", type=float)
    s.add_argument("--taps", help="comma list of channel taps")
    s.add_argument("--csv", help="CSV output path")
    s.add_argument("--svg", help="SVG output path")
    s.add_argument("--no-analytic", action="store_true", help="omit the analytic column and overlay")
    s.add_argument("--set", action="append", type=_set_value, metavar="SECTION.KEY=VALUE",
                   help="override any spec key (TOML value syntax)")

    v = sub.add_parser("verify", help="run the statistical verification suite")
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--scale", choices=sorted(SCALES), default="quick")
    v.add_argument("--report", type=Path, help="write the report here as well as to stdout")

    sc = sub.add_parser("scenarios", help="built-in scenarios")
    sc.add_argument("action", choices=["list", "show"])
    sc.add_argument("name", nargs="?")
    return p


def cmd_sweep(args) -> int:
    if bool(args.spec) == bool(args.scenario):
        print("error: give exactly one of SPEC or --scenario", file=sys.stderr)
        return EXIT_PARSE
    try:
        if args.scenario:
            text, source = scenario_text(args.scenario), f"{args.scenario}.toml"
        else:
            try:
                text, source = Path(args.spec).read_text(encoding="utf-8"), args.spec
            except OSError as exc:
                raise SpecError(f"cannot read {args.spec}: {exc.strerror}") from None
        doc = parse_spec_text(text, source)
        specs = build_specs(doc, overrides_from_args(args), args.outdir)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"error: infeasible plan: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.variant:
        specs = [s for s in specs if s.label in args.variant]
        if not specs:
            print(f"error: no variant labelled {', '.join(args.variant)}", file=sys.stderr)
            return EXIT_PARSE
    for spec in specs:
        rows = run_spec(spec, args.threads)
        Path(spec.csv_path).parent.mkdir(parents=True, exist_ok=True)
        Path(spec.csv_path).write_text(format_csv(rows), encoding="utf-8")
        print(spec.csv_path)
        if spec.svg_path:
            Path(spec.svg_path).parent.mkdir(parents=True, exist_ok=True)
            Path(spec.svg_path).write_text(plot_rows(spec, rows), encoding="utf-8")
            print(spec.svg_path)
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = run_verification(args.seed, args.scale)
    text = format_report(reports)
    sys.stdout.write(text)
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(text, encoding="utf-8")
    failed = [r.check_name for r in reports if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_scenarios(args) -> int:
    if args.action == "show":
        try:
            sys.stdout.write(scenario_text(args.name or ""))
        except SpecError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        return EXIT_OK
    for name in scenario_names():
        doc = tomllib.loads(scenario_text(name))
        print(f"{name}\t{doc.get('scenario', {}).get('description', '')}")
    return EXIT_OK


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return {"sweep": cmd_sweep, "verify": cmd_verify, "scenarios": cmd_scenarios}[args.command](args)
    except ValueError as exc:
        # anything rejected by the model after validation (e.g. infeasible ML size)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
