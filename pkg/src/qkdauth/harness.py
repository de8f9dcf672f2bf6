"""Command-line front end: single runs, Monte-Carlo batches, attack demo.

Configuration files are flat ``key = value`` lines (``#`` starts a comment);
every key can also be given as ``--key VALUE`` on the command line.  See
``FIELDS`` for the schema.

Exit status: 0 completed, 1 usage or configuration error, 2 authentication
abort.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .adversary import AdversaryKind, AdversaryStrategy
from .auth import AuthParams, AuthVerdict, SplitRule
from .errors import ConfigInvalid
from .photonics import ChannelParams
from .pipeline import SessionConfig, SessionReport, Variant, run_session
from .privacy import eve_information_bound
from .reconciliation import ReconParams

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 1, 2

CSV_COLUMNS = ("trial", "seed", "variant", "adversary", "n_photons", "sifted_fraction", "qber_true",
               "qber_est", "leak_t", "r_final", "keys_match", "auth_verdict", "eve_key_match")


def _block_size(text):
    if text is None or str(text).strip().lower() == "auto":
        return None
    return int(text)


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# name -> (parser, is_numeric)
FIELDS = {
    "n_photons": (int, True),
    "flip_prob": (float, True),
    "loss_prob": (float, True),
    "adversary": (str, False),
    "intercept_fraction": (float, True),
    "variant": (str, False),
    "safety_s": (int, True),
    "sample_fraction": (float, True),
    "auth_rule": (str, False),
    "ka_len": (int, True),
    "tag_len": (int, True),
    "nonce_len": (int, True),
    "insecure_tags": (_bool, False),
    "initial_block_size": (_block_size, True),
    "agree_rounds_needed": (int, True),
    "max_rounds": (int, True),
    "seed": (int, True),
}


def flatten(cfg: SessionConfig) -> Dict[str, object]:
    return {
        "n_photons": cfg.n_photons,
        "flip_prob": cfg.channel.flip_prob,
        "loss_prob": cfg.channel.loss_prob,
        "adversary": cfg.adversary.kind.value,
        "intercept_fraction": cfg.adversary.intercept_fraction,
        "variant": cfg.variant.value,
        "safety_s": cfg.safety_s,
        "sample_fraction": cfg.sample_fraction,
        "auth_rule": cfg.auth.rule.value,
        "ka_len": cfg.auth.ka_len,
        "tag_len": cfg.auth.tag_len,
        "nonce_len": cfg.auth.nonce_len,
        "insecure_tags": cfg.auth.insecure_ok,
        "initial_block_size": cfg.recon.initial_block_size,
        "agree_rounds_needed": cfg.recon.agree_rounds_needed,
        "max_rounds": cfg.recon.max_rounds,
        "seed": cfg.seed,
    }


def build_config(flat: Dict[str, object], base: Optional[SessionConfig] = None) -> SessionConfig:
    """Merge string or typed overrides into ``base`` and validate.

    Raises :class:`ConfigInvalid` listing every bad field.
    """
    values = flatten(base or SessionConfig())
    problems = {}
    for key, raw in flat.items():
        if key not in FIELDS:
            problems[key] = "unknown field"
            continue
        parse = FIELDS[key][0]
        try:
            values[key] = parse(raw) if isinstance(raw, str) or parse is not str else raw
        except (TypeError, ValueError) as exc:
            problems[key] = f"cannot parse {raw!r}: {exc}"
    if "adversary" in flat and ":" in str(values["adversary"]):
        try:
            adv = AdversaryStrategy.parse(str(values["adversary"]))
            values["adversary"] = adv.kind.value
            values["intercept_fraction"] = adv.intercept_fraction
        except ValueError as exc:
            problems["adversary"] = str(exc)
    elif "adversary" in flat and str(values["adversary"]) == "intercept" and "intercept_fraction" not in flat:
        values["intercept_fraction"] = 1.0
    if problems:
        raise ConfigInvalid(problems)

    parts = {}
    builders = {
        "channel": lambda: ChannelParams(values["flip_prob"], values["loss_prob"]),
        "adversary": lambda: AdversaryStrategy(
            AdversaryKind(values["adversary"]),
            values["intercept_fraction"] if values["adversary"] == AdversaryKind.INTERCEPT_RESEND.value else 0.0),
        "variant": lambda: Variant(values["variant"]),
        "auth": lambda: AuthParams(SplitRule(values["auth_rule"]), values["ka_len"], values["tag_len"],
                                   values["nonce_len"], values["insecure_tags"]),
        "recon": lambda: ReconParams(values["initial_block_size"], values["agree_rounds_needed"],
                                     values["max_rounds"]),
    }
    for name, build in builders.items():
        try:
            parts[name] = build()
        except ValueError as exc:
            problems[name] = str(exc)
    if problems:
        raise ConfigInvalid(problems)
    return SessionConfig(n_photons=values["n_photons"], safety_s=values["safety_s"],
                         sample_fraction=values["sample_fraction"], seed=values["seed"], **parts)


def read_config_file(path) -> Dict[str, str]:
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[session]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigInvalid({"config": f"cannot parse {path}: {exc}"}) from None
    return {k: v.strip().strip('"') for k, v in parser["session"].items()}


def load_config(path=None, overrides: Optional[Dict[str, object]] = None) -> SessionConfig:
    flat = read_config_file(path) if path else {}
    flat.update(overrides or {})
    return build_config(flat)


# -- batches ----------------------------------------------------------------

@dataclass(frozen=True)
class BatchSpec:
    base: SessionConfig
    trials: int
    seed_base: int = 0
    sweep: Optional[Tuple[str, Tuple[object, ...]]] = None

    def __post_init__(self):
        problems = {}
        if self.trials < 1:
            problems["trials"] = f"must be >= 1, got {self.trials}"
        if self.sweep is not None:
            name = self.sweep[0]
            if name not in FIELDS or not FIELDS[name][1] or name == "seed":
                problems["sweep"] = f"{name!r} is not a numeric session field"
        if problems:
            raise ConfigInvalid(problems)

    def points(self) -> List[Tuple[Optional[object], SessionConfig]]:
        if self.sweep is None:
            return [(None, self.base)]
        name, values = self.sweep
        base = self.base
        if name == "intercept_fraction" and base.adversary.kind is not AdversaryKind.INTERCEPT_RESEND:
            base = replace(base, adversary=AdversaryStrategy(AdversaryKind.INTERCEPT_RESEND, 1.0))
        return [(v, build_config({name: v}, base)) for v in values]

    def trial_configs(self, base: SessionConfig) -> List[SessionConfig]:
        return [replace(base, seed=self.seed_base + i) for i in range(self.trials)]


@dataclass
class BatchSummary:
    rows: List[SessionReport]
    sweep_value: Optional[object] = None
    safety_s: int = 32
    aggregates: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate([report_row(i, r) for i, r in enumerate(self.rows)], self.safety_s)


def report_row(trial: int, r: SessionReport) -> Dict[str, object]:
    return {
        "trial": trial, "seed": r.seed, "variant": r.variant, "adversary": r.adversary,
        "n_photons": r.n_photons, "sifted_fraction": r.sifted_fraction, "qber_true": r.qber_true,
        "qber_est": r.qber_est, "leak_t": r.leak_t, "r_final": r.r_final,
        "keys_match": r.keys_match, "auth_verdict": r.auth_verdict.value, "eve_key_match": r.eve_key_match,
    }


def _num(value) -> float:
    if isinstance(value, str):
        if value in ("true", "false"):
            return float(value == "true")
        return float(value)
    return float(value)


def aggregate(rows: Sequence[Dict[str, object]], safety_s: int) -> Dict[str, float]:
    """Aggregates over CSV-style rows (typed values or the strings read back from disk)."""
    out = {"trials": len(rows)}
    for col in ("qber_true", "sifted_fraction", "leak_t", "r_final"):
        xs = [_num(row[col]) for row in rows]
        out[f"{col}_mean"] = statistics.fmean(xs)
        out[f"{col}_std"] = statistics.stdev(xs) if len(xs) > 1 else 0.0
    out["abort_rate"] = sum(row["auth_verdict"] == AuthVerdict.ABORT.value for row in rows) / len(rows)
    out["accept_rate"] = sum(row["auth_verdict"] == AuthVerdict.ACCEPT.value for row in rows) / len(rows)
    out["eve_key_match_rate"] = statistics.fmean(_num(row["eve_key_match"]) for row in rows)
    out["keys_match_rate"] = statistics.fmean(_num(row["keys_match"]) for row in rows)
    out["eve_info_bound"] = eve_information_bound(safety_s)
    return out


def _run_one(cfg: SessionConfig) -> SessionReport:
    report = run_session(cfg)
    # Drop bulky in-memory artifacts before crossing a process boundary.
    report.transcripts = {}
    report.ledgers = {}
    if report.sub_reports:
        for sub in report.sub_reports:
            sub.transcripts, sub.ledgers = {}, {}
    return report


def run_batch(spec: BatchSpec, workers: int = 1) -> List[BatchSummary]:
    """One :class:`BatchSummary` per sweep point (a single one without a sweep).

    Trial ``i`` always uses seed ``seed_base + i``; results keep trial order
    whatever the pool's completion order.
    """
    summaries = []
    for value, base in spec.points():
        configs = spec.trial_configs(base)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_run_one, configs, chunksize=max(1, len(configs) // (4 * workers))))
        else:
            rows = [_run_one(c) for c in configs]
        summaries.append(BatchSummary(rows, value, base.safety_s))
    return summaries


def write_csv(rows: Sequence[SessionReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for i, r in enumerate(rows):
        row = report_row(i, r)
        for key in ("keys_match", "eve_key_match"):
            row[key] = "true" if row[key] else "false"
        # repr() round-trips floats exactly
        for key in ("sifted_fraction", "qber_true", "qber_est"):
            row[key] = repr(float(row[key]))
        writer.writerow(row)
    path.write_text(buf.getvalue())


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def format_summary(agg: Dict[str, float]) -> str:
    return "\n".join(f"{k:>22} = {v!r}" for k, v in agg.items())


# -- commands ---------------------------------------------------------------

def persist_report(report: SessionReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {"session": "transcript.log", "eve-bob": "transcript.eve-bob.log"}
    for key, transcript in report.transcripts.items():
        (out_dir / names.get(key, f"transcript.{key}.log")).write_text(transcript.dumps())
    report.transcript_path = str(out_dir / "transcript.log")
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return out_dir


def cmd_run(cfg: SessionConfig, out="out", run_id: Optional[str] = None, stream=None):
    stream = stream or sys.stdout
    report = run_session(cfg)
    out_dir = persist_report(report, Path(out) / (run_id or f"run-{cfg.seed}"))
    print(json.dumps(report.to_dict(), indent=2), file=stream)
    print(f"written to {out_dir}", file=stream)
    status = EXIT_ABORT if report.auth_verdict is AuthVerdict.ABORT else EXIT_OK
    return report, status


def cmd_montecarlo(spec: BatchSpec, out="out", batch_id: Optional[str] = None, workers: int = 1,
                   stream=None) -> List[BatchSummary]:
    stream = stream or sys.stdout
    batch_dir = Path(out) / (batch_id or f"batch-{spec.seed_base}")
    summaries = run_batch(spec, workers)
    for s in summaries:
        if spec.sweep is None:
            target = batch_dir
        else:
            target = batch_dir / f"{spec.sweep[0]}={s.sweep_value}"
            print(f"[{spec.sweep[0]} = {s.sweep_value}]", file=stream)
        write_csv(s.rows, target / "trials.csv")
        (target / "summary.json").write_text(json.dumps(s.aggregates, indent=2) + "\n")
        print(format_summary(s.aggregates), file=stream)
    return summaries


@dataclass
class DemoPair:
    seed: int
    baseline: SessionReport
    improved: SessionReport

    @property
    def expected(self) -> bool:
        """Baseline compromised and the improved variant aborted."""
        return self.baseline.eve_key_match and self.improved.auth_verdict is AuthVerdict.ABORT


def cmd_attack_demo(base: Optional[SessionConfig] = None, seeds: Sequence[int] = (0,),
                    stream=None) -> List[DemoPair]:
    stream = stream or sys.stdout
    base = base or SessionConfig()
    attack = replace(base, adversary=AdversaryStrategy(AdversaryKind.IMPERSONATE))
    pairs = []
    for seed in seeds:
        baseline = _run_one(replace(attack, variant=Variant.BASELINE, seed=seed))
        improved = _run_one(replace(attack, variant=Variant.AUTH_BEFORE_PA, seed=seed))
        pairs.append(DemoPair(seed, baseline, improved))

    if len(pairs) == 1:
        p = pairs[0]
        print(f"{'':>16} {'baseline':>12} {'auth-before-pa':>16}", file=stream)
        for label, get in [("alice keys_match", lambda r: r.sub_reports[0].keys_match),
                           ("bob keys_match", lambda r: r.sub_reports[1].keys_match),
                           ("auth_verdict", lambda r: r.auth_verdict.value),
                           ("r_final", lambda r: r.r_final),
                           ("eve_key_match", lambda r: r.eve_key_match)]:
            print(f"{label:>16} {str(get(p.baseline)):>12} {str(get(p.improved)):>16}", file=stream)
    compromised = sum(p.baseline.eve_key_match for p in pairs)
    aborted = sum(p.improved.auth_verdict is AuthVerdict.ABORT for p in pairs)
    print(f"seeds={len(pairs)} baseline compromised={compromised} improved aborted={aborted} "
          f"expected pair={sum(p.expected for p in pairs)}", file=stream)
    return pairs


# -- argument parsing -------------------------------------------------------

def _add_field_flags(parser):
    group = parser.add_argument_group("session fields (override the config file)")
    for name in FIELDS:
        if name in ("seed", "variant", "adversary"):
            continue
        group.add_argument(f"--{name}", dest=f"field_{name}", metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdauth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--variant", choices=[v.value for v in Variant])
        p.add_argument("--adversary", metavar="{none|intercept:F|impersonate}")
        p.add_argument("--out", default="out", metavar="DIR")
        _add_field_flags(p)

    run = sub.add_parser("run", help="run one session")
    common(run)
    run.add_argument("--run-id")

    mc = sub.add_parser("montecarlo", help="run a seeded batch of sessions")
    common(mc)
    mc.add_argument("--trials", type=int, default=100)
    mc.add_argument("--sweep", metavar="FIELD=V1,V2,...")
    mc.add_argument("--batch-id")
    mc.add_argument("--workers", type=int, default=1)

    demo = sub.add_parser("attack-demo", help="impersonation against baseline and improved protocol")
    common(demo)
    demo.add_argument("--trials", type=int, default=1, help="number of consecutive seeds")
    return parser


def _overrides(args) -> Dict[str, object]:
    flat = {k[len("field_"):]: v for k, v in vars(args).items() if k.startswith("field_") and v is not None}
    for name in ("seed", "variant", "adversary"):
        if getattr(args, name, None) is not None:
            flat[name] = str(getattr(args, name))
    return flat


def _parse_sweep(text: str):
    name, sep, values = text.partition("=")
    if not sep or not values:
        raise ConfigInvalid({"sweep": f"expected FIELD=V1,V2,..., got {text!r}"})
    name = name.strip()
    if name not in FIELDS:
        raise ConfigInvalid({"sweep": f"unknown field {name!r}"})
    try:
        return name, tuple(FIELDS[name][0](v.strip()) for v in values.split(","))
    except ValueError as exc:
        raise ConfigInvalid({"sweep": str(exc)}) from None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        overrides = _overrides(args)
        if args.command == "attack-demo" and "tag_len" in overrides and int(overrides["tag_len"]) < 8:
            overrides.setdefault("insecure_tags", "true")
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            _, status = cmd_run(cfg, args.out, args.run_id)
            return status
        if args.command == "montecarlo":
            sweep = _parse_sweep(args.sweep) if args.sweep else None
            spec = BatchSpec(cfg, args.trials, cfg.seed, sweep)
            cmd_montecarlo(spec, args.out, args.batch_id, args.workers)
            return EXIT_OK
        cmd_attack_demo(cfg, range(cfg.seed, cfg.seed + max(args.trials, 1)))
        return EXIT_OK
    except ConfigInvalid as exc:
        print("CONFIG_INVALID", file=sys.stderr)
        for key, problem in exc.problems.items():
            print(f"  {key}: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return EXIT_USAGE
