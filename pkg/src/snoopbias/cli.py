"""Command-line entry point.

    snoopbias grid --profile desk --out results/ --threads 4 --plots
    snoopbias noisecor --out results/
    snoopbias rankagree --config my.yaml --out results/
    snoopbias attsplit --out results/
    snoopbias check-noise-condition --profile desk --out results/
    snoopbias replay results/manifest.json --out rerun/

Settings are resolved in order: built-in defaults, ``--profile``, the YAML
``--config`` file, then ``--seed``/``--reps``. Every run writes
``manifest.json`` next to its CSV files; ``replay`` reruns it exactly.

Exit status: 0 success, 2 configuration error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from snoopbias import __version__, experiments, plots
from snoopbias._accel import backend
from snoopbias.att_split import AttCheckSpec, run_unbiasedness_check
from snoopbias.datagen import ConfigError, SimConfig

COMMANDS = ("grid", "noisecor", "rankagree", "attsplit", "check-noise-condition")
DEFAULT_SEED = 20170101

DEFAULTS = {
    "grid": {
        "n_values": [30, 100, 250, 500],
        "p_values": [10, 30, 100, 500],
        "rho2_values": [0.25, 0.5, 0.75],
        "estimators": ["ols", "ipw"],
        "analysts": list(experiments.ANALYSTS),
        "replications": 2500,
        "delta": 0.0,
        "lasso": {"folds": 10, "lambda_count": 100, "treatment": "unpenalized"},
    },
    "noisecor": {
        "n": 50,
        "p": 3,
        "rho_x_values": [0.0, 0.3, 0.6],
        "m_values": [0.0, 0.25, 0.5, 0.75, 1.0],
        "replications": 2000,
    },
    "rankagree": {
        "n_values": [50, 200, 1000],
        "beta": [2.0, 1.0],
        "rho2": 0.5,
        "j": 0,
        "k": 1,
        "replications": 2000,
        "learned": False,
    },
    "attsplit": {
        "n": 200,
        "p": 20,
        "rho2": 0.5,
        "delta": 0.0,
        "fraction": 0.5,
        "policy": "adversarial_max_estimate",
        "replications": 5000,
    },
}

PROFILES = {
    "paper": {},
    "desk": {"grid": {"n_values": [30, 100], "p_values": [10, 100, 500], "replications": 500}},
}

# which config section --reps applies to
SECTION = {
    "grid": "grid",
    "check-noise-condition": "grid",
    "noisecor": "noisecor",
    "rankagree": "rankagree",
    "attsplit": "attsplit",
}

GRID_HEADER = ["estimator", "n", "p", "rho2", "analyst", "mean_bias", "scaled_bias", "mc_se", "reps", "seed"]
NOISECOR_HEADER = ["rho_x", "m", "empirical_cor", "analytic_cor", "expected_max", "mc_se", "reps"]
RANK_HEADER = ["n", "p_disagree", "se", "reps"]
ATT_HEADER = ["arm", "policy", "mean_est", "mc_se", "reps"]
RATIO_HEADER = ["estimator", "n", "p", "rho2", "analyst", "ratio", "se"]
CONDITION_HEADER = ["estimator", "n", "p", "rho2", "mean_m0", "mean_mix", "margin", "pooled_se", "satisfied", "reps"]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _type_ok(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    return False


def _check_node(node, schema, path, where):
    """Walk the composed YAML tree against ``schema``; returns plain values."""
    line = f"{where}:{node.start_mark.line + 1}"
    dotted = ".".join(path) or "<root>"
    if isinstance(schema, dict):
        if isinstance(node, yaml.ScalarNode) and node.tag.endswith(":null"):
            return {}
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{line}: {dotted} must be a mapping")
        out = {}
        for key_node, val_node in node.value:
            key = key_node.value
            kline = f"{where}:{key_node.start_mark.line + 1}"
            if key not in schema:
                raise ConfigError(f"{kline}: unknown key {'.'.join(path + [key])!r}")
            if key in out:
                raise ConfigError(f"{kline}: duplicate key {'.'.join(path + [key])!r}")
            out[key] = _check_node(val_node, schema[key], path + [key], where)
        return out
    value = yaml.safe_load(yaml.serialize(node))
    if isinstance(schema, list):
        if not isinstance(value, list) or not all(_type_ok(schema[0], v) for v in value):
            kind = type(schema[0]).__name__
            raise ConfigError(f"{line}: {dotted} must be a list of {kind}")
        return [float(v) if isinstance(schema[0], float) else v for v in value]
    if not _type_ok(schema, value):
        raise ConfigError(f"{line}: {dotted} must be of type {type(schema).__name__}")
    return float(value) if isinstance(schema, float) else value


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if root is None:
        return {}
    schema = dict(DEFAULTS, seed=0)
    return _check_node(root, schema, [], str(path))


def _spec_error(section, exc):
    return ConfigError(f"{section}: {exc}")


def grid_spec(cfg: dict, seed: int) -> experiments.GridSpec:
    g = cfg["grid"]
    try:
        return experiments.GridSpec(
            n_values=g["n_values"], p_values=g["p_values"], rho2_values=g["rho2_values"],
            estimators=g["estimators"], analysts=g["analysts"], replications=g["replications"],
            base_seed=seed, delta=g["delta"], lasso_folds=g["lasso"]["folds"],
            lambda_count=g["lasso"]["lambda_count"], lasso_treatment=g["lasso"]["treatment"],
        )
    except (ConfigError, ValueError) as exc:
        raise _spec_error("grid", exc) from exc


def noisecor_spec(cfg: dict, seed: int) -> experiments.NoiseCorSpec:
    c = cfg["noisecor"]
    try:
        return experiments.NoiseCorSpec(base_seed=seed, **c)
    except (ConfigError, ValueError) as exc:
        raise _spec_error("noisecor", exc) from exc


def rankagree_spec(cfg: dict, seed: int) -> experiments.RankAgreementSpec:
    c = cfg["rankagree"]
    try:
        return experiments.RankAgreementSpec(base_seed=seed, **c)
    except (ConfigError, ValueError) as exc:
        raise _spec_error("rankagree", exc) from exc


def att_spec(cfg: dict, seed: int) -> AttCheckSpec:
    c = cfg["attsplit"]
    try:
        return AttCheckSpec(base_seed=seed, **c)
    except (ConfigError, ValueError) as exc:
        raise _spec_error("attsplit", exc) from exc


BUILDERS = {
    "grid": grid_spec,
    "check-noise-condition": grid_spec,
    "noisecor": noisecor_spec,
    "rankagree": rankagree_spec,
    "attsplit": att_spec,
}


def resolve_config(command: str, config_path=None, profile: str = "paper", seed=None, reps=None) -> dict:
    """Fully resolved settings for ``command`` as plain data."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = _merge(DEFAULTS, PROFILES[profile])
    cfg["seed"] = DEFAULT_SEED
    if config_path is not None:
        cfg = _merge(cfg, load_config_file(config_path))
    if seed is not None:
        cfg["seed"] = seed
    if not (0 <= cfg["seed"] < 2**64):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg['seed']}")
    if reps is not None:
        cfg[SECTION[command]]["replications"] = reps
    BUILDERS[command](cfg, cfg["seed"])  # validate now
    return {"seed": cfg["seed"], SECTION[command]: cfg[SECTION[command]]}


def parse_config(path, command: str = "grid", profile: str = "paper"):
    """Validated experiment specification for ``command`` from a YAML file."""
    cfg = _merge(_merge(DEFAULTS, PROFILES[profile]), {"seed": DEFAULT_SEED})
    cfg = _merge(cfg, load_config_file(path))
    return BUILDERS[command](cfg, cfg["seed"])


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if v != v:
            return "NA"
        return format(v, "#.12g")
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    threads: int
    out_dir: str
    profile: str
    plots: bool
    version: str = __version__
    backend: str = field(default_factory=backend)
    started: str = ""
    finished: str = ""
    failures: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def write(self, path: Path):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(**data)
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_grid(cfg, out: Path, threads: int, make_plots: bool):
    spec = grid_spec(cfg, cfg["seed"])
    cells = experiments.run_grid_cells(spec, threads)
    rows = experiments.summarize(cells, spec)
    write_csv(out / "grid.csv", GRID_HEADER, [
        (r.estimator, r.n, r.p, r.rho2, r.analyst, r.mean_bias, r.scaled_bias, r.mc_se, r.reps, r.seed)
        for r in rows
    ])
    ratios = experiments.ratio_rows(cells, spec)
    write_csv(out / "ratios.csv", RATIO_HEADER, [
        (r.estimator, r.n, r.p, r.rho2, r.analyst, r.ratio if r.defined else float("nan"),
         r.se if r.defined else float("nan"))
        for r in ratios
    ])
    _write_conditions(out, experiments.condition_rows(cells, spec))
    if make_plots:
        plots.plot_scaled_bias(rows, out / "scaled_bias.svg")
        if ratios:
            plots.plot_bias_ratios(ratios, out / "bias_ratio.svg")
    return {
        f"{r.estimator}/n={r.n}/p={r.p}/rho2={r.rho2:g}/{r.analyst}": r.failures for r in rows if r.failures
    }


def _write_conditions(out, crows):
    write_csv(out / "condition.csv", CONDITION_HEADER, [
        (c.estimator, c.n, c.p, c.rho2, c.result.mean_m0, c.result.mean_mix, c.result.margin,
         c.result.pooled_se, c.result.satisfied, c.reps)
        for c in crows
    ])


def _cmd_condition(cfg, out: Path, threads: int, make_plots: bool):
    spec = grid_spec(cfg, cfg["seed"])
    crows = []
    for kind in spec.estimators:
        for n, p, rho2 in spec.cells():
            sim = SimConfig(n=n, p=p, rho2=rho2, delta=spec.delta)
            res = experiments.check_noise_condition(sim, spec.replications, kind, spec.base_seed, threads)
            crows.append(experiments.ConditionRow(kind, n, p, rho2, res, spec.replications))
    _write_conditions(out, crows)
    return {}


def _cmd_noisecor(cfg, out: Path, threads: int, make_plots: bool):
    spec = noisecor_spec(cfg, cfg["seed"])
    rows = experiments.run_noise_correlation(spec, threads)
    write_csv(out / "noisecor.csv", NOISECOR_HEADER, [
        (r.rho_x, r.m, r.empirical_cor, r.analytic_cor, r.expected_max, r.max_se, r.reps) for r in rows
    ])
    if make_plots:
        plots.plot_noise_correlation(rows, out / "noisecor.svg")
    return {}


def _cmd_rankagree(cfg, out: Path, threads: int, make_plots: bool):
    spec = rankagree_spec(cfg, cfg["seed"])
    known, learned = experiments.run_rank_agreement(spec, threads)
    write_csv(out / "rankagree.csv", RANK_HEADER, [(r.n, r.p_disagree, r.se, r.reps) for r in known])
    if learned:
        write_csv(out / "rankagree_learned.csv", RANK_HEADER, [(r.n, r.p_disagree, r.se, r.reps) for r in learned])
    if make_plots:
        plots.plot_rank_agreement(known, out / "rankagree.svg", learned)
    return {}


def _cmd_attsplit(cfg, out: Path, threads: int, make_plots: bool):
    spec = att_spec(cfg, cfg["seed"])
    res = run_unbiasedness_check(spec, threads)
    write_csv(out / "att.csv", ATT_HEADER, [
        ("att_split", res.policy, res.split_mean, res.split_se, res.reps),
        ("att_nosplit", "max_over_candidates", res.nosplit_mean, res.nosplit_se, res.reps),
    ])
    return {}


OUTPUTS = {
    "grid": ("grid.csv", "ratios.csv", "condition.csv", "scaled_bias.svg", "bias_ratio.svg"),
    "check-noise-condition": ("condition.csv",),
    "noisecor": ("noisecor.csv", "noisecor.svg"),
    "rankagree": ("rankagree.csv", "rankagree_learned.csv", "rankagree.svg"),
    "attsplit": ("att.csv",),
}

RUNNERS = {
    "grid": _cmd_grid,
    "check-noise-condition": _cmd_condition,
    "noisecor": _cmd_noisecor,
    "rankagree": _cmd_rankagree,
    "attsplit": _cmd_attsplit,
}


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def run(command: str, cfg: dict, out_dir, threads: int = 1, make_plots: bool = False,
        profile: str = "paper") -> RunManifest:
    """Execute ``command`` with resolved settings ``cfg`` and write outputs plus manifest."""
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command, cfg, cfg["seed"], threads, str(out), profile, make_plots, started=_now())
    manifest.failures = RUNNERS[command](cfg, out, threads, make_plots)
    manifest.finished = _now()
    produced = sorted(p for p in out.iterdir() if p.suffix in (".csv", ".svg") and p.name in OUTPUTS[command])
    manifest.outputs = {p.name: _sha256(p) for p in produced}
    manifest.write(out / "manifest.json")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snoopbias", description="Simulations of snooping and blinded covariate selection.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="YAML settings file")
        p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="base seed (unsigned 64-bit)")
        p.add_argument("--reps", type=int, default=None, help="replications per cell")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--profile", choices=sorted(PROFILES), default="paper")
        p.add_argument("--plots", action="store_true", help="also write SVG charts")
    p = sub.add_parser("replay", help="rerun a previous manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threads", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            m = RunManifest.read(args.manifest)
            if m.subcommand not in RUNNERS:
                raise ConfigError(f"manifest has unknown subcommand {m.subcommand!r}")
            cmd, profile, make_plots = m.subcommand, m.profile, m.plots
            threads = m.threads if args.threads is None else args.threads
            cfg = m.config
            BUILDERS[cmd](cfg, cfg["seed"])
        else:
            if args.reps is not None and args.reps < 2:
                raise ConfigError("--reps must be >= 2")
            cmd, profile, make_plots, threads = args.command, args.profile, args.plots, args.threads
            cfg = resolve_config(cmd, args.config, profile, args.seed, args.reps)
        manifest = run(cmd, cfg, args.out, threads, make_plots, profile)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any runtime failure and exit nonzero
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if manifest.failures:
        print(f"completed with failed replications: {manifest.failures}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
