"""Batch front end: parse a run configuration, price, emit result tables.

The configuration is sectioned key-value text (INI syntax).  A run prices
every (knockout, target) combination listed in the contract section with
the requested engines and emits either a human-readable table or one JSON
record per line.  ``--preset table1`` selects the built-in benchmark run:
twelve cases (three knockout types, four targets) on a flat model.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass

from .contract import KnockoutType, TarnContract
from .fd import (
    BoundaryKind,
    FdConfig,
    PinPolicy,
    convergence_order,
    estimate_error,
    fd_price,
)
from .market import (
    ConstantVol,
    LocalVolSurface,
    MarketModel,
    RateCurve,
    TermStructureVol,
)
from .mc import McConfig, mc_price

__all__ = [
    "ConfigError",
    "RunConfig",
    "ResultRecord",
    "parse_config",
    "run",
    "emit",
    "read_records",
    "fingerprint",
    "PRESETS",
    "main",
]

# The benchmark preset measures time in 30-day fixing intervals on a
# 365-day year.  This constant pair is the only place that convention lives.
DAYS_PER_YEAR = 365.0
PRESET_FIXING_DAYS = 30.0


class ConfigError(ValueError):
    """Invalid run configuration; the message names key and constraint."""


@dataclass(frozen=True, eq=False)
class RunConfig:
    strike: float
    beta: int
    targets: tuple[float, ...]
    knockouts: tuple[KnockoutType, ...]
    fixing_times: tuple[float, ...]
    extra_payments: tuple[float, ...] | None
    model: MarketModel
    spot: float
    engines: tuple[str, ...]
    fd: FdConfig
    mc: McConfig
    output_format: str = "human"
    output_path: str | None = None
    refine: bool = False
    convergence: bool = False


@dataclass(frozen=True)
class ResultRecord:
    engine: str
    knockout: str
    target: float
    price: float
    error_metric: float | None
    error_kind: str
    grid: str
    wall_time_s: float
    fingerprint: str
    status: str = "ok"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        return cls(**d)


_KNOWN_KEYS = {
    "contract": {
        "strike", "beta", "knockout", "target", "fixing_times", "extra_payments",
    },
    "model": {
        "domestic_rate", "domestic_rate_times", "domestic_rate_values",
        "foreign_rate", "foreign_rate_times", "foreign_rate_values",
        "volatility", "volatility_times", "volatility_values", "volatility_file",
    },
    "run": {"spot", "engines"},
    "fd": {
        "spot_nodes", "accumulation_nodes", "time_steps", "theta",
        "domain_width_sigmas", "pin_policy", "boundary", "implicit_startup_steps",
    },
    "mc": {
        "paths", "seed", "substeps_per_interval", "control_variate",
        "cv_coefficient",
    },
    "output": {"format", "path"},
}

_PIN_ALIASES = {
    "strike_and_spot": PinPolicy.STRIKE_AND_SPOT,
    "strike_only_then_interpolate": PinPolicy.STRIKE_ONLY_THEN_INTERPOLATE,
    "strike_only": PinPolicy.STRIKE_ONLY_THEN_INTERPOLATE,
}

_BOUNDARY_ALIASES = {
    "zero_gamma": BoundaryKind.ZERO_GAMMA,
    "dirichlet_neumann_by_direction": BoundaryKind.DIRICHLET_NEUMANN_BY_DIRECTION,
    "dirichlet_neumann": BoundaryKind.DIRICHLET_NEUMANN_BY_DIRECTION,
}


def _floats(raw: str, where: str) -> tuple[float, ...]:
    parts = [p for chunk in raw.split(",") for p in chunk.split()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected numbers, got {raw!r}") from exc


def _float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from exc


def _int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from exc


def _bool(raw: str, where: str) -> bool:
    val = raw.strip().lower()
    if val in ("on", "true", "yes", "1"):
        return True
    if val in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"{where}: expected on/off, got {raw!r}")


def _parse_rate_curve(sec, prefix: str) -> RateCurve:
    flat = sec.get(f"{prefix}_rate")
    times = sec.get(f"{prefix}_rate_times")
    values = sec.get(f"{prefix}_rate_values")
    if flat is not None and (times is not None or values is not None):
        raise ConfigError(
            f"model.{prefix}_rate: give either a flat rate or a times/values pair, not both"
        )
    if times is not None or values is not None:
        if times is None or values is None:
            raise ConfigError(
                f"model.{prefix}_rate_times/values: both keys are required together"
            )
        try:
            return RateCurve(
                _floats(times, f"model.{prefix}_rate_times"),
                _floats(values, f"model.{prefix}_rate_values"),
            )
        except ValueError as exc:
            raise ConfigError(f"model.{prefix}_rate: {exc}") from exc
    return RateCurve.flat(_float(flat, f"model.{prefix}_rate") if flat is not None else 0.0)


def _parse_volatility(sec, base_dir: str):
    given = [k for k in ("volatility", "volatility_times", "volatility_file") if k in sec]
    flat = sec.get("volatility")
    times = sec.get("volatility_times")
    values = sec.get("volatility_values")
    path = sec.get("volatility_file")
    chosen = sum(x is not None for x in (flat, times, path))
    if chosen == 0:
        raise ConfigError(
            "model.volatility: a volatility is required (flat value, "
            "times/values pair, or surface file)"
        )
    if chosen > 1:
        raise ConfigError(f"model.volatility: conflicting specifications: {given}")
    try:
        if flat is not None:
            return ConstantVol(_float(flat, "model.volatility"))
        if times is not None:
            if values is None:
                raise ConfigError(
                    "model.volatility_values: required alongside volatility_times"
                )
            return TermStructureVol(
                _floats(times, "model.volatility_times"),
                _floats(values, "model.volatility_values"),
            )
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(full):
            raise ConfigError(f"model.volatility_file: file not found: {full}")
        return LocalVolSurface.from_file(full)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"model.volatility: {exc}") from exc


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    """Parse and fully validate a sectioned key-value configuration."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc

    unknown = []
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            unknown.append(f"[{section}]")
            continue
        bad = sorted(set(parser[section]) - _KNOWN_KEYS[section])
        if bad:
            unknown.append(f"[{section}]: " + ", ".join(bad))
    if unknown:
        raise ConfigError("unknown configuration keys: " + "; ".join(unknown))

    for required in ("contract", "model", "run"):
        if required not in parser:
            raise ConfigError(f"missing required section [{required}]")

    con = parser["contract"]
    for key in ("strike", "target", "knockout", "fixing_times"):
        if key not in con:
            raise ConfigError(f"contract.{key}: required key is missing")
    strike = _float(con["strike"], "contract.strike")
    if strike <= 0.0:
        raise ConfigError("contract.strike: strike must be positive")
    beta = _int(con.get("beta", "1"), "contract.beta")
    if beta not in (1, -1):
        raise ConfigError("contract.beta: beta must be +1 or -1")
    targets = _floats(con["target"], "contract.target")
    if not targets:
        raise ConfigError("contract.target: at least one target is required")
    for u in targets:
        if u <= 0.0:
            raise ConfigError("contract.target: target must be positive")
    try:
        knockouts = tuple(
            KnockoutType.parse(name) for name in con["knockout"].split(",")
        )
    except ValueError as exc:
        raise ConfigError(f"contract.knockout: {exc}") from exc
    fixing_times = _floats(con["fixing_times"], "contract.fixing_times")
    if not fixing_times or fixing_times[0] <= 0.0 or any(
        b <= a for a, b in zip(fixing_times, fixing_times[1:])
    ):
        raise ConfigError(
            "contract.fixing_times: must be strictly increasing and positive"
        )
    extra_payments = None
    if "extra_payments" in con and con["extra_payments"].strip():
        extra_payments = _floats(con["extra_payments"], "contract.extra_payments")
        if len(extra_payments) != len(fixing_times):
            raise ConfigError(
                f"contract.extra_payments: expected {len(fixing_times)} entries "
                f"to match the fixing schedule, got {len(extra_payments)}"
            )

    mod = parser["model"]
    model = MarketModel(
        domestic=_parse_rate_curve(mod, "domestic"),
        foreign=_parse_rate_curve(mod, "foreign"),
        vol=_parse_volatility(mod, base_dir),
    )

    runsec = parser["run"]
    if "spot" not in runsec:
        raise ConfigError("run.spot: required key is missing")
    spot = _float(runsec["spot"], "run.spot")
    if spot <= 0.0:
        raise ConfigError("run.spot: spot must be positive")
    engines = tuple(
        e.strip().lower() for e in runsec.get("engines", "fd,mc").split(",") if e.strip()
    )
    if not engines:
        raise ConfigError("run.engines: at least one engine must be enabled")
    for e in engines:
        if e not in ("fd", "mc"):
            raise ConfigError(f"run.engines: unknown engine {e!r} (use fd, mc)")

    fd_sec = parser["fd"] if "fd" in parser else {}
    try:
        fd_cfg = FdConfig(
            spot_nodes=_int(fd_sec.get("spot_nodes", "500"), "fd.spot_nodes"),
            accumulation_nodes=_int(
                fd_sec.get("accumulation_nodes", "100"), "fd.accumulation_nodes"
            ),
            time_steps=_int(fd_sec.get("time_steps", "500"), "fd.time_steps"),
            theta=_float(fd_sec.get("theta", "0.5"), "fd.theta"),
            domain_width_sigmas=_float(
                fd_sec.get("domain_width_sigmas", "3.5"), "fd.domain_width_sigmas"
            ),
            pin_policy=_parse_enum(
                fd_sec.get("pin_policy", "strike_and_spot"), _PIN_ALIASES, "fd.pin_policy"
            ),
            boundary=_parse_enum(
                fd_sec.get("boundary", "zero_gamma"), _BOUNDARY_ALIASES, "fd.boundary"
            ),
            implicit_startup_steps=_int(
                fd_sec.get("implicit_startup_steps", "0"), "fd.implicit_startup_steps"
            ),
        )
        fd_cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"fd: {exc}") from exc

    mc_sec = parser["mc"] if "mc" in parser else {}
    cv_raw = mc_sec.get("cv_coefficient", "").strip() if mc_sec else ""
    try:
        mc_cfg = McConfig(
            n_paths=_int(mc_sec.get("paths", "200000"), "mc.paths"),
            seed=_int(mc_sec.get("seed", "12345"), "mc.seed"),
            substeps_per_interval=_int(
                mc_sec.get("substeps_per_interval", "1"), "mc.substeps_per_interval"
            ),
            control_variate=_bool(
                mc_sec.get("control_variate", "on"), "mc.control_variate"
            ),
            cv_coefficient=_float(cv_raw, "mc.cv_coefficient") if cv_raw else None,
        )
        mc_cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"mc: {exc}") from exc

    out_sec = parser["output"] if "output" in parser else {}
    output_format = out_sec.get("format", "human").strip().lower()
    if output_format not in ("human", "records"):
        raise ConfigError("output.format: must be 'human' or 'records'")
    output_path = out_sec.get("path") or None

    return RunConfig(
        strike=strike,
        beta=beta,
        targets=targets,
        knockouts=knockouts,
        fixing_times=fixing_times,
        extra_payments=extra_payments,
        model=model,
        spot=spot,
        engines=engines,
        fd=fd_cfg,
        mc=mc_cfg,
        output_format=output_format,
        output_path=output_path,
    )


def _parse_enum(raw: str, aliases: dict, where: str):
    key = raw.strip().lower()
    if key not in aliases:
        raise ConfigError(f"{where}: unknown value {raw!r} (use {', '.join(sorted(set(aliases)))})")
    return aliases[key]


def _vol_payload(vol) -> dict:
    if isinstance(vol, ConstantVol):
        return {"kind": "constant", "sigma": vol.sigma}
    if isinstance(vol, TermStructureVol):
        return {"kind": "term", "times": list(vol.times), "sigmas": list(vol.sigmas)}
    return {
        "kind": "local",
        "time_knots": vol.time_knots.tolist(),
        "spot_knots": vol.spot_knots.tolist(),
        "values": vol.values.tolist(),
    }


def fingerprint(config: RunConfig) -> str:
    """Short hash over every pricing-relevant field of the configuration."""
    payload = {
        "strike": config.strike,
        "beta": config.beta,
        "targets": list(config.targets),
        "knockouts": [k.value for k in config.knockouts],
        "fixing_times": list(config.fixing_times),
        "extra_payments": list(config.extra_payments) if config.extra_payments else None,
        "domestic": {"times": list(config.model.domestic.times),
                     "rates": list(config.model.domestic.rates)},
        "foreign": {"times": list(config.model.foreign.times),
                    "rates": list(config.model.foreign.rates)},
        "vol": _vol_payload(config.model.vol),
        "spot": config.spot,
        "engines": list(config.engines),
        "fd": {
            "spot_nodes": config.fd.spot_nodes,
            "accumulation_nodes": config.fd.accumulation_nodes,
            "time_steps": config.fd.time_steps,
            "theta": config.fd.theta,
            "domain_width_sigmas": config.fd.domain_width_sigmas,
            "pin_policy": config.fd.pin_policy.value,
            "boundary": config.fd.boundary.value,
            "implicit_startup_steps": config.fd.implicit_startup_steps,
        },
        "mc": {
            "n_paths": config.mc.n_paths,
            "seed": config.mc.seed,
            "substeps_per_interval": config.mc.substeps_per_interval,
            "control_variate": config.mc.control_variate,
            "cv_coefficient": config.mc.cv_coefficient,
        },
    }
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()
    return digest[:12]


def _grid_string(fd_cfg: FdConfig) -> str:
    return f"{fd_cfg.spot_nodes}x{fd_cfg.accumulation_nodes}x{fd_cfg.time_steps}"


def run(config: RunConfig) -> list[ResultRecord]:
    """Price every (knockout, target) case with the enabled engines.

    Engine failures are captured per record (status carries the message)
    and do not stop the remaining cases.
    """
    tag = fingerprint(config)
    records: list[ResultRecord] = []
    for knockout in config.knockouts:
        for target in config.targets:
            contract = TarnContract(
                strike=config.strike,
                target=target,
                beta=config.beta,
                fixing_times=config.fixing_times,
                knockout=knockout,
                extra_payments=config.extra_payments,
            )
            fd_value = None
            mc_value = None
            if "fd" in config.engines:
                fd_records = _run_fd_case(config, contract, knockout, target, tag)
                records.extend(fd_records)
                ok = [r for r in fd_records if r.engine == "fd" and r.status == "ok"]
                if ok:
                    fd_value = ok[0].price
            if "mc" in config.engines:
                rec = _run_mc_case(config, contract, knockout, target, tag)
                records.append(rec)
                if rec.status.startswith("ok"):
                    mc_value = rec.price
            if fd_value is not None and mc_value is not None and mc_value != 0.0:
                records.append(
                    ResultRecord(
                        engine="diff",
                        knockout=knockout.value,
                        target=target,
                        price=fd_value - mc_value,
                        error_metric=abs(fd_value - mc_value) / abs(mc_value),
                        error_kind="relative_difference",
                        grid="",
                        wall_time_s=0.0,
                        fingerprint=tag,
                    )
                )
    return records


def _run_fd_case(config, contract, knockout, target, tag) -> list[ResultRecord]:
    common = dict(knockout=knockout.value, target=target, fingerprint=tag)
    try:
        if config.convergence:
            study = convergence_order(contract, config.model, config.fd, config.spot)
            recs = [
                ResultRecord(
                    engine="fd", price=r.price, error_metric=None, error_kind="none",
                    grid="x".join(str(g) for g in r.grid_shape),
                    wall_time_s=r.wall_time, **common,
                )
                for r in study.results
            ]
            recs.append(
                ResultRecord(
                    engine="fd_order", price=study.order, error_metric=None,
                    error_kind="none", grid="", wall_time_s=0.0, **common,
                )
            )
            return recs
        if config.refine:
            est = estimate_error(contract, config.model, config.fd, config.spot)
            return [
                ResultRecord(
                    engine="fd", price=est.coarse.price,
                    error_metric=est.relative_error,
                    error_kind="refined_relative_error",
                    grid=_grid_string(config.fd),
                    wall_time_s=est.coarse.wall_time + est.refined.wall_time,
                    **common,
                )
            ]
        res = fd_price(contract, config.model, config.fd, config.spot)
        return [
            ResultRecord(
                engine="fd", price=res.price, error_metric=None, error_kind="none",
                grid=_grid_string(config.fd), wall_time_s=res.wall_time, **common,
            )
        ]
    except Exception as exc:  # capture per-record, keep the batch going
        return [
            ResultRecord(
                engine="fd", price=float("nan"), error_metric=None,
                error_kind="none", grid=_grid_string(config.fd), wall_time_s=0.0,
                status=f"error: {exc}", **common,
            )
        ]


def _run_mc_case(config, contract, knockout, target, tag) -> ResultRecord:
    try:
        res = mc_price(contract, config.model, config.mc, config.spot)
        return ResultRecord(
            engine="mc", knockout=knockout.value, target=target, price=res.price,
            error_metric=res.stderr, error_kind="stderr",
            grid=f"{config.mc.n_paths}paths", wall_time_s=res.wall_time,
            fingerprint=tag,
            status="ok" if not res.cv_downgraded else "ok (control variate disabled for local volatility)",
        )
    except Exception as exc:
        return ResultRecord(
            engine="mc", knockout=knockout.value, target=target,
            price=float("nan"), error_metric=None, error_kind="none",
            grid=f"{config.mc.n_paths}paths", wall_time_s=0.0, fingerprint=tag,
            status=f"error: {exc}",
        )


def emit(records: list[ResultRecord], output_format: str,
         destination: str | None = None) -> str:
    """Serialize records; write to ``destination`` when given.

    ``records`` mode is one self-describing JSON object per line and round
    trips through :func:`read_records`.
    """
    if not records:
        raise ValueError("no records to emit")
    if output_format == "records":
        text = "\n".join(
            json.dumps(r.to_dict(), sort_keys=True) for r in records
        ) + "\n"
    elif output_format == "human":
        text = _human_table(records)
    else:
        raise ValueError(f"unknown output format {output_format!r}")
    if destination:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_records(text: str) -> list[ResultRecord]:
    """Inverse of records-mode :func:`emit`."""
    return [
        ResultRecord.from_dict(json.loads(line))
        for line in text.splitlines()
        if line.strip()
    ]


def _human_table(records: list[ResultRecord]) -> str:
    by_case: dict[tuple[str, float], dict[str, ResultRecord]] = {}
    group_order: list[str] = []
    extras: list[ResultRecord] = []
    for rec in records:
        if rec.engine not in ("fd", "mc", "diff"):
            extras.append(rec)
            continue
        if rec.engine == "fd" and (rec.knockout, rec.target) in by_case and \
                "fd" in by_case[(rec.knockout, rec.target)]:
            extras.append(rec)  # additional grids from a convergence study
            continue
        if rec.knockout not in group_order:
            group_order.append(rec.knockout)
        by_case.setdefault((rec.knockout, rec.target), {})[rec.engine] = rec
    has_mc = any("mc" in v for v in by_case.values())
    has_fd = any("fd" in v for v in by_case.values())
    has_diff = any("diff" in v for v in by_case.values())
    has_fd_err = any(
        v["fd"].error_metric is not None for v in by_case.values() if "fd" in v
    )

    header = ["target"]
    if has_mc:
        header += ["MC"]
    if has_fd:
        header += ["FD"]
    if has_diff:
        header += ["diff %"]
    if has_mc:
        header += ["stderr MC %", "MC sec"]
    if has_fd:
        if has_fd_err:
            header += ["err FD %"]
        header += ["FD sec"]
    widths = [10] * len(header)

    def fmt_row(cells):
        return "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))

    out = io.StringIO()
    for group in group_order:
        out.write(f"== {group} ==\n")
        out.write(fmt_row(header) + "\n")
        for (knockout, target), case in by_case.items():
            if knockout != group:
                continue
            mc = case.get("mc")
            fd = case.get("fd")
            mc_ok = mc is not None and mc.status.startswith("ok")
            fd_ok = fd is not None and fd.status == "ok"
            cells = [f"{target:g}"]
            if has_mc:
                cells += [f"{mc.price:.4f}" if mc_ok else
                          ("failed" if mc else "-")]
            if has_fd:
                cells += [f"{fd.price:.4f}" if fd_ok else
                          ("failed" if fd else "-")]
            if has_diff:
                diff = case.get("diff")
                cells += [f"{100.0 * diff.error_metric:.4f}" if diff else "-"]
            if has_mc:
                cells += [f"{100.0 * mc.error_metric / abs(mc.price):.4f}"
                          if mc_ok and mc.error_metric and mc.price else "-",
                          f"{mc.wall_time_s:.2f}" if mc_ok else "-"]
            if has_fd:
                if has_fd_err:
                    cells += [f"{100.0 * fd.error_metric:.4f}"
                              if fd_ok and fd.error_metric is not None else "-"]
                cells += [f"{fd.wall_time_s:.2f}" if fd_ok else "-"]
            out.write(fmt_row(cells) + "\n")
        out.write("\n")
    for rec in extras:
        out.write(
            f"{rec.engine} {rec.knockout} target={rec.target:g} "
            f"grid={rec.grid or '-'} value={rec.price:.6f} [{rec.status}]\n"
        )
    return out.getvalue()


def preset_table1() -> RunConfig:
    """Benchmark run: 12 cases on a flat model, both engines."""
    times = tuple(k * PRESET_FIXING_DAYS / DAYS_PER_YEAR for k in range(1, 21))
    return RunConfig(
        strike=1.0,
        beta=1,
        targets=(0.3, 0.5, 0.7, 0.9),
        knockouts=(KnockoutType.NO_GAIN, KnockoutType.PART_GAIN,
                   KnockoutType.FULL_GAIN),
        fixing_times=times,
        extra_payments=None,
        model=MarketModel(
            domestic=RateCurve.flat(0.0),
            foreign=RateCurve.flat(0.0),
            vol=ConstantVol(0.2),
        ),
        spot=1.05,
        engines=("fd", "mc"),
        fd=FdConfig(),
        mc=McConfig(),
    )


PRESETS = {"table1": preset_table1}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="price",
        description="Price target accumulation notes from a run configuration.",
    )
    parser.add_argument("config", nargs="?", help="run configuration file")
    parser.add_argument("--preset", choices=sorted(PRESETS),
                        help="use a built-in run instead of a config file")
    parser.add_argument("--engines", help="comma list overriding the engines to run")
    parser.add_argument("--refine", action="store_true",
                        help="attach a doubled-grid relative error to FD results")
    parser.add_argument("--convergence", action="store_true",
                        help="three-grid convergence study per case")
    parser.add_argument("--output", help="write results to this path")
    parser.add_argument("--format", choices=("human", "records"), dest="fmt",
                        help="output format override")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed override")
    args = parser.parse_args(argv)

    try:
        if args.preset and args.config:
            raise ConfigError("give either a config file or --preset, not both")
        if args.preset:
            config = PRESETS[args.preset]()
        elif args.config:
            try:
                with open(args.config, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            config = parse_config(text, base_dir=os.path.dirname(
                os.path.abspath(args.config)))
        else:
            raise ConfigError("a config file or --preset is required")

        if args.engines:
            engines = tuple(e.strip().lower() for e in args.engines.split(",") if e.strip())
            for e in engines:
                if e not in ("fd", "mc"):
                    raise ConfigError(f"--engines: unknown engine {e!r}")
            if not engines:
                raise ConfigError("--engines: at least one engine is required")
            config = dataclasses.replace(config, engines=engines)
        if args.seed is not None:
            config = dataclasses.replace(
                config, mc=dataclasses.replace(config.mc, seed=args.seed))
        if args.fmt:
            config = dataclasses.replace(config, output_format=args.fmt)
        if args.output:
            config = dataclasses.replace(config, output_path=args.output)
        if args.refine:
            config = dataclasses.replace(config, refine=True)
        if args.convergence:
            config = dataclasses.replace(config, convergence=True)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    records = run(config)
    text = emit(records, config.output_format, config.output_path)
    if not config.output_path:
        sys.stdout.write(text)
    failed = any(r.status.startswith("error") for r in records)
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
