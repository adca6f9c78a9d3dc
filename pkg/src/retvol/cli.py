"""Command-line pipeline.

Every command writes its artifacts plus a ``manifest.json`` into ``--out``.
The manifest records the full run configuration, input and output hashes and
library versions; ``retvol replay MANIFEST`` reruns it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__, impact, qgauss, synth, tails
from .bars import AggregationScheme, BarSeries, aggregate, pool
from .errors import FitFailureError, ParameterError, RetvolError
from .marketdata import load_calendar, read_trades, serialize_trades, validate

log = logging.getLogger("retvol")

COMMANDS = ("ingest", "bars", "tails", "ratio", "impact", "qfit", "synth", "report")
PRESET_DT = (1.0, 15.0, 120.0)
PRESET_NT = (1, 15, 30)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4


@dataclass
class RunConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    out: str = "out"
    calendar: str | None = None
    include_opening_auction: bool = True
    dt_min: list[float] = field(default_factory=list)
    n_trades: list[int] = field(default_factory=list)
    tail_fraction: float = tails.DEFAULT_TAIL_FRACTION
    hill_k: int | None = None
    local_bins: int = 100
    local_window: int = 5
    local_emit: int = 25
    breakpoints: list[float] = field(default_factory=lambda: list(impact.DEFAULT_BREAKPOINTS))
    normalized_breakpoints: bool = False
    bins: int = impact.DEFAULT_N_BINS
    min_bin_count: int = impact.DEFAULT_MIN_BIN_COUNT
    v_min: float = impact.DEFAULT_V_MIN
    beta: list[float] = field(default_factory=lambda: list(impact.DEFAULT_BETAS))
    pool: bool = True
    symmetric: bool = False
    seed: int = 0
    # synth
    law: str = "pareto"
    alpha: float = 2.0
    x_min: float = 1.0
    q: float = 1.5
    sigma: float = 100.0
    impact_beta: float = 0.5
    n: int = 100_000
    noise_sigma: float = 0.0
    dt_ms: int = 1000
    return_scale: float = 1e-3
    symbol: str = "SYNTH"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}", module="cli")

    def schemes(self) -> list[AggregationScheme]:
        dts, nts = self.dt_min, self.n_trades
        if not dts and not nts:
            if self.command == "report":
                dts, nts = PRESET_DT, PRESET_NT
            else:
                dts = [1.0]
        return [AggregationScheme.clock(d) for d in dts] + [AggregationScheme.trades(n) for n in nts]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Writer:
    """Writes artifacts under one output directory and remembers them for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.paths: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> Path:
        path = self.out / name
        path.write_text(content, encoding="utf-8", newline="\n")
        self.paths.append(path)
        return path

    def json(self, name: str, obj) -> Path:
        return self.text(name, dumps(obj))


def _load(config: RunConfig):
    if not config.inputs:
        raise ParameterError("no input files given", module="cli")
    sessions = load_calendar(config.calendar) if config.calendar else None
    return [
        read_trades(p, sessions=sessions, include_opening_auction=config.include_opening_auction)
        for p in config.inputs
    ]


def _bars(config: RunConfig, series_list, scheme: AggregationScheme) -> list[BarSeries]:
    return [aggregate(s, scheme) for s in series_list]


def _catch(fn, *args, **kwargs):
    """Run one analysis stage; a module error becomes an ``{"error": ...}`` record."""
    try:
        return fn(*args, **kwargs)
    except RetvolError as exc:
        return {"error": str(exc)}


# stages -------------------------------------------------------------------


def stage_tails(config: RunConfig, w: Writer, bars_list: list[BarSeries], scheme: AggregationScheme) -> dict:
    rows = []
    targets = list(bars_list)
    if config.pool and len(bars_list) > 1:
        targets.append(pool(bars_list))
    fits = {}
    for b in targets:
        stem = f"{b.symbol}_{scheme.label}"
        absr = np.abs(b.returns)
        c_r = tails.ccdf(absr)
        c_v = tails.ccdf(b.volumes)
        w.text(f"{stem}_ccdf_r.csv", c_r.to_csv())
        w.text(f"{stem}_ccdf_v.csv", c_v.to_csv())
        row = tails.fit_pair(b.symbol, absr, b.volumes, config.tail_fraction, config.hill_k)
        if b.symbol != "POOLED":
            rows.append(row)
        xi_ls = tails.tail_ratio(row.ls_r, row.ls_v)
        xi_h = tails.tail_ratio(row.hill_r, row.hill_v)
        fits[b.symbol] = {
            "T": b.k_count,
            "ls_r": row.ls_r.to_dict(),
            "ls_v": row.ls_v.to_dict(),
            "hill_r": row.hill_r.to_dict(),
            "hill_v": row.hill_v.to_dict(),
            "xi_ls": xi_ls[0],
            "xi_ls_err": xi_ls[1],
            "xi_hill": xi_h[0],
            "xi_hill_err": xi_h[1],
        }
        slopes = _catch(_local_slopes, config, c_r, c_v)
        if isinstance(slopes, dict):
            fits[b.symbol]["local_slopes"] = slopes
        else:
            w.text(f"{stem}_local_slopes.csv", slopes)
    summary = tails.summarize(rows) if len(rows) >= 2 else None
    w.text(f"table1_{scheme.label}.csv", tails.table_csv(rows, summary))
    return {"scheme": scheme.to_dict(), "rows": rows, "summary": summary, "fits": fits}


def _local_slopes(config: RunConfig, c_r: tails.Ccdf, c_v: tails.Ccdf) -> str:
    xr, sr = tails.local_slopes(c_r, config.local_bins, config.local_window, config.local_emit)
    xv, sv = tails.local_slopes(c_v, config.local_bins, config.local_window, config.local_emit)
    lines = ["bin,x_r,slope_r,x_v,slope_v,xi_local"]
    for i, vals in enumerate(zip(xr.tolist(), sr.tolist(), xv.tolist(), sv.tolist(), tails.local_ratio(sr, sv).tolist())):
        lines.append(f"{i}," + ",".join(repr(v) for v in vals))
    return "\n".join(lines) + "\n"


def _ratio_record(fits: dict) -> dict:
    rec = {}
    for sym, f in fits.items():
        r = {k: f[k] for k in ("xi_ls", "xi_ls_err", "xi_hill", "xi_hill_err")}
        for m in ("ls", "hill"):
            xi = f[f"xi_{m}"]
            r[f"implied_beta_{m}"] = impact.implied_beta(xi) if xi > 1 else None
        rec[sym] = r
    return rec


def _summary_dict(summary) -> dict | None:
    if summary is None:
        return None
    return {"mean": summary.mean, "std": summary.std, "n_rows": summary.n_rows}


def stage_impact(config: RunConfig, w: Writer, bars_list: list[BarSeries], scheme: AggregationScheme) -> dict:
    targets = [pool(bars_list)] if config.pool and len(bars_list) > 1 else list(bars_list)
    result = {}
    for b in targets:
        stem = f"{b.symbol}_{scheme.label}"
        rec: dict = {}
        sc = impact.scatter(b, raw_units=not config.normalized_breakpoints)
        w.text(f"{stem}_scatter.csv", "v,abs_r\n" + "".join(
            f"{v!r},{r!r}\n" for v, r in zip(sc.volumes.tolist(), sc.abs_returns.tolist())))
        rec["quartiles"] = list(sc.quartiles)

        rep = impact.conditional_tails(b, config.breakpoints, raw_units=not config.normalized_breakpoints,
                                       tail_fraction=config.tail_fraction)
        rec["conditional_tails"] = rep.to_dict()
        for j, band in enumerate(rep.bands):
            if band.ccdf is not None:
                w.text(f"{stem}_band{j}_ccdf_r.csv", band.ccdf.to_csv())

        curve = _catch(impact.conditional_expectation, b, config.bins, config.min_bin_count)
        if isinstance(curve, dict):
            rec["expectation"] = curve
        else:
            w.text(f"{stem}_e_r2.csv", curve.to_csv())
            lin = _catch(impact.fit_linear, curve, config.v_min)
            rec["expectation"] = {"curve": curve.to_dict(), "linear_fit": lin if isinstance(lin, dict) else lin.to_dict()}

        surrogates = {}
        positive = b.volumes[b.volumes > 0]
        for beta in config.beta:
            key = f"{beta:g}"
            try:
                curve_s = impact.expectation_curve(
                    positive, impact.surrogate_returns(positive, beta), config.bins, config.min_bin_count, scheme)
            except RetvolError as exc:
                surrogates[key] = {"error": str(exc)}
                continue
            w.text(f"{stem}_surrogate_beta{key}_e_r2.csv", curve_s.to_csv())
            lin = _catch(impact.fit_linear, curve_s, config.v_min)
            surrogates[key] = {"curve": curve_s.to_dict(), "linear_fit": lin if isinstance(lin, dict) else lin.to_dict()}
        rec["surrogates"] = surrogates
        result[b.symbol] = rec
    return result


def stage_qfit(config: RunConfig, w: Writer, bars_list: list[BarSeries], scheme: AggregationScheme) -> dict:
    result = {}
    for b in bars_list:
        c = tails.ccdf(np.abs(b.returns) if config.symmetric else b.volumes)
        try:
            fit = qgauss.fit_ccdf(c, symmetric_about_zero=config.symmetric)
        except FitFailureError as exc:
            fit = exc.best
            if fit is None:
                result[b.symbol] = {"error": str(exc)}
                continue
        rep = fit.to_dict()
        rep["hill_alpha"] = _catch(lambda: tails.hill(
            np.abs(b.returns) if config.symmetric else b.volumes, config.hill_k).alpha)
        w.json(f"{b.symbol}_{scheme.label}_qfit.json", rep)
        model = (2.0 if config.symmetric else 1.0) * qgauss.sf_closed(c.xs, fit.params.q, fit.params.mu_q, fit.params.sigma_q)
        w.text(f"{b.symbol}_{scheme.label}_qfit_ccdf.csv", "x,p_emp,p_fit\n" + "".join(
            f"{x!r},{p!r},{m!r}\n" for x, p, m in zip(c.xs.tolist(), c.ps.tolist(), model.tolist())))
        result[b.symbol] = rep
    return result


# commands -----------------------------------------------------------------


def cmd_synth(config: RunConfig, w: Writer) -> dict:
    if config.law == "pareto":
        law = synth.ParetoLaw(config.alpha, config.x_min)
    elif config.law == "qgauss":
        law = synth.QGaussianAbsLaw(config.q, config.sigma)
    else:
        raise ParameterError(f"unknown volume law {config.law!r}", module="synth")
    spec = synth.MarketSpec(
        n_trades=config.n, volume_law=law, impact_beta=config.impact_beta, noise_sigma=config.noise_sigma,
        dt_ms=config.dt_ms, seed=config.seed, return_scale=config.return_scale, symbol=config.symbol,
    )
    market = synth.simulate(spec)
    path = w.text(f"{config.symbol}.csv", serialize_trades(market.series))
    return {"spec": spec.to_dict(), "impact_c": market.impact_c, "trades": str(path.name)}


def cmd_ingest(config: RunConfig, w: Writer) -> dict:
    out = {}
    for s in _load(config):
        rep = validate(s).to_dict()
        w.json(f"{s.symbol}_validation.json", rep)
        out[s.symbol] = rep
    return out


def cmd_bars(config: RunConfig, w: Writer) -> dict:
    series_list = _load(config)
    out = {}
    for scheme in config.schemes():
        for b in _bars(config, series_list, scheme):
            w.text(f"{b.symbol}_{scheme.label}_bars.csv", b.to_csv())
            w.text(f"{b.symbol}_{scheme.label}_bars.json", b.to_json() + "\n")
            out[f"{b.symbol}_{scheme.label}"] = b.k_count
    return out


def _tails_like(config: RunConfig, w: Writer, with_ratio: bool) -> dict:
    series_list = _load(config)
    out = {}
    for scheme in config.schemes():
        res = stage_tails(config, w, _bars(config, series_list, scheme), scheme)
        entry = {"fits": res["fits"], "summary": _summary_dict(res["summary"])}
        if with_ratio:
            entry["ratios"] = _ratio_record(res["fits"])
            w.json(f"ratio_{scheme.label}.json", {"ratios": entry["ratios"], "summary": entry["summary"]})
        else:
            w.json(f"tails_{scheme.label}.json", entry)
        out[scheme.label] = entry
    return out


def cmd_tails(config: RunConfig, w: Writer) -> dict:
    return _tails_like(config, w, with_ratio=False)


def cmd_ratio(config: RunConfig, w: Writer) -> dict:
    return _tails_like(config, w, with_ratio=True)


def cmd_impact(config: RunConfig, w: Writer) -> dict:
    series_list = _load(config)
    out = {}
    for scheme in config.schemes():
        res = stage_impact(config, w, _bars(config, series_list, scheme), scheme)
        w.json(f"impact_{scheme.label}.json", res)
        out[scheme.label] = res
    return out


def cmd_qfit(config: RunConfig, w: Writer) -> dict:
    series_list = _load(config)
    out = {}
    for scheme in config.schemes():
        out[scheme.label] = stage_qfit(config, w, _bars(config, series_list, scheme), scheme)
    return out


def cmd_report(config: RunConfig, w: Writer) -> dict:
    series_list = _load(config)
    out = {"validation": {s.symbol: validate(s).to_dict() for s in series_list}}
    for scheme in config.schemes():
        bl = _catch(_bars, config, series_list, scheme)
        if isinstance(bl, dict):
            out[scheme.label] = bl
            continue
        t = _catch(stage_tails, config, w, bl, scheme)
        entry: dict = {}
        if "error" in t:
            entry["tails"] = t
        else:
            entry["tails"] = {"fits": t["fits"], "summary": _summary_dict(t["summary"]),
                              "ratios": _ratio_record(t["fits"])}
        entry["impact"] = _catch(stage_impact, config, w, bl, scheme)
        entry["qfit"] = _catch(stage_qfit, config, w, bl, scheme)
        out[scheme.label] = entry
    w.json("report.json", out)
    return out


HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "bars": cmd_bars,
    "tails": cmd_tails,
    "ratio": cmd_ratio,
    "impact": cmd_impact,
    "qfit": cmd_qfit,
    "report": cmd_report,
}


def versions() -> dict:
    return {
        "retvol": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(config: RunConfig, w: Writer, result: dict) -> Path:
    out = w.out.resolve()

    def rel(p: Path) -> str:
        return str(p.resolve().relative_to(out))

    cfg = config.to_dict()
    # the output location is not part of what gets reproduced
    del cfg["out"]
    manifest = {
        "command": config.command,
        "config": cfg,
        "seed": config.seed,
        "inputs": [{"path": p, "sha256": sha256(Path(p))} for p in config.inputs]
        + ([{"path": config.calendar, "sha256": sha256(Path(config.calendar))}] if config.calendar else []),
        "outputs": [{"path": rel(p), "sha256": sha256(p)} for p in sorted(w.paths)],
        "versions": versions(),
    }
    path = w.out / "manifest.json"
    path.write_text(dumps(manifest), encoding="utf-8", newline="\n")
    return path


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        w = Writer(Path(config.out))
        result = HANDLERS[config.command](config, w)
        write_manifest(config, w, result)
    except RetvolError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def replay(manifest_path: str | Path, out: str | Path | None = None) -> int:
    """Rerun the configuration stored in a manifest (into its own directory by default)."""
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    cfg = RunConfig(**data["config"], out=str(out if out is not None else manifest_path.parent))
    return run(cfg)


# argument parsing ---------------------------------------------------------


def _floats(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retvol", description="Return/volume tail and price-impact analysis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("inputs", nargs="+", help="tick-CSV files (symbol = file stem)")
    data.add_argument("--calendar", help="session calendar JSON")
    data.add_argument("--exclude-opening-auction", dest="include_opening_auction", action="store_false")
    data.add_argument("--dt-min", type=float, action="append", default=[], help="clock interval in minutes (repeatable)")
    data.add_argument("--n-trades", type=int, action="append", default=[], help="trades per interval (repeatable)")
    data.add_argument("--tail-fraction", type=float, default=tails.DEFAULT_TAIL_FRACTION)
    data.add_argument("--hill-k", type=int, default=None)
    data.add_argument("--local-bins", type=int, default=100)
    data.add_argument("--local-window", type=int, default=5)
    data.add_argument("--local-emit", type=int, default=25)
    data.add_argument("--breakpoints", type=_floats, default=list(impact.DEFAULT_BREAKPOINTS))
    data.add_argument("--normalized-breakpoints", action="store_true",
                      help="interpret --breakpoints in mean-normalized volume units")
    data.add_argument("--bins", type=int, default=impact.DEFAULT_N_BINS)
    data.add_argument("--min-bin-count", type=int, default=impact.DEFAULT_MIN_BIN_COUNT)
    data.add_argument("--v-min", type=float, default=impact.DEFAULT_V_MIN)
    data.add_argument("--beta", type=float, action="append", default=None, help="surrogate impact exponent (repeatable)")
    grp = data.add_mutually_exclusive_group()
    grp.add_argument("--pool", dest="pool", action="store_true", default=True)
    grp.add_argument("--per-symbol", dest="pool", action="store_false")
    data.add_argument("--symmetric", action="store_true", help="qfit: fit |r| with mu pinned at 0 instead of volumes")

    for name in ("ingest", "bars", "tails", "ratio", "impact", "qfit", "report"):
        sub.add_parser(name, parents=[common, data])

    sp = sub.add_parser("synth", parents=[common])
    sp.add_argument("--law", choices=["pareto", "qgauss"], default="pareto")
    sp.add_argument("--alpha", type=float, default=2.0)
    sp.add_argument("--x-min", type=float, default=1.0)
    sp.add_argument("--q", type=float, default=1.5)
    sp.add_argument("--sigma", type=float, default=100.0)
    sp.add_argument("--beta", dest="impact_beta", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--noise-sigma", type=float, default=0.0)
    sp.add_argument("--dt-ms", type=int, default=1000)
    sp.add_argument("--return-scale", type=float, default=1e-3)
    sp.add_argument("--symbol", default="SYNTH")

    rp = sub.add_parser("replay")
    rp.add_argument("manifest")
    rp.add_argument("--out", default=None)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    d.pop("verbose", None)
    if d.get("beta") is None and ns.command != "synth":
        d["beta"] = list(impact.DEFAULT_BETAS)
    # absolute paths keep the manifest replayable from any working directory
    if d.get("inputs"):
        d["inputs"] = [str(Path(p).resolve()) for p in d["inputs"]]
    if d.get("calendar"):
        d["calendar"] = str(Path(d["calendar"]).resolve())
    names = {f.name for f in dataclasses.fields(RunConfig)}
    return RunConfig(**{k: v for k, v in d.items() if k in names})


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if ns.command == "replay":
        try:
            return replay(ns.manifest, ns.out)
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            print(f"error [cli]: cannot replay {ns.manifest}: {exc}", file=sys.stderr)
            return EXIT_IO
    try:
        config = config_from_args(ns)
    except RetvolError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
