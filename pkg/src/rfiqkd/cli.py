"""Command-line front end.

Subcommands: ``skr``, ``verify``, ``sweep``, ``optimize``, ``simulate``.
Exit status is 0 on success, 1 when verification fails or the link is
infeasible, and 2 for unreadable or invalid input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
from pathlib import Path

import numpy as np

from .finitekey import EpsilonBudget
from .mcoracle import SimConfig, simulate_session
from .optimizer import GAConfig, InfeasibleLinkError, SearchSpace, optimize
from .records import (
    ExperimentRecord,
    RecordError,
    _build,
    channel_from_dict,
    channel_to_dict,
    load_dataset,
    load_record,
    protocol_from_dict,
    read_json,
    write_json,
)
from .security import DEFAULT_F, analyze
from .statmodel import ChannelParams, SessionParams, expected_tallies

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
SWEEP_COLUMNS = ("loss_db", "mu", "nu", "p_mu", "p_z", "p_x", "skr_bps")

# absolute tolerances for fractions, relative for counts and rates
VERIFY_TOLERANCES = {
    "E_ZZ": ("abs", 1e-4),
    "C": ("abs", 0.03),
    "e_zz_1u": ("abs", 1.5e-3),
    "s1_lower": ("rel", 0.02),
    "skr_bits_per_second": ("rel", 0.10),
}


def _fmt(x) -> str:
    return format(float(x), ".10g")


def _budget(args) -> EpsilonBudget:
    d = EpsilonBudget()
    return EpsilonBudget(
        eps_sec=args.eps_sec if args.eps_sec is not None else d.eps_sec,
        eps_cor=args.eps_cor if args.eps_cor is not None else d.eps_cor,
        eps_1=args.epsilon1 if args.epsilon1 is not None else d.eps_1,
        eps_2=args.epsilon2 if args.epsilon2 is not None else d.eps_2,
    )


def _channel(args) -> ChannelParams:
    base = channel_from_dict(read_json(args.channel)) if args.channel else ChannelParams()
    return base.with_loss(args.loss) if getattr(args, "loss", None) is not None else base


def _session(args, default: SessionParams | None = None) -> SessionParams:
    d = default or SessionParams()
    return SessionParams(
        n_tot=args.n_tot if args.n_tot is not None else d.n_tot,
        rep_rate_hz=args.rep_rate if args.rep_rate is not None else d.rep_rate_hz,
    )


def _report(record: ExperimentRecord, args) -> dict:
    sess = _session(args, record.session)
    res = analyze(record.tallies, record.protocol, sess, _budget(args), args.f)
    return {
        "fiber_km": record.fiber_km,
        "loss_db": record.loss_db,
        "E_ZZ": float(res.e_zz),
        "C": float(res.c_value),
        "e_zz_1u": float(res.e_zz_1u),
        "s0_lower": float(res.s0_lower),
        "s1_lower": float(res.s1_lower),
        "u": float(res.u_value),
        "v": float(res.v_value),
        "i_e_upper": float(res.i_e_upper),
        "skr_per_pulse": float(res.skr_per_pulse),
        "skr_bits_per_second": float(res.skr_bits_per_second),
    }


def cmd_skr(args) -> int:
    report = _report(load_record(args.input), args)
    for key, value in report.items():
        print(f"{key}: {value if value is None else _fmt(value)}")
    if args.output:
        write_json(args.output, report)
    return EXIT_OK


def _check(name: str, computed: float, published: float) -> bool:
    kind, tol = VERIFY_TOLERANCES[name]
    if kind == "abs":
        return abs(computed - published) <= tol + 1e-12
    return abs(computed - published) <= tol * abs(published)


def cmd_verify(args) -> int:
    records = load_dataset(args.input)
    rows, all_ok = [], True
    for rec in records:
        report = _report(rec, args)
        row = {"loss_db": rec.loss_db}
        ok = True
        for name in VERIFY_TOLERANCES:
            if name not in rec.published:
                continue
            passed = _check(name, report[name], rec.published[name])
            row[name] = (report[name], rec.published[name], passed)
            ok &= passed
        all_ok &= ok
        label = f"{rec.fiber_km:g} km" if rec.fiber_km is not None else f"{rec.loss_db:g} dB"
        cells = "  ".join(
            f"{name}={_fmt(c)} (ref {_fmt(p)}) {'ok' if good else 'FAIL'}" for name, (c, p, good) in
            ((k, v) for k, v in row.items() if k != "loss_db")
        )
        print(f"{label:>8}  {'PASS' if ok else 'FAIL'}  {cells}")
        rows.append({"label": label, "pass": ok, **{k: v for k, v in row.items()}})
    if args.output:
        write_json(args.output, {"pass": all_ok, "rows": [
            {"label": r["label"], "pass": r["pass"], "loss_db": r["loss_db"],
             **{k: {"computed": v[0], "published": v[1], "pass": v[2]}
                for k, v in r.items() if k in VERIFY_TOLERANCES}}
            for r in rows
        ]})
    return EXIT_OK if all_ok else EXIT_FAIL


def _loss_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    if hi < lo:
        raise ValueError(f"empty loss range [{lo}, {hi}]")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 10)


def sweep_rows(ch: ChannelParams, sess: SessionParams, losses, eb: EpsilonBudget, f: float, *,
               optimized: bool = False, dataset=None, cfg: GAConfig = GAConfig(),
               space: SearchSpace = SearchSpace()) -> list[dict]:
    """SKR curve over ``losses``.

    Fixed mode uses the parameters of the dataset record nearest in loss.
    Optimized mode runs the GA at every point, walking from high to low loss
    and seeding each run with the previous optimum.
    """
    records = load_dataset(dataset)
    rows = {}
    previous = None
    for loss in sorted(losses, reverse=optimized):
        point = ch.with_loss(float(loss))
        nearest = min(records, key=lambda r: abs(r.loss_db - loss))
        if optimized:
            seeds = [nearest.protocol] + ([previous] if previous is not None else [])
            try:
                pp, res = optimize(point, sess, eb, f, space, cfg, initial=seeds)
                rate, previous = float(res.skr_bits_per_second), pp
            except InfeasibleLinkError:
                pp, rate = nearest.protocol, 0.0
        else:
            pp = nearest.protocol
            with np.errstate(all="ignore"):
                res = analyze(expected_tallies(point, pp, sess), pp, sess, eb, f, strict=False)
            rate = float(res.skr_bits_per_second)
        rows[float(loss)] = {"loss_db": float(loss), "mu": pp.mu, "nu": pp.nu, "p_mu": pp.p_mu,
                             "p_z": pp.p_z, "p_x": pp.p_x, "skr_bps": rate}
    return [rows[k] for k in sorted(rows)]


def write_sweep_csv(rows: list[dict], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])


def cmd_sweep(args) -> int:
    losses = np.union1d(_loss_grid(args.loss_min, args.loss_max, args.step), args.extra or [])
    cfg = _ga_config(args)
    rows = sweep_rows(_channel(args), _session(args), losses, _budget(args), args.f,
                      optimized=args.optimize, dataset=args.dataset, cfg=cfg)
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    if args.output:
        Path(args.output).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _ga_config(args) -> GAConfig:
    fields = read_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(fields, dict):
        raise RecordError("GA config must be a JSON object")
    fields = {k: v for k, v in fields.items() if k != "search_space"}
    if args.seed is not None:
        fields["seed"] = args.seed
    if getattr(args, "generations", None) is not None:
        fields["generations"] = args.generations
    if getattr(args, "population", None) is not None:
        fields["population"] = args.population
    return _build(GAConfig, fields, "GA config")


def _search_space(args) -> SearchSpace:
    fields = read_json(args.config).get("search_space", {}) if args.config else {}
    fields = {k: tuple(v) if isinstance(v, list) else v for k, v in fields.items()}
    return _build(SearchSpace, fields, "search space")


def cmd_optimize(args) -> int:
    ch, sess, cfg = _channel(args), _session(args), _ga_config(args)
    space = _search_space(args)
    print(f"seed: {cfg.seed}")
    try:
        pp, res = optimize(ch, sess, _budget(args), args.f, space, cfg, workers=args.workers)
    except InfeasibleLinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    report = {
        "seed": cfg.seed,
        "loss_db": ch.loss_db,
        "ga_config": dataclasses.asdict(cfg),
        "protocol": pp.as_dict(),
        "result": res.as_dict(),
    }
    for key, value in pp.as_dict().items():
        print(f"{key}: {_fmt(value)}")
    print(f"skr_bits_per_second: {_fmt(res.skr_bits_per_second)}")
    if args.output:
        write_json(args.output, report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    d = read_json(args.input)
    if not isinstance(d, dict):
        raise RecordError("simulation config must be a JSON object")
    for key in ("pulses", "channel", "protocol"):
        if key not in d:
            raise RecordError(f"simulation config missing field {key!r}")
    seed = args.seed if args.seed is not None else d.get("seed", 0)
    ch = channel_from_dict(d["channel"])
    pp = protocol_from_dict(d["protocol"])
    try:
        cfg = SimConfig(seed=seed, pulses=d["pulses"], ch=ch, pp=pp)
    except (TypeError, ValueError) as exc:
        raise RecordError(f"invalid simulation config: {exc}") from exc
    tallies = simulate_session(cfg, method=args.method, workers=args.workers)
    record = ExperimentRecord(
        fiber_km=d.get("fiber_km"),
        loss_db=ch.loss_db,
        protocol=pp,
        session=SessionParams(n_tot=cfg.pulses, rep_rate_hz=d.get("rep_rate_hz", SessionParams().rep_rate_hz)),
        tallies=tallies,
    )
    out = record.to_dict()
    out["channel"] = channel_to_dict(ch)
    out["seed"] = seed
    if args.output:
        write_json(args.output, out)
    for pair in ("ZZ", "XX", "XY", "YX", "YY"):
        print(f"{pair}: n_mu={_fmt(tallies.n[pair, 'mu'])} n_nu={_fmt(tallies.n[pair, 'nu'])} "
              f"m_mu={_fmt(tallies.m[pair, 'mu'])} m_nu={_fmt(tallies.m[pair, 'nu'])}")
    return EXIT_OK


def _security_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon1", type=float, help="Hoeffding failure probability for detection counts")
    p.add_argument("--epsilon2", type=float, help="Hoeffding failure probability for error counts")
    p.add_argument("--eps-sec", type=float, help="secrecy parameter")
    p.add_argument("--eps-cor", type=float, help="correctness parameter")
    p.add_argument("--f", type=float, default=DEFAULT_F, help="error-correction efficiency")


def _session_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-tot", type=float, help="total pulses sent")
    p.add_argument("--rep-rate", type=float, help="repetition rate in Hz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfiqkd", description="Finite-key RFI-QKD analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("skr", help="key rate from an experiment record")
    p.add_argument("--input", required=True, help="experiment record (JSON)")
    p.add_argument("--output", help="write the report as JSON")
    _security_flags(p)
    _session_flags(p)
    p.set_defaults(func=cmd_skr)

    p = sub.add_parser("verify", help="compare a dataset against its published values")
    p.add_argument("--input", help="dataset directory (default: bundled records)")
    p.add_argument("--output", help="write the comparison as JSON")
    _security_flags(p)
    _session_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="key rate against total loss (CSV)")
    p.add_argument("--loss-min", type=float, default=5.0)
    p.add_argument("--loss-max", type=float, default=55.0)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--extra", type=float, nargs="+", help="additional loss points in dB")
    p.add_argument("--optimize", action="store_true", help="optimize parameters at every point")
    p.add_argument("--channel", help="channel template (JSON); its loss is ignored")
    p.add_argument("--dataset", help="records used for fixed parameters and warm starts")
    p.add_argument("--input", dest="channel", help=argparse.SUPPRESS)
    p.add_argument("--output", help="CSV path (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--population", type=int)
    _security_flags(p)
    _session_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="genetic-algorithm parameter search")
    p.add_argument("--loss", type=float, help="total loss in dB (overrides the channel file)")
    p.add_argument("--channel", help="channel parameters (JSON)")
    p.add_argument("--config", "--input", dest="config", help="GA config (JSON), optional 'search_space' object")
    p.add_argument("--output", help="write parameters and result as JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--workers", type=int, default=1)
    _security_flags(p)
    _session_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo session, written as an experiment record")
    p.add_argument("--input", required=True, help="simulation config (JSON)")
    p.add_argument("--output", help="record path (JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=("aggregate", "pulse"), default="aggregate")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RecordError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
