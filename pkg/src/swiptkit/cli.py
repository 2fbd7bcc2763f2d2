"""Batch experiment runner: fit-eh, design, train, sweep, simulate.

Flags mirror config-file keys (INI sections named per subcommand); flags win
over the config file. Exit codes: 0 success, 2 usage/config error, 3 numeric
failure. All outputs carry a metadata header (tool version, config hash,
seed) and are byte-identical for identical configs and seeds.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import (
    Topology,
    TrainConfig,
    TrainDivergedError,
    build_system,
    extract_design,
    load_system,
    make_decoder,
    save_system,
    train,
    write_trace_csv,
)
from .channel import (
    ChannelSpec,
    delivered_power_mc,
    rp_sweep,
    ser_mc,
    write_sweep_csv,
)
from .codebook import Codebook, GreedyConfig, build_info_codebook, swipt_codebook
from .constellation import Constellation, layout_info, m_on_count, swipt_transform
from .harvester import (
    EhModel,
    FitDivergedError,
    FitHyper,
    PowerDataset,
    fit_eh,
    optimal_pon,
    pon_approx,
    synth_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _meta(params: dict, seed) -> dict:
    return {"tool": f"swiptkit {__version__}",
            "config_hash": _config_hash(params), "seed": seed}


def _attach_meta(payload: dict, params: dict, seed) -> dict:
    """Merge provenance into the payload's meta block (design files already
    carry a meta object of their own).
    """
    meta = payload.setdefault("meta", {})
    if isinstance(meta, dict):
        meta.update(_meta(params, seed))
    return payload


def _meta_comment(params: dict, seed) -> str:
    m = _meta(params, seed)
    return f"swiptkit={__version__} config_hash={m['config_hash']} seed={seed}"


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def _apply_config(args: argparse.Namespace, parser_defaults: dict, section: str) -> None:
    """Fill argparse-None values from the INI section, then from defaults."""
    cfg = configparser.ConfigParser()
    if args.config:
        if not Path(args.config).is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        cfg.read(args.config)
    for key, default in parser_defaults.items():
        if getattr(args, key) is not None:
            continue
        ini_key = key.replace("_", "-")
        if cfg.has_option(section, ini_key):
            raw = cfg.get(section, ini_key)
            cast = type(default) if default is not None else str
            value = raw if cast is str else cast(raw)
        else:
            value = default
        setattr(args, key, value)


def _parse_grid(spec: str) -> list[float]:
    """start:stop:count, or a comma-separated list."""
    if ":" in spec:
        start, stop, count = spec.split(":")
        count = int(count)
        if count < 1:
            raise ValueError("grid count must be >= 1")
        return list(np.linspace(float(start), float(stop), count))
    vals = [float(v) for v in spec.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty grid")
    return vals


def _load_harvester(path) -> EhModel:
    if not Path(path).is_file():
        raise FileNotFoundError(f"harvester file not found: {path}")
    return EhModel.load(path)


def _p_star(pa: float, eh_path: str | None) -> float:
    if eh_path:
        return optimal_pon(pa, _load_harvester(eh_path))
    return pon_approx(pa)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fit_eh(args) -> int:
    defaults = {"points": 2000, "pmax": 2000.0, "noise_rel": 0.0, "seed": 0,
                "lr": 2.0, "epochs": 30000, "init_scale": 1.0, "data": ""}
    _apply_config(args, defaults, "fit-eh")
    params = {k: getattr(args, k) for k in defaults} | {"synthetic": args.synthetic}

    if args.synthetic:
        data = synth_dataset(args.points, p_max=args.pmax,
                             noise_rel=args.noise_rel, seed=args.seed)
    elif args.data:
        data = PowerDataset.from_csv(args.data)
    else:
        print("fit-eh: need --synthetic or --data", file=_sys.stderr)
        return EXIT_USAGE

    hyper = FitHyper(learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
                     init_scale=args.init_scale)
    model = fit_eh(data, hyper)
    payload = _attach_meta(model.to_json(), params, args.seed)
    _write_json(args.output, payload)
    print(f"fit-eh: {len(data)} points, rmse={model.rmse:.6g} uW -> {args.output}")
    return EXIT_OK


def cmd_design(args) -> int:
    defaults = {"m": 16, "n": 1, "pa": 5.0, "rho": 0.0, "eh": "", "p_star": 0.0,
                "seed": 0, "candidate_cap": 1_000_000, "max_rounds": 40}
    _apply_config(args, defaults, "design")
    params = {k: getattr(args, k) for k in defaults}
    ps = args.p_star if args.p_star > 0 else _p_star(args.pa, args.eh or None)

    if args.n == 1:
        base = layout_info(args.m, args.pa)
        design = swipt_transform(base, args.rho, ps) if args.rho > 0 else base
        m_on = m_on_count(args.m, ps)
        payload = design.to_json()
        echo = f"C={design.c} t={design.t:.6g} M_on={m_on}"
    else:
        cfg = GreedyConfig(seed=args.seed, candidate_cap=args.candidate_cap,
                           max_rounds=args.max_rounds)
        cb = build_info_codebook(args.m, args.n, args.pa, cfg)
        design = swipt_codebook(cb, args.rho, ps) if args.rho > 0 else cb
        payload = design.to_json()
        echo = f"dmin_sq={design.achieved_dmin_sq:.6g}"
    _attach_meta(payload, params, args.seed)
    _write_json(args.output, payload)
    print(f"design: M={args.m} n={args.n} rho={args.rho} p_star={ps:.6g} {echo} "
          f"-> {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    defaults = {"topology": "p2p", "m": "4", "n": 1, "pa": 5.0, "snr": "50",
                "gain": 0.5, "lam": 0.0, "lr": 1e-3, "batch": 128,
                "iters": 2000, "seed": 0, "pd_floor": 1e-3, "eh": "",
                "trace": "", "extract": ""}
    _apply_config(args, defaults, "train")
    params = {k: getattr(args, k) for k in defaults}

    m_list = [int(v) for v in str(args.m).split(",")]
    snrs = [float(v) for v in str(args.snr).split(",")]
    kind = args.topology.lower()
    k = len(m_list)
    gains = None
    if kind == "ic":
        gains = np.full((k, k), args.gain)
        np.fill_diagonal(gains, 1.0)
    topo = Topology(kind=kind, m_list=m_list, snrs=snrs, p_a_uw=args.pa, gains=gains)
    cfg = TrainConfig(lambda_=args.lam, n=args.n, learning_rate=args.lr,
                      batch_size=args.batch, iterations=args.iters,
                      seed=args.seed, pd_floor=args.pd_floor)
    harvester = _load_harvester(args.eh) if args.eh else None
    system = build_system(topo, cfg, harvester=harvester)

    comment = _meta_comment(params, args.seed)
    try:
        trained, trace = train(system)
    except TrainDivergedError as err:
        if args.trace:
            write_trace_csv(args.trace, err.trace, comment)
        print(f"train: diverged at iteration {err.iteration}", file=_sys.stderr)
        return EXIT_NUMERIC

    from .autoencoder import system_to_json
    payload = _attach_meta(system_to_json(trained), params, args.seed)
    _write_json(args.output, payload)
    if args.trace:
        write_trace_csv(args.trace, trace, comment)
    if args.extract:
        designs = extract_design(trained)
        for i, d in enumerate(designs):
            path = args.extract if len(designs) == 1 else \
                str(Path(args.extract).with_suffix("")) + f".tx{i}.json"
            _write_json(path, _attach_meta(d.to_json(), params, args.seed))
    print(f"train: {kind} M={m_list} n={args.n} lambda={args.lam} "
          f"final_loss={trained.final_loss:.6g} -> {args.output}")
    return EXIT_OK


def _load_design(path):
    d = json.loads(Path(path).read_text())
    return Codebook.from_json(d) if "codewords" in d else Constellation.from_json(d)


def cmd_sweep(args) -> int:
    defaults = {"designer": "algorithmic", "m": 16, "n": 1, "pa": 5.0,
                "snr": 50.0, "trials": 100_000, "seed": 0, "rho_grid": "0:1:11",
                "eh": "", "systems": "", "candidate_cap": 1_000_000}
    _apply_config(args, defaults, "sweep")
    params = {k: getattr(args, k) for k in defaults}
    harvester = _load_harvester(args.eh) if args.eh else None
    if harvester is None:
        from .harvester import canonical_model
        harvester = canonical_model()
    spec = ChannelSpec(snr=args.snr, p_a_uw=args.pa, seed=args.seed)

    if args.designer == "algorithmic":
        controls = _parse_grid(args.rho_grid)
        ps = _p_star(args.pa, args.eh or None)
        if args.n == 1:
            base = layout_info(args.m, args.pa)
            designer = lambda rho: swipt_transform(base, rho, ps)
        else:
            cb = build_info_codebook(args.m, args.n, args.pa,
                                     GreedyConfig(seed=args.seed,
                                                  candidate_cap=args.candidate_cap))
            designer = lambda rho: swipt_codebook(cb, rho, ps)
        points = rp_sweep(designer, controls, spec, harvester, args.trials)
    elif args.designer == "learned":
        paths = [p for p in str(args.systems).split(",") if p.strip()]
        if not paths:
            print("sweep: --systems required for --designer learned", file=_sys.stderr)
            return EXIT_USAGE
        points = []
        for i, path in enumerate(paths):
            system = load_system(path)
            design = extract_design(system)[0]
            pt_seed = int(np.random.SeedSequence((args.seed, i)).generate_state(1)[0])
            pt_spec = ChannelSpec(snr=args.snr, p_a_uw=args.pa, seed=pt_seed)
            res = ser_mc(design, pt_spec, args.trials, decoder=make_decoder(system))
            pd = delivered_power_mc(design, pt_spec, harvester, args.trials)
            from .channel import TradeoffPoint
            points.append(TradeoffPoint(control=system.config.lambda_, ser=res.ser,
                                        pd_uw=pd, ci_halfwidth=res.ci_halfwidth))
    else:
        print(f"sweep: unknown designer {args.designer!r}", file=_sys.stderr)
        return EXIT_USAGE

    snr_db = 10.0 * math.log10(args.snr)
    write_sweep_csv(args.output, points, snr_db, args.trials, args.seed,
                    _meta_comment(params, args.seed))
    print(f"sweep: {len(points)} rows -> {args.output}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    defaults = {"snr": 50.0, "trials": 100_000, "seed": 0, "eh": ""}
    _apply_config(args, defaults, "simulate")
    params = {k: getattr(args, k) for k in defaults} | {"design": args.design}
    design = _load_design(args.design)
    spec = ChannelSpec(snr=args.snr, p_a_uw=design.p_a_uw, seed=args.seed)
    res = ser_mc(design, spec, args.trials)
    payload = {"ser": res.ser, "ci_halfwidth": res.ci_halfwidth,
               "trials": args.trials, "snr": args.snr, "seed": args.seed,
               "degenerate": res.degenerate}
    if args.eh:
        harvester = _load_harvester(args.eh)
        payload["pd_uw"] = delivered_power_mc(design, spec, harvester, args.trials)
    _attach_meta(payload, params, args.seed)
    if args.output:
        _write_json(args.output, payload)
    print(f"simulate: ser={res.ser:.6g} +-{res.ci_halfwidth:.2g}"
          + (f" pd={payload['pd_uw']:.6g} uW" if "pd_uw" in payload else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swiptkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, output_required=True):
        sp.add_argument("--config", default="", help="INI config file")
        sp.add_argument("-o", "--output", required=output_required)

    fe = sub.add_parser("fit-eh", help="fit the harvester model")
    add_common(fe)
    fe.add_argument("--synthetic", action="store_true")
    fe.add_argument("--data", default=None, help="dataset CSV (p_in_uw,p_out_uw)")
    fe.add_argument("--points", type=int, default=None)
    fe.add_argument("--pmax", type=float, default=None)
    fe.add_argument("--noise-rel", dest="noise_rel", type=float, default=None)
    fe.add_argument("--seed", type=int, default=None)
    fe.add_argument("--lr", type=float, default=None)
    fe.add_argument("--epochs", type=int, default=None)
    fe.add_argument("--init-scale", dest="init_scale", type=float, default=None)
    fe.set_defaults(func=cmd_fit_eh)

    de = sub.add_parser("design", help="algorithmic constellation/codebook")
    add_common(de)
    de.add_argument("--m", type=int, default=None)
    de.add_argument("--n", type=int, default=None)
    de.add_argument("--pa", type=float, default=None)
    de.add_argument("--rho", type=float, default=None)
    de.add_argument("--eh", default=None, help="fitted harvester JSON for p_on*")
    de.add_argument("--p-star", dest="p_star", type=float, default=None)
    de.add_argument("--seed", type=int, default=None)
    de.add_argument("--candidate-cap", dest="candidate_cap", type=int, default=None)
    de.add_argument("--max-rounds", dest="max_rounds", type=int, default=None)
    de.set_defaults(func=cmd_design)

    tr = sub.add_parser("train", help="end-to-end autoencoder training")
    add_common(tr)
    tr.add_argument("--topology", default=None, choices=["p2p", "bc", "mac", "ic"])
    tr.add_argument("--m", default=None, help="message sizes, comma separated")
    tr.add_argument("--n", type=int, default=None)
    tr.add_argument("--pa", type=float, default=None)
    tr.add_argument("--snr", default=None, help="per-receiver SNRs, comma separated")
    tr.add_argument("--gain", type=float, default=None, help="IC cross gain")
    tr.add_argument("--lam", "--lambda", dest="lam", type=float, default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--batch", type=int, default=None)
    tr.add_argument("--iters", type=int, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--pd-floor", dest="pd_floor", type=float, default=None)
    tr.add_argument("--eh", default=None)
    tr.add_argument("--trace", default=None, help="loss trace CSV path")
    tr.add_argument("--extract", default=None, help="also write the design JSON")
    tr.set_defaults(func=cmd_train)

    sw = sub.add_parser("sweep", help="rate-power tradeoff sweep")
    add_common(sw)
    sw.add_argument("--designer", default=None, choices=["algorithmic", "learned"])
    sw.add_argument("--m", type=int, default=None)
    sw.add_argument("--n", type=int, default=None)
    sw.add_argument("--pa", type=float, default=None)
    sw.add_argument("--snr", type=float, default=None)
    sw.add_argument("--trials", type=int, default=None)
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--rho-grid", dest="rho_grid", default=None,
                    help="start:stop:count or comma list")
    sw.add_argument("--eh", default=None)
    sw.add_argument("--systems", default=None,
                    help="trained-system JSONs, comma separated (learned mode)")
    sw.add_argument("--candidate-cap", dest="candidate_cap", type=int, default=None)
    sw.set_defaults(func=cmd_sweep)

    si = sub.add_parser("simulate", help="evaluate one design file")
    si.add_argument("--config", default="")
    si.add_argument("-o", "--output", default="")
    si.add_argument("--design", required=True)
    si.add_argument("--snr", type=float, default=None)
    si.add_argument("--trials", type=int, default=None)
    si.add_argument("--seed", type=int, default=None)
    si.add_argument("--eh", default=None)
    si.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, configparser.Error) as err:
        print(f"{args.command}: {err}", file=_sys.stderr)
        return EXIT_USAGE
    except (FitDivergedError, TrainDivergedError, FloatingPointError) as err:
        print(f"{args.command}: {err}", file=_sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
