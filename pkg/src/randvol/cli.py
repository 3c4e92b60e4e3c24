"""Command-line interface: fit, price, iv, density, check-arb, interp, bench."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .arbitrage import SliceSet, check_butterfly, check_calendar, default_strike_grid, interp_total_variance
from .calibration import fit_slice
from .errors import RandvolError
from .parametrizations import params_from_json
from .pricing import MarketContext, OptionKey, OptionType, bs_price
from .quotes import load_quotes, parse_config
from .randomization import (
    DeterministicSlice,
    density,
    implied_vol_grid,
    randomize,
    randomized_prices,
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except RandvolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randvol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="calibrate per-expiry slices to a quote file")
    fit.add_argument("--quotes", required=True, help="quote CSV path")
    fit.add_argument("--config", required=True, help="run config path (key = value lines)")
    fit.add_argument("--out-dir", default=".", help="directory for result JSON / residual CSVs")
    fit.set_defaults(handler=_cmd_fit)

    for name in ("price", "iv"):
        cmd = sub.add_parser(name, help=f"compute option {name}s on a (T, K) grid")
        _add_market_args(cmd)
        cmd.add_argument("--params", required=True, help="slice parameter JSON path")
        cmd.add_argument("--expiry", type=float, help="expiry in years (with strike flags)")
        cmd.add_argument("--strikes", help="comma-separated strikes")
        cmd.add_argument("--k-min", type=float, help="grid lower strike")
        cmd.add_argument("--k-max", type=float, help="grid upper strike")
        cmd.add_argument("--n-strikes", type=int, default=101, help="grid size")
        cmd.add_argument("--points", help="CSV of expiry,strike points")
        cmd.add_argument("--engine", default="brent", help="brent or expansion:N")
        cmd.add_argument("--out", help="output CSV path (default stdout)")
    sub.choices["price"].set_defaults(handler=_cmd_price)
    sub.choices["iv"].set_defaults(handler=_cmd_iv)

    dens = sub.add_parser("density", help="risk-neutral density of a slice")
    _add_market_args(dens)
    dens.add_argument("--params", required=True)
    dens.add_argument("--expiry", type=float, required=True)
    dens.add_argument("--k-min", type=float)
    dens.add_argument("--k-max", type=float)
    dens.add_argument("--n-strikes", type=int, default=501)
    dens.add_argument("--out", help="output CSV path (default stdout)")
    dens.set_defaults(handler=_cmd_density)

    arb = sub.add_parser("check-arb", help="butterfly/calendar checks; exit 1 on violation")
    _add_market_args(arb)
    arb.add_argument("--params", required=True, help="single slice JSON or {'slices': [...]} file")
    arb.add_argument("--expiry", type=float, help="expiry for a single-slice params file")
    arb.add_argument("--grid-lo", type=float, default=0.3)
    arb.add_argument("--grid-hi", type=float, default=3.0)
    arb.add_argument("--grid-points", type=int, default=201)
    arb.set_defaults(handler=_cmd_check_arb)

    interp = sub.add_parser("interp", help="total-variance interpolated vol at (T, K)")
    _add_market_args(interp)
    interp.add_argument("--params", required=True, help="{'slices': [...]} file")
    interp.add_argument("--expiry", type=float, required=True)
    interp.add_argument("--strike", type=float, required=True)
    interp.set_defaults(handler=_cmd_interp)

    bench = sub.add_parser("bench", help="expansion vs Brent wall-clock table")
    bench.add_argument("--counts", default="1000,10000,50000,100000")
    bench.add_argument("--orders", default="2,4,6")
    bench.add_argument("--skip-brent", action="store_true")
    bench.add_argument("--out", help="output CSV path (default stdout)")
    bench.set_defaults(handler=_cmd_bench)
    return parser


def _add_market_args(cmd: argparse.ArgumentParser) -> None:
    cmd.add_argument("--spot", type=float, required=True)
    cmd.add_argument("--rate", type=float, default=0.0)


def _surface(params, ctx):
    if params.randomizer is None:
        return DeterministicSlice(params.base, ctx)
    return randomize(params, ctx)


def _load_params_file(path, spot):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "slices" in data:
        return [
            (float(entry["expiry"]), params_from_json(entry["params"], spot=spot))
            for entry in data["slices"]
        ]
    return params_from_json(data, spot=spot)


def _resolve_points(args) -> list[tuple[float, np.ndarray]]:
    if args.points:
        by_expiry: dict[float, list[float]] = {}
        rows = Path(args.points).read_text(encoding="utf-8").strip().splitlines()
        if rows and rows[0].lower().replace(" ", "") == "expiry,strike":
            rows = rows[1:]
        for row in rows:
            expiry_s, strike_s = row.split(",")
            by_expiry.setdefault(float(expiry_s), []).append(float(strike_s))
        return [(t, np.asarray(ks)) for t, ks in sorted(by_expiry.items())]
    if args.expiry is None:
        raise ValueError("provide --points or --expiry with strike flags")
    if args.strikes:
        strikes = np.array([float(s) for s in args.strikes.split(",")])
    elif args.k_min is not None and args.k_max is not None:
        strikes = np.linspace(args.k_min, args.k_max, args.n_strikes)
    else:
        raise ValueError("provide --strikes or --k-min/--k-max")
    return [(args.expiry, strikes)]


def _emit(text: str, out_path) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_fit(args) -> int:
    cfg = parse_config(args.config)
    quotes = load_quotes(args.quotes, cfg.market)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    expiries = quotes.expiries()

    def fit_one(expiry):
        return fit_slice(quotes.at_expiry(expiry), cfg.fit)

    workers = int(os.environ.get("RANDVOL_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_one, expiries))
    else:
        results = [fit_one(t) for t in expiries]

    for expiry, result in zip(expiries, results):
        tag = f"{expiry:.6f}".rstrip("0").rstrip(".").replace(".", "_")
        (out_dir / f"fit_T{tag}.json").write_text(
            json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        with (out_dir / f"residuals_T{tag}.csv").open("w", encoding="utf-8") as handle:
            handle.write("expiry,strike,residual\n")
            for t, k, res in result.residuals:
                handle.write(f"{t:.10g},{k:.10g},{res:.12g}\n")
        print(f"T={expiry:.6f}: sse={result.sse:.6e} mse={result.mse:.6e}")
    return 0


def _cmd_price(args) -> int:
    ctx = MarketContext(s0=args.spot, r=args.rate)
    params = _load_params_file(args.params, args.spot)
    if isinstance(params, list):
        raise ValueError("price expects a single-slice params file")
    lines = ["expiry,strike,price"]
    if params.randomizer is None:
        from .parametrizations import eval_vol

        for expiry, strikes in _resolve_points(args):
            for k in strikes:
                key = OptionKey(expiry, float(k), OptionType.CALL)
                value = bs_price(ctx, key, eval_vol(params.base, ctx, key))
                lines.append(f"{expiry:.10g},{k:.10g},{value:.12g}")
    else:
        rs = randomize(params, ctx)
        for expiry, strikes in _resolve_points(args):
            # the root-finder engine round-trips to the exact mixture price,
            # so take that directly; expansion engines price off their vols
            if args.engine == "brent":
                values = randomized_prices(rs, expiry, strikes)
            else:
                vols = implied_vol_grid(rs, expiry, strikes, engine=args.engine)
                values = [
                    bs_price(ctx, OptionKey(expiry, float(k), OptionType.CALL), float(v))
                    for k, v in zip(strikes, vols)
                ]
            lines += [f"{expiry:.10g},{k:.10g},{v:.12g}" for k, v in zip(strikes, values)]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_iv(args) -> int:
    ctx = MarketContext(s0=args.spot, r=args.rate)
    params = _load_params_file(args.params, args.spot)
    if isinstance(params, list):
        raise ValueError("iv expects a single-slice params file")
    surface = _surface(params, ctx)
    lines = ["expiry,strike,iv"]
    for expiry, strikes in _resolve_points(args):
        if isinstance(surface, DeterministicSlice):
            values = [surface.implied_vol(expiry, float(k)) for k in strikes]
        else:
            values = implied_vol_grid(surface, expiry, strikes, engine=args.engine)
        lines += [f"{expiry:.10g},{k:.10g},{v:.12g}" for k, v in zip(strikes, values)]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_density(args) -> int:
    ctx = MarketContext(s0=args.spot, r=args.rate)
    params = _load_params_file(args.params, args.spot)
    if isinstance(params, list):
        raise ValueError("density expects a single-slice params file")
    if params.randomizer is None:
        raise ValueError("density needs a randomized slice; plain slices are lognormal")
    rs = randomize(params, ctx)
    fwd = ctx.forward(args.expiry)
    k_lo = args.k_min if args.k_min is not None else 0.3 * fwd
    k_hi = args.k_max if args.k_max is not None else 3.0 * fwd
    grid = np.exp(np.linspace(math.log(k_lo), math.log(k_hi), args.n_strikes))
    curve = density(rs, args.expiry, grid)
    import io

    buffer = io.StringIO()
    curve.to_csv(buffer)
    _emit(buffer.getvalue(), args.out)
    print(f"mass={curve.mass:.6f} mean={curve.mean:.6f} forward={fwd:.6f}", file=sys.stderr)
    return 0


def _cmd_check_arb(args) -> int:
    ctx = MarketContext(s0=args.spot, r=args.rate)
    loaded = _load_params_file(args.params, args.spot)
    if not isinstance(loaded, list):
        if args.expiry is None:
            raise ValueError("single-slice params need --expiry")
        loaded = [(args.expiry, loaded)]
    surfaces = [(expiry, _surface(params, ctx)) for expiry, params in loaded]

    report = None
    for expiry, surface in surfaces:
        grid = default_strike_grid(ctx, expiry, args.grid_points, args.grid_lo, args.grid_hi)
        if isinstance(surface, DeterministicSlice):
            price_fn = lambda t, ks, s=surface: np.array([s.call_price(t, float(k)) for k in np.atleast_1d(ks)])
            spot_randomized = False
        else:
            price_fn = lambda t, ks, s=surface: randomized_prices(s, t, ks)
            spot_randomized = surface.target == "spot"
        fragment = check_butterfly(price_fn, expiry, grid, ctx, check_intrinsic=not spot_randomized)
        report = fragment if report is None else report.merge(fragment)
    if len(surfaces) >= 2:
        shared = default_strike_grid(ctx, surfaces[0][0], 51, 0.7, 1.4)
        report = report.merge(check_calendar(SliceSet(tuple(surfaces)), shared))
    print(json.dumps(report.to_json(), indent=2))
    return 0 if report.passed else 1


def _cmd_interp(args) -> int:
    ctx = MarketContext(s0=args.spot, r=args.rate)
    loaded = _load_params_file(args.params, args.spot)
    if not isinstance(loaded, list):
        raise ValueError("interp expects a {'slices': [...]} params file")
    slice_set = SliceSet(tuple((t, _surface(p, ctx)) for t, p in loaded))
    vol = interp_total_variance(slice_set, args.expiry, args.strike)
    print(f"{vol:.10g}")
    return 0


def _cmd_bench(args) -> int:
    counts = [int(c) for c in args.counts.split(",")]
    orders = [int(o) for o in args.orders.split(",")]
    rows = bench_mod.run_benchmark(counts, orders, include_brent=not args.skip_brent)
    _emit(bench_mod.rows_to_csv(rows), args.out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
