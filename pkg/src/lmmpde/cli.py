"""Batch experiment runner.

Experiments are described in an INI-style config file (parsed with
configparser). Each ``[experiment:NAME]`` section holds dotted keys; a
``[defaults]`` section supplies fallbacks shared by all experiments:

    [defaults]
    model.alpha = 0.25
    model.phi = 0.0413
    model.c = 0.2
    model.l0 = 0.1
    pde.j = 601
    pde.m_pde = 10
    pde.g_max = 1000
    mc.seed = 0

    [experiment:atm]
    model.n = 5, 11          ; lists expand to one run per combination
    product.type = bermudan  ; bermudan | ratchet
    product.strike = 0.10    ; list allowed
    method.kind = pde        ; pde | mc | both
    mc.drift = full
    mc.n1 = 100000
    mc.n2 = 1000000
    mc.n_outer = 2000
    mc.n_inner = 500
    mc.m_mc = 5
    output.path = atm.csv

Ratchet products use ``product.k1`` (list allowed) and ``product.a/b/c``.
Output rows carry the published benchmark value for the configuration when
one is bundled, plus absolute/relative differences against it.

Exit codes: 0 ok, 1 configuration/validation error, 2 numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
import time
from dataclasses import dataclass, field

from . import refdata
from .errors import ConfigurationError, NumericalError
from .model import LmmConfig
from .mcbench import McConfig, bermudan_bounds, mc_price_ratchet
from .pricing import PdeParams, price_bermudan_pde, price_ratchet_pde
from .products import BermudanSwaption, RatchetFloor

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

COLUMNS = ["experiment", "product", "n", "strike", "reset", "method", "value",
           "sigma", "lower", "upper", "midpoint", "reference", "delta_abs",
           "delta_rel", "wall_s", "seed", "value_full"]


@dataclass
class ExperimentSpec:
    """One fully resolved experiment: a product/model grid plus methods."""

    name: str
    n_list: list[int]
    strike_list: list[float]
    model: dict = field(default_factory=dict)
    product_type: str = "bermudan"
    reset: tuple[float, float, float] = (0.0, 1.0, 0.0)
    kind: str = "pde"
    pde: PdeParams = PdeParams()
    mc: McConfig = McConfig()
    output: str | None = None
    partial_sums: bool = False


def _get(section, defaults, key, fallback=None):
    if key in section:
        return section[key]
    if key in defaults:
        return defaults[key]
    return fallback


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _ints(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(",", " ").split()]


def _field_error(name: str, key: str, msg: str) -> ConfigurationError:
    return ConfigurationError(f"experiment:{name}/{key}: {msg}")


def parse_config(path: str, seed_override: int | None = None) -> list[ExperimentSpec]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise IOError(f"cannot read config file {path!r}")
    defaults = parser["defaults"] if parser.has_section("defaults") else {}
    specs = []
    for section_name in parser.sections():
        if not section_name.startswith("experiment:"):
            continue
        name = section_name.split(":", 1)[1]
        sec = parser[section_name]

        def get(key, fallback=None):
            return _get(sec, defaults, key, fallback)

        try:
            ptype = get("product.type")
            if ptype not in ("bermudan", "ratchet"):
                raise _field_error(name, "product.type",
                                   f"must be 'bermudan' or 'ratchet', got {ptype!r}")
            n_list = _ints(get("model.n", ""))
            if not n_list:
                raise _field_error(name, "model.n", "at least one rate count required")
            if ptype == "bermudan":
                strikes = _floats(get("product.strike", ""))
                if not strikes:
                    raise _field_error(name, "product.strike", "strike required")
                reset = (0.0, 1.0, 0.0)
            else:
                strikes = _floats(get("product.k1", ""))
                if not strikes:
                    raise _field_error(name, "product.k1", "initial strike required")
                reset = (float(get("product.a", "0")), float(get("product.b", "1")),
                         float(get("product.c", "0")))
            kind = get("method.kind", "pde")
            if kind not in ("pde", "mc", "both"):
                raise _field_error(name, "method.kind", f"unsupported kind {kind!r}")
            r = int(get("method.r", "1"))
            s = int(get("method.s", "1"))
            if kind in ("pde", "both") and r + s > 2:
                raise _field_error(name, "method.r",
                                   f"PDE route supports r+s <= 2, got r={r}, s={s}")
            model = {
                "alpha": float(get("model.alpha", "0.25")),
                "phi": float(get("model.phi", "0.0413")),
                "c": float(get("model.c", "0.2")),
                "l0": float(get("model.l0", "0.1")),
            }
            default_j = "601" if ptype == "bermudan" else "401"
            pde = PdeParams(j=int(get("pde.j", default_j)),
                            m_pde=int(get("pde.m_pde", "10")),
                            g_max=float(get("pde.g_max", "1000")),
                            damped_steps=int(get("pde.damped_steps", "2")))
            default_mmc = "5" if ptype == "bermudan" else "10"
            seed = seed_override if seed_override is not None else int(get("mc.seed", "0"))
            mc = McConfig(n1=int(get("mc.n1", "100000")),
                          n2=int(get("mc.n2", "1000000")),
                          n_outer=int(get("mc.n_outer", "2000")),
                          n_inner=int(get("mc.n_inner", "500")),
                          m_mc=int(get("mc.m_mc", default_mmc)),
                          drift=get("mc.drift", "full"),
                          seed=seed)
            specs.append(ExperimentSpec(
                name=name, n_list=n_list, strike_list=strikes, model=model,
                product_type=ptype, reset=reset, kind=kind, pde=pde, mc=mc,
                output=get("output.path"),
                partial_sums=get("method.partial_sums", "no").lower()
                in ("1", "true", "yes")))
        except ConfigurationError:
            raise
        except (ValueError, KeyError) as exc:
            raise ConfigurationError(f"experiment:{name}: {exc}") from exc
    if not specs:
        raise ConfigurationError("no [experiment:...] sections found")
    return specs


def _row(spec, n, strike, method, value, sigma=None, lower=None, upper=None,
         wall=0.0):
    if spec.product_type == "bermudan":
        variant, reset_str = "yearly", ""
    else:
        variant = refdata.ratchet_variant(*spec.reset)
        reset_str = variant
    ref = refdata.lookup(spec.product_type, variant, n, strike)
    mid = value if lower is None else 0.5 * (lower + upper)
    row = {
        "experiment": spec.name, "product": spec.product_type, "n": n,
        "strike": f"{strike:g}", "reset": reset_str, "method": method,
        "value": f"{value:.6g}",
        "sigma": "" if sigma is None else f"{sigma:.6g}",
        "lower": "" if lower is None else f"{lower:.6g}",
        "upper": "" if upper is None else f"{upper:.6g}",
        "midpoint": f"{mid:.6g}",
        "reference": "" if ref is None else f"{ref:.6g}",
        "delta_abs": "" if ref is None else f"{value - ref:.6g}",
        "delta_rel": "" if ref is None else f"{(value - ref) / ref:.4%}",
        "wall_s": f"{wall:.2f}",
        "seed": spec.mc.seed,
        "value_full": f"{value!r}",
    }
    return row


def run_experiment(spec: ExperimentSpec, log=lambda msg: None) -> list[dict]:
    """All (n, strike) combinations of one experiment, one row per method."""
    rows = []
    for n in spec.n_list:
        config = LmmConfig(n=n, alpha=spec.model["alpha"], phi=spec.model["phi"],
                           c=spec.model["c"], l0=spec.model["l0"])
        for strike in spec.strike_list:
            if spec.kind in ("pde", "both"):
                t0 = time.perf_counter()
                if spec.product_type == "bermudan":
                    product = BermudanSwaption.yearly(strike, n)
                    est = price_bermudan_pde(config, product, spec.pde)
                else:
                    a, b, c = spec.reset
                    product = RatchetFloor(k1=strike, a=a, b=b, c=c)
                    est = price_ratchet_pde(config, product, spec.pde)
                wall = time.perf_counter() - t0
                rows.append(_row(spec, n, strike, "pde", est.value, wall=wall))
                log(f"{spec.name}: n={n} K={strike:g} pde -> {est.value:.6g} "
                    f"({wall:.1f}s)")
            if spec.kind in ("mc", "both"):
                t0 = time.perf_counter()
                if spec.product_type == "bermudan":
                    product = BermudanSwaption.yearly(strike, n)
                    bounds = bermudan_bounds(config, product, spec.mc)
                    wall = time.perf_counter() - t0
                    rows.append(_row(spec, n, strike, f"mc-{spec.mc.drift}",
                                     bounds.midpoint, sigma=bounds.stderr,
                                     lower=bounds.lower, upper=bounds.upper,
                                     wall=wall))
                    log(f"{spec.name}: n={n} K={strike:g} mc -> "
                        f"[{bounds.lower:.6g}, {bounds.upper:.6g}] ({wall:.1f}s)")
                else:
                    a, b, c = spec.reset
                    product = RatchetFloor(k1=strike, a=a, b=b, c=c)
                    est = mc_price_ratchet(config, product, spec.mc)
                    wall = time.perf_counter() - t0
                    rows.append(_row(spec, n, strike, est.method, est.value,
                                     sigma=est.stderr, wall=wall))
                    log(f"{spec.name}: n={n} K={strike:g} mc -> {est.value:.6g} "
                        f"+- {est.stderr:.2g} ({wall:.1f}s)")
    return rows


def run_partial_sums(spec: ExperimentSpec, log=lambda msg: None) -> list[dict]:
    """Rows (k, partial sum up to k) for the first-order expansion profile."""
    from .pricing import bermudan_pde_terms

    rows = []
    for n in spec.n_list:
        config = LmmConfig(n=n, alpha=spec.model["alpha"], phi=spec.model["phi"],
                           c=spec.model["c"], l0=spec.model["l0"])
        for strike in spec.strike_list:
            t0 = time.perf_counter()
            product = BermudanSwaption.yearly(strike, n)
            terms = bermudan_pde_terms(config, product, spec.pde)
            wall = time.perf_counter() - t0
            full = terms.value()
            for k in range(1, n + 1):
                vk = terms.partial_sum(k)
                row = _row(spec, n, strike, f"pde-k{k}", vk, wall=wall if k == n else 0.0)
                row["delta_abs"] = f"{vk - full:.6g}"
                row["delta_rel"] = f"{(vk - full) / full:.4%}"
                row["reference"] = f"{full:.6g}"
                rows.append(row)
            log(f"{spec.name}: n={n} partial sums done ({wall:.1f}s)")
    return rows


def emit_table(rows: list[dict], fmt: str = "csv", path: str | None = None) -> str:
    """Render rows as RFC-4180 CSV or aligned plain text; write if path given."""
    if not rows:
        raise ConfigurationError("no result rows to emit")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    elif fmt == "plain":
        widths = {c: max(len(c), max(len(str(r.get(c, ""))) for r in rows))
                  for c in COLUMNS}
        lines = ["  ".join(c.ljust(widths[c]) for c in COLUMNS)]
        for r in rows:
            lines.append("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in COLUMNS))
        text = "\n".join(lines) + "\n"
    else:
        raise ConfigurationError(f"unknown output format {fmt!r}")
    if path:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise IOError(f"cannot write {path!r}: {exc}") from exc
    return text


def _resolved_config_text(specs: list[ExperimentSpec]) -> str:
    lines = []
    for s in specs:
        lines.append(f"[experiment:{s.name}]")
        lines.append(f"model = {s.model}")
        lines.append(f"n = {s.n_list}; strikes = {s.strike_list}; "
                     f"product = {s.product_type}; reset = {s.reset}")
        lines.append(f"kind = {s.kind}; pde = {s.pde}; mc = {s.mc}")
        lines.append("")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lmmpde",
                                 description="Rate-curve derivative pricing: "
                                             "PDE expansion vs Monte Carlo")
    ap.add_argument("--config", required=True, help="experiment config file (INI)")
    ap.add_argument("--out", default=None, help="output path (overrides output.path)")
    ap.add_argument("--format", default="csv", choices=("csv", "plain"))
    ap.add_argument("--threads", type=int, default=None,
                    help="cap kernel threads (numba backend)")
    ap.add_argument("--seed", type=int, default=None, help="override mc.seed")
    ap.add_argument("--no-timing", action="store_true",
                    help="zero the wall_s column for byte-reproducible output")
    args = ap.parse_args(argv)

    if args.threads is not None:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except ImportError:
            pass

    try:
        specs = parse_config(args.config, seed_override=args.seed)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    log = lambda msg: print(msg, file=sys.stderr)
    log("resolved configuration:\n" + _resolved_config_text(specs))
    rows = []
    try:
        for spec in specs:
            if spec.partial_sums:
                rows.extend(run_partial_sums(spec, log))
            else:
                rows.extend(run_experiment(spec, log))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if rows:
            _flush(rows, specs, args)
        return EXIT_NUMERICAL

    if args.no_timing:
        for r in rows:
            r["wall_s"] = "0.00"
    try:
        _flush(rows, specs, args)
    except (IOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _flush(rows, specs, args):
    out = args.out or next((s.output for s in specs if s.output), None)
    text = emit_table(rows, args.format, out)
    if out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
