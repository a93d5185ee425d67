"""Bundled reference values used for the comparison columns in CLI output.

Benchmark prices for the flat-curve test set (phi=0.0413, c=0.2,
L_i(0)=0.1), keyed by (product, variant, n, strike). The ratchet variant
encodes the reset coefficients as "a/b/c".
"""

from __future__ import annotations

import csv
from importlib import resources

_cache: dict[tuple[str, str, int, float], float] | None = None


def _load() -> dict[tuple[str, str, int, float], float]:
    global _cache
    if _cache is None:
        table = {}
        path = resources.files("lmmpde").joinpath("reference_values.csv")
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["product"], row["variant"], int(row["n"]),
                       round(float(row["strike"]), 10))
                table[key] = float(row["value"])
        _cache = table
    return _cache


def lookup(product: str, variant: str, n: int, strike: float) -> float | None:
    return _load().get((product, variant, n, round(strike, 10)))


def ratchet_variant(a: float, b: float, c: float) -> str:
    def fmt(x: float) -> str:
        return f"{x:g}"

    return f"{fmt(a)}/{fmt(b)}/{fmt(c)}"
