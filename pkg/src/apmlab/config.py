"""Experiment configuration: loading, validation, and object builders.

Configs are JSON or TOML mappings with sections for the market, the
shock family, the utility, and per-command parameters.  Everything a
command needs is in the file, so a config plus a library version pins an
experiment exactly.  Errors carry the dotted path of the offending field
because silent defaults in scientific configs are how wrong numbers get
published.
"""
from __future__ import annotations

import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import shocks as shock_lib
from . import utility as utility_lib
from .market import MarketParams, ReducedParams, reduce_params
from .sequences import PrefixSequence, TailRule, tail_rule_from_spec
from .shocks import ShockFamily
from .utility import UtilityFunction


class ConfigError(ValueError):
    """Malformed experiment config; the message starts with the field path."""


def load_config(path) -> dict:
    """Parse a JSON (.json) or TOML (anything else) config file."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    try:
        if p.suffix.lower() == ".json":
            cfg = json.loads(raw.decode("utf-8"))
        else:
            cfg = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def _section(cfg: dict, name: str, required: bool = True) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"{name}: section is required")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: must be a mapping")
    return sec


def _number(sec: dict, path: str, key: str, default=None, minimum=None,
            integer: bool = False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: must be a number, got {val!r}")
    if integer:
        if int(val) != val:
            raise ConfigError(f"{path}.{key}: must be an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {val!r}")
    return val


def _vector(sec: dict, path: str, key: str, required: bool = True):
    if key not in sec:
        if required:
            raise ConfigError(f"{path}.{key}: required")
        return None
    val = sec[key]
    if not isinstance(val, (list, tuple)) or not val:
        raise ConfigError(f"{path}.{key}: must be a non-empty list of numbers")
    for j, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{path}.{key}[{j}]: must be a number, got {x!r}")
    return [float(x) for x in val]


def _tail(sec: dict, path: str, key: str) -> TailRule | None:
    if key not in sec:
        return None
    try:
        return tail_rule_from_spec(sec[key])
    except ValueError as exc:
        raise ConfigError(f"{path}.{key}: {exc}") from exc


def build_reduced(cfg: dict) -> ReducedParams:
    """Reduced risk parameters from either form of the market section.

    Direct form gives ``b`` (plus an optional tail rule); structural form
    gives mu, bar_beta, and cross loadings, which are reduced over the
    first ``k`` assets.
    """
    market = _section(cfg, "market")
    if "b" in market:
        b = _vector(market, "market", "b")
        tail = _tail(market, "market", "tail")
        m = _number(market, "market", "m", default=1, minimum=1, integer=True)
        try:
            if tail is None:
                return ReducedParams.from_b(b, m=m)
            return ReducedParams.from_b(b, tail=tail, m=m)
        except ValueError as exc:
            raise ConfigError(f"market.b: {exc}") from exc
    mu = _vector(market, "market", "mu")
    bar_beta = _vector(market, "market", "bar_beta")
    if len(bar_beta) != len(mu):
        raise ConfigError("market.bar_beta: must match the length of market.mu")
    m = _number(market, "market", "m", default=1, minimum=1, integer=True)
    beta_rows = market.get("beta", [])
    if not isinstance(beta_rows, (list, tuple)):
        raise ConfigError("market.beta: must be a list of rows")
    k = _number(market, "market", "k", default=len(mu), minimum=1, integer=True)
    # Unspecified tails mean "the listed assets are the whole story":
    # zero mean excess return beyond the list, last own-loading repeated
    # (a nonzero loading is structurally required at every index).
    mu_tail = _tail(market, "market", "mu_tail") or TailRule(kind="zero", coeff=0.0)
    bar_tail = _tail(market, "market", "bar_beta_tail") \
        or TailRule(kind="constant", coeff=bar_beta[-1])
    if beta_rows:
        beta = np.asarray(beta_rows, dtype=np.float64)
        if beta.ndim != 2 or beta.shape[1] != m:
            raise ConfigError(f"market.beta: rows must have {m} entries each")
    else:
        beta = np.zeros((0, m))
    try:
        params = MarketParams(
            m=m,
            mu=PrefixSequence.from_values(mu, mu_tail),
            bar_beta=PrefixSequence.from_values(bar_beta, bar_tail),
            beta=beta,
        )
        return reduce_params(params, k)
    except ValueError as exc:
        raise ConfigError(f"market: {exc}") from exc


def build_family(cfg: dict) -> ShockFamily:
    sec = _section(cfg, "shocks")
    kind = sec.get("kind")
    if not isinstance(kind, str):
        raise ConfigError("shocks.kind: required string")
    try:
        if kind == "gaussian":
            return shock_lib.gaussian()
        if kind in ("student_t", "standardized_student_t"):
            return shock_lib.student_t(_number(sec, "shocks", "df"))
        if kind == "two_point_aba":
            return shock_lib.two_point()
        if kind == "rademacher":
            return shock_lib.rademacher()
        if kind == "bounded_tail_power":
            kwargs = {}
            for key in ("dominating_coeff", "lower_coeff", "lower_exponent"):
                if key in sec:
                    kwargs[key] = _number(sec, "shocks", key)
            return shock_lib.bounded_tail_power(_number(sec, "shocks", "theta"), **kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"shocks: {exc}") from exc
    raise ConfigError(f"shocks.kind: unknown kind {kind!r}")


def build_utility(cfg: dict) -> UtilityFunction:
    sec = _section(cfg, "utility")
    kind = sec.get("kind")
    if not isinstance(kind, str):
        raise ConfigError("utility.kind: required string")
    try:
        if kind in ("exponential", "exponential_bounded"):
            return utility_lib.exponential_bounded()
        if kind == "proof_u1":
            return utility_lib.make_proof_u1(_number(sec, "utility", "eps"))
        if kind == "proof_un":
            return utility_lib.make_proof_un(_number(sec, "utility", "kappa"))
        if kind == "power_moderate":
            return utility_lib.power_moderate(
                p=_number(sec, "utility", "p"),
                lam=_number(sec, "utility", "lam", default=1.0),
                alpha=_number(sec, "utility", "alpha", default=0.0),
            )
        if kind == "piecewise_linear":
            breakpoints = _vector(sec, "utility", "breakpoints")
            slopes = _vector(sec, "utility", "slopes")
            return utility_lib.piecewise_linear(breakpoints, slopes)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"utility: {exc}") from exc
    raise ConfigError(f"utility.kind: unknown kind {kind!r}")


def int_list(sec: dict, path: str, key: str, required: bool = True) -> list[int] | None:
    vals = _vector(sec, path, key, required=required)
    if vals is None:
        return None
    out = []
    for j, v in enumerate(vals):
        if int(v) != v:
            raise ConfigError(f"{path}.{key}[{j}]: must be an integer, got {v!r}")
        out.append(int(v))
    return out


def section(cfg: dict, name: str, required: bool = True) -> dict:
    return _section(cfg, name, required)


def number(sec: dict, path: str, key: str, default=None, minimum=None,
           integer: bool = False):
    return _number(sec, path, key, default, minimum, integer)
