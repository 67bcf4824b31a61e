"""Flat ``key = value`` configuration files layered over the packaged defaults."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from safegrid.control import SCALINGS, PiGains
from safegrid.env import EnvConfig
from safegrid.plant import GridParams
from safegrid.runner import ExperimentConfig, default_experiment
from safegrid.safeopt import ParamBounds


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        values[key.strip()] = value.strip()
    return values


def default_values() -> dict[str, str]:
    text = resources.files("safegrid").joinpath("defaults.cfg").read_text()
    return parse_config_text(text, "defaults.cfg")


def load_config(path=None) -> dict[str, str]:
    """Defaults overlaid with ``path``; unknown keys raise :class:`ConfigError`."""
    values = default_values()
    if path is None:
        return values
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    user = parse_config_text(p.read_text(), str(p))
    unknown = sorted(set(user) - set(values))
    if unknown:
        raise ConfigError(f"{p}: unknown keys {', '.join(unknown)}")
    values.update(user)
    return values


def _float(values, key) -> float:
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {values[key]!r}") from None


def _int(values, key) -> int:
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {values[key]!r}") from None


def _auto_float(values, key):
    return None if values[key].lower() == "auto" else _float(values, key)


def _bool(values, key) -> bool:
    v = values[key].lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {values[key]!r}")


def env_config(values: dict[str, str]) -> EnvConfig:
    try:
        grid = GridParams(**{k: _float(values, f"grid.{k}") for k in
                             ("v_dc", "f_grid", "l_filt", "c_filt", "r_filt", "r_load", "l_load")})
        return EnvConfig(
            grid=grid,
            i_nom=_float(values, "env.i_nom"),
            i_limit=_float(values, "env.i_limit"),
            i_ref_dq0=tuple(_float(values, f"env.i_ref_{a}") for a in ("d", "q", "0")),
            dt=_float(values, "env.dt"),
            n_steps=_int(values, "env.n_steps"),
            mu=_float(values, "env.mu"),
            backend=values["env.backend"],
            rk4_substeps=_int(values, "env.rk4_substeps"),
            link=values["env.link"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def experiment_config(values: dict[str, str], mode: str, rng_seed: int | None = None) -> ExperimentConfig:
    """Experiment for ``mode`` ("1d" pins kp at the seed value, "2d" tunes both)."""
    env = env_config(values)
    scaling = values["control.scaling"]
    if scaling not in SCALINGS:
        raise ConfigError(f"control.scaling: expected one of {SCALINGS}, got {scaling!r}")
    seed = PiGains(_float(values, "seed.kp"), _float(values, "seed.ki"))
    lows = (_float(values, "bounds.kp_low"), _float(values, "bounds.ki_low"))
    highs = (_float(values, "bounds.kp_high"), _float(values, "bounds.ki_high"))
    if mode == "1d":
        points = (2, _int(values, "bounds.ki_points_1d"))
        fixed = (seed.kp, None)
        n_episodes = _int(values, "tune.episodes_1d")
    elif mode == "2d":
        points = (_int(values, "bounds.kp_points_2d"), _int(values, "bounds.ki_points_2d"))
        fixed = (None, None)
        n_episodes = _int(values, "tune.episodes_2d")
    else:
        raise ConfigError(f"mode must be '1d' or '2d', got {mode!r}")
    try:
        lengthscales = tuple(float(v) for v in values["gp.lengthscale"].split(","))
    except ValueError:
        raise ConfigError(f"gp.lengthscale: expected numbers, got {values['gp.lengthscale']!r}") from None
    stride = None if values["tune.snapshot_stride"].lower() == "auto" else _int(values, "tune.snapshot_stride")
    try:
        return default_experiment(
            mode,
            env=env,
            bounds=ParamBounds(lows, highs, points),
            fixed_params=fixed,
            seed_gains=seed,
            n_episodes=n_episodes,
            lengthscales=lengthscales,
            signal_std=_auto_float(values, "gp.signal_std"),
            noise_std=_auto_float(values, "gp.noise_std"),
            beta=_float(values, "safeopt.beta"),
            rng_seed=_int(values, "tune.rng_seed") if rng_seed is None else rng_seed,
            scaling=scaling,
            anti_windup=_bool(values, "control.anti_windup"),
            expanders=values["safeopt.expanders"],
            snapshot_stride=stride,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
