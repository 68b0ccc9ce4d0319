"""Line-oriented ``section.key = value`` configuration.

Blank lines and ``#`` comments are ignored.  Every key has a typed default
below; unknown keys are rejected.  :func:`dump` writes a file that
:func:`parse` reads back to the same resolved values, which is how run
manifests double as configs.
"""

import os
from collections import OrderedDict
from pathlib import Path

from .errors import ConfigError

# GP-regression RBF settings from the AMIS/MAMIS/PM-AMIS experiment table.
DEFAULTS = OrderedDict(
    [
        ("data.path", ""),
        ("data.task", "regression"),
        ("data.subsample", 0),
        ("data.positive_class", ""),
        ("model.kernel", "rbf"),
        ("model.prior_sd", 3.0),
        ("model.approx", "ep"),
        ("model.n_imp", 64),
        ("sampler.name", "amis"),
        ("amis.iterations", 1120),
        ("amis.samples", 25),
        ("mamis.iterations", 46),
        ("mamis.base", 0),
        ("mamis.slope", 26),
        ("mamis_p.strength", 50.0),
        ("amis_mamis.tuning_iterations", 130),
        ("amis_mamis.tuning_samples", 100),
        ("amis_mamis.iterations", 5),
        ("amis_mamis.base", 0),
        ("amis_mamis.slope", 1000),
        ("pm_amis.iterations", 60),
        ("pm_amis.samples", 400),
        ("mh.target_rate", 0.25),
        ("mh.alpha0", 1.0),
        ("hmc.target_rate", 0.65),
        ("hmc.max_leapfrog", 10),
        ("hmc.jitter", True),
        ("hmc.eps0", 0.1),
        ("tune.tol", 0.05),
        ("tune.batch", 200),
        ("tune.max_batches", 20),
        ("nuts.step_size", 0.1),
        ("nuts.max_depth", 10),
        ("nutsda.gamma", 0.05),
        ("nutsda.t0", 30.0),
        ("nutsda.kappa", 0.75),
        ("nutsda.delta", 0.65),
        ("nutsda.adapt", 200),
        ("slice.width", 1.5),
        ("init.tol", 1e-5),
        ("init.max_iter", 200),
        ("init.fd_step", 1e-4),
        ("run.replicates", 100),
        ("run.seed", 0),
        ("run.budget", 100000),
        ("run.threads", 0),
        ("run.burn_in", 0),
        ("run.grid_points", 200),
        ("run.out", "results"),
        ("sweep.samplers", ""),
    ]
)

OUT_ENV = "GPAMIS_OUT"


def _convert(key, raw, default):
    if isinstance(default, bool):
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return str(raw).strip()


class Config(OrderedDict):
    """Resolved configuration: every default key with its typed value."""

    def set(self, key, raw):
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self[key] = _convert(key, raw, DEFAULTS[key])

    @property
    def samplers(self):
        return [s.strip() for s in self["sweep.samplers"].split(",") if s.strip()]

    def copy(self):
        return Config(self)


def default_config():
    return Config(DEFAULTS)


def parse_lines(lines, config=None, source="<config>"):
    config = config if config is not None else default_config()
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{number}: expected 'section.key = value', got {line.strip()!r}")
        key, value = text.split("=", 1)
        try:
            config.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{number}: {exc}") from None
    return config


def parse(path, config=None):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_lines(path.read_text().splitlines(), config, str(path))


def apply_overrides(config, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        config.set(key, value)
    return config


def resolve(path=None, overrides=(), env=None):
    """File values over defaults, then the output-dir env var, then overrides."""
    return resolve_over(parse(path) if path else default_config(), overrides, env)


def resolve_over(config, overrides=(), env=None):
    """Apply the output-dir env var, then overrides, to an already-parsed config."""
    env = os.environ if env is None else env
    if env.get(OUT_ENV):
        config.set("run.out", env[OUT_ENV])
    return apply_overrides(config, overrides)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump(config, extra_comments=()):
    lines = [f"# {c}" for c in extra_comments]
    section = None
    for key, value in config.items():
        head = key.split(".", 1)[0]
        if head != section:
            if section is not None:
                lines.append("")
            section = head
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"


def preset_path(name):
    """Path of a shipped preset (``default`` or ``ard``)."""
    return Path(__file__).with_name("configs") / f"{name}.cfg"
