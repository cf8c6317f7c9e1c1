"""Run configuration: flat ``key = value`` text with dotted section prefixes.

Example::

    alpha = 1.5
    n0 = 4096
    trees = 20000
    seed = 42
    lambda0 = 1.0
    ngh.t = 0.1, 0.2, 0.4

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ConfigError

REQUIRED = ("alpha", "n0", "trees", "seed", "lambda0")


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


# key -> (parser, default); None default marks a required key
SCHEMA = {
    "alpha": (float, None),
    "n0": (int, None),
    "trees": (int, None),
    "seed": (int, None),
    "lambda0": (float, None),
    "workers": (int, 1),
    "block_size": (int, 16384),
    # calibration
    "calibrate.trees": (int, 0),
    "calibrate.t_ref": (float, 0.2),
    "calibrate.fit_depth_fraction": (float, 0.5),
    "calibrate.max_rel_stderr": (float, 0.05),
    "calibrate.max_fit_rms": (float, 0.02),
    "local_time.window": (int, 0),
    # excursion measure law of sigma
    "excursion.trees": (int, 0),
    "excursion.lambdas": (_floats, (0.5, 2.0)),
    "excursion.deriv_lambdas": (_floats, (0.5, 1.0, 2.0)),
    "excursion.tol_rel": (float, 0.05),
    "excursion.n_se": (float, 3.0),
    # tagged fragment mass
    "ngh.trees": (int, 0),
    "ngh.lambda": (float, 0.5),
    "ngh.p": (_floats, (0.0, 1.0)),
    "ngh.t": (_floats, (0.1, 0.2, 0.4)),
    "ngh.tol_rel": (float, 0.10),
    "ngh.n_se": (float, 3.0),
    # dislocation functional
    "ngg.trees": (int, 2**22),
    "ngg.lambda": (float, 1.0),
    "ngg.rate": (float, 1.0),
    "ngg.delta": (float, 0.5),
    "ngg.G": (str, "second_mass_indicator"),
    "ngg.level_offset": (float, 0.5),
    "ngg.samples": (int, 200_000),
    "ngg.v_min": (float, 1e-9),
    "ngg.v_max": (float, 10.0),
    "ngg.tol_rel": (float, 0.10),
    "ngg.n_se": (float, 3.0),
    # local time normalization
    "local_time.trees": (int, 0),
    "local_time.t": (_floats, (0.1, 0.2, 0.4)),
    "local_time.tol_rel": (float, 0.05),
    # ODE
    "ode.gammas": (_floats, (0.5, 1.0, 2.0)),
    "ode.t_max": (float, 5.0),
    "ode.step": (float, 1e-3),
    "ode.tol_abs": (float, 1e-6),
    "ode.order_min": (float, 3.5),
    "ode.order_max": (float, 4.5),
    "ode_mc.trees": (int, 0),
    "ode_mc.lambda": (float, 1.0),
    "ode_mc.gamma": (float, 1.0),
    "ode_mc.t": (_floats, (0.1, 0.2, 0.4)),
    "ode_mc.tol_rel": (float, 0.10),
    "ode_mc.n_se": (float, 3.0),
    # size-conditioned trees
    "conditioned.trees": (int, 1000),
    "conditioned.window": (float, 0.01),
    "conditioned.t": (float, 0.0),           # 0 -> half the median height
    "conditioned.min_vertices": (int, 64),   # smallest resolvable fragment
    "conditioned.eps_per_decade": (int, 4),
    "conditioned.max_attempts": (int, 10**7),
    "small_fragments.tol_rel": (float, 0.10),
    "poisson_counts.bins": (int, 0),         # 0 -> group by exact local time
    "poisson_counts.min_mean": (float, 1.0),
    "poisson_counts.dispersion_min": (float, 0.8),
    "poisson_counts.dispersion_max": (float, 1.2),
    # fragmentation property
    "frag_property.t": (float, 0.5),
    "frag_property.t_prime": (float, 0.5),
    "frag_property.buckets": (int, 10),
    "frag_property.p_min": (float, 0.01),
    "frag_property.min_pass": (int, 9),
    # total progeny tail
    "tails.trees": (int, 10**6),
    "tails.cap": (int, 10**7),
    "tails.tol": (float, 0.05),
    "tails.decades": (float, 2.0),
    "tails.min_exceed": (int, 100),
    # outputs
    "output.summary_csv": (str, ""),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def alpha(self) -> float:
        return self.values["alpha"]

    @property
    def n0(self) -> int:
        return self.values["n0"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def lambda0(self) -> float:
        return self.values["lambda0"]

    def trees_for(self, section: str) -> int:
        """Per-section tree count, falling back to the global one."""
        n = self.values.get(f"{section}.trees", 0)
        return n if n > 0 else self.values["trees"]

    def damping_rates(self) -> list:
        v = self.values
        return [
            v["lambda0"], *v["excursion.lambdas"], *v["excursion.deriv_lambdas"],
            v["ngh.lambda"], v["ngg.lambda"], v["ode_mc.lambda"],
        ]

    def cap(self) -> int:
        """Shared overflow cap so every suite sees the same trees."""
        return math.ceil(30.0 * self.n0 / min(self.damping_rates()))

    def replace(self, **changes) -> RunConfig:
        merged = dict(self.values)
        for key, value in changes.items():
            merged[key.replace("__", ".")] = value
        return validate(merged)


def parse_config(text: str) -> RunConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw[key]!r} ({exc})") from None
        else:
            values[key] = default
    return validate(values)


def validate(values: dict) -> RunConfig:
    missing = [k for k in REQUIRED if values.get(k) is None]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    unknown = sorted(set(values) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    full = {k: d for k, (_, d) in SCHEMA.items()}
    full.update(values)
    if not 1.0 < full["alpha"] < 2.0:
        raise ConfigError(f"alpha must lie in the open interval (1, 2), got {full['alpha']}")
    if not full["lambda0"] > 0:
        raise ConfigError(f"lambda0 must be > 0, got {full['lambda0']}")
    for key in ("n0", "trees", "workers", "block_size", "conditioned.trees", "tails.trees"):
        if full[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {full[key]}")
    if any(x < 0 for k in ("excursion.lambdas", "ngh.p", "ngh.t", "local_time.t") for x in full[k]):
        raise ConfigError("grids must be non-negative")
    if min(RunConfig(full).damping_rates()) <= 0:
        raise ConfigError("all damping rates must be > 0")
    return RunConfig(full)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
