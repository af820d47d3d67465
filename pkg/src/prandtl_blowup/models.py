"""Core data models for the Prandtl axis laboratory."""

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Optional


class ConfigError(ValueError):
    """A run configuration is malformed or out of range."""


class Scheme(Enum):
    """Time integration scheme of the axis solver."""
    IMEX1 = "imex1"  # implicit Euler diffusion, explicit Euler nonlocal terms
    IMEX2 = "imex2"  # variable-step SBDF2, bootstrapped by one IMEX1 step


class Formulation(Enum):
    """Which unknown the solver evolves."""
    B = "b"  # b = -du/dx on the axis, a reconstructed as b + phi
    A = "a"  # shifted unknown a, with forcing F and linear term L


class ProfileKind(Enum):
    """Shape of the initial datum a0."""
    GAUSSIAN_BUMP = "gaussian_bump"  # A y^2 exp(-y^2)
    CUSTOM = "custom"                # tabulated profile, scaled by A


class Outcome(Enum):
    """Terminal condition of a run."""
    BLEWUP = "blewup"
    REACHED_T_MAX = "reached_t_max"
    MIN_PRINCIPLE_VIOLATION = "min_principle_violation"


def _json_float(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


@dataclass(frozen=True)
class LiftParams:
    """Euler amplitude kappa of the trace U^E = kappa sin x."""
    kappa: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")


@dataclass(frozen=True)
class WeightSpec:
    """Parameters of the piecewise weight (linear / quadratic / power-law tail)."""
    r: float = 2.0           # tail exponent, > 1
    B: float = 50.0          # tail scale, > 1
    Q: float = 1.0           # glueing point of the quadratic and the tail
    epsilon: float = 0.01    # linearization point of the quadratic near the origin
    M: Optional[float] = None     # cutoff onset, defaults to 1 - 1/(4r+2)
    beta: Optional[float] = None  # defaults to (2r+1)/(2r+2)

    def __post_init__(self):
        # defaults only make sense for an admissible exponent; build_weight rejects the rest
        if math.isfinite(self.r) and self.r > 1:
            if self.M is None:
                object.__setattr__(self, "M", self.Q - 1.0 / (4.0 * self.r + 2.0))
            if self.beta is None:
                object.__setattr__(self, "beta", (2.0 * self.r + 1.0) / (2.0 * self.r + 2.0))

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "B": self.B,
            "Q": self.Q,
            "epsilon": self.epsilon,
            "M": self.M,
            "beta": self.beta,
        }


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and stopping parameters of a run.

    kappa is not repeated here: it travels with LiftParams.
    """
    y_max: float = 40.0
    n: int = 4000
    scheme: Scheme = Scheme.IMEX2
    formulation: Formulation = Formulation.B
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    safety: float = 0.2
    blowup_threshold: float = 1e6
    t_max: float = 50.0
    far_field_tolerance: float = 1e-6
    min_principle_constant: float = 1.0
    samples: int = 200
    probes: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)

    def __post_init__(self):
        if not (self.dt_min > 0 and self.dt_init > self.dt_min):
            raise ValueError(f"need 0 < dt_min < dt_init, got dt_min={self.dt_min}, dt_init={self.dt_init}")
        if not self.blowup_threshold >= 1e3:
            raise ValueError(f"blowup_threshold must be >= 1e3, got {self.blowup_threshold}")
        if not 0 < self.safety <= 1:
            raise ValueError(f"safety must lie in (0, 1], got {self.safety}")
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.far_field_tolerance <= 0 or self.min_principle_constant <= 0:
            raise ValueError("far_field_tolerance and min_principle_constant must be positive")

    def to_dict(self) -> dict:
        return {
            "y_max": self.y_max,
            "n": self.n,
            "scheme": self.scheme.value,
            "formulation": self.formulation.value,
            "dt_init": self.dt_init,
            "dt_min": self.dt_min,
            "safety": self.safety,
            "blowup_threshold": self.blowup_threshold,
            "t_max": self.t_max,
            "far_field_tolerance": self.far_field_tolerance,
            "min_principle_constant": self.min_principle_constant,
            "samples": self.samples,
            "probes": list(self.probes),
        }


@dataclass
class LiftCheck:
    """One inequality of the lift suite with its worst signed margin."""
    name: str
    margin: float
    t: Optional[float] = None
    y: Optional[float] = None
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "margin": _json_float(self.margin),
            "t": _json_float(self.t),
            "y": _json_float(self.y),
            "passed": self.passed,
        }


@dataclass
class LiftReport:
    """Outcome of the lift property suite."""
    kappa: float
    checks: list[LiftCheck] = field(default_factory=list)
    c_kappa: float = 0.0            # measured sup phi / (1 + t)
    c_kappa_reference: float = 0.0  # max(kappa, kappa^2)
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> Optional[LiftCheck]:
        for check in self.checks:
            if check.name == name:
                return check
        return None

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "passed": self.passed,
            "c_kappa": _json_float(self.c_kappa),
            "c_kappa_reference": _json_float(self.c_kappa_reference),
            "tolerance": self.tolerance,
            "checks": {c.name: c.to_dict() for c in self.checks},
        }


@dataclass
class ConditionRecord:
    """A sampled structural condition of the weight."""
    condition: str
    margin: float
    location: Optional[float] = None
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "margin": _json_float(self.margin),
            "location": _json_float(self.location),
            "passed": self.passed,
        }


@dataclass
class Certificate:
    """Dense-sampling certificate of every weight condition."""
    conditions: list[ConditionRecord] = field(default_factory=list)
    samples: int = 0
    tail_ratio: float = 0.0                 # r / (r + 1)
    tail_ratio_deviation: float = 0.0       # max |g'^2/(g g'') - r/(r+1)| over samples
    constants: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def get(self, condition: str) -> Optional[ConditionRecord]:
        for record in self.conditions:
            if record.condition == condition:
                return record
        return None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "tail_ratio": self.tail_ratio,
            "tail_ratio_deviation": self.tail_ratio_deviation,
            "constants": {k: _json_float(v) for k, v in self.constants.items()},
            "conditions": [c.to_dict() for c in self.conditions],
        }


@dataclass
class BlowupReport:
    """Terminal summary of a run."""
    outcome: Outcome
    t_star: Optional[float]          # detected time, None unless the run blew up
    final_time: float
    final_max_abs_a: float
    min_a_over_run: float
    steps: int = 0
    final_dt: float = 0.0
    doubling_times: list[float] = field(default_factory=list)
    doubling_decreasing: bool = False  # strictly decreasing over the final 10 doublings
    max_far_field_gradient: float = 0.0
    amplitude: Optional[float] = None
    trajectory_file: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "t_star": _json_float(self.t_star),
            "final_time": _json_float(self.final_time),
            "final_max_abs_a": _json_float(self.final_max_abs_a),
            "min_a_over_run": _json_float(self.min_a_over_run),
            "steps": self.steps,
            "final_dt": _json_float(self.final_dt),
            "doubling_times": [_json_float(d) for d in self.doubling_times],
            "doubling_decreasing": self.doubling_decreasing,
            "max_far_field_gradient": _json_float(self.max_far_field_gradient),
            "amplitude": _json_float(self.amplitude),
            "trajectory_file": self.trajectory_file,
        }


# ---------------------------------------------------------------------------
# Run configuration (flat, strictly validated)
# ---------------------------------------------------------------------------

_FLOAT_KEYS = {
    "kappa", "y_max", "dt_init", "dt_min", "t_max", "safety", "blowup_threshold",
    "far_field_tolerance", "min_principle_constant", "pilot_amplitude", "pilot_t_max",
    "threshold_margin",
}
_OPTIONAL_FLOAT_KEYS = {"weight_r", "weight_B", "weight_epsilon"}
_INT_KEYS = {"n", "samples", "certificate_samples", "seed", "random_fields"}
_FLOAT_LIST_KEYS = {"probes", "lift_times", "amplitudes", "kappas"}
_CHOICES = {
    "scheme": {s.value for s in Scheme},
    "formulation": {f.value for f in Formulation},
}


def _as_float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"'{key}' must be finite, got {value!r}")
    return value


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    return int(value)


@dataclass
class RunConfig:
    """Every knob of the command-line front end.

    Units: lengths in boundary-layer units, times in the same scaling; kappa is
    dimensionless. Lists are JSON arrays.
    """
    kappa: float = 1.0
    amplitude: float | str = 10.0      # bump amplitude A, or "auto" for the threshold helper
    profile: Optional[str] = None      # CSV with columns y, a0 (replaces the Gaussian bump)
    y_max: float = 40.0
    n: int = 4000
    scheme: str = "imex2"
    formulation: str = "b"
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    t_max: float = 50.0
    safety: float = 0.2
    blowup_threshold: float = 1e6
    far_field_tolerance: float = 1e-6
    min_principle_constant: float = 1.0
    samples: int = 200
    probes: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    weight: Optional[str] = "paper-default"  # None disables Lyapunov tracking
    weight_r: Optional[float] = None
    weight_B: Optional[float] = None
    weight_epsilon: Optional[float] = None
    lift_times: list[float] = field(default_factory=lambda: [0.0, 0.1, 1.0, 5.0, 10.0])
    certificate_samples: int = 100_000
    pilot_amplitude: float = 10.0
    pilot_t_max: float = 0.5
    threshold_margin: float = 1.0
    amplitudes: list[float] = field(default_factory=list)
    kappas: list[float] = field(default_factory=list)
    seed: int = 0
    random_fields: int = 100
    out: str = "out"

    def __post_init__(self):
        if self.kappa < 0:
            raise ConfigError(f"'kappa' must be >= 0, got {self.kappa}")
        if isinstance(self.amplitude, str):
            if self.amplitude != "auto":
                raise ConfigError(f"'amplitude' must be a number or \"auto\", got {self.amplitude!r}")
        elif self.amplitude < 0:
            raise ConfigError(f"'amplitude' must be >= 0, got {self.amplitude}")
        if self.weight not in (None, "paper-default"):
            raise ConfigError(f"'weight' must be \"paper-default\" or null, got {self.weight!r}")
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"'{key}' must be one of {sorted(allowed)}, got {getattr(self, key)!r}")
        if self.threshold_margin < 1:
            raise ConfigError(f"'threshold_margin' must be >= 1, got {self.threshold_margin}")
        if self.random_fields < 1 or self.certificate_samples < 1:
            raise ConfigError("'random_fields' and 'certificate_samples' must be positive")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key '{key}'")
            if key in _FLOAT_KEYS:
                kwargs[key] = _as_float(key, value)
            elif key in _OPTIONAL_FLOAT_KEYS:
                kwargs[key] = None if value is None else _as_float(key, value)
            elif key in _INT_KEYS:
                kwargs[key] = _as_int(key, value)
            elif key in _FLOAT_LIST_KEYS:
                if not isinstance(value, list):
                    raise ConfigError(f"'{key}' must be a list of numbers")
                kwargs[key] = [_as_float(key, v) for v in value]
            elif key == "amplitude":
                kwargs[key] = value if value == "auto" else _as_float(key, value)
            elif key in ("profile", "weight"):
                if value is not None and not isinstance(value, str):
                    raise ConfigError(f"'{key}' must be a string or null, got {value!r}")
                kwargs[key] = value
            else:
                if not isinstance(value, str):
                    raise ConfigError(f"'{key}' must be a string, got {value!r}")
                kwargs[key] = value
        return cls(**kwargs)

    # -- views consumed by the numerical modules --------------------------------

    def lift_params(self, kappa: Optional[float] = None) -> LiftParams:
        return LiftParams(kappa=self.kappa if kappa is None else kappa)

    def solver_config(self, t_max: Optional[float] = None) -> SolverConfig:
        try:
            return SolverConfig(
                y_max=self.y_max,
                n=self.n,
                scheme=Scheme(self.scheme),
                formulation=Formulation(self.formulation),
                dt_init=self.dt_init,
                dt_min=self.dt_min,
                safety=self.safety,
                blowup_threshold=self.blowup_threshold,
                t_max=self.t_max if t_max is None else t_max,
                far_field_tolerance=self.far_field_tolerance,
                min_principle_constant=self.min_principle_constant,
                samples=self.samples,
                probes=tuple(self.probes),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def weight_spec(self) -> Optional[WeightSpec]:
        """The weight to track, or None when Lyapunov tracking is off."""
        if self.weight is None:
            return None
        base = WeightSpec()
        return WeightSpec(
            r=base.r if self.weight_r is None else self.weight_r,
            B=base.B if self.weight_B is None else self.weight_B,
            epsilon=base.epsilon if self.weight_epsilon is None else self.weight_epsilon,
        )
