"""Run configuration: schema, parsing and conversion to model objects."""

from __future__ import annotations

import json
import sys
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import GuidanceError, InvalidParametersError
from .feedback import FeedbackConfig, OverrideWindow, SinePath, random_targets
from .integrator import METHODS, StepperConfig
from .model import Kappa, ModelParams, Scenario, SystemState, Vec2
from .openloop import ShootConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PRESETS = {"paper-default"}


class ConfigError(GuidanceError, ValueError):
    exit_code = 2


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


Pair = tuple[float, float]


class ParamsSection(_Strict):
    m_d: Optional[float] = None
    m_e: Optional[float] = None
    nu_d: Optional[float] = None
    nu_e: Optional[float] = None
    c_attract: Optional[float] = None
    c_repel: Optional[float] = None
    c_circ: Optional[float] = None
    delta_c: Optional[float] = None
    delta_1: Optional[float] = None
    delta_2: Optional[float] = None


class ScenarioSection(_Strict):
    params: ParamsSection = Field(default_factory=ParamsSection)
    u_d: Optional[Pair] = None
    u_e: Optional[Pair] = None
    v_d: Pair = (0.0, 0.0)
    v_e: Pair = (0.0, 0.0)
    target: Optional[Pair] = None
    t0: float = 0.0
    tf: float
    rho: float = 1e-4


class StepperSection(_Strict):
    method: str = "fixed-rk4"
    dt: float = 1e-3
    record_stride: int = 10
    separation_floor: float = 1e-6

    @field_validator("method")
    @classmethod
    def _known(cls, v):
        if v not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}")
        return v


class SimulateSection(_Strict):
    kappa: int = 0
    schedule: Optional[list[tuple[float, int]]] = None


class AsymptoticsSection(_Strict):
    window_start: float = 48.0
    speed_threshold: float = 0.70


class ShootSection(_Strict):
    kappa0: Optional[int] = None
    rho: Optional[float] = None
    epsilon_align: float = 1e-6
    max_iters: int = 80
    bracket: Optional[Pair] = None
    sigma1: float = 1.0
    sigma2: float = 1.0
    deviation_taus: list[float] = Field(default_factory=list)


class Shoot1Section(ShootSection):
    rho: Optional[float] = 1e-8
    t_on: Optional[float] = None


class CostCurveSection(_Strict):
    kappa0: Optional[int] = None
    rho: Optional[float] = 1e-8
    start: float = 30.0
    stop: float = 55.0
    step: float = 0.25
    workers: Optional[int] = None
    epsilon_align: float = 1e-6
    max_iters: int = 80


class OverrideSection(_Strict):
    t_start: float
    t_end: float
    kappa: int


class FeedbackSection(_Strict):
    a_bar: float = 0.4
    far_factor: float = 1.5
    rho_reach: float = 0.2
    sign_fallback: Literal["previous", 1, -1] = "previous"
    sample_period: float = 0.01
    stop_on_arrival: bool = True
    overrides: list[OverrideSection] = Field(default_factory=list)


class PathSection(_Strict):
    kind: Literal["random", "sine", "list"] = "random"
    count: int = 7
    radius: float = 8.0
    center: Optional[Pair] = None
    waypoints: list[Pair] = Field(default_factory=list)
    sine_x0: float = 8.0
    sine_x1: float = 48.0
    sine_amplitude: float = 2.0
    sine_wavelength: float = 20.0
    sine_points: int = 80


class RunConfig(_Strict):
    preset: Optional[str] = None
    seed: int = 0
    scenario: ScenarioSection
    stepper: StepperSection = Field(default_factory=StepperSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    asymptotics: AsymptoticsSection = Field(default_factory=AsymptoticsSection)
    shoot0: ShootSection = Field(default_factory=ShootSection)
    shoot1: Shoot1Section = Field(default_factory=Shoot1Section)
    cost_curve: CostCurveSection = Field(default_factory=CostCurveSection)
    feedback: FeedbackSection = Field(default_factory=FeedbackSection)
    path: PathSection = Field(default_factory=PathSection)

    @field_validator("preset")
    @classmethod
    def _preset(cls, v):
        if v is not None and v not in PRESETS:
            raise ValueError(f"unknown preset {v!r}; known: {sorted(PRESETS)}")
        return v

    @model_validator(mode="after")
    def _complete(self):
        if self.preset is None:
            s = self.scenario
            missing = [k for k in ("u_d", "u_e", "target") if getattr(s, k) is None]
            missing += [f"params.{k}" for k, v in s.params.model_dump().items() if v is None]
            if missing:
                raise ValueError(f"without a preset these scenario keys are required: {missing}")
        return self

    # conversion -----------------------------------------------------------

    def model_params(self) -> ModelParams:
        given = {k: v for k, v in self.scenario.params.model_dump().items() if v is not None}
        base = ModelParams.paper_default().to_dict() if self.preset else {}
        return ModelParams.from_dict({**base, **given})

    def scenario_obj(self) -> Scenario:
        s = self.scenario
        paper = Scenario.paper()
        u_d = s.u_d if s.u_d is not None else paper.initial.u_d
        u_e = s.u_e if s.u_e is not None else paper.initial.u_e
        target = s.target if s.target is not None else paper.target
        init = SystemState(s.t0, Vec2(*u_d), Vec2(*u_e), Vec2(*s.v_d), Vec2(*s.v_e))
        return Scenario(self.model_params(), init, Vec2(*target), rho=s.rho, t0=s.t0, tf=s.tf)

    def stepper_obj(self) -> StepperConfig:
        st = self.stepper
        return StepperConfig(dt=st.dt, method=st.method, record_stride=st.record_stride,
                             separation_floor=st.separation_floor)

    def shoot_config(self, section) -> ShootConfig:
        return ShootConfig(epsilon_align=section.epsilon_align,
                           bracket=getattr(section, "bracket", None),
                           max_iters=section.max_iters, rho=section.rho,
                           stepper=self.stepper_obj(),
                           sigma1=getattr(section, "sigma1", 1.0),
                           sigma2=getattr(section, "sigma2", 1.0))

    def feedback_config(self) -> FeedbackConfig:
        f = self.feedback
        return FeedbackConfig(a_bar=f.a_bar, far_factor=f.far_factor, rho_reach=f.rho_reach,
                              sign_fallback=f.sign_fallback, sample_period=f.sample_period,
                              overrides=tuple(OverrideWindow(o.t_start, o.t_end, o.kappa)
                                              for o in f.overrides),
                              stop_on_arrival=f.stop_on_arrival)

    def path_targets(self) -> list[Vec2]:
        p = self.path
        if p.kind == "list":
            if not p.waypoints:
                raise InvalidParametersError("path.kind = 'list' needs path.waypoints")
            return [Vec2(*w) for w in p.waypoints]
        if p.kind == "sine":
            return self.sine_path().waypoints(p.sine_points)
        center = p.center if p.center is not None else tuple(self.scenario_obj().initial.u_e)
        return random_targets(self.seed, p.count, p.radius, center)

    def sine_path(self) -> SinePath:
        p = self.path
        y0 = self.scenario_obj().initial.u_e.y
        return SinePath(p.sine_x0, p.sine_x1, y0, p.sine_amplitude, p.sine_wavelength)


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def load_mapping(text: str, fmt: str = "auto") -> dict:
    """Decode TOML or JSON text. ``auto`` tries JSON when the text starts with ``{``."""
    if fmt == "auto":
        fmt = "json" if text.lstrip().startswith("{") else "toml"
    try:
        if fmt == "json":
            return json.loads(text)
        return tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from None


def validate_mapping(data: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
        cfg.scenario_obj()
        cfg.stepper_obj()
        cfg.feedback_config()
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_describe(exc)}") from None
    except InvalidParametersError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return cfg


def parse_config(text: str, fmt: str = "auto") -> RunConfig:
    return validate_mapping(load_mapping(text, fmt))


def _coerce_scalar(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict, assignments: list[str]) -> tuple[dict, list[dict]]:
    """Apply ``dotted.key=value`` assignments; values are parsed as JSON when possible.

    Returns the updated mapping and a provenance list recording each
    override with its previous value.
    """
    data = json.loads(json.dumps(data))
    log = []
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        path = key.strip().split(".")
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {part!r} is not a section")
        value = _coerce_scalar(raw)
        log.append({"key": key, "value": value, "previous": node.get(path[-1]),
                    "source": "command line"})
        node[path[-1]] = value
    return data, log


def kappa0_or_none(value) -> int | None:
    return None if value is None else int(Kappa.coerce(value))
