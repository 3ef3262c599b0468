"""The three threat scenarios, realized as deterministic transforms
and generators acting on frames at the bus boundary.

fuzzing    shifts every legit throttle request in the window by a
           constant offset (re-encoded, ids and timing untouched).
replay     blinds the controller by overwriting the speed message
           payload with values recorded before the window, while the
           throttle request is pinned to the learned stationary value
           plus the offset.
injection  adds attacker throttle frames at a multiple of the legit
           rate, each carrying the learned stationary value plus the
           offset; legit frames are never modified.

All transforms are the identity outside [t_start, t_start + duration).
None of them consumes random numbers, so a run's noise stream is
independent of the attack kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .canbus import ATTACKER, ES, LEGIT, TR, Frame, decode_signal, encode_signal, make_frame
from .errors import AttackError, ConfigError

KIND_NONE = "none"
KIND_FUZZING = "fuzzing"
KIND_REPLAY = "replay"
KIND_INJECTION = "injection"
ATTACK_KINDS = (KIND_NONE, KIND_FUZZING, KIND_REPLAY, KIND_INJECTION)


@dataclass
class AttackConfig:
    kind: str = KIND_NONE
    t_start: float = 10.0          # s
    duration: float = 2.0          # s
    offset: float = 1e-6           # signal units of the target message
    rate_multiplier: int = 10      # injection only
    record_window: float = 2.0     # s, replay only
    target: str = "TR"

    def validate(self, control_period_ms: int) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.kind == KIND_NONE:
            return
        if not self.duration > 0.0:
            raise ConfigError("attack duration must be positive")
        if not math.isfinite(self.offset):
            raise ConfigError("attack offset must be finite")
        if self.target not in ("ES", "TR"):
            raise ConfigError(f"attack target must be ES or TR, got {self.target!r}")
        if self.kind == KIND_REPLAY:
            if self.t_start < self.record_window:
                raise ConfigError("replay needs t_start >= record_window to fill its buffer")
            if not self.record_window > 0.0:
                raise ConfigError("replay record window must be positive")
            if self.duration > self.record_window:
                raise ConfigError("replay duration must not exceed the recorded window")
        if self.kind in (KIND_REPLAY, KIND_INJECTION) and self.target != "TR":
            raise ConfigError(f"{self.kind} acts on the throttle request stream only")
        if self.kind == KIND_INJECTION:
            if self.rate_multiplier < 2:
                raise ConfigError("rate multiplier must be at least 2")
            if control_period_ms % self.rate_multiplier != 0:
                raise ConfigError(
                    "rate multiplier must divide the control period "
                    f"({control_period_ms} ms) to give a whole emission period"
                )


class _TrObserver:
    """Collects delivered legit throttle values for the learning phase."""

    def __init__(self, start_tick: int, window_ms: int = 1000):
        self.lo = start_tick - window_ms
        self.hi = start_tick
        self.values: list[float] = []

    def observe(self, tick: int, frame: Frame) -> None:
        if frame.id == TR.id and frame.origin == LEGIT and self.lo <= tick < self.hi:
            self.values.append(decode_signal(frame.payload, TR))

    def learned_mean(self) -> float:
        if not self.values:
            raise AttackError("no throttle observations available to learn from")
        return math.fsum(self.values) / len(self.values)


class AttackRuntime:
    """Deterministic state machine stepped by the simulation loop.

    Identity behavior; subclasses override the hooks they need.
    """

    def __init__(self, cfg: AttackConfig, control_period_ms: int):
        self.cfg = cfg
        self.control_period_ms = control_period_ms
        self.start_tick = round(cfg.t_start * 1000.0)
        self.end_tick = round((cfg.t_start + cfg.duration) * 1000.0)

    def in_window(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick

    def transform_es(self, frame: Frame, tick: int) -> Frame:
        return frame

    def transform_tr(self, frame: Frame, tick: int) -> Frame:
        return frame

    def injected_tr(self, tick: int) -> list[Frame]:
        return []

    def observe_delivered(self, tick: int, frame: Frame) -> None:
        pass


class NoAttack(AttackRuntime):
    pass


class FuzzAttack(AttackRuntime):
    """Constant additive perturbation of the targeted signal."""

    def _shift(self, frame: Frame, spec) -> Frame:
        value = decode_signal(frame.payload, spec)
        return frame.with_payload(encode_signal(value + self.cfg.offset, spec))

    def transform_tr(self, frame: Frame, tick: int) -> Frame:
        if self.cfg.target == "TR" and self.in_window(tick):
            return self._shift(frame, TR)
        return frame

    def transform_es(self, frame: Frame, tick: int) -> Frame:
        if self.cfg.target == "ES" and self.in_window(tick):
            return self._shift(frame, ES)
        return frame


class ReplayAttack(AttackRuntime):
    """Records both streams before the window, then replays the
    recorded speed values to the controller while pinning the
    throttle request."""

    def __init__(self, cfg: AttackConfig, control_period_ms: int):
        super().__init__(cfg, control_period_ms)
        record_ms = round(cfg.record_window * 1000.0)
        self.record_lo = self.start_tick - record_ms
        self.expected = record_ms // control_period_ms
        self.recorded_es: list[tuple[int, float]] = []
        self.recorded_tr: list[tuple[int, float]] = []
        self.cursor = 0
        self._learner = _TrObserver(self.start_tick)
        self._pinned: float | None = None

    def observe_delivered(self, tick: int, frame: Frame) -> None:
        self._learner.observe(tick, frame)
        if not self.record_lo <= tick < self.start_tick or frame.origin != LEGIT:
            return
        if frame.id == ES.id:
            self.recorded_es.append((tick, decode_signal(frame.payload, ES)))
        elif frame.id == TR.id:
            self.recorded_tr.append((tick, decode_signal(frame.payload, TR)))
        if len(self.recorded_es) > self.expected or len(self.recorded_tr) > self.expected:
            raise ConfigError("replay buffer overflow, recording window mismatch")

    def _pinned_value(self) -> float:
        if self._pinned is None:
            self._pinned = self._learner.learned_mean() + self.cfg.offset
        return self._pinned

    def transform_es(self, frame: Frame, tick: int) -> Frame:
        if not self.in_window(tick):
            return frame
        if tick == self.start_tick and len(self.recorded_es) != self.expected:
            raise AttackError(
                f"replay buffer incomplete at window start: "
                f"{len(self.recorded_es)}/{self.expected} samples"
            )
        if self.cursor >= len(self.recorded_es):
            raise AttackError("replay buffer exhausted before the window ended")
        value = self.recorded_es[self.cursor][1]
        self.cursor += 1
        return frame.with_payload(encode_signal(value, ES))

    def transform_tr(self, frame: Frame, tick: int) -> Frame:
        if not self.in_window(tick):
            return frame
        return frame.with_payload(encode_signal(self._pinned_value(), TR))


class InjectionAttack(AttackRuntime):
    """Emits attacker throttle frames on a faster cycle inside the
    window. At ticks shared with a legit emission the attacker frame
    is queued first, so the legit one is delivered last and briefly
    takes effect: the applied input alternates at the legit period."""

    def __init__(self, cfg: AttackConfig, control_period_ms: int):
        super().__init__(cfg, control_period_ms)
        self.period_ticks = control_period_ms // cfg.rate_multiplier
        self._learner = _TrObserver(self.start_tick)
        self._value: float | None = None
        self.emitted = 0

    def observe_delivered(self, tick: int, frame: Frame) -> None:
        self._learner.observe(tick, frame)

    def injected_tr(self, tick: int) -> list[Frame]:
        if not self.in_window(tick) or (tick - self.start_tick) % self.period_ticks:
            return []
        if self._value is None:
            self._value = self._learner.learned_mean() + self.cfg.offset
        self.emitted += 1
        return [make_frame(TR, self._value, tick, ATTACKER)]


def build_attack(cfg: AttackConfig, control_period_ms: int) -> AttackRuntime:
    cfg.validate(control_period_ms)
    runtime = {
        KIND_NONE: NoAttack,
        KIND_FUZZING: FuzzAttack,
        KIND_REPLAY: ReplayAttack,
        KIND_INJECTION: InjectionAttack,
    }[cfg.kind]
    return runtime(cfg, control_period_ms)
