"""Declarative scenario runner for the call-rejection experiments.

One victim publishes its name; a pool of correspondents discovers it and
calls over a long horizon while an attacker floods the victim's prime
address for a few hours daily. Correspondents who already hold a
disposable address always get through; first contacts fail exactly when
they coincide with an attack window.

Two coincidence models are provided. The "paper" mode applies a fixed
per-call rejection probability for first contacts, (hours/12)^2 by
default. The "explicit" mode draws a call time in the call window and
tests membership in the drawn attack window, which yields a higher
rejection rate (hours/12); the two disagree by construction, so the mode
is part of the configuration rather than a hidden choice.
"""

import dataclasses
import json
import multiprocessing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .addressing import Ipv6Address, NameService
from .adversary import FOUR_HOUR_SCHEDULE, SIX_HOUR_SCHEDULE, AttackSchedule
from .caller import CallerNode, StartCall
from .crypto import CertificateAuthority, Ed25519Scheme
from .energy import DEFAULT_PARAMS, Battery, EnergyAccount, RadioState
from .engine import EPOCH, LinkModel, SimTime, Simulator
from .home_agent import HomeAgent
from .mobile_host import CallOutcome, MobileHost, Mode
from .stats import sample_mean_std

HOME_PREFIX = 0x20010DB800010000
CORRESPONDENT_PREFIX = 0x20010DB800CC0000
VISITED_PREFIX = 0x20010DB801000000

CALL_LOG_HEADER = "day,correspondent,had_disposable,outcome,time"
DAILY_HEADER = "day,calls,rejected,rejection_rate"
BATTERY_HEADER = "time,remaining,state"


class ConfigError(Exception):
    """Scenario configuration failed validation; message lists the problems."""


class RejectionMode(Enum):
    PAPER_FAITHFUL = "paper"
    EXPLICIT_TIME = "explicit"


@dataclass(slots=True)
class ScenarioConfig:
    seed: int = 0
    horizon_days: int = 1000
    correspondents: int = 200
    daily_call_probability: float = 1.0 / 200.0
    call_window_start: float = 8.0
    call_window_end: float = 20.0
    attack_hours: int | None = 4
    attack_start_choices: tuple[int, ...] | None = None
    rejection_mode: RejectionMode = RejectionMode.PAPER_FAITHFUL
    rejection_probability: float | None = None
    mobility_mode: Mode = Mode.BIDIRECTIONAL_TUNNELING
    latency_s: float = 0.05
    loss_probability: float = 0.0
    pki_enabled: bool = True
    energy_enabled: bool = False
    sleep_timeout_s: float = 10.0
    detection_threshold_pps: float = 10.0
    detection_window_s: float = 10.0
    oob_retry_delay_days: int | None = None
    victim_fqdn: str = "alice.home.example"

    def schedule(self) -> AttackSchedule | None:
        if self.attack_hours is None:
            return None
        choices = self.attack_start_choices
        if choices is None:
            choices = (8, 12, 16) if self.attack_hours == 4 else (8, 14)
        return AttackSchedule(daily_hours=self.attack_hours,
                              start_choices=tuple(choices))

    def effective_rejection_probability(self) -> float:
        """Per-call coincidence probability used in paper mode."""
        if self.rejection_probability is not None:
            return self.rejection_probability
        schedule = self.schedule()
        return schedule.paper_rejection_probability() if schedule else 0.0

    def validate(self) -> None:
        problems = []
        if self.horizon_days < 0:
            problems.append("horizon_days must be >= 0")
        if self.correspondents < 0:
            problems.append("correspondents must be >= 0")
        if not 0.0 <= self.daily_call_probability <= 1.0:
            problems.append("daily_call_probability outside [0,1]")
        if not (0.0 <= self.call_window_start < self.call_window_end <= 24.0):
            problems.append("call window must satisfy 0 <= start < end <= 24")
        if self.rejection_probability is not None and not (
                0.0 <= self.rejection_probability <= 1.0):
            problems.append("rejection_probability outside [0,1]")
        if self.latency_s < 0:
            problems.append("latency_s must be >= 0")
        if not 0.0 <= self.loss_probability <= 1.0:
            problems.append("loss_probability outside [0,1]")
        if self.sleep_timeout_s <= 0:
            problems.append("sleep_timeout_s must be positive")
        if self.detection_threshold_pps <= 0 or self.detection_window_s <= 0:
            problems.append("detection parameters must be positive")
        if self.oob_retry_delay_days is not None and self.oob_retry_delay_days < 1:
            problems.append("oob_retry_delay_days must be >= 1")
        if not self.victim_fqdn:
            problems.append("victim_fqdn must be non-empty")
        if self.attack_hours is not None:
            try:
                self.schedule()
            except ValueError as exc:
                problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))

    # -- config file round trip --------------------------------------------

    def to_mapping(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ScenarioConfig":
        if not isinstance(mapping, dict):
            raise ConfigError("config file must hold a key/value mapping")
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = dict(mapping)
        if "rejection_mode" in kwargs and kwargs["rejection_mode"] is not None:
            try:
                kwargs["rejection_mode"] = RejectionMode(kwargs["rejection_mode"])
            except ValueError:
                raise ConfigError(
                    "rejection_mode must be 'paper' or 'explicit'") from None
        if "mobility_mode" in kwargs and kwargs["mobility_mode"] is not None:
            try:
                kwargs["mobility_mode"] = Mode(kwargs["mobility_mode"])
            except ValueError:
                raise ConfigError(
                    "mobility_mode must be 'route_optimization' or "
                    "'bidirectional_tunneling'") from None
        if kwargs.get("attack_start_choices") is not None:
            kwargs["attack_start_choices"] = tuple(kwargs["attack_start_choices"])
        config = cls(**kwargs)
        config.validate()
        return config


def fig3_config(variant: str, seed: int = 0, days: int = 1000,
                rejection_mode: RejectionMode = RejectionMode.PAPER_FAITHFUL,
                ) -> ScenarioConfig:
    """Preset for the two published 1000-day attack experiments."""
    if variant not in ("4h", "6h"):
        raise ConfigError("fig3 variant must be '4h' or '6h'")
    hours = 4 if variant == "4h" else 6
    return ScenarioConfig(seed=seed, horizon_days=days, attack_hours=hours,
                          rejection_mode=rejection_mode)


@dataclass(frozen=True, slots=True)
class CallRecord:
    day: int
    correspondent_id: int
    had_disposable: bool
    outcome: CallOutcome
    time: SimTime

    def csv_row(self) -> str:
        return (f"{self.day},{self.correspondent_id},"
                f"{'true' if self.had_disposable else 'false'},"
                f"{self.outcome.value},{self.time.hhmm()}")


@dataclass(slots=True)
class DailyStat:
    day: int
    calls: int
    rejected: int

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.calls if self.calls else 0.0


@dataclass(slots=True)
class Metrics:
    total_calls: int
    rejected_calls: int
    rejection_rate: float
    daily: list[DailyStat]
    counters: dict
    energy: dict | None


@dataclass(slots=True)
class ScenarioResult:
    config: ScenarioConfig
    metrics: Metrics
    records: list[CallRecord]
    battery_series: list[tuple[float, float, str]]


class _Recorder:
    """Collects records for the day in flight; sorted before appending."""

    def __init__(self):
        self.current: list[CallRecord] = []

    def add(self, record: CallRecord) -> None:
        self.current.append(record)

    def drain(self) -> list[CallRecord]:
        day_records = sorted(self.current,
                             key=lambda r: (r.time.micros, r.correspondent_id))
        self.current = []
        return day_records


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    config.validate()
    sim = Simulator(config.seed, LinkModel(config.latency_s,
                                           config.loss_probability))
    names = NameService()
    scheme = Ed25519Scheme() if config.pki_enabled else None
    ca = CertificateAuthority(scheme, sim.rng) if config.pki_enabled else None
    energy = None
    if config.energy_enabled:
        energy = EnergyAccount(Battery(), DEFAULT_PARAMS,
                               config.sleep_timeout_s, EPOCH)
    agent = HomeAgent(sim, "home-agent", HOME_PREFIX)
    victim = MobileHost(sim, "victim", config.victim_fqdn, names,
                        mode=config.mobility_mode, scheme=scheme, ca=ca,
                        pki_required=config.pki_enabled, energy=energy,
                        detection_threshold_pps=config.detection_threshold_pps,
                        detection_window_s=config.detection_window_s)
    victim.attach(agent, VISITED_PREFIX)
    correspondents = []
    for i in range(config.correspondents):
        fqdn = f"corr{i:04d}.peers.example"
        keys = scheme.generate(sim.rng) if scheme else None
        cert = ca.issue(fqdn, keys.public) if ca else None
        correspondents.append(CallerNode(
            sim, f"corr-{i:04d}", fqdn,
            Ipv6Address(CORRESPONDENT_PREFIX, i + 2), names,
            scheme=scheme, keys=keys, certificate=cert, ca=ca,
            require_signed_response=config.pki_enabled))

    schedule = config.schedule()
    p_reject = config.effective_rejection_probability()
    recorder = _Recorder()

    def on_start_call(node: CallerNode, token: StartCall) -> None:
        t0 = sim.now
        had = node.has_address_for(token.target_fqdn)
        if not had and token.coincides_with_attack:
            # prime blocked: the request is silently dropped, the call dies
            recorder.add(CallRecord(day=token.day,
                                    correspondent_id=token.correspondent_id,
                                    had_disposable=False,
                                    outcome=CallOutcome.REJECTED_PRIME_BLOCKED,
                                    time=t0))
            return
        node.place_call(
            token.target_fqdn,
            lambda outcome: recorder.add(CallRecord(
                day=token.day, correspondent_id=token.correspondent_id,
                had_disposable=had, outcome=outcome, time=t0)))

    for node in correspondents:
        node.on_start_call = on_start_call

    records: list[CallRecord] = []
    daily: list[DailyStat] = []
    battery_series: list[tuple[float, float, str]] = []
    oob_due: dict[int, list[int]] = {}
    window_hours = config.call_window_end - config.call_window_start

    for day in range(config.horizon_days):
        for corr_id in oob_due.pop(day, []):
            hoa = victim.grant_out_of_band(correspondents[corr_id].fqdn)
            if hoa is not None:
                correspondents[corr_id].learn_address(config.victim_fqdn, hoa)
        window_start = schedule.draw_start(sim.rng) if schedule else None
        for i in range(config.correspondents):
            if sim.rng.random() >= config.daily_call_probability:
                continue
            hour = config.call_window_start + sim.rng.random() * window_hours
            slack = sim.rng.random()  # paper-mode coincidence draw
            if config.rejection_mode is RejectionMode.PAPER_FAITHFUL:
                coincides = slack < p_reject
            else:
                coincides = (window_start is not None
                             and schedule.covers(window_start, hour))
            sim.call_at(SimTime.at(day, hour), correspondents[i].node_id,
                        StartCall(target_fqdn=config.victim_fqdn, day=day,
                                  correspondent_id=i,
                                  coincides_with_attack=coincides))
        sim.run_until(SimTime.at(day + 1, 0))
        day_records = recorder.drain()
        records.extend(day_records)
        rejected_today = sum(
            1 for r in day_records
            if r.outcome is CallOutcome.REJECTED_PRIME_BLOCKED)
        daily.append(DailyStat(day=day, calls=len(day_records),
                               rejected=rejected_today))
        if config.oob_retry_delay_days is not None:
            for r in day_records:
                if r.outcome is CallOutcome.REJECTED_PRIME_BLOCKED:
                    oob_due.setdefault(day + config.oob_retry_delay_days,
                                       []).append(r.correspondent_id)
        if energy is not None:
            energy.advance(sim.now)
            state = ("dead" if energy.dead
                     else energy.state_at(sim.now).value)
            battery_series.append((sim.now.seconds, energy.remaining, state))

    total = len(records)
    rejected = sum(1 for r in records
                   if r.outcome is CallOutcome.REJECTED_PRIME_BLOCKED)
    energy_summary = None
    if energy is not None:
        energy_summary = {
            "remaining": energy.remaining,
            "dead": energy.dead,
            "powersave_fraction": energy.powersave_fraction(sim.now),
        }
    metrics = Metrics(
        total_calls=total,
        rejected_calls=rejected,
        rejection_rate=(rejected / total) if total else 0.0,
        daily=daily,
        counters={
            "engine": dataclasses.asdict(sim.counters),
            "home_agent": dataclasses.asdict(agent.counters),
            "victim": dataclasses.asdict(victim.counters),
            "responder": {
                "grants": victim.responder.granted_total,
                "refusals": victim.responder.refusals,
                "notifications": len(victim.responder.notifications),
                "dropped_bad_signature": victim.responder.dropped_bad_signature,
            },
        },
        energy=energy_summary)
    return ScenarioResult(config=config, metrics=metrics, records=records,
                          battery_series=battery_series)


# -- CSV emission ------------------------------------------------------------


def write_call_log(path: Path | str, records: list[CallRecord]) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(CALL_LOG_HEADER + "\n")
        for record in records:
            handle.write(record.csv_row() + "\n")


def write_daily_series(path: Path | str, daily: list[DailyStat]) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(DAILY_HEADER + "\n")
        for stat in daily:
            handle.write(f"{stat.day},{stat.calls},{stat.rejected},"
                         f"{stat.rejection_rate:.6f}\n")


def write_battery_series(path: Path | str,
                         series: list[tuple[float, float, str]]) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(BATTERY_HEADER + "\n")
        for t, remaining, state in series:
            handle.write(f"{t:.3f},{remaining:.9f},{state}\n")


def write_metrics_json(path: Path | str, metrics: Metrics) -> None:
    payload = {
        "total_calls": metrics.total_calls,
        "rejected_calls": metrics.rejected_calls,
        "rejection_rate": metrics.rejection_rate,
        "counters": metrics.counters,
        "energy": metrics.energy,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


# -- multi-seed sweeps ------------------------------------------------------


@dataclass(slots=True)
class SeedSummary:
    seed: int
    total_calls: int
    rejected_calls: int
    rejection_rate: float
    daily_rejected: list[int]


@dataclass(slots=True)
class SweepResult:
    summaries: list[SeedSummary]
    mean_rejected: float
    std_rejected: float
    mean_rate: float
    std_rate: float

    def seed_averaged_daily(self) -> list[float]:
        if not self.summaries:
            return []
        horizon = len(self.summaries[0].daily_rejected)
        n = len(self.summaries)
        return [sum(s.daily_rejected[d] for s in self.summaries) / n
                for d in range(horizon)]


def _sweep_worker(args: tuple[ScenarioConfig, int]) -> SeedSummary:
    config, seed = args
    run = run_scenario(dataclasses.replace(config, seed=seed))
    return SeedSummary(seed=seed,
                       total_calls=run.metrics.total_calls,
                       rejected_calls=run.metrics.rejected_calls,
                       rejection_rate=run.metrics.rejection_rate,
                       daily_rejected=[d.rejected for d in run.metrics.daily])


def run_sweep(config: ScenarioConfig, seeds: list[int],
              jobs: int = 1) -> SweepResult:
    """Independent runs across seeds; aggregation is order-independent."""
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    config.validate()
    work = [(config, seed) for seed in sorted(seeds)]
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            summaries = pool.map(_sweep_worker, work)
    else:
        summaries = [_sweep_worker(item) for item in work]
    summaries.sort(key=lambda s: s.seed)
    rejected = [float(s.rejected_calls) for s in summaries]
    rates = [s.rejection_rate for s in summaries]
    mean_rejected, std_rejected = sample_mean_std(rejected)
    mean_rate, std_rate = sample_mean_std(rates)
    return SweepResult(summaries=summaries, mean_rejected=mean_rejected,
                       std_rejected=std_rejected, mean_rate=mean_rate,
                       std_rate=std_rate)
