"""Scripted stochastic patient simulator, reward function, and termination.

The simulated patient carries two latent scalars, motivation and
engagement, both clamped to [0, 1]. Each agent act nudges them by
profile-specific increments, then the patient samples a reply from a
weight table indexed by (agent-act category, motivation band,
engagement band). All dynamics constants live in
``data/patient_profiles.json`` so behaviour can be tuned without code
changes; the tables shipped there encode the qualitative profile
contrasts (e.g. premature solution-giving at low motivation provokes
sustain talk, emotion-eliciting acts at high engagement invite
feelings-sharing).

Randomness: the reply at turn ``t`` of an episode seeded ``s`` is drawn
from a generator derived from ``(s, t)``, so ``sim_step`` is a pure
function and identical seed + agent-act sequence always reproduces the
same conversation.

The module also defines the request/response wire format through which
an external (e.g. LLM-backed) patient simulator can be plugged in over
a local HTTP endpoint, plus a loopback stub that answers those requests
with the scripted simulator in-process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from .acts import (
    MAX_TURNS,
    AgentDialogueAct,
    EpisodeTrace,
    MasterState,
    Topic,
    UserDialogueAct,
    UserProfile,
)

PROFILE_CONFIG_VERSION = 1

#: Earliest turn at which GreetingClosing ends the episode; before that it
#: is read as an opening greeting.
CLOSING_MIN_TURN = 2

#: Agent acts grouped by conversational function; the response tables are
#: indexed by these categories rather than by the 13 individual acts.
ACT_CATEGORY = {
    AgentDialogueAct.AskCurrentEmotions: "elicit_emotion",
    AgentDialogueAct.EmpathicReaction: "support",
    AgentDialogueAct.NormalizeReassure: "support",
    AgentDialogueAct.AcknowledgeEncourage: "support",
    AgentDialogueAct.Backchannel: "support",
    AgentDialogueAct.AskInformation: "elicit_info",
    AgentDialogueAct.AskConsentValidation: "elicit_info",
    AgentDialogueAct.Reflection: "evoke",
    AgentDialogueAct.InviteShiftOutlook: "evoke",
    AgentDialogueAct.MedicalEducationGuidance: "advise",
    AgentDialogueAct.GiveSolution: "advise",
    AgentDialogueAct.PlanWithPatient: "plan",
    AgentDialogueAct.GreetingClosing: "frame",
}

CATEGORIES = tuple(sorted(set(ACT_CATEGORY.values())))
BANDS = ("low", "mid", "high")


class StepAfterTerminal(RuntimeError):
    """Raised when sim_step is called on an exhausted episode."""


class ProfileConfigError(ValueError):
    """Malformed or incomplete patient-profile configuration."""


def band(x: float) -> str:
    """Discretize a [0, 1] latent into low (<1/3), mid, or high (>2/3)."""
    if x < 1.0 / 3.0:
        return "low"
    if x > 2.0 / 3.0:
        return "high"
    return "mid"


@dataclass(frozen=True)
class RewardRules:
    """Per-turn reward constants and phase-gate thresholds.

    Gates are evaluated on the counters *before* the current user act is
    registered. Multiple matching rules stack within a turn.
    """

    change_talk: float = 5.0
    sustain_talk: float = -5.0
    feelings: float = 50.0
    info_after_emotions: float = 100.0
    realization_after_infos: float = 150.0
    planning_after_gates: float = 200.0
    info_gate_emotions: int = 2
    realization_gate_infos: int = 2
    planning_gate_infos: int = 2
    planning_gate_realizations: int = 1


DEFAULT_REWARD_RULES = RewardRules()


def reward(
    counters_before: MasterState,
    user_act: UserDialogueAct,
    agent_act: AgentDialogueAct,
    rules: RewardRules = DEFAULT_REWARD_RULES,
) -> float:
    r = 0.0
    if user_act is UserDialogueAct.ChangeUnhealthyBehavior:
        r += rules.change_talk
    if user_act is UserDialogueAct.SustainUnhealthyBehavior:
        r += rules.sustain_talk
    if user_act is UserDialogueAct.ShareFeelings:
        r += rules.feelings
    if (
        user_act is UserDialogueAct.SharePersonalInfo
        and counters_before.emotion_count >= rules.info_gate_emotions
    ):
        r += rules.info_after_emotions
    if (
        user_act is UserDialogueAct.RealizationUnderstanding
        and counters_before.info_count >= rules.realization_gate_infos
    ):
        r += rules.realization_after_infos
    if (
        agent_act is AgentDialogueAct.PlanWithPatient
        and counters_before.info_count >= rules.planning_gate_infos
        and counters_before.realization_count >= rules.planning_gate_realizations
    ):
        r += rules.planning_after_gates
    return r


def is_terminal(turn: int, agent_act: AgentDialogueAct) -> bool:
    """Episode end: the 40-turn cap, or a closing act from turn 2 on."""
    if turn >= MAX_TURNS:
        return True
    return agent_act is AgentDialogueAct.GreetingClosing and turn >= CLOSING_MIN_TURN


@dataclass(frozen=True)
class ProfileParams:
    """All dynamics constants for one patient profile.

    ``response_table`` maps every (category, motivation band, engagement
    band) triple to a non-negative weight vector over the 9 user-act
    slots (the NoAct slot is always zero).
    """

    profile: UserProfile
    initial_motivation: float
    initial_engagement: float
    motivation_drift: float
    motivation_gain: dict
    engagement_gain: dict
    gated_acts: frozenset
    engagement_gate: float
    backfire_fraction: float
    response_table: dict

    def response_weights(self, category: str, m_band: str, e_band: str) -> np.ndarray:
        return self.response_table[(category, m_band, e_band)]


@dataclass(frozen=True)
class SimState:
    """Immutable per-episode simulator state; advanced only by sim_step."""

    profile: UserProfile
    topic: Topic
    motivation: float
    engagement: float
    info_count: int
    emotion_count: int
    realization_count: int
    turn: int
    seed: int


def initial_sim_state(
    params: ProfileParams, topic: Topic, seed: int
) -> SimState:
    return SimState(
        profile=params.profile,
        topic=topic,
        motivation=params.initial_motivation,
        engagement=params.initial_engagement,
        info_count=0,
        emotion_count=0,
        realization_count=0,
        turn=0,
        seed=seed,
    )


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def sim_step(
    state: SimState, agent_act: AgentDialogueAct, params: ProfileParams
) -> tuple:
    """Advance the patient by one agent turn; returns (user_act, next state).

    Latent updates first (gates read the pre-update values), then the
    reply is sampled from the table row for the post-update bands.
    """
    if state.turn >= MAX_TURNS:
        raise StepAfterTerminal(f"episode already at turn {state.turn}")

    m_inc = params.motivation_gain.get(agent_act, 0.0)
    if agent_act in params.gated_acts:
        # Reflective acts only land when the patient is engaged; otherwise
        # they backfire at a fraction of the intended gain.
        if state.engagement > params.engagement_gate:
            pass
        else:
            m_inc = -m_inc * params.backfire_fraction
    e_inc = params.engagement_gain.get(agent_act, 0.0)

    motivation = _clamp01(state.motivation + m_inc + params.motivation_drift)
    engagement = _clamp01(state.engagement + e_inc)

    row = params.response_weights(
        ACT_CATEGORY[agent_act], band(motivation), band(engagement)
    )
    rng = np.random.default_rng(np.random.SeedSequence([state.seed, state.turn]))
    user_act = UserDialogueAct(int(rng.choice(len(row), p=row / row.sum())))

    next_state = replace(
        state,
        motivation=motivation,
        engagement=engagement,
        info_count=state.info_count + (user_act is UserDialogueAct.SharePersonalInfo),
        emotion_count=state.emotion_count + (user_act is UserDialogueAct.ShareFeelings),
        realization_count=state.realization_count
        + (user_act is UserDialogueAct.RealizationUnderstanding),
        turn=state.turn + 1,
    )
    return user_act, next_state


class ScriptedPatient:
    """Stateful convenience wrapper around sim_step for episode loops."""

    def __init__(self, params: ProfileParams, topic: Topic, seed: int):
        self._params = params
        self.state = initial_sim_state(params, topic, seed)
        self.seed = seed

    @property
    def profile(self) -> UserProfile:
        return self.state.profile

    @property
    def topic(self) -> Topic:
        return self.state.topic

    @property
    def turn(self) -> int:
        return self.state.turn

    def step(self, agent_act: AgentDialogueAct) -> UserDialogueAct:
        user_act, self.state = sim_step(self.state, agent_act, self._params)
        return user_act


# ---------------------------------------------------------------------------
# Profile configuration loading
# ---------------------------------------------------------------------------

def _parse_gain_map(raw: dict, where: str) -> dict:
    gains = {}
    for name, value in raw.items():
        try:
            act = AgentDialogueAct[name]
        except KeyError:
            raise ProfileConfigError(f"{where}: unknown agent act {name!r}")
        gains[act] = float(value)
    return gains


def _parse_weights(raw: dict, where: str) -> np.ndarray:
    row = np.zeros(len(UserDialogueAct))
    for name, value in raw.items():
        try:
            act = UserDialogueAct[name]
        except KeyError:
            raise ProfileConfigError(f"{where}: unknown user act {name!r}")
        if act is UserDialogueAct.NoAct:
            raise ProfileConfigError(f"{where}: NoAct cannot carry response weight")
        if value < 0:
            raise ProfileConfigError(f"{where}: negative weight for {name}")
        row[int(act)] = float(value)
    if not (row > 0).any():
        raise ProfileConfigError(f"{where}: all-zero weight row")
    return row


def _resolve_rules(rules: list, profile_name: str) -> dict:
    """Expand wildcard rules into a dense (category, band, band) table.

    Rules are matched first-to-last; every combination must resolve.
    """
    table = {}
    for category in CATEGORIES:
        for m_band in BANDS:
            for e_band in BANDS:
                row = None
                for i, rule in enumerate(rules):
                    if rule["category"] != category:
                        continue
                    if rule["motivation"] not in ("*", m_band):
                        continue
                    if rule["engagement"] not in ("*", e_band):
                        continue
                    row = _parse_weights(
                        rule["weights"], f"{profile_name}: rule {i} ({category})"
                    )
                    break
                if row is None:
                    raise ProfileConfigError(
                        f"{profile_name}: no response rule covers "
                        f"({category}, {m_band}, {e_band})"
                    )
                table[(category, m_band, e_band)] = row
    return table


def load_profile_params(path: Optional[Path] = None) -> dict:
    """Load ProfileParams for all profiles from a JSON config file.

    With no path, the packaged defaults are used. Returns a dict keyed
    by UserProfile.
    """
    if path is None:
        raw = json.loads(
            resources.files("mi_dialogue.data")
            .joinpath("patient_profiles.json")
            .read_text()
        )
    else:
        path = Path(path)
        if not path.exists():
            raise ProfileConfigError(f"profile config not found: {path}")
        raw = json.loads(path.read_text())

    if raw.get("version") != PROFILE_CONFIG_VERSION:
        raise ProfileConfigError(
            f"profile config version {raw.get('version')!r}, "
            f"expected {PROFILE_CONFIG_VERSION}"
        )
    out = {}
    for profile in UserProfile:
        try:
            cfg = raw["profiles"][profile.name]
        except KeyError:
            raise ProfileConfigError(f"missing profile {profile.name}")
        for key in ("initial_motivation", "initial_engagement", "response_rules"):
            if key not in cfg:
                raise ProfileConfigError(f"{profile.name}: missing field {key!r}")
        out[profile] = ProfileParams(
            profile=profile,
            initial_motivation=float(cfg["initial_motivation"]),
            initial_engagement=float(cfg["initial_engagement"]),
            motivation_drift=float(cfg.get("motivation_drift", 0.0)),
            motivation_gain=_parse_gain_map(
                cfg.get("motivation_gain", {}), f"{profile.name}.motivation_gain"
            ),
            engagement_gain=_parse_gain_map(
                cfg.get("engagement_gain", {}), f"{profile.name}.engagement_gain"
            ),
            gated_acts=frozenset(
                AgentDialogueAct[n] for n in cfg.get("engagement_gated_acts", [])
            ),
            engagement_gate=float(cfg.get("engagement_gate", 0.5)),
            backfire_fraction=float(cfg.get("backfire_fraction", 0.5)),
            response_table=_resolve_rules(cfg["response_rules"], profile.name),
        )
    return out


def replay_total(trace: EpisodeTrace, rules: RewardRules = DEFAULT_REWARD_RULES) -> float:
    """Recompute an episode's total reward from its act sequence alone."""
    counters = MasterState()
    total = 0.0
    for t in trace.turns:
        total += reward(counters, t.user_act, t.agent_act, rules)
        counters = counters.register(t.user_act)
    return total


# ---------------------------------------------------------------------------
# External-simulator adapter interface
# ---------------------------------------------------------------------------
#
# Wire format for plugging in an out-of-process patient simulator
# (e.g. LLM-backed) over a local HTTP endpoint:
#
#   POST /respond
#   request body   = AdapterRequest JSON (see to_json)
#   response body  = AdapterResponse JSON
#
# Only the interface and an in-process loopback stub live here; the HTTP
# client itself is intentionally not implemented.


@dataclass(frozen=True)
class AdapterRequest:
    """One turn sent to an external patient simulator.

    ``history`` lists the completed (agent act, user act) name pairs in
    chronological order, excluding the current agent act.
    """

    profile: str
    topic: str
    turn: int
    agent_act: str
    history: tuple

    def to_json(self) -> str:
        return json.dumps(
            {
                "profile": self.profile,
                "topic": self.topic,
                "turn": self.turn,
                "agent_act": self.agent_act,
                "history": [list(pair) for pair in self.history],
            }
        )

    @classmethod
    def from_json(cls, payload: str) -> "AdapterRequest":
        d = json.loads(payload)
        return cls(
            profile=d["profile"],
            topic=d["topic"],
            turn=int(d["turn"]),
            agent_act=d["agent_act"],
            history=tuple((a, u) for a, u in d["history"]),
        )


@dataclass(frozen=True)
class AdapterResponse:
    user_act: str

    def to_json(self) -> str:
        return json.dumps({"user_act": self.user_act})

    @classmethod
    def from_json(cls, payload: str) -> "AdapterResponse":
        return cls(user_act=json.loads(payload)["user_act"])


class SimulatorAdapter(Protocol):
    def respond(self, request: AdapterRequest) -> AdapterResponse: ...


class LoopbackAdapter:
    """Adapter stub answering requests with the scripted simulator."""

    def __init__(self, params: ProfileParams, topic: Topic, seed: int):
        self._params = params
        self._state = initial_sim_state(params, topic, seed)

    def respond(self, request: AdapterRequest) -> AdapterResponse:
        if request.turn != self._state.turn:
            raise ValueError(
                f"adapter at turn {self._state.turn}, request for {request.turn}"
            )
        user_act, self._state = sim_step(
            self._state, AgentDialogueAct[request.agent_act], self._params
        )
        return AdapterResponse(user_act=user_act.name)


class AdapterPatient:
    """Patient backed by any SimulatorAdapter; drop-in for ScriptedPatient."""

    def __init__(self, adapter: SimulatorAdapter, profile: UserProfile, topic: Topic):
        self._adapter = adapter
        self.profile = profile
        self.topic = topic
        self.turn = 0
        self._history: list = []

    def step(self, agent_act: AgentDialogueAct) -> UserDialogueAct:
        request = AdapterRequest(
            profile=self.profile.name,
            topic=self.topic.name,
            turn=self.turn,
            agent_act=agent_act.name,
            history=tuple(self._history),
        )
        response = self._adapter.respond(
            AdapterRequest.from_json(request.to_json())
        )
        user_act = UserDialogueAct[
            AdapterResponse.from_json(response.to_json()).user_act
        ]
        self._history.append((agent_act.name, user_act.name))
        self.turn += 1
        return user_act
