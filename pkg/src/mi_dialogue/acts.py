"""Dialogue-act taxonomies, patient profiles, and state encodings.

This module is the shared vocabulary of the whole package: the 13 agent
acts and 9 user acts (8 real acts plus a pre-first-turn sentinel), the
three patient profiles and topics, the per-turn state objects, and the
fixed-width feature encodings consumed by the policy networks.

Act indices are frozen; ``data/act_taxonomy.json`` pins the same
name <-> index mapping as a versioned, human-readable record so that
checkpoints stay interpretable across releases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

TAXONOMY_VERSION = 1

MAX_TURNS = 40
CONTEXT_PAIRS = 3
MASTER_COUNT_CAP = 10


class AgentDialogueAct(IntEnum):
    """The 13 therapist dialogue acts (8 task-oriented, 5 social)."""

    AskConsentValidation = 0
    MedicalEducationGuidance = 1
    PlanWithPatient = 2
    GiveSolution = 3
    AskCurrentEmotions = 4
    InviteShiftOutlook = 5
    AskInformation = 6
    Reflection = 7
    EmpathicReaction = 8
    AcknowledgeEncourage = 9
    Backchannel = 10
    GreetingClosing = 11
    NormalizeReassure = 12


class UserDialogueAct(IntEnum):
    """The patient dialogue acts, plus a sentinel for "no act yet".

    ``NoAct`` marks the pre-first-turn state and encodes as the all-zero
    one-hot; the simulator never emits it.
    """

    ChangeUnhealthyBehavior = 0
    SustainUnhealthyBehavior = 1
    ShareFeelings = 2
    SharePersonalInfo = 3
    RealizationUnderstanding = 4
    GreetingClosing = 5
    Backchannel = 6
    AskMedicalInfo = 7
    NoAct = 8


#: Real user acts, i.e. everything the simulator may emit.
USER_ACTS = tuple(a for a in UserDialogueAct if a is not UserDialogueAct.NoAct)

N_AGENT_ACTS = len(AgentDialogueAct)
N_USER_SLOTS = len(UserDialogueAct)  # one-hot width; NoAct stays all-zero
PAIR_DIM = N_AGENT_ACTS + N_USER_SLOTS
SUB_STATE_DIM = N_AGENT_ACTS + N_USER_SLOTS + 1 + CONTEXT_PAIRS * PAIR_DIM
MASTER_STATE_DIM = 3


class UserProfile(IntEnum):
    OpenToChange = 0
    ResistantToChange = 1
    Receptive = 2


class Topic(IntEnum):
    Smoking = 0
    Alcohol = 1
    SedentaryLifestyle = 2


def one_hot_agent(act: Optional[AgentDialogueAct]) -> np.ndarray:
    v = np.zeros(N_AGENT_ACTS)
    if act is not None:
        v[int(act)] = 1.0
    return v


def one_hot_user(act: Optional[UserDialogueAct]) -> np.ndarray:
    v = np.zeros(N_USER_SLOTS)
    if act is not None and act is not UserDialogueAct.NoAct:
        v[int(act)] = 1.0
    return v


@dataclass(frozen=True)
class SubState:
    """Per-turn observation of a sub-policy.

    ``history`` holds up to the three most recent completed
    (agent act, user act) exchanges, most recent first; it is empty at
    episode start and the encoder zero-pads the missing slots.
    """

    last_agent_act: Optional[AgentDialogueAct] = None
    last_user_act: Optional[UserDialogueAct] = None
    turn: int = 0
    history: tuple = ()

    @classmethod
    def initial(cls) -> "SubState":
        return cls()

    def advance(self, agent_act: AgentDialogueAct, user_act: UserDialogueAct) -> "SubState":
        """State after one completed exchange."""
        new_history = ((agent_act, user_act),) + self.history
        return SubState(
            last_agent_act=agent_act,
            last_user_act=user_act,
            turn=self.turn + 1,
            history=new_history[:CONTEXT_PAIRS],
        )


@dataclass(frozen=True)
class MasterState:
    """MI-progress counters the master policy observes.

    Counts of the three user acts that proxy context knowledge,
    engagement, and evocation; non-decreasing within an episode.
    """

    info_count: int = 0
    emotion_count: int = 0
    realization_count: int = 0

    def register(self, user_act: UserDialogueAct) -> "MasterState":
        return MasterState(
            info_count=self.info_count + (user_act is UserDialogueAct.SharePersonalInfo),
            emotion_count=self.emotion_count + (user_act is UserDialogueAct.ShareFeelings),
            realization_count=self.realization_count
            + (user_act is UserDialogueAct.RealizationUnderstanding),
        )


def encode_sub_state(state: SubState) -> np.ndarray:
    """Encode a SubState as a fixed 89-dim vector.

    Layout: [agent one-hot (13) | user one-hot (9) | turn/40 (1) |
    three (agent, user) one-hot pairs (3 x 22), most recent pair first,
    zero-padded while the history is shorter than three exchanges].
    """
    parts = [
        one_hot_agent(state.last_agent_act),
        one_hot_user(state.last_user_act),
        np.array([state.turn / MAX_TURNS]),
    ]
    for k in range(CONTEXT_PAIRS):
        if k < len(state.history):
            a, u = state.history[k]
            parts.append(one_hot_agent(a))
            parts.append(one_hot_user(u))
        else:
            parts.append(np.zeros(PAIR_DIM))
    return np.concatenate(parts)


def encode_master_state(state: MasterState) -> np.ndarray:
    """Encode counters as [0, 1] features, saturating at MASTER_COUNT_CAP."""
    cap = float(MASTER_COUNT_CAP)
    return np.array(
        [
            min(state.info_count, MASTER_COUNT_CAP) / cap,
            min(state.emotion_count, MASTER_COUNT_CAP) / cap,
            min(state.realization_count, MASTER_COUNT_CAP) / cap,
        ]
    )


@dataclass(frozen=True)
class TurnRecord:
    """One completed dialogue turn.

    ``master_before`` is the counter snapshot the turn started from,
    i.e. the state the master policy saw and the reward gates used.
    """

    turn: int
    master_action: Optional[int]
    agent_act: AgentDialogueAct
    user_act: UserDialogueAct
    reward: float
    master_before: MasterState


@dataclass(frozen=True)
class EpisodeTrace:
    profile: UserProfile
    topic: Topic
    seed: int
    turns: tuple
    total_reward: float

    def __len__(self) -> int:
        return len(self.turns)


def build_trace(
    profile: UserProfile, topic: Topic, seed: int, turns: Sequence[TurnRecord]
) -> EpisodeTrace:
    total = float(sum(t.reward for t in turns))
    return EpisodeTrace(profile=profile, topic=topic, seed=seed, turns=tuple(turns), total_reward=total)


def trace_to_records(trace: EpisodeTrace, episode_id: int) -> list:
    """Flatten a trace into JSON-ready dicts, one per turn."""
    records = []
    for t in trace.turns:
        records.append(
            {
                "episode": episode_id,
                "profile": trace.profile.name,
                "topic": trace.topic.name,
                "seed": trace.seed,
                "turn": t.turn,
                "master_action": t.master_action,
                "agent_act": t.agent_act.name,
                "user_act": t.user_act.name,
                "reward": t.reward,
                "info_count": t.master_before.info_count,
                "emotion_count": t.master_before.emotion_count,
                "realization_count": t.master_before.realization_count,
            }
        )
    return records


def write_traces_jsonl(traces: Iterable[EpisodeTrace], path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for episode_id, trace in enumerate(traces):
            for rec in trace_to_records(trace, episode_id):
                fh.write(json.dumps(rec) + "\n")


def read_traces_jsonl(path) -> list:
    """Rebuild EpisodeTraces from a JSONL file written by write_traces_jsonl."""
    groups: dict = {}
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            groups.setdefault(rec["episode"], []).append(rec)
    traces = []
    for episode_id in sorted(groups):
        recs = sorted(groups[episode_id], key=lambda r: r["turn"])
        turns = [
            TurnRecord(
                turn=r["turn"],
                master_action=r["master_action"],
                agent_act=AgentDialogueAct[r["agent_act"]],
                user_act=UserDialogueAct[r["user_act"]],
                reward=float(r["reward"]),
                master_before=MasterState(
                    info_count=r["info_count"],
                    emotion_count=r["emotion_count"],
                    realization_count=r["realization_count"],
                ),
            )
            for r in recs
        ]
        first = recs[0]
        traces.append(
            build_trace(
                UserProfile[first["profile"]], Topic[first["topic"]], first["seed"], turns
            )
        )
    return traces


def load_taxonomy() -> dict:
    """Load the versioned act-index pin shipped with the package."""
    with resources.files("mi_dialogue.data").joinpath("act_taxonomy.json").open() as fh:
        return json.load(fh)
