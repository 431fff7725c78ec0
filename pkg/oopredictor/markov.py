# Markov-Chain Access Model
# Per-method access chain built from a weighted CFG, with empty states bypassed

import json
import logging
from collections import deque
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .cfg import EdgeWeights
from .errors import ModelContractError, ModelFormatError
from .models import (
    BlockKind,
    Cfg,
    MarkovChain,
    MarkovState,
    MethodDef,
    OOAccess,
    Program,
    SelfLoopPolicy,
)

logger = logging.getLogger(__name__)

PRUNE_THRESHOLD = 1e-12
LOAD_TOLERANCE = 1e-6


def build_chain(cfg: Cfg, weights: EdgeWeights, method: MethodDef, program: Program,
                reference_fields_only: bool = False) -> MarkovChain:
    """One state per block carrying its field accesses; transitions mirror CFG edges"""
    states: Dict[int, dict] = {}
    initial, finals = 0, []
    for block in cfg.blocks:
        accesses = []
        for instr in method.instructions[block.start:block.end]:
            if not instr.is_field_access:
                continue
            value_type = program.field_type(instr.class_name, instr.field_name)
            if reference_fields_only and value_type == "int":
                continue
            accesses.append(OOAccess(class_name=instr.class_name,
                                     field_name=instr.field_name, value_type=value_type))
        states[block.id] = {
            "id": block.id,
            "accesses": tuple(accesses),
            "outgoing": {},
            "is_initial": block.kind == BlockKind.ENTRY,
            "is_final": block.kind == BlockKind.EXIT,
        }
        if block.kind == BlockKind.ENTRY:
            initial = block.id
        elif block.kind == BlockKind.EXIT:
            finals.append(block.id)

    for edge in cfg.edges:
        weight = weights.get(edge.key, 0.0)
        if weight > 0.0:
            states[edge.src]["outgoing"][edge.dst] = weight

    # zero-count profile edges can leave blocks unreachable
    reachable = _reachable(initial, {sid: s["outgoing"] for sid, s in states.items()})
    dropped = set(states) - reachable
    if dropped:
        logger.debug("%s: dropping states never reached %s", cfg.method, sorted(dropped))
    return MarkovChain(
        method=cfg.method,
        states={sid: MarkovState(**s) for sid, s in states.items() if sid in reachable},
        initial=initial,
        finals=tuple(sorted(f for f in finals if f in reachable)),
    )


def _reachable(start: int, outgoing: Dict[int, Dict[int, float]]) -> Set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        for target in outgoing[queue.popleft()]:
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return seen


class WorkingChain:
    """Mutable private copy of a chain used while bypassing states"""

    def __init__(self, chain: MarkovChain):
        self.method = chain.method
        self.initial = chain.initial
        self.finals = set(chain.finals)
        self.accesses = {sid: s.accesses for sid, s in chain.states.items()}
        self.out: Dict[int, Dict[int, float]] = {
            sid: dict(s.outgoing) for sid, s in chain.states.items()}
        self.inc: Dict[int, Set[int]] = {sid: set() for sid in chain.states}
        for sid, targets in self.out.items():
            for target in targets:
                self.inc[target].add(sid)

    def is_interior_empty(self, sid: int) -> bool:
        return (not self.accesses[sid] and sid != self.initial
                and sid not in self.finals)

    def is_bypassable(self, sid: int) -> bool:
        """A state with no way out other than its own self-loop cannot be bypassed"""
        return any(target != sid for target in self.out[sid])

    def _prune(self, sid: int) -> None:
        targets = self.out[sid]
        dust = [t for t, w in targets.items() if w < PRUNE_THRESHOLD]
        if not dust:
            return
        for target in dust:
            del targets[target]
            self.inc[target].discard(sid)
        total = sum(targets.values())
        if total > 0:
            for target in targets:
                targets[target] /= total

    def bypass(self, sid: int, policy: SelfLoopPolicy = SelfLoopPolicy.EQUAL) -> None:
        if sid not in self.out:
            raise ModelContractError(f"{self.method}: no state {sid}")
        if not self.is_interior_empty(sid):
            raise ModelContractError(
                f"{self.method}: state {sid} is initial, final or carries accesses")
        if not self.is_bypassable(sid):
            raise ModelContractError(
                f"{self.method}: state {sid} has no outgoing edge besides a self-loop")

        outgoing = self.out[sid]
        if sid in outgoing:
            loop = outgoing.pop(sid)
            self.inc[sid].discard(sid)
            if policy == SelfLoopPolicy.EQUAL:
                share = loop / len(outgoing)
                for target in outgoing:
                    outgoing[target] += share
            else:
                for target in outgoing:
                    outgoing[target] += loop * outgoing[target] / (1.0 - loop)

        for parent in sorted(self.inc[sid]):
            incoming = self.out[parent].pop(sid)
            for target, weight in outgoing.items():
                self.out[parent][target] = self.out[parent].get(target, 0.0) + incoming * weight
                self.inc[target].add(parent)
            self._prune(parent)

        for target in outgoing:
            self.inc[target].discard(sid)
        del self.out[sid]
        del self.inc[sid]
        del self.accesses[sid]

    def publish(self) -> MarkovChain:
        states = {
            sid: MarkovState(id=sid, accesses=self.accesses[sid],
                             outgoing=dict(sorted(self.out[sid].items())),
                             is_initial=sid == self.initial, is_final=sid in self.finals)
            for sid in sorted(self.out)
        }
        return MarkovChain(method=self.method, states=states, initial=self.initial,
                           finals=tuple(sorted(self.finals)))


def bypass(chain: MarkovChain, state_id: int,
           policy: SelfLoopPolicy = SelfLoopPolicy.EQUAL) -> MarkovChain:
    """Remove one empty state, rewiring its parents to its children"""
    working = WorkingChain(chain)
    working.bypass(state_id, policy)
    return working.publish()


def compress(chain: MarkovChain, policy: SelfLoopPolicy = SelfLoopPolicy.EQUAL,
             order: Optional[Iterable[int]] = None) -> MarkovChain:
    """Bypass every empty interior state, in ascending id unless `order` is given"""
    working = WorkingChain(chain)
    for sid in (sorted(chain.states) if order is None else list(order)):
        if sid not in working.out or not working.is_interior_empty(sid):
            continue
        if not working.is_bypassable(sid):
            logger.warning("%s: keeping empty state %d (only a self-loop leaves it)",
                           chain.method, sid)
            continue
        working.bypass(sid, policy)
    return working.publish()


def check_chain(chain: MarkovChain, tolerance: float = 1e-9) -> None:
    """Raise ModelFormatError unless the chain is structurally sound and stochastic"""
    if chain.initial not in chain.states:
        raise ModelFormatError(f"{chain.method}: initial state {chain.initial} missing")
    for final in chain.finals:
        if final not in chain.states:
            raise ModelFormatError(f"{chain.method}: final state {final} missing")
    for state in chain.states.values():
        for target, weight in state.outgoing.items():
            if target not in chain.states:
                raise ModelFormatError(
                    f"{chain.method}: state {state.id} targets unknown state {target}")
            if not weight > 0.0:
                raise ModelFormatError(
                    f"{chain.method}: state {state.id} has non-positive weight {weight}")
        if state.outgoing:
            total = sum(state.outgoing.values())
            if abs(total - 1.0) > tolerance:
                raise ModelFormatError(
                    f"{chain.method}: weights of state {state.id} sum to {total}, not 1")


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------

class AccessDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    class_name: str = Field(alias="class", min_length=1)
    field_name: str = Field(alias="field", min_length=1)
    value_type: str = Field(alias="type", min_length=1)


class TransitionDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    target: int
    weight: float


class StateDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    id: int
    accesses: List[AccessDocument]
    transitions: List[TransitionDocument]


class ModelDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    method: str
    initial: int
    finals: List[int]
    states: List[StateDocument]


def model_to_json(chain: MarkovChain) -> str:
    document = {
        "method": chain.method,
        "initial": chain.initial,
        "finals": sorted(chain.finals),
        "states": [
            {
                "id": state.id,
                "accesses": [{"class": a.class_name, "field": a.field_name,
                              "type": a.value_type} for a in state.accesses],
                "transitions": [{"target": target, "weight": float(weight)}
                                for target, weight in sorted(state.outgoing.items())],
            }
            for _, state in sorted(chain.states.items())
        ],
    }
    return json.dumps(document, indent=2) + "\n"


def model_from_json(text: str) -> MarkovChain:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    try:
        document = ModelDocument.model_validate(data)
    except ValidationError as exc:
        raise ModelFormatError(f"model schema violation: {exc}") from exc

    finals = set(document.finals)
    states: Dict[int, MarkovState] = {}
    for entry in document.states:
        if entry.id in states:
            raise ModelFormatError(f"{document.method}: duplicate state {entry.id}")
        targets = [t.target for t in entry.transitions]
        if len(set(targets)) != len(targets):
            raise ModelFormatError(
                f"{document.method}: state {entry.id} repeats a transition target")
        states[entry.id] = MarkovState(
            id=entry.id,
            accesses=tuple(OOAccess(class_name=a.class_name, field_name=a.field_name,
                                    value_type=a.value_type) for a in entry.accesses),
            outgoing={t.target: t.weight for t in entry.transitions},
            is_initial=entry.id == document.initial,
            is_final=entry.id in finals,
        )
    chain = MarkovChain(method=document.method, states=states, initial=document.initial,
                        finals=tuple(sorted(finals)))
    check_chain(chain, LOAD_TOLERANCE)
    return chain


def chain_statistics(chain: MarkovChain) -> Dict[str, object]:
    return {
        "num_accesses": chain.num_accesses,
        "states": len(chain.states),
        "retained_empty_states": chain.retained_empty_states(),
    }


def transition_matrix(chain: MarkovChain) -> Tuple[List[int], np.ndarray]:
    """State ids in ascending order and the row-stochastic matrix over them"""
    ids = sorted(chain.states)
    position = {sid: k for k, sid in enumerate(ids)}
    matrix = np.zeros((len(ids), len(ids)))
    for sid, state in chain.states.items():
        for target, weight in state.outgoing.items():
            matrix[position[sid], position[target]] = weight
    return ids, matrix
