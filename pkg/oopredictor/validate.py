# Model Validation Against Traces
# Replays recorded accesses through a model as a non-deterministic state machine
# with gap allowance and aggregates termination and OO match rates

import logging
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Sequence, Set, Tuple

from .errors import InputError
from .models import (
    SCALAR_TYPE,
    AccessEvent,
    CallSite,
    EnterEvent,
    ExitEvent,
    InvocationResult,
    MarkovChain,
    MethodValidation,
    Trace,
)

logger = logging.getLogger(__name__)

DEFAULT_CALLSITE_CAP = 100
DEFAULT_PER_SITE_CAP = 1000
DEFAULT_CONFIG_SET_CAP = 4096


class Configuration(NamedTuple):
    state: int
    offset: int


@dataclass
class SegmentedInvocations:
    """Access sequences of every complete invocation of one method, by call site"""
    method: str
    by_site: Dict[CallSite, List[List[AccessEvent]]] = field(default_factory=dict)
    discarded: int = 0

    @property
    def invocation_count(self) -> int:
        return sum(len(runs) for runs in self.by_site.values())


class _OpenCall:
    __slots__ = ("method", "site", "accesses")

    def __init__(self, method: str, site: CallSite):
        self.method = method
        self.site = site
        self.accesses: List[AccessEvent] = []


def segment_trace(trace: Trace, reference_fields_only: bool = False
                  ) -> Dict[str, SegmentedInvocations]:
    """Split a trace into per-invocation access sequences for every method"""
    result: Dict[str, SegmentedInvocations] = {}
    stack: List[_OpenCall] = []

    for position, event in enumerate(trace.events):
        if isinstance(event, AccessEvent):
            if not stack or stack[-1].method != event.method:
                raise InputError(
                    f"event {position}: access from {event.method} outside its invocation")
            if reference_fields_only and event.value_type == SCALAR_TYPE:
                continue
            for call in stack:
                call.accesses.append(event)
        elif isinstance(event, EnterEvent):
            stack.append(_OpenCall(event.method, event.call_site))
        elif isinstance(event, ExitEvent):
            if not stack or stack[-1].method != event.method:
                raise InputError(f"event {position}: unbalanced exit from {event.method}")
            call = stack.pop()
            entry = result.setdefault(call.method, SegmentedInvocations(call.method))
            entry.by_site.setdefault(call.site, []).append(call.accesses)

    if stack:
        if not trace.truncated:
            raise InputError(f"trace ends with {len(stack)} unfinished invocation(s)")
        for call in stack:
            result.setdefault(call.method, SegmentedInvocations(call.method)).discarded += 1
        logger.warning("Discarded %d invocation(s) cut off by trace truncation", len(stack))
    return result


def segment_invocations(trace: Trace, method: str,
                        reference_fields_only: bool = False) -> SegmentedInvocations:
    return segment_trace(trace, reference_fields_only).get(method, SegmentedInvocations(method))


def sample_call_sites(sites: Iterable[CallSite], cap: int = DEFAULT_CALLSITE_CAP,
                      seed: int = 0) -> List[CallSite]:
    """All sites when there are at most `cap`, else a seeded uniform sample of `cap`"""
    if cap < 1:
        raise InputError("call-site cap must be at least 1")
    ordered = sorted(set(sites))
    if len(ordered) <= cap:
        return ordered
    return sorted(random.Random(seed).sample(ordered, cap))


class ChainMatcher:
    """Subset simulation of a compressed chain over an access sequence"""

    def __init__(self, chain: MarkovChain, strict_termination: bool = False,
                 config_set_cap: int = DEFAULT_CONFIG_SET_CAP):
        self.chain = chain
        self.strict = strict_termination
        self.cap = config_set_cap
        self.keys: Dict[int, Tuple[Tuple[str, str], ...]] = {
            sid: tuple(a.key for a in state.accesses) for sid, state in chain.states.items()}
        self.successors: Dict[int, Tuple[int, ...]] = {
            sid: tuple(t for t, w in sorted(state.outgoing.items()) if w > 0.0)
            for sid, state in chain.states.items()}
        self.finals: FrozenSet[int] = frozenset(chain.finals)

    def closure(self, configurations: Iterable[Configuration]) -> Set[Configuration]:
        result = set(configurations)
        work = list(result)
        while work:
            state, offset = work.pop()
            if offset != len(self.keys[state]):
                continue
            for target in self.successors[state]:
                nxt = Configuration(target, 0)
                if nxt not in result:
                    result.add(nxt)
                    work.append(nxt)
        return result

    def _limit(self, active: Set[Configuration]) -> Tuple[Set[Configuration], bool]:
        if len(active) <= self.cap:
            return active, False
        return set(sorted(active)[-self.cap:]), True

    def _completes(self, configurations: Iterable[Configuration]) -> bool:
        return any(state in self.finals and offset == len(self.keys[state])
                   for state, offset in configurations)

    def _completes_strictly(self, last: Iterable[Configuration]) -> bool:
        for state, offset in last:
            if offset != len(self.keys[state]):
                continue
            if state in self.finals:
                return True
            if any(t in self.finals and not self.keys[t] for t in self.successors[state]):
                return True
        return False

    def match(self, accesses: Sequence[AccessEvent]) -> InvocationResult:
        start = Configuration(self.chain.initial, 0)
        active, capped = self._limit(self.closure([start]))
        last: Set[Configuration] = {start}
        matched = skipped = 0

        for event in accesses:
            key = (event.class_name, event.field_name)
            candidates = {Configuration(state, offset + 1) for state, offset in active
                          if offset < len(self.keys[state]) and self.keys[state][offset] == key}
            if candidates:
                matched += 1
                last = candidates
                active, hit_cap = self._limit(self.closure(candidates))
                capped = capped or hit_cap
            else:
                skipped += 1

        terminated = self._completes_strictly(last) if self.strict else self._completes(active)
        return InvocationResult(matched=matched, skipped=skipped,
                                terminated=terminated, capped=capped)


def match_invocation(chain: MarkovChain, accesses: Sequence[AccessEvent],
                     strict_termination: bool = False,
                     config_set_cap: int = DEFAULT_CONFIG_SET_CAP) -> InvocationResult:
    return ChainMatcher(chain, strict_termination, config_set_cap).match(accesses)


def validate_method(chain: MarkovChain, invocations: SegmentedInvocations,
                    cap: int = DEFAULT_CALLSITE_CAP, seed: int = 0,
                    per_site_cap: int = DEFAULT_PER_SITE_CAP,
                    strict_termination: bool = False,
                    config_set_cap: int = DEFAULT_CONFIG_SET_CAP,
                    method_size: int = 0) -> MethodValidation:
    """Sample call sites and aggregate match results for one method"""
    if invocations.method != chain.method:
        raise InputError(
            f"model for {chain.method} cannot validate invocations of {invocations.method}")

    matcher = ChainMatcher(chain, strict_termination, config_set_cap)
    results: List[InvocationResult] = []
    for site in sample_call_sites(invocations.by_site, cap, seed):
        runs = invocations.by_site[site]
        if len(runs) > per_site_cap:
            logger.debug("%s: site %s has %d invocations, evaluating %d",
                         chain.method, site, len(runs), per_site_cap)
        for accesses in runs[:per_site_cap]:
            results.append(matcher.match(accesses))

    capped = sum(1 for r in results if r.capped)
    if capped:
        logger.warning("%s: %d invocation(s) hit the configuration-set cap", chain.method, capped)

    matched = sum(r.matched for r in results)
    skipped = sum(r.skipped for r in results)
    presented = [r for r in results if r.matched + r.skipped > 0]
    return MethodValidation(
        method=chain.method,
        calls_evaluated=len(results),
        termination_rate=(sum(1 for r in results if r.terminated) / len(results)
                          if results else None),
        oo_match_rate=matched / (matched + skipped) if matched + skipped else None,
        mean_invocation_match_rate=(
            sum(r.matched / (r.matched + r.skipped) for r in presented) / len(presented)
            if presented else None),
        method_size=method_size,
        num_accesses=chain.num_accesses,
        matched=matched,
        skipped=skipped,
        capped_invocations=capped,
        discarded_invocations=invocations.discarded,
    )
