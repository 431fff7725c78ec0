# Control-Flow Graph Construction
# Leader-based basic blocks and their transition weights

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Set, TextIO, Tuple

from .errors import ProfileError
from .ir import EXIT, instruction_successors
from .models import (
    BasicBlock,
    BlockKind,
    Cfg,
    CfgEdge,
    EdgeDirection,
    MethodDef,
    ProfileData,
    StaticWeightPolicy,
)

logger = logging.getLogger(__name__)

EdgeWeights = Dict[Tuple[int, int], float]


def _leaders(method: MethodDef) -> List[int]:
    count = len(method.instructions)
    if count == 0:
        return []
    leaders: Set[int] = {0}
    leaders.update(method.labels.values())
    for index, instr in enumerate(method.instructions):
        if instr.is_terminator and index + 1 < count:
            leaders.add(index + 1)
    return sorted(leaders)


def _direction(src: int, dst: int) -> EdgeDirection:
    return EdgeDirection.BACKWARD if dst <= src else EdgeDirection.FORWARD


def build_cfg(method: MethodDef) -> Cfg:
    """Split a method into basic blocks and connect them"""
    count = len(method.instructions)
    leaders = _leaders(method)

    blocks = [BasicBlock(id=0, start=0, end=0, kind=BlockKind.ENTRY)]
    block_at: Dict[int, int] = {}
    for k, start in enumerate(leaders):
        end = leaders[k + 1] if k + 1 < len(leaders) else count
        block_at[start] = k + 1
        blocks.append(BasicBlock(id=k + 1, start=start, end=end))
    exit_id = len(leaders) + 1
    blocks.append(BasicBlock(id=exit_id, start=count, end=count, kind=BlockKind.EXIT))

    edges: List[CfgEdge] = []
    seen: Set[Tuple[int, int]] = set()

    def connect(src: int, dst: int) -> None:
        if (src, dst) not in seen:
            seen.add((src, dst))
            edges.append(CfgEdge(src=src, dst=dst, direction=_direction(src, dst)))

    connect(0, 1 if leaders else exit_id)
    for block in blocks[1:-1]:
        for target in instruction_successors(method, block.end - 1):
            connect(block.id, exit_id if target == EXIT else block_at[target])

    return Cfg(method=method.method_id, blocks=tuple(blocks), edges=tuple(edges))


def block_index(cfg: Cfg) -> List[int]:
    """Block id of every instruction, indexed by instruction position"""
    owners: List[int] = []
    for block in cfg.blocks:
        if block.kind == BlockKind.ORDINARY:
            owners.extend([block.id] * (block.end - block.start))
    return owners


def with_profile(cfg: Cfg, profile: Optional[ProfileData]) -> Cfg:
    """Copy of the CFG whose edges carry the raw profile counts"""
    if profile is None:
        return cfg
    counts = profile.for_method(cfg.method)
    _check_profile_edges(cfg, counts)
    edges = tuple(edge.model_copy(update={"frequency": float(counts[edge.key])})
                  if edge.key in counts else edge for edge in cfg.edges)
    return cfg.model_copy(update={"edges": edges})


def _check_profile_edges(cfg: Cfg, counts: Dict[Tuple[int, int], int]) -> None:
    known = {edge.key for edge in cfg.edges}
    for key in counts:
        if key not in known:
            raise ProfileError(
                f"profile references nonexistent edge {key[0]}->{key[1]} in {cfg.method}")


def _static_weights(edges: List[CfgEdge], policy: StaticWeightPolicy) -> EdgeWeights:
    backward = [e for e in edges if e.direction == EdgeDirection.BACKWARD]
    forward = [e for e in edges if e.direction == EdgeDirection.FORWARD]
    if not backward or not forward:
        return {e.key: 1.0 / len(edges) for e in edges}
    p = policy.back_edge_probability
    weights = {e.key: p / len(backward) for e in backward}
    weights.update({e.key: (1.0 - p) / len(forward) for e in forward})
    return weights


def edge_weights(cfg: Cfg, profile: Optional[ProfileData] = None,
                 static_policy: Optional[StaticWeightPolicy] = None) -> EdgeWeights:
    """Per-block stochastic transition weights for every CFG edge"""
    policy = static_policy or StaticWeightPolicy()
    counts = profile.for_method(cfg.method) if profile is not None else {}
    _check_profile_edges(cfg, counts)

    by_source: Dict[int, List[CfgEdge]] = defaultdict(list)
    for edge in cfg.edges:
        by_source[edge.src].append(edge)

    weights: EdgeWeights = {}
    for src, edges in by_source.items():
        covered = all(e.key in counts for e in edges)
        total = sum(counts[e.key] for e in edges) if covered else 0
        if covered and total > 0:
            weights.update({e.key: counts[e.key] / total for e in edges})
        else:
            if counts and any(e.key in counts for e in edges):
                logger.debug("%s block %d: partial profile, using static weights",
                             cfg.method, src)
            weights.update(_static_weights(edges, policy))
    return weights


# ---------------------------------------------------------------------------
# Profile files: method<TAB>src_block<TAB>dst_block<TAB>count
# ---------------------------------------------------------------------------

def read_profile(source: TextIO) -> ProfileData:
    counts: Dict[Tuple[str, int, int], int] = {}
    for number, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ProfileError(f"line {number}: expected 4 fields, found {len(parts)}")
        method, src, dst, count = parts
        try:
            key = (method, int(src), int(dst))
            value = int(count)
        except ValueError as exc:
            raise ProfileError(f"line {number}: {exc}") from exc
        if value < 0:
            raise ProfileError(f"line {number}: negative count {value}")
        counts[key] = counts.get(key, 0) + value
    return ProfileData(counts=counts)


def write_profile(profile: ProfileData, sink: TextIO) -> None:
    for (method, src, dst), count in sorted(profile.counts.items()):
        sink.write(f"{method}\t{src}\t{dst}\t{count}\n")
