# Data models for the OO access predictor
# Frozen pydantic records passed between pipeline stages

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


SCALAR_TYPE = "int"


class FrozenModel(BaseModel):
    """Immutable pydantic model shared by every published value"""
    model_config = ConfigDict(frozen=True)


# ---------------------------------------------------------------------------
# Mini-IR
# ---------------------------------------------------------------------------

class Opcode(str, Enum):
    CONST = "const"
    NEW = "new"
    GETFIELD = "getfield"
    PUTFIELD = "putfield"
    ADD = "add"
    SUB = "sub"
    IF_LT = "iflt"
    GOTO = "goto"
    CALL = "call"
    RETURN = "return"


class FieldDecl(FrozenModel):
    name: str
    declared_type: str  # a class name or "int"

    @property
    def is_reference(self) -> bool:
        return self.declared_type != SCALAR_TYPE


class ClassDef(FrozenModel):
    name: str
    fields: Tuple[FieldDecl, ...] = ()

    def field(self, name: str) -> Optional[FieldDecl]:
        for decl in self.fields:
            if decl.name == name:
                return decl
        return None

    @property
    def field_names(self) -> Tuple[str, ...]:
        return tuple(decl.name for decl in self.fields)


class Instruction(FrozenModel):
    """One mini-IR instruction; only the operands of its opcode are set"""
    op: Opcode
    dst: Optional[int] = None
    obj: Optional[int] = None
    src: Optional[int] = None
    a: Optional[int] = None
    b: Optional[int] = None
    value: Optional[int] = None
    class_name: Optional[str] = None
    field_name: Optional[str] = None
    label: Optional[str] = None
    callee: Optional[str] = None
    args: Tuple[int, ...] = ()

    @property
    def is_field_access(self) -> bool:
        return self.op in (Opcode.GETFIELD, Opcode.PUTFIELD)

    @property
    def is_terminator(self) -> bool:
        return self.op in (Opcode.IF_LT, Opcode.GOTO, Opcode.RETURN)

    def registers_read(self) -> List[int]:
        if self.op == Opcode.GETFIELD:
            return [self.obj]
        if self.op == Opcode.PUTFIELD:
            return [self.obj, self.src]
        if self.op in (Opcode.ADD, Opcode.SUB, Opcode.IF_LT):
            return [self.a, self.b]
        if self.op == Opcode.CALL:
            return list(self.args)
        if self.op == Opcode.RETURN and self.src is not None:
            return [self.src]
        return []

    def registers_written(self) -> List[int]:
        return [self.dst] if self.dst is not None else []


class MethodDef(FrozenModel):
    owner: str
    name: str
    param_count: int = Field(ge=0)
    register_count: int = Field(ge=1)
    instructions: Tuple[Instruction, ...] = ()
    labels: Dict[str, int] = Field(default_factory=dict)

    @property
    def method_id(self) -> str:
        return f"{self.owner}.{self.name}"


class Program(FrozenModel):
    classes: Tuple[ClassDef, ...] = ()
    methods: Tuple[MethodDef, ...] = ()
    entry: str

    def class_def(self, name: str) -> Optional[ClassDef]:
        for class_def in self.classes:
            if class_def.name == name:
                return class_def
        return None

    def method(self, method_id: str) -> Optional[MethodDef]:
        for method in self.methods:
            if method.method_id == method_id:
                return method
        return None

    def field_type(self, class_name: str, field_name: str) -> Optional[str]:
        class_def = self.class_def(class_name)
        if class_def is None:
            return None
        decl = class_def.field(field_name)
        return decl.declared_type if decl else None

    def class_fields(self) -> Dict[str, Tuple[str, ...]]:
        return {c.name: c.field_names for c in self.classes}


class OOAccess(FrozenModel):
    class_name: str = Field(min_length=1)
    field_name: str = Field(min_length=1)
    value_type: str = Field(min_length=1)

    @property
    def key(self) -> Tuple[str, str]:
        return (self.class_name, self.field_name)


# ---------------------------------------------------------------------------
# Control-flow graphs
# ---------------------------------------------------------------------------

class BlockKind(str, Enum):
    ENTRY = "entry"
    EXIT = "exit"
    ORDINARY = "ordinary"


class EdgeDirection(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class BasicBlock(FrozenModel):
    id: int
    start: int  # half-open instruction range [start, end)
    end: int
    kind: BlockKind = BlockKind.ORDINARY


class CfgEdge(FrozenModel):
    src: int
    dst: int
    direction: EdgeDirection
    frequency: Optional[float] = Field(default=None, ge=0)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.src, self.dst)


class Cfg(FrozenModel):
    method: str
    blocks: Tuple[BasicBlock, ...]
    edges: Tuple[CfgEdge, ...]

    @property
    def entry_id(self) -> int:
        return 0

    @property
    def exit_id(self) -> int:
        return self.blocks[-1].id

    def outgoing(self, block_id: int) -> List[CfgEdge]:
        return [edge for edge in self.edges if edge.src == block_id]


class StaticWeightPolicy(FrozenModel):
    back_edge_probability: float = Field(default=0.9, gt=0.0, lt=1.0)


class ProfileData(FrozenModel):
    """Observed taken-counts keyed by (method id, src block, dst block)"""
    counts: Dict[Tuple[str, int, int], int] = Field(default_factory=dict)

    def for_method(self, method_id: str) -> Dict[Tuple[int, int], int]:
        return {(src, dst): count for (method, src, dst), count in self.counts.items()
                if method == method_id}


# ---------------------------------------------------------------------------
# Markov-chain models
# ---------------------------------------------------------------------------

class SelfLoopPolicy(str, Enum):
    EQUAL = "equal"
    PROPORTIONAL = "proportional"


class MarkovState(FrozenModel):
    id: int
    accesses: Tuple[OOAccess, ...] = ()
    outgoing: Dict[int, float] = Field(default_factory=dict)
    is_initial: bool = False
    is_final: bool = False

    @property
    def is_empty(self) -> bool:
        return not self.accesses


class MarkovChain(FrozenModel):
    method: str
    states: Dict[int, MarkovState]
    initial: int
    finals: Tuple[int, ...]

    @property
    def num_accesses(self) -> int:
        return sum(len(state.accesses) for state in self.states.values())

    def retained_empty_states(self) -> List[int]:
        """Empty states that are neither initial nor final"""
        return sorted(s.id for s in self.states.values()
                      if s.is_empty and not s.is_initial and not s.is_final)


# ---------------------------------------------------------------------------
# Interpreter traces (plain tuples: traces hold millions of events)
# ---------------------------------------------------------------------------

class CallSite(NamedTuple):
    method: str
    index: int


ROOT_CALL_SITE = CallSite("-", -1)


class AccessEvent(NamedTuple):
    kind: str  # "getfield" | "putfield"
    class_name: str
    field_name: str
    value_type: str
    method: str
    index: int


class EnterEvent(NamedTuple):
    method: str
    call_site: CallSite


class ExitEvent(NamedTuple):
    method: str


TraceEvent = Union[AccessEvent, EnterEvent, ExitEvent]


@dataclass
class Trace:
    events: List[TraceEvent] = field(default_factory=list)
    truncated: bool = False

    def accesses(self) -> List[AccessEvent]:
        return [e for e in self.events if isinstance(e, AccessEvent)]


class Limits(FrozenModel):
    max_events: int = Field(default=10_000_000, ge=1)
    max_steps: int = Field(default=100_000_000, ge=1)


# ---------------------------------------------------------------------------
# Validation results
# ---------------------------------------------------------------------------

class InvocationResult(FrozenModel):
    matched: int = 0
    skipped: int = 0
    terminated: bool = False
    capped: bool = False


class MethodValidation(FrozenModel):
    method: str
    calls_evaluated: int = 0
    termination_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    oo_match_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    mean_invocation_match_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    method_size: int = 0
    num_accesses: int = 0
    matched: int = 0
    skipped: int = 0
    capped_invocations: int = 0
    discarded_invocations: int = 0


# ---------------------------------------------------------------------------
# Affinity and statistics
# ---------------------------------------------------------------------------

class AffinityWeighting(str, Enum):
    UNIFORM = "uniform"
    PROBABILITY = "probability"


class AffinityGraph(FrozenModel):
    """Per-class field affinity; weight keys are ordered by node position"""
    class_name: str
    nodes: Tuple[str, ...]
    weights: Dict[Tuple[str, str], float] = Field(default_factory=dict)

    def weight(self, a: str, b: str) -> float:
        if (a, b) in self.weights:
            return self.weights[(a, b)]
        return self.weights.get((b, a), 0.0)


class ComparisonRow(FrozenModel):
    class_name: str
    cosine: Optional[float] = None
    spearman_rho: Optional[float] = Field(default=None, ge=-1.0, le=1.0)
    p_value: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    significant: bool = False

    @model_validator(mode="after")
    def _significance_needs_spearman(self):
        if self.significant and (self.spearman_rho is None or self.p_value is None):
            raise ValueError("significant rows must carry a Spearman coefficient")
        return self


class HistogramBin(FrozenModel):
    low: float
    high: float
    count: int


class AffinityComparison(FrozenModel):
    rows: Tuple[ComparisonRow, ...] = ()
    uncompared: Tuple[str, ...] = ()
    cosine_histogram: Tuple[HistogramBin, ...] = ()
    spearman_histogram: Tuple[HistogramBin, ...] = ()


class Correlation(FrozenModel):
    rho: float = Field(ge=-1.0, le=1.0)
    p_value: float = Field(ge=0.0, le=1.0)


class CorrelationReport(FrozenModel):
    label: str
    methods: int
    excluded: int = 0
    cot: Optional[Correlation] = None
    ctn: Optional[Correlation] = None
    con: Optional[Correlation] = None
    cts: Optional[Correlation] = None
    cos: Optional[Correlation] = None


class MetricSummary(FrozenModel):
    metric: str
    mean: Optional[float] = None
    median: Optional[float] = None
    q1: Optional[float] = None
    q3: Optional[float] = None
