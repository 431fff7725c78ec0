# Instrumented Mini-IR Interpreter
# Executes programs and records every field access plus call boundaries

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, TextIO, Union

from .cfg import block_index, build_cfg
from .errors import RuntimeFault, TraceFormatError
from .models import (
    ROOT_CALL_SITE,
    SCALAR_TYPE,
    AccessEvent,
    CallSite,
    EnterEvent,
    ExitEvent,
    Limits,
    MethodDef,
    Opcode,
    ProfileData,
    Program,
    Trace,
)

logger = logging.getLogger(__name__)


class _Unset:
    def __repr__(self) -> str:
        return "<unset>"


UNSET = _Unset()
NO_VALUE = _Unset()


@dataclass
class HeapObject:
    class_name: str
    fields: Dict[str, Union[int, "HeapObject", None]] = field(default_factory=dict)


Value = Union[int, HeapObject, None, _Unset]


class _Halt(Exception):
    """Raised internally when an execution limit is reached"""


class _Frame:
    __slots__ = ("method", "method_id", "registers", "pc", "result_register")

    def __init__(self, method: MethodDef, args: List[Value], result_register: Optional[int]):
        self.method = method
        self.method_id = method.method_id
        self.registers: List[Value] = [UNSET] * method.register_count
        self.registers[:len(args)] = args
        self.pc = 0
        self.result_register = result_register


class _BlockMap:
    """Instruction-to-block lookup used while collecting edge profiles"""

    def __init__(self, method: MethodDef):
        cfg = build_cfg(method)
        self.exit_id = cfg.exit_id
        self.block_of = block_index(cfg)
        self.first_block = self.block_of[0] if self.block_of else self.exit_id
        self.is_last = [k + 1 == len(self.block_of) or self.block_of[k + 1] != self.block_of[k]
                        for k in range(len(self.block_of))]

    def target(self, pc: int) -> int:
        return self.block_of[pc] if pc < len(self.block_of) else self.exit_id


class Interpreter:
    """Single-threaded executor emitting a trace, optionally counting block edges"""

    def __init__(self, program: Program, limits: Optional[Limits] = None,
                 collect_profile: bool = False):
        self.program = program
        self.limits = limits or Limits()
        self.methods = {m.method_id: m for m in program.methods}
        self.classes = {c.name: c for c in program.classes}
        self.events: List = []
        self.steps = 0
        self.truncated = False
        self.edge_counts: Optional[Counter] = Counter() if collect_profile else None
        self._blocks: Dict[str, _BlockMap] = {}

    # -- helpers -----------------------------------------------------------

    def _emit(self, event) -> None:
        if len(self.events) >= self.limits.max_events:
            raise _Halt()
        self.events.append(event)

    def _read(self, frame: _Frame, reg: int) -> Value:
        value = frame.registers[reg]
        if value is UNSET:
            raise RuntimeFault(frame.method_id, frame.pc, f"read of uninitialized register r{reg}")
        return value

    def _read_int(self, frame: _Frame, reg: int) -> int:
        value = self._read(frame, reg)
        if not isinstance(value, int):
            raise RuntimeFault(frame.method_id, frame.pc, f"r{reg} does not hold an integer")
        return value

    def _read_object(self, frame: _Frame, reg: int, class_name: str) -> HeapObject:
        value = self._read(frame, reg)
        if value is None:
            raise RuntimeFault(frame.method_id, frame.pc, f"null dereference through r{reg}")
        if not isinstance(value, HeapObject) or value.class_name != class_name:
            raise RuntimeFault(frame.method_id, frame.pc,
                               f"r{reg} does not hold a {class_name} object")
        return value

    def _new_object(self, class_name: str) -> HeapObject:
        class_def = self.classes[class_name]
        return HeapObject(class_name, {d.name: (0 if d.declared_type == SCALAR_TYPE else None)
                                       for d in class_def.fields})

    def _block_map(self, method: MethodDef) -> _BlockMap:
        if method.method_id not in self._blocks:
            self._blocks[method.method_id] = _BlockMap(method)
        return self._blocks[method.method_id]

    def _transfer(self, frame: _Frame, source: int, target: int) -> None:
        """Count a block edge when control leaves the last instruction of a block"""
        if self.edge_counts is None:
            return
        blocks = self._block_map(frame.method)
        if blocks.is_last[source]:
            self.edge_counts[(frame.method_id, blocks.block_of[source],
                              blocks.target(target))] += 1

    def _enter(self, method: MethodDef, args: List[Value], site: CallSite,
               result_register: Optional[int]) -> _Frame:
        self._emit(EnterEvent(method.method_id, site))
        if self.edge_counts is not None:
            blocks = self._block_map(method)
            self.edge_counts[(method.method_id, 0, blocks.first_block)] += 1
        return _Frame(method, args, result_register)

    def _access(self, frame: _Frame, kind: str, class_name: str, field_name: str) -> None:
        value_type = self.program.field_type(class_name, field_name)
        self._emit(AccessEvent(kind, class_name, field_name, value_type,
                               frame.method_id, frame.pc))

    def _check_store(self, frame: _Frame, class_name: str, field_name: str, value: Value) -> None:
        declared = self.program.field_type(class_name, field_name)
        if declared == SCALAR_TYPE:
            ok = isinstance(value, int)
        else:
            ok = value is None or (isinstance(value, HeapObject) and value.class_name == declared)
        if not ok:
            raise RuntimeFault(frame.method_id, frame.pc,
                               f"value stored into {class_name}.{field_name} is not a {declared}")

    # -- main loop ---------------------------------------------------------

    def run(self) -> Trace:
        entry = self.methods[self.program.entry]
        stack: List[_Frame] = []
        try:
            stack.append(self._enter(entry, [], ROOT_CALL_SITE, None))
            while stack:
                frame = stack[-1]
                instructions = frame.method.instructions
                if frame.pc >= len(instructions):
                    self._return(stack, NO_VALUE)
                    continue
                if self.steps >= self.limits.max_steps:
                    raise _Halt()
                self.steps += 1
                self._step(stack, frame, instructions[frame.pc])
        except _Halt:
            self.truncated = True
            logger.info("Execution halted at %d events / %d steps",
                        len(self.events), self.steps)
        return Trace(events=self.events, truncated=self.truncated)

    def _return(self, stack: List[_Frame], value: Value) -> None:
        frame = stack[-1]
        self._emit(ExitEvent(frame.method_id))
        stack.pop()
        if not stack:
            return
        caller = stack[-1]
        if frame.result_register is not None:
            if value is NO_VALUE:
                raise RuntimeFault(caller.method_id, caller.pc,
                                   f"{frame.method_id} returned no value")
            caller.registers[frame.result_register] = value
        self._transfer(caller, caller.pc, caller.pc + 1)
        caller.pc += 1

    def _step(self, stack: List[_Frame], frame: _Frame, instr) -> None:
        op = instr.op
        pc = frame.pc
        regs = frame.registers
        next_pc = pc + 1

        if op == Opcode.CONST:
            regs[instr.dst] = instr.value
        elif op == Opcode.NEW:
            regs[instr.dst] = self._new_object(instr.class_name)
        elif op == Opcode.GETFIELD:
            obj = self._read_object(frame, instr.obj, instr.class_name)
            self._access(frame, "getfield", instr.class_name, instr.field_name)
            regs[instr.dst] = obj.fields[instr.field_name]
        elif op == Opcode.PUTFIELD:
            obj = self._read_object(frame, instr.obj, instr.class_name)
            value = self._read(frame, instr.src)
            self._check_store(frame, instr.class_name, instr.field_name, value)
            self._access(frame, "putfield", instr.class_name, instr.field_name)
            obj.fields[instr.field_name] = value
        elif op == Opcode.ADD:
            regs[instr.dst] = self._read_int(frame, instr.a) + self._read_int(frame, instr.b)
        elif op == Opcode.SUB:
            regs[instr.dst] = self._read_int(frame, instr.a) - self._read_int(frame, instr.b)
        elif op == Opcode.IF_LT:
            if self._read_int(frame, instr.a) < self._read_int(frame, instr.b):
                next_pc = frame.method.labels[instr.label]
        elif op == Opcode.GOTO:
            next_pc = frame.method.labels[instr.label]
        elif op == Opcode.CALL:
            callee = self.methods[instr.callee]
            args = [self._read(frame, reg) for reg in instr.args]
            site = CallSite(frame.method_id, pc)
            stack.append(self._enter(callee, args, site, instr.dst))
            return
        elif op == Opcode.RETURN:
            value = self._read(frame, instr.src) if instr.src is not None else NO_VALUE
            self._transfer(frame, pc, len(frame.method.instructions))
            self._return(stack, value)
            return

        self._transfer(frame, pc, next_pc)
        frame.pc = next_pc


def execute(program: Program, limits: Optional[Limits] = None) -> Trace:
    """Run the entry method and return its instrumented trace"""
    trace = Interpreter(program, limits).run()
    logger.debug("Trace holds %d events (truncated=%s)", len(trace.events), trace.truncated)
    return trace


def collect_profile(program: Program, limits: Optional[Limits] = None) -> ProfileData:
    """Run the program once and count how often each CFG edge was taken"""
    interpreter = Interpreter(program, limits, collect_profile=True)
    interpreter.run()
    # untaken edges are listed with count 0 so every block is fully covered
    counts = {}
    for method in program.methods:
        for edge in build_cfg(method).edges:
            key = (method.method_id, edge.src, edge.dst)
            counts[key] = interpreter.edge_counts.get(key, 0)
    return ProfileData(counts=counts)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------

TRUNCATED_MARKER = "#truncated"


def write_trace(trace: Trace, sink: TextIO) -> None:
    for event in trace.events:
        if isinstance(event, AccessEvent):
            sink.write(f"A\t{event.kind}\t{event.class_name}\t{event.field_name}\t"
                       f"{event.value_type}\t{event.method}\t{event.index}\n")
        elif isinstance(event, EnterEvent):
            sink.write(f"E\t{event.method}\t{event.call_site.method}\t{event.call_site.index}\n")
        else:
            sink.write(f"X\t{event.method}\n")
    if trace.truncated:
        sink.write(TRUNCATED_MARKER + "\n")


_FIELD_COUNTS = {"A": 7, "E": 4, "X": 2}


def _parse_index(text: str, number: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise TraceFormatError(f"expected an instruction index, found '{text}'", number)


def read_trace(source: TextIO) -> Trace:
    events: List = []
    truncated = False
    for number, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if truncated:
            raise TraceFormatError("content after the truncation marker", number)
        if line == TRUNCATED_MARKER:
            truncated = True
            continue
        parts = line.split("\t")
        tag = parts[0]
        expected = _FIELD_COUNTS.get(tag)
        if expected is None:
            raise TraceFormatError(f"unknown record tag '{tag}'", number)
        if len(parts) != expected:
            raise TraceFormatError(
                f"record '{tag}' needs {expected} fields, found {len(parts)}", number)
        if tag == "A":
            if parts[1] not in ("getfield", "putfield"):
                raise TraceFormatError(f"unknown access kind '{parts[1]}'", number)
            events.append(AccessEvent(parts[1], parts[2], parts[3], parts[4], parts[5],
                                      _parse_index(parts[6], number)))
        elif tag == "E":
            events.append(EnterEvent(parts[1], CallSite(parts[2], _parse_index(parts[3], number))))
        else:
            events.append(ExitEvent(parts[1]))
    return Trace(events=events, truncated=truncated)
