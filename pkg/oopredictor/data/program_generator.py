# Random Program Generator
# Produces valid, terminating mini-IR programs for corpus experiments

import logging
import random
from typing import Dict, List, Tuple

from ..ir import validate_program
from ..models import (
    SCALAR_TYPE,
    ClassDef,
    FieldDecl,
    Instruction,
    MethodDef,
    Opcode,
    Program,
)

logger = logging.getLogger(__name__)

ENTRY_CLASS = "Main"
ENTRY_METHOD = "main"

MAX_DEPTH = 2
MAX_LOOP_TRIPS = 3


class _Helper:
    """Signature of a generated helper method"""

    def __init__(self, owner: str, name: str, returns_value: bool):
        self.owner = owner
        self.name = name
        self.returns_value = returns_value

    @property
    def method_id(self) -> str:
        return f"{self.owner}.{self.name}"


class _MethodBuilder:
    """Instruction emitter with register and label bookkeeping"""

    def __init__(self, owner: str, name: str, param_count: int):
        self.owner = owner
        self.name = name
        self.param_count = param_count
        self.instructions: List[Instruction] = []
        self.labels: Dict[str, int] = {}
        self.pending: List[str] = []
        self.next_register = param_count
        self.next_label = 0

    def register(self) -> int:
        reg = self.next_register
        self.next_register += 1
        return reg

    def new_label(self) -> str:
        label = f"L{self.next_label}"
        self.next_label += 1
        return label

    def mark(self, label: str) -> None:
        self.pending.append(label)

    def emit(self, **operands) -> None:
        index = len(self.instructions)
        self.instructions.append(Instruction(**operands))
        for label in self.pending:
            self.labels[label] = index
        self.pending = []

    def build(self) -> MethodDef:
        return MethodDef(owner=self.owner, name=self.name, param_count=self.param_count,
                         register_count=max(1, self.next_register),
                         instructions=tuple(self.instructions), labels=dict(self.labels))


class ProgramGenerator:
    """Seeded generator of object-manipulating programs"""

    def __init__(self, seed: int, size_hint: int):
        if size_hint < 1:
            raise ValueError("size_hint must be at least 1")
        self.rng = random.Random(seed)
        self.size_hint = size_hint
        self.classes: List[ClassDef] = []
        self.helpers: List[Tuple[_Helper, str]] = []  # helper, receiver class

    # -- classes -----------------------------------------------------------

    def _make_classes(self) -> None:
        count = self.rng.randint(1, min(4, 1 + self.size_hint))
        names = [f"C{k}" for k in range(count)]
        for name in names:
            fields = [FieldDecl(name="f0", declared_type=SCALAR_TYPE)]
            for k in range(1, self.rng.randint(2, 4)):
                declared = SCALAR_TYPE if self.rng.random() < 0.5 else self.rng.choice(names)
                fields.append(FieldDecl(name=f"f{k}", declared_type=declared))
            self.classes.append(ClassDef(name=name, fields=tuple(fields)))

    def _class(self, name: str) -> ClassDef:
        return next(c for c in self.classes if c.name == name)

    # -- statements --------------------------------------------------------

    def _int_source(self, builder: _MethodBuilder, counters: List[int]) -> int:
        if counters and self.rng.random() < 0.6:
            return self.rng.choice(counters)
        reg = builder.register()
        builder.emit(op=Opcode.CONST, dst=reg, value=self.rng.randint(0, 5))
        return reg

    def _access(self, builder: _MethodBuilder, objects: List[Tuple[int, str]],
                counters: List[int], force_read: bool = False) -> None:
        obj, class_name = self.rng.choice(objects)
        class_def = self._class(class_name)
        for k in range(self.rng.randint(1, 3)):
            decl = self.rng.choice(class_def.fields)
            if (force_read and k == 0) or self.rng.random() < 0.6:
                builder.emit(op=Opcode.GETFIELD, dst=builder.register(), obj=obj,
                             class_name=class_name, field_name=decl.name)
            elif decl.is_reference:
                value = builder.register()
                builder.emit(op=Opcode.NEW, dst=value, class_name=decl.declared_type)
                builder.emit(op=Opcode.PUTFIELD, obj=obj, class_name=class_name,
                             field_name=decl.name, src=value)
            else:
                value = self._int_source(builder, counters)
                builder.emit(op=Opcode.PUTFIELD, obj=obj, class_name=class_name,
                             field_name=decl.name, src=value)

    def _diamond(self, builder: _MethodBuilder, objects: List[Tuple[int, str]],
                 counters: List[int], depth: int, callable_helpers) -> None:
        obj, class_name = self.rng.choice(objects)
        probe, bound = builder.register(), builder.register()
        builder.emit(op=Opcode.GETFIELD, dst=probe, obj=obj,
                     class_name=class_name, field_name="f0")
        builder.emit(op=Opcode.CONST, dst=bound, value=self.rng.randint(1, 4))
        taken, join = builder.new_label(), builder.new_label()
        builder.emit(op=Opcode.IF_LT, a=probe, b=bound, label=taken)
        self._block(builder, objects, counters, depth + 1, callable_helpers)
        builder.emit(op=Opcode.GOTO, label=join)
        builder.mark(taken)
        self._block(builder, objects, counters, depth + 1, callable_helpers)
        builder.mark(join)

    def _loop(self, builder: _MethodBuilder, objects: List[Tuple[int, str]],
              counters: List[int], depth: int, callable_helpers) -> None:
        counter, limit, one = builder.register(), builder.register(), builder.register()
        builder.emit(op=Opcode.CONST, dst=counter, value=0)
        builder.emit(op=Opcode.CONST, dst=limit, value=self.rng.randint(1, MAX_LOOP_TRIPS))
        builder.emit(op=Opcode.CONST, dst=one, value=1)
        head = builder.new_label()
        builder.mark(head)
        self._block(builder, objects, counters + [counter], depth + 1, callable_helpers)
        builder.emit(op=Opcode.ADD, dst=counter, a=counter, b=one)
        builder.emit(op=Opcode.IF_LT, a=counter, b=limit, label=head)

    def _call(self, builder: _MethodBuilder, objects: List[Tuple[int, str]],
              callable_helpers) -> bool:
        options = [(helper, obj) for helper, receiver in callable_helpers
                   for obj, class_name in objects if class_name == receiver]
        if not options:
            return False
        helper, obj = self.rng.choice(options)
        dst = builder.register() if helper.returns_value and self.rng.random() < 0.5 else None
        builder.emit(op=Opcode.CALL, callee=helper.method_id, args=(obj,), dst=dst)
        return True

    def _statement(self, builder, objects, counters, depth, callable_helpers) -> None:
        roll = self.rng.random()
        if depth < MAX_DEPTH and roll < 0.2:
            self._diamond(builder, objects, counters, depth, callable_helpers)
        elif depth < MAX_DEPTH and roll < 0.35:
            self._loop(builder, objects, counters, depth, callable_helpers)
        elif roll < 0.55 and self._call(builder, objects, callable_helpers):
            return
        else:
            self._access(builder, objects, counters)

    def _block(self, builder, objects, counters, depth, callable_helpers) -> None:
        for _ in range(self.rng.randint(0, 2)):
            self._statement(builder, objects, counters, depth, callable_helpers)

    # -- methods -----------------------------------------------------------

    def _make_helper(self, index: int) -> MethodDef:
        receiver = self.rng.choice(self.classes).name
        helper = _Helper(receiver, f"visit{index}", returns_value=self.rng.random() < 0.5)
        builder = _MethodBuilder(receiver, helper.name, param_count=1)
        objects = [(0, receiver)]
        callable_helpers = list(self.helpers)
        for _ in range(self.rng.randint(1, 1 + self.size_hint // 2)):
            self._statement(builder, objects, [], 0, callable_helpers)
        if helper.returns_value:
            result = builder.register()
            builder.emit(op=Opcode.GETFIELD, dst=result, obj=0,
                         class_name=receiver, field_name="f0")
            builder.emit(op=Opcode.RETURN, src=result)
        else:
            builder.emit(op=Opcode.RETURN)
        self.helpers.append((helper, receiver))
        return builder.build()

    def _make_entry(self) -> MethodDef:
        builder = _MethodBuilder(ENTRY_CLASS, ENTRY_METHOD, param_count=0)
        objects: List[Tuple[int, str]] = []
        for class_def in self.classes:
            reg = builder.register()
            builder.emit(op=Opcode.NEW, dst=reg, class_name=class_def.name)
            objects.append((reg, class_def.name))
        self._access(builder, objects, [], force_read=True)
        for _ in range(self.rng.randint(1, 1 + self.size_hint)):
            self._statement(builder, objects, [], 0, list(self.helpers))
        builder.emit(op=Opcode.RETURN)
        return builder.build()

    def generate(self) -> Program:
        self._make_classes()
        helper_count = self.rng.randint(0, min(3, self.size_hint))
        methods = [self._make_helper(k) for k in range(helper_count)]
        methods.append(self._make_entry())
        classes = tuple(self.classes) + (ClassDef(name=ENTRY_CLASS),)
        program = Program(classes=classes, methods=tuple(methods),
                          entry=f"{ENTRY_CLASS}.{ENTRY_METHOD}")
        validate_program(program)
        return program


def generate_random_program(seed: int, size_hint: int) -> Program:
    """Deterministic random program for a (seed, size_hint) pair"""
    program = ProgramGenerator(seed, size_hint).generate()
    logger.debug("Generated program for seed %d with %d methods", seed, len(program.methods))
    return program


def generate_straight_line_program(seed: int, accesses: int = 6) -> Program:
    """Branch-free, call-free single-method program with `accesses` field accesses"""
    rng = random.Random(seed)
    fields = tuple(FieldDecl(name=f"f{k}", declared_type=SCALAR_TYPE)
                   for k in range(rng.randint(2, 4)))
    target = ClassDef(name="C0", fields=fields)
    builder = _MethodBuilder(ENTRY_CLASS, ENTRY_METHOD, param_count=0)
    obj, value = builder.register(), builder.register()
    builder.emit(op=Opcode.NEW, dst=obj, class_name=target.name)
    builder.emit(op=Opcode.CONST, dst=value, value=rng.randint(0, 9))
    for _ in range(max(1, accesses)):
        decl = rng.choice(fields)
        if rng.random() < 0.5:
            builder.emit(op=Opcode.GETFIELD, dst=builder.register(), obj=obj,
                         class_name=target.name, field_name=decl.name)
        else:
            builder.emit(op=Opcode.PUTFIELD, obj=obj, class_name=target.name,
                         field_name=decl.name, src=value)
    builder.emit(op=Opcode.RETURN)
    program = Program(classes=(target, ClassDef(name=ENTRY_CLASS)),
                      methods=(builder.build(),), entry=f"{ENTRY_CLASS}.{ENTRY_METHOD}")
    validate_program(program)
    return program


def pick_size_hint(rng: random.Random) -> int:
    return rng.randint(1, 6)
