# Mini-IR front end
# Parser and serializer for the textual register-based object language

import logging
import re
from typing import Dict, List, Optional, Set, Tuple

from .errors import (
    DuplicateDefinitionError,
    InvalidControlFlowError,
    MirSyntaxError,
    UnresolvedReferenceError,
)
from .models import (
    SCALAR_TYPE,
    ClassDef,
    FieldDecl,
    Instruction,
    MethodDef,
    Opcode,
    Program,
)

logger = logging.getLogger(__name__)

IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
IDENT_RE = re.compile(rf"^{IDENT}$")
QUALIFIED_RE = re.compile(rf"^({IDENT})\.({IDENT})$")
REGISTER_RE = re.compile(r"^r(\d+)$")
LABEL_RE = re.compile(r"^L[A-Za-z0-9_]*$")
INT_RE = re.compile(r"^-?\d+$")

CLASS_RE = re.compile(rf"^class\s+(\S+)\s*\{{(.*)\}}\s*$")
METHOD_RE = re.compile(
    r"^method\s+(\S+)\s+params\s+(\S+)\s+regs\s+(\S+)\s*\{(\s*\})?\s*$")
ENTRY_RE = re.compile(r"^entry\s+(\S+)\s*$")

# Exit marker used by instruction_successors for "leaves the method"
EXIT = -1


class _Line:
    """A source line with comment stripped and token columns kept"""

    def __init__(self, number: int, raw: str):
        self.number = number
        text = raw.split("#", 1)[0]
        self.text = text.strip()
        self.tokens: List[Tuple[str, int]] = [
            (m.group(0), m.start() + 1) for m in re.finditer(r"\S+", text)]

    def error(self, message: str, token_index: int = 0) -> MirSyntaxError:
        column = self.tokens[token_index][1] if token_index < len(self.tokens) else 1
        return MirSyntaxError(message, self.number, column)


def _identifier(line: _Line, token: str, index: int) -> str:
    if not IDENT_RE.match(token):
        raise line.error(f"expected identifier, found '{token}'", index)
    return token


def _qualified(line: _Line, token: str, index: int) -> Tuple[str, str]:
    match = QUALIFIED_RE.match(token)
    if not match:
        raise line.error(f"expected Owner.name, found '{token}'", index)
    return match.group(1), match.group(2)


def _register(line: _Line, token: str, index: int) -> int:
    match = REGISTER_RE.match(token)
    if not match:
        raise line.error(f"expected register, found '{token}'", index)
    return int(match.group(1))


def _integer(line: _Line, token: str, index: int) -> int:
    if not INT_RE.match(token):
        raise line.error(f"expected integer, found '{token}'", index)
    return int(token)


def _label(line: _Line, token: str, index: int) -> str:
    if not LABEL_RE.match(token):
        raise line.error(f"expected label, found '{token}'", index)
    return token


def _expect_arity(line: _Line, operands: List[Tuple[str, int]], count: int,
                  mnemonic: str, first: int) -> None:
    if len(operands) != count:
        raise line.error(
            f"'{mnemonic}' takes {count} operand(s), found {len(operands)}", first)


def _parse_instruction(line: _Line, first: int) -> Instruction:
    """Parse the instruction starting at token index `first`"""
    mnemonic = line.tokens[first][0]
    operands = line.tokens[first + 1:]
    texts = [tok for tok, _ in operands]

    def at(k: int) -> int:
        return first + 1 + k

    if mnemonic == "const":
        _expect_arity(line, operands, 2, mnemonic, first)
        return Instruction(op=Opcode.CONST, dst=_register(line, texts[0], at(0)),
                           value=_integer(line, texts[1], at(1)))
    if mnemonic == "new":
        _expect_arity(line, operands, 2, mnemonic, first)
        return Instruction(op=Opcode.NEW, dst=_register(line, texts[0], at(0)),
                           class_name=_identifier(line, texts[1], at(1)))
    if mnemonic == "getfield":
        _expect_arity(line, operands, 3, mnemonic, first)
        class_name, field_name = _qualified(line, texts[2], at(2))
        return Instruction(op=Opcode.GETFIELD, dst=_register(line, texts[0], at(0)),
                           obj=_register(line, texts[1], at(1)),
                           class_name=class_name, field_name=field_name)
    if mnemonic == "putfield":
        _expect_arity(line, operands, 3, mnemonic, first)
        class_name, field_name = _qualified(line, texts[1], at(1))
        return Instruction(op=Opcode.PUTFIELD, obj=_register(line, texts[0], at(0)),
                           class_name=class_name, field_name=field_name,
                           src=_register(line, texts[2], at(2)))
    if mnemonic in ("add", "sub"):
        _expect_arity(line, operands, 3, mnemonic, first)
        return Instruction(op=Opcode(mnemonic), dst=_register(line, texts[0], at(0)),
                           a=_register(line, texts[1], at(1)),
                           b=_register(line, texts[2], at(2)))
    if mnemonic == "iflt":
        _expect_arity(line, operands, 3, mnemonic, first)
        return Instruction(op=Opcode.IF_LT, a=_register(line, texts[0], at(0)),
                           b=_register(line, texts[1], at(1)),
                           label=_label(line, texts[2], at(2)))
    if mnemonic == "goto":
        _expect_arity(line, operands, 1, mnemonic, first)
        return Instruction(op=Opcode.GOTO, label=_label(line, texts[0], at(0)))
    if mnemonic == "return":
        if len(operands) > 1:
            raise line.error("'return' takes at most one operand", first)
        src = _register(line, texts[0], at(0)) if operands else None
        return Instruction(op=Opcode.RETURN, src=src)
    if mnemonic == "call":
        if not operands:
            raise line.error("'call' needs a target method", first)
        owner, name = _qualified(line, texts[0], at(0))
        rest = texts[1:]
        dst = None
        if "->" in rest:
            arrow = rest.index("->")
            if arrow != len(rest) - 2:
                raise line.error("'->' must be followed by exactly one register", at(1 + arrow))
            dst = _register(line, rest[-1], at(len(texts) - 1))
            rest = rest[:arrow]
        args = tuple(_register(line, tok, at(1 + k)) for k, tok in enumerate(rest))
        return Instruction(op=Opcode.CALL, callee=f"{owner}.{name}", args=args, dst=dst)
    raise line.error(f"unknown instruction '{mnemonic}'", first)


def _parse_class(line: _Line, match: "re.Match") -> ClassDef:
    name = _identifier(line, match.group(1), 1)
    fields: List[FieldDecl] = []
    seen: Set[str] = set()
    for chunk in re.split(r"[\s,]+", match.group(2).strip()):
        if not chunk:
            continue
        if chunk.count(":") != 1:
            raise line.error(f"expected field:type, found '{chunk}'")
        field_name, declared_type = chunk.split(":")
        if not IDENT_RE.match(field_name) or not IDENT_RE.match(declared_type):
            raise line.error(f"malformed field declaration '{chunk}'")
        if field_name in seen:
            raise DuplicateDefinitionError(f"{name}.{field_name}")
        seen.add(field_name)
        fields.append(FieldDecl(name=field_name, declared_type=declared_type))
    return ClassDef(name=name, fields=tuple(fields))


def parse_program(source: str) -> Program:
    """Parse mini-IR source text into a validated Program"""
    classes: List[ClassDef] = []
    methods: List[MethodDef] = []
    entry: Optional[str] = None

    lines = [_Line(n, raw) for n, raw in enumerate(source.splitlines(), start=1)]
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line.text:
            continue

        class_match = CLASS_RE.match(line.text)
        if class_match:
            classes.append(_parse_class(line, class_match))
            continue

        entry_match = ENTRY_RE.match(line.text)
        if entry_match:
            if entry is not None:
                raise DuplicateDefinitionError("entry")
            owner, name = _qualified(line, entry_match.group(1), 1)
            entry = f"{owner}.{name}"
            continue

        method_match = METHOD_RE.match(line.text)
        if method_match:
            owner, name = _qualified(line, method_match.group(1), 1)
            param_count = _integer(line, method_match.group(2), 3)
            register_count = _integer(line, method_match.group(3), 5)
            instructions: List[Instruction] = []
            labels: Dict[str, int] = {}
            if not method_match.group(4):
                pending: List[Tuple[str, _Line]] = []
                closed = False
                while i < len(lines):
                    body = lines[i]
                    i += 1
                    if not body.text:
                        continue
                    if body.text == "}":
                        closed = True
                        break
                    k = 0
                    while k < len(body.tokens) and body.tokens[k][0].endswith(":"):
                        label = _label(body, body.tokens[k][0][:-1], k)
                        if label in labels or any(label == p for p, _ in pending):
                            raise DuplicateDefinitionError(f"{owner}.{name}:{label}")
                        pending.append((label, body))
                        k += 1
                    if k == len(body.tokens):
                        continue
                    index = len(instructions)
                    instructions.append(_parse_instruction(body, k))
                    for label, _ in pending:
                        labels[label] = index
                    pending = []
                if not closed:
                    raise line.error(f"method {owner}.{name} is missing its closing '}}'")
                if pending:
                    label, where = pending[0]
                    raise where.error(f"label '{label}' does not precede an instruction")
            try:
                methods.append(MethodDef(owner=owner, name=name, param_count=param_count,
                                         register_count=register_count,
                                         instructions=tuple(instructions), labels=labels))
            except ValueError as exc:
                raise line.error(f"invalid method header: {exc}") from exc
            continue

        raise line.error(f"unexpected line '{line.text}'")

    if entry is None:
        raise MirSyntaxError("missing 'entry' declaration", max(len(lines), 1))

    program = Program(classes=tuple(classes), methods=tuple(methods), entry=entry)
    validate_program(program)
    logger.debug("Parsed program with %d classes and %d methods",
                 len(classes), len(methods))
    return program


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def instruction_successors(method: MethodDef, index: int) -> List[int]:
    """Instruction indices control may reach next; EXIT when leaving the method"""
    instr = method.instructions[index]
    last = len(method.instructions)

    def follow(target: int) -> int:
        return EXIT if target >= last else target

    if instr.op == Opcode.RETURN:
        return [EXIT]
    if instr.op == Opcode.GOTO:
        return [method.labels[instr.label]]
    if instr.op == Opcode.IF_LT:
        fall, taken = follow(index + 1), method.labels[instr.label]
        return [fall] if fall == taken else [fall, taken]
    return [follow(index + 1)]


def _check_control_flow(method: MethodDef) -> None:
    count = len(method.instructions)
    if count == 0:
        return
    successors = {i: instruction_successors(method, i) for i in range(count)}

    reached = {0}
    work = [0]
    while work:
        for nxt in successors[work.pop()]:
            if nxt != EXIT and nxt not in reached:
                reached.add(nxt)
                work.append(nxt)
    if len(reached) != count:
        first = min(set(range(count)) - reached)
        raise InvalidControlFlowError(
            f"{method.method_id}: instruction {first} is unreachable")

    predecessors: Dict[int, List[int]] = {i: [] for i in range(count)}
    exits = []
    for i, targets in successors.items():
        for nxt in targets:
            if nxt == EXIT:
                exits.append(i)
            else:
                predecessors[nxt].append(i)
    leaves = set(exits)
    work = list(exits)
    while work:
        for prev in predecessors[work.pop()]:
            if prev not in leaves:
                leaves.add(prev)
                work.append(prev)
    if len(leaves) != count:
        first = min(set(range(count)) - leaves)
        raise InvalidControlFlowError(
            f"{method.method_id}: instruction {first} can never reach a return")


def _check_method(program: Program, method: MethodDef) -> None:
    method_id = method.method_id
    if program.class_def(method.owner) is None:
        raise UnresolvedReferenceError(method.owner, method_id)
    if method.param_count > method.register_count:
        raise InvalidControlFlowError(
            f"{method_id}: {method.param_count} parameters exceed {method.register_count} registers")

    for label, index in method.labels.items():
        if not 0 <= index < len(method.instructions):
            raise UnresolvedReferenceError(label, method_id)

    for index, instr in enumerate(method.instructions):
        where = f"{method_id}@{index}"
        for reg in instr.registers_read() + instr.registers_written():
            if not 0 <= reg < method.register_count:
                raise UnresolvedReferenceError(f"r{reg}", where)
        if instr.label is not None and instr.label not in method.labels:
            raise UnresolvedReferenceError(instr.label, where)
        if instr.op == Opcode.NEW and program.class_def(instr.class_name) is None:
            raise UnresolvedReferenceError(instr.class_name, where)
        if instr.is_field_access:
            if program.field_type(instr.class_name, instr.field_name) is None:
                raise UnresolvedReferenceError(
                    f"{instr.class_name}.{instr.field_name}", where)
        if instr.op == Opcode.CALL:
            callee = program.method(instr.callee)
            if callee is None:
                raise UnresolvedReferenceError(instr.callee, where)
            if len(instr.args) != callee.param_count:
                raise InvalidControlFlowError(
                    f"{where}: {instr.callee} takes {callee.param_count} argument(s), "
                    f"{len(instr.args)} given")

    _check_control_flow(method)


def validate_program(program: Program) -> None:
    """Raise an InputError subclass unless every program invariant holds"""
    class_names: Set[str] = set()
    for class_def in program.classes:
        if class_def.name in class_names:
            raise DuplicateDefinitionError(class_def.name)
        class_names.add(class_def.name)

    for class_def in program.classes:
        seen: Set[str] = set()
        for decl in class_def.fields:
            if decl.name in seen:
                raise DuplicateDefinitionError(f"{class_def.name}.{decl.name}")
            seen.add(decl.name)
            if decl.declared_type != SCALAR_TYPE and decl.declared_type not in class_names:
                raise UnresolvedReferenceError(
                    decl.declared_type, f"{class_def.name}.{decl.name}")

    method_ids: Set[str] = set()
    for method in program.methods:
        if method.method_id in method_ids:
            raise DuplicateDefinitionError(method.method_id)
        method_ids.add(method.method_id)

    entry = program.method(program.entry)
    if entry is None:
        raise UnresolvedReferenceError(program.entry, "entry")
    if entry.param_count != 0:
        raise InvalidControlFlowError(f"entry method {program.entry} must take no parameters")

    for method in program.methods:
        _check_method(program, method)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def format_instruction(instr: Instruction) -> str:
    op = instr.op
    if op == Opcode.CONST:
        return f"const r{instr.dst} {instr.value}"
    if op == Opcode.NEW:
        return f"new r{instr.dst} {instr.class_name}"
    if op == Opcode.GETFIELD:
        return f"getfield r{instr.dst} r{instr.obj} {instr.class_name}.{instr.field_name}"
    if op == Opcode.PUTFIELD:
        return f"putfield r{instr.obj} {instr.class_name}.{instr.field_name} r{instr.src}"
    if op in (Opcode.ADD, Opcode.SUB):
        return f"{op.value} r{instr.dst} r{instr.a} r{instr.b}"
    if op == Opcode.IF_LT:
        return f"iflt r{instr.a} r{instr.b} {instr.label}"
    if op == Opcode.GOTO:
        return f"goto {instr.label}"
    if op == Opcode.RETURN:
        return "return" if instr.src is None else f"return r{instr.src}"
    parts = ["call", instr.callee] + [f"r{reg}" for reg in instr.args]
    if instr.dst is not None:
        parts += ["->", f"r{instr.dst}"]
    return " ".join(parts)


def _format_method(method: MethodDef) -> List[str]:
    header = (f"method {method.method_id} params {method.param_count} "
              f"regs {method.register_count}")
    if not method.instructions:
        return [header + " {}"]

    labels_at: Dict[int, List[str]] = {}
    for label, index in sorted(method.labels.items()):
        labels_at.setdefault(index, []).append(label)

    lines = [header + " {"]
    for index, instr in enumerate(method.instructions):
        prefix = "".join(f"{label}: " for label in labels_at.get(index, []))
        lines.append(f"  {prefix}{format_instruction(instr)}")
    lines.append("}")
    return lines


def serialize_program(program: Program) -> str:
    """Canonical text form; parse_program(serialize_program(p)) == p"""
    lines: List[str] = []
    for class_def in program.classes:
        if class_def.fields:
            body = " ".join(f"{d.name}:{d.declared_type}" for d in class_def.fields)
            lines.append(f"class {class_def.name} {{ {body} }}")
        else:
            lines.append(f"class {class_def.name} {{}}")
    lines.append("")
    lines.append(f"entry {program.entry}")
    for method in program.methods:
        lines.append("")
        lines.extend(_format_method(method))
    return "\n".join(lines) + "\n"
