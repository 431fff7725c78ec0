# Shared fixtures: small hand-built programs whose blocks and traces are known

import pytest

from oopredictor.ir import parse_program
from oopredictor.models import MarkovChain, MarkovState, OOAccess


# one block: putfield x, getfield y, putfield z, getfield x
STRAIGHT_SOURCE = """\
class A { x:int y:int z:int }
class Main {}

entry Main.main

method Main.main params 0 regs 4 {
  new r0 A
  const r1 7
  putfield r0 A.x r1
  getfield r2 r0 A.y
  putfield r0 A.z r1
  getfield r3 r0 A.x
  return
}
"""

# blocks: 1=[0,4) reads x, 2=[4,6) writes y, 3=[6,7) reads y, 4=[7,8) returns, exit 5
DIAMOND_SOURCE = """\
class A { x:int y:int }
class Main {}

entry Main.main

method Main.main params 0 regs 4 {
  new r0 A
  getfield r1 r0 A.x
  const r2 1
  iflt r1 r2 Lelse
  putfield r0 A.y r2
  goto Ljoin
  Lelse: getfield r3 r0 A.y
  Ljoin: return
}
"""

# blocks: 1=[0,4) setup, 2=[4,8) loop body reading x and writing y, 3=[8,9), exit 4
LOOP_TEMPLATE = """\
class A {{ x:int y:int }}
class Main {{}}

entry Main.main

method Main.main params 0 regs 5 {{
  new r0 A
  const r1 0
  const r2 {trips}
  const r3 1
  Lhead: getfield r4 r0 A.x
  putfield r0 A.y r4
  add r1 r1 r3
  iflt r1 r2 Lhead
  return
}}
"""

# four blocks in a row, one access each
CHAIN_SOURCE = """\
class A { a:int b:int c:int d:int }
class Main {}

entry Main.main

method Main.main params 0 regs 5 {
  new r0 A
  getfield r1 r0 A.a
  goto L1
  L1: getfield r2 r0 A.b
  goto L2
  L2: getfield r3 r0 A.c
  goto L3
  L3: getfield r4 r0 A.d
  return
}
"""

# three methods; Node.get and Node.touch are called from Main.main
CALLS_SOURCE = """\
class Node { value:int next:Node }
class Main {}

entry Main.main

method Node.get params 1 regs 2 {
  getfield r1 r0 Node.value
  return r1
}

method Node.touch params 1 regs 3 {
  new r1 Node
  putfield r0 Node.next r1
  const r2 2
  putfield r0 Node.value r2
}

method Main.main params 0 regs 4 {
  new r0 Node
  const r1 5
  putfield r0 Node.value r1
  call Node.get r0 -> r2
  call Node.touch r0
  call Node.get r0 -> r3
  getfield r2 r0 Node.next
}
"""


def loop_source(trips: int) -> str:
    return LOOP_TEMPLATE.format(trips=trips)


@pytest.fixture
def straight_program():
    return parse_program(STRAIGHT_SOURCE)


@pytest.fixture
def diamond_program():
    return parse_program(DIAMOND_SOURCE)


@pytest.fixture
def chain_program():
    return parse_program(CHAIN_SOURCE)


@pytest.fixture
def calls_program():
    return parse_program(CALLS_SOURCE)


def access(class_name: str, field_name: str) -> OOAccess:
    return OOAccess(class_name=class_name, field_name=field_name, value_type="int")


def make_chain(layout, initial=0, finals=(None,), method="T.m") -> MarkovChain:
    """Chain from {state: (accesses, {target: weight})}; finals default to the last id"""
    if finals == (None,):
        finals = (max(layout),)
    states = {
        sid: MarkovState(id=sid, accesses=tuple(access("A", f) for f in fields),
                         outgoing=dict(outgoing), is_initial=sid == initial,
                         is_final=sid in finals)
        for sid, (fields, outgoing) in layout.items()
    }
    return MarkovChain(method=method, states=states, initial=initial, finals=tuple(finals))


@pytest.fixture
def write_source(tmp_path):
    def write(text: str, name: str = "program.mir"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write
