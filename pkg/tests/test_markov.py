import json
import logging

import pytest

from conftest import loop_source, make_chain
from oopredictor.cfg import build_cfg, edge_weights
from oopredictor.errors import ModelContractError, ModelFormatError
from oopredictor.ir import parse_program
from oopredictor.markov import (
    build_chain,
    bypass,
    chain_statistics,
    check_chain,
    compress,
    model_from_json,
    model_to_json,
    transition_matrix,
)
from oopredictor.models import ProfileData, SelfLoopPolicy


def _model(program, method_id="Main.main", profile=None, **kwargs):
    method = program.method(method_id)
    cfg = build_cfg(method)
    return build_chain(cfg, edge_weights(cfg, profile), method, program, **kwargs)


def _fields(state):
    return [a.field_name for a in state.accesses]


def test_build_chain_mirrors_blocks(diamond_program):
    chain = _model(diamond_program)
    assert sorted(chain.states) == [0, 1, 2, 3, 4, 5]
    assert chain.initial == 0 and chain.finals == (5,)
    assert _fields(chain.states[1]) == ["x"]
    assert _fields(chain.states[2]) == ["y"]
    assert chain.states[1].outgoing == {2: 0.5, 3: 0.5}
    assert chain.states[1].accesses[0].value_type == "int"


def test_straight_line_chain(straight_program):
    chain = compress(_model(straight_program))
    assert sorted(chain.states) == [0, 1, 2]
    assert _fields(chain.states[1]) == ["x", "y", "z", "x"]
    assert chain.num_accesses == 4


def test_compress_diamond(diamond_program):
    chain = compress(_model(diamond_program))
    assert sorted(chain.states) == [0, 1, 2, 3, 5]
    assert chain.states[2].outgoing == {5: 1.0}
    assert chain.states[3].outgoing == {5: 1.0}
    assert chain.retained_empty_states() == []


def test_compress_loop_keeps_body_self_loop():
    chain = compress(_model(parse_program(loop_source(3))))
    assert sorted(chain.states) == [0, 2, 4]
    assert chain.states[0].outgoing == {2: 1.0}
    assert chain.states[2].outgoing == pytest.approx({2: 0.9, 4: 0.1})


def test_zero_weight_edges_and_unreachable_states_are_dropped(diamond_program):
    profile = ProfileData(counts={("Main.main", 1, 2): 0, ("Main.main", 1, 3): 5})
    chain = _model(diamond_program, profile=profile)
    assert 2 not in chain.states
    assert chain.states[1].outgoing == {3: 1.0}


def test_reference_fields_only(calls_program):
    chain = _model(calls_program, reference_fields_only=True)
    assert [_fields(s) for _, s in sorted(chain.states.items())] == [[], ["next"], []]


def test_bypass_worked_example():
    chain = make_chain({
        0: ([], {1: 1.0}),
        1: ([], {1: 0.4, 2: 0.3, 3: 0.3}),
        2: (["c"], {4: 1.0}),
        3: (["d"], {4: 1.0}),
        4: ([], {}),
    })
    for policy in SelfLoopPolicy:
        result = bypass(chain, 1, policy)
        assert 1 not in result.states
        assert result.states[0].outgoing == pytest.approx({2: 0.5, 3: 0.5}, abs=1e-12)


def test_bypass_merges_parallel_paths():
    chain = make_chain({
        0: ([], {1: 0.5, 2: 0.5}),
        1: ([], {2: 1.0}),
        2: (["x"], {3: 1.0}),
        3: ([], {}),
    })
    assert bypass(chain, 1).states[0].outgoing == {2: 1.0}


def test_bypass_does_not_touch_its_input():
    chain = make_chain({0: ([], {1: 1.0}), 1: ([], {2: 1.0}), 2: ([], {})})
    bypass(chain, 1)
    assert 1 in chain.states


@pytest.mark.parametrize("state", [0, 2, 3])
def test_bypass_refuses_initial_final_and_non_empty_states(state):
    chain = make_chain({
        0: ([], {1: 1.0}),
        1: ([], {2: 1.0}),
        2: (["x"], {3: 1.0}),
        3: ([], {}),
    })
    with pytest.raises(ModelContractError):
        bypass(chain, state)


def test_self_loop_only_state_is_kept(caplog):
    chain = make_chain({
        0: ([], {1: 0.5, 2: 0.5}),
        1: ([], {1: 1.0}),
        2: ([], {}),
    })
    with pytest.raises(ModelContractError):
        bypass(chain, 1)
    with caplog.at_level(logging.WARNING):
        result = compress(chain)
    assert result.retained_empty_states() == [1]
    assert "keeping empty state 1" in caplog.text


def test_compress_order_does_not_change_result():
    chain = make_chain({
        0: ([], {1: 0.6, 2: 0.4}),
        1: ([], {2: 0.5, 3: 0.5}),
        2: ([], {1: 0.2, 4: 0.8}),
        3: (["a"], {4: 1.0}),
        4: ([], {}),
    })
    forward = compress(chain, SelfLoopPolicy.PROPORTIONAL)
    backward = compress(chain, SelfLoopPolicy.PROPORTIONAL, order=[2, 1])
    assert forward.states[0].outgoing == pytest.approx(backward.states[0].outgoing, abs=1e-12)


def test_compress_order_does_not_change_default_policy_result():
    # empty states 1 and 2 form no cycle, so no self-loop is ever redistributed
    chain = make_chain({
        0: ([], {1: 0.6, 2: 0.4}),
        1: ([], {2: 0.5, 3: 0.5}),
        2: ([], {3: 0.3, 4: 0.7}),
        3: (["a"], {4: 1.0}),
        4: ([], {}),
    })
    forward = compress(chain)
    backward = compress(chain, order=[2, 1])
    assert forward.states[0].outgoing == pytest.approx(backward.states[0].outgoing, abs=1e-12)
    assert forward.states[0].outgoing == pytest.approx({3: 0.6 * 0.65 + 0.4 * 0.3,
                                                        4: 0.6 * 0.35 + 0.4 * 0.7}, abs=1e-12)


def test_model_json_round_trip(calls_program):
    for method in calls_program.methods:
        chain = compress(_model(calls_program, method.method_id))
        text = model_to_json(chain)
        assert model_from_json(text) == chain
        assert model_to_json(model_from_json(text)) == text


def test_model_json_layout(straight_program):
    document = json.loads(model_to_json(compress(_model(straight_program))))
    assert document["method"] == "Main.main"
    assert document["initial"] == 0 and document["finals"] == [2]
    assert document["states"][1]["accesses"][0] == {"class": "A", "field": "x", "type": "int"}
    assert document["states"][1]["transitions"] == [{"target": 2, "weight": 1.0}]


def _document(**changes):
    document = {
        "method": "T.m", "initial": 0, "finals": [1],
        "states": [
            {"id": 0, "accesses": [], "transitions": [{"target": 1, "weight": 1.0}]},
            {"id": 1, "accesses": [], "transitions": []},
        ],
    }
    document.update(changes)
    return json.dumps(document)


def test_model_json_rejects_non_stochastic_weights():
    states = [
        {"id": 0, "accesses": [], "transitions": [{"target": 1, "weight": 0.7}]},
        {"id": 1, "accesses": [], "transitions": []},
    ]
    with pytest.raises(ModelFormatError, match="sum to"):
        model_from_json(_document(states=states))


@pytest.mark.parametrize("text", [
    "{not json",
    _document(extra=1),
    _document(initial=9),
    _document(states=[{"id": 0, "accesses": [], "transitions": []},
                      {"id": 0, "accesses": [], "transitions": []}]),
    _document(states=[{"id": 0, "accesses": [{"class": "A", "field": "x"}],
                       "transitions": []}]),
])
def test_model_json_rejects_malformed_documents(text):
    with pytest.raises(ModelFormatError):
        model_from_json(text)


def test_check_chain_accepts_built_models(calls_program):
    for method in calls_program.methods:
        check_chain(compress(_model(calls_program, method.method_id)))


def test_statistics_and_matrix():
    chain = compress(_model(parse_program(loop_source(3))))
    assert chain_statistics(chain) == {"num_accesses": 2, "states": 3,
                                       "retained_empty_states": []}
    ids, matrix = transition_matrix(chain)
    assert ids == [0, 2, 4]
    assert matrix[1].tolist() == pytest.approx([0.0, 0.9, 0.1])
