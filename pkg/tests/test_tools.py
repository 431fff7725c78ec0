import json

import pytest

from oopredictor.commands import build_models, method_sizes
from oopredictor.config import RunConfig
from oopredictor.errors import InputError, ModelFormatError
from oopredictor.markov import model_to_json
from oopredictor.models import MethodValidation
from oopredictor.tools import report_writer
from oopredictor.tools.file_store import (
    ModelStore,
    atomic_write_text,
    class_table,
    model_filename,
    read_text,
)


def test_atomic_write_creates_parents_and_replaces(tmp_path):
    target = tmp_path / "deep" / "dir" / "out.txt"
    atomic_write_text(target, "first\n")
    atomic_write_text(target, "second\n")
    assert target.read_text() == "second\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_read_text_reports_missing_files(tmp_path):
    with pytest.raises(InputError, match="cannot read trace"):
        read_text(tmp_path / "missing.trace", "trace")


def test_model_filename_flattens_corpus_labels():
    assert model_filename("Main.main") == "Main.main.json"
    assert model_filename("p003:Main.main") == "p003_Main.main.json"


def _save(calls_program, root):
    chains = build_models(calls_program, RunConfig())
    store = ModelStore(root)
    manifest = store.save(chains, method_sizes(calls_program), class_table(calls_program),
                          RunConfig().model_dump(mode="json"))
    return store, chains, manifest


def test_model_store_round_trip(calls_program, tmp_path):
    store, chains, manifest = _save(calls_program, tmp_path)
    assert [e.method for e in manifest.methods] == ["Main.main", "Node.get", "Node.touch"]
    (get,) = [e for e in manifest.methods if e.method == "Node.get"]
    assert get.file == "models/Node.get.json"
    assert get.method_size == 2 and get.num_accesses == 1
    assert store.load_manifest() == manifest
    assert store.load_models() == {c.method: c for c in chains}


def test_model_store_detects_mismatched_file(calls_program, tmp_path):
    store, chains, _ = _save(calls_program, tmp_path)
    other = next(c for c in chains if c.method == "Node.touch")
    (tmp_path / "models" / "Node.get.json").write_text(model_to_json(other))
    with pytest.raises(ModelFormatError, match="expected Node.get"):
        store.load_models()


def test_model_store_rejects_malformed_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"methods": [{"method": "A.m"}]}))
    with pytest.raises(ModelFormatError):
        ModelStore(tmp_path).load_manifest()


def test_class_table(calls_program):
    assert class_table(calls_program) == {"Node": ["value", "next"], "Main": []}
    assert "p001:Node" in class_table(calls_program, "p001:")


# ---------------------------------------------------------------------------
# report writer
# ---------------------------------------------------------------------------

def test_format_cell():
    assert report_writer.format_cell(None) == ""
    assert report_writer.format_cell(True) == "true"
    assert report_writer.format_cell(0.1) == "0.1"
    assert report_writer.format_cell(7) == "7"


def test_render_csv_opens_with_config_line():
    text = report_writer.render_csv(["a", "b"], [{"a": 1, "b": None}], '{"seed":0}')
    assert text == '# config {"seed":0}\na,b\n1,\n'


def test_validation_csv_round_trip(tmp_path):
    rows = [
        MethodValidation(method="A.m", calls_evaluated=3, termination_rate=2 / 3,
                         oo_match_rate=0.1, method_size=12, num_accesses=4),
        MethodValidation(method="B.n"),
    ]
    path = tmp_path / "validation.csv"
    report_writer.write_validation(path, rows, RunConfig().header())
    restored = report_writer.read_validation(path)
    assert [r.method for r in restored] == ["A.m", "B.n"]
    assert restored[0].termination_rate == 2 / 3
    assert restored[0].oo_match_rate == 0.1
    assert restored[1].termination_rate is None and restored[1].calls_evaluated == 0


def test_read_csv_requires_columns(tmp_path):
    path = tmp_path / "v.csv"
    path.write_text("method,calls_evaluated\nA.m,1\n")
    with pytest.raises(InputError, match="missing column"):
        report_writer.read_validation(path)


def test_read_validation_rejects_bad_rows(tmp_path):
    header = ",".join(report_writer.VALIDATION_COLUMNS)
    path = tmp_path / "v.csv"
    path.write_text(f"{header}\nA.m,one,,,1,1,0\n")
    with pytest.raises(InputError, match="bad validation row 1"):
        report_writer.read_validation(path)
