from __future__ import annotations

import csv
import json
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from emrecg.dataset import (
    FIELDS,
    ColumnMapping,
    Dataset,
    DistinctionScope,
    Modality,
    SchemaError,
    ValidationError,
    load_dataset,
    parse_coordinates,
    parse_relations,
    tokenize,
    validate,
    write_dataset,
)
from emrecg.synthetic import generate_records

FIG1_ROW = {
    "video_id": "vid42",
    "target_object": "RedBlock1",
    "modality": "ensemble",
    "agent_distance": "0.83",
    "uses_distance_distinction": "true",
    "distinction_scope": "entire_world",
    "utterance": "that red block in front of the knife",
    "relational_descriptors": "in front of the knife",
    "object_coordinates": "RedBlock1:(0.1,0.8,0.2);Knife:(0.1,0.8,-0.3)",
    "relation_set": "in_front(RedBlock1,Knife)",
    "scores": "5;4;4;3;5;4;2;4",
}


def write_rows(path, rows, header=FIELDS, delimiter=","):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), delimiter=delimiter)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def test_fig1_row(tmp_path):
    ds = load_dataset(write_rows(tmp_path / "d.csv", [FIG1_ROW]))
    assert len(ds) == 1
    r = ds.records[0]
    assert r.modality is Modality.ENSEMBLE
    assert r.utterance == "that red block in front of the knife"
    assert r.scores == (5, 4, 4, 3, 5, 4, 2, 4)
    assert r.object_coordinates["Knife"] == (0.1, 0.8, -0.3)
    assert r.relation_set == (("in_front", "RedBlock1", "Knife"),)
    assert r.distinction_scope is DistinctionScope.ENTIRE_WORLD
    assert ds.term_vocabulary == {"that", "red", "block", "in", "front", "of", "the", "knife"}
    assert ds.object_inventory == {"RedBlock1", "Knife"}


def test_empty_file_with_header(tmp_path):
    ds = load_dataset(write_rows(tmp_path / "d.csv", []))
    assert len(ds) == 0
    assert ds.term_vocabulary == frozenset()


def test_tsv(tmp_path):
    ds = load_dataset(write_rows(tmp_path / "d.tsv", [FIG1_ROW], delimiter="\t"))
    assert ds.records[0].video_id == "vid42"


def test_missing_column_named(tmp_path):
    header = [f for f in FIELDS if f != "agent_distance"]
    row = {k: v for k, v in FIG1_ROW.items() if k != "agent_distance"}
    with pytest.raises(SchemaError, match="agent_distance"):
        load_dataset(write_rows(tmp_path / "d.csv", [row], header))


def test_score_out_of_range_has_row_id(tmp_path):
    row = dict(FIG1_ROW, scores="5;4;4;3;5;4;2;6")
    with pytest.raises(ValidationError) as ei:
        load_dataset(write_rows(tmp_path / "d.csv", [row]))
    assert ei.value.record_id == "vid42"


def test_missing_scores_rejected(tmp_path):
    row = dict(FIG1_ROW, scores="5;4;4;3;5;4;2")
    with pytest.raises(ValidationError, match="expected 8 scores"):
        load_dataset(write_rows(tmp_path / "d.csv", [row]))


def test_bad_coordinate(tmp_path):
    row = dict(FIG1_ROW, object_coordinates="RedBlock1:(0.1,zz,0.2)")
    with pytest.raises(ValidationError) as ei:
        load_dataset(write_rows(tmp_path / "d.csv", [row]))
    assert ei.value.record_id == "vid42"


def test_column_mapping(tmp_path):
    renamed = {("VideoID" if k == "video_id" else k): v for k, v in FIG1_ROW.items()}
    renamed = {k: v for k, v in renamed.items() if k != "scores"}
    for i, s in enumerate("5;4;4;3;5;4;2;4".split(";")):
        renamed[f"s{i}"] = s
    renamed["modality"] = "both"
    header = list(renamed)
    path = write_rows(tmp_path / "d.csv", [renamed], header)
    mpath = tmp_path / "m.json"
    mpath.write_text(json.dumps({
        "columns": {"video_id": "VideoID", "scores": [f"s{i}" for i in range(8)]},
        "value_aliases": {"modality": {"both": "ensemble"}},
    }))
    ds = load_dataset(path, mapping=ColumnMapping.from_json(mpath))
    assert ds.records[0].video_id == "vid42"
    assert ds.records[0].modality is Modality.ENSEMBLE
    assert ds.records[0].scores == (5, 4, 4, 3, 5, 4, 2, 4)


def test_json_coordinates_and_relations():
    assert parse_coordinates('{"Cup": [1, 2, 3]}') == {"Cup": (1.0, 2.0, 3.0)}
    assert parse_relations('[["on", "Cup", "Table"]]') == (("on", "Cup", "Table"),)
    assert parse_relations("left(Cup, Knife); on(Cup,Table)") == (("left", "Cup", "Knife"), ("on", "Cup", "Table"))


def _valid():
    return Dataset.from_records(generate_records(16, 3))


def test_validate_clean():
    assert not validate(_valid())


def test_validate_gesture_with_utterance():
    ds = _valid()
    recs = list(ds.records)
    i = next(i for i, r in enumerate(recs) if r.modality is Modality.GESTURE)
    recs[i] = replace(recs[i], utterance="red")
    report = validate(Dataset.from_records(recs))
    assert len(report) == 1
    assert report.violations[0].record_id == recs[i].video_id


def test_validate_seven_scores():
    recs = list(_valid().records)
    recs[0] = replace(recs[0], scores=recs[0].scores[:7])
    report = validate(Dataset.from_records(recs))
    assert [v.message for v in report] == ["expected 8 scores, got 7"]


def test_validate_scope_iff_distinction():
    recs = list(_valid().records)
    r = recs[0]
    recs[0] = replace(r, uses_distance_distinction=not r.uses_distance_distinction)
    assert len(validate(Dataset.from_records(recs))) == 1


def test_validate_vocabulary_closure():
    ds = _valid()
    bad = Dataset(ds.records, ds.object_inventory, frozenset())
    assert any("vocabulary" in v.message for v in validate(bad))


def test_round_trip(tmp_path):
    ds = _valid()
    write_dataset(ds, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv")
    assert back == ds


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 30))
def test_load_is_deterministic(tmp_path_factory, seed, n):
    path = tmp_path_factory.mktemp("d") / "d.csv"
    write_dataset(generate_records(n, seed), path)
    a, b = load_dataset(path), load_dataset(path)
    assert a == b
    assert not validate(a)
    for r in a.records:
        assert set(r.tokens) <= a.term_vocabulary


def test_tokenize():
    assert tokenize("That Red_Block, in front of the knife.") == ["that", "red", "block", "in", "front", "of", "the", "knife"]
    assert tokenize("") == []
