import json

import numpy as np
import pytest

from resel.errors import DuplicateId, SchemaError, StoreError
from resel.labeler import RolloutRecord, RolloutStep, SufficiencyLabel
from resel.store import (
    JsonlWriter,
    SampleRecord,
    features_from_b64,
    features_to_b64,
    iter_records,
    load_index,
)


def sample(i=0, **overrides):
    kwargs = dict(
        sample_id=f"s{i:03d}",
        image_ref=f"/data/img{i}.jpg",
        query=f"what is item {i}?",
        ground_truths=[f"answer {i}", f"alt {i}"],
        metric="anls",
    )
    kwargs.update(overrides)
    return SampleRecord(**kwargs)


def labeled_sample(i=0):
    return sample(
        i,
        status="labeled",
        rollout=RolloutRecord(steps=[RolloutStep(384, "a", 0.0), RolloutStep(768, "b", 1.0)]),
        label=SufficiencyLabel(resolution=768, class_index=1),
        features=np.arange(4, dtype=np.float32),
    )


class TestRoundTrip:
    def test_append_then_load_field_exact(self, tmp_path):
        path = tmp_path / "store.jsonl"
        record = labeled_sample(1)
        with JsonlWriter(path) as writer:
            writer.append(record)
        (loaded,) = list(iter_records(path))
        assert loaded.sample_id == record.sample_id
        assert loaded.image_ref == record.image_ref
        assert loaded.query == record.query
        assert loaded.ground_truths == record.ground_truths
        assert loaded.label == record.label
        assert loaded.rollout.to_list() == record.rollout.to_list()
        assert np.allclose(loaded.features, record.features)
        assert loaded.status == "labeled"

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "store.jsonl"
        with JsonlWriter(path) as writer:
            for i in range(5):
                writer.append(sample(i))
        assert [r.sample_id for r in iter_records(path)] == [f"s{i:03d}" for i in range(5)]

    def test_duplicate_id_rejected(self, tmp_path):
        with JsonlWriter(tmp_path / "s.jsonl") as writer:
            writer.append(sample(1))
            with pytest.raises(DuplicateId):
                writer.append(sample(1))

    def test_duplicate_rejected_across_reopen(self, tmp_path):
        path = tmp_path / "s.jsonl"
        with JsonlWriter(path) as writer:
            writer.append(sample(1))
        with JsonlWriter(path) as writer:
            with pytest.raises(DuplicateId):
                writer.append(sample(1))
            writer.append(sample(2))
        assert load_index(path) == {"s001", "s002"}

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert list(iter_records(path)) == []

    def test_missing_file_raises_store_error(self, tmp_path):
        with pytest.raises(StoreError):
            list(iter_records(tmp_path / "nope.jsonl"))


class TestCrashSafety:
    def test_truncated_final_line_skipped_with_warning(self, tmp_path, caplog):
        path = tmp_path / "s.jsonl"
        with JsonlWriter(path) as writer:
            for i in range(3):
                writer.append(sample(i))
        raw = path.read_bytes()
        path.write_bytes(raw + b'{"id": "s999", "image": "x", "que')  # injected crash
        with caplog.at_level("WARNING"):
            records = list(iter_records(path))
        assert len(records) == 3
        assert any("truncated" in m for m in caplog.messages)

    def test_writer_reopens_after_crash_and_drops_tail(self, tmp_path):
        path = tmp_path / "s.jsonl"
        with JsonlWriter(path) as writer:
            writer.append(sample(0))
        path.write_bytes(path.read_bytes() + b'{"partial')
        with JsonlWriter(path) as writer:
            assert writer.ids == {"s000"}
            writer.append(sample(1))
        records = list(iter_records(path))
        assert [r.sample_id for r in records] == ["s000", "s001"]

    def test_malformed_middle_line_raises_with_line_number(self, tmp_path):
        path = tmp_path / "s.jsonl"
        with JsonlWriter(path) as writer:
            writer.append(sample(0))
            writer.append(sample(1))
        lines = path.read_text().splitlines()
        lines[0] = '{"broken":'
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="line 1"):
            list(iter_records(path))


class TestSchemaTolerance:
    def test_unknown_fields_preserved_on_rewrite(self, tmp_path):
        path = tmp_path / "s.jsonl"
        record = sample(0)
        d = record.to_dict()
        d["experimental_field"] = {"nested": [1, 2, 3]}
        path.write_text(json.dumps(d) + "\n")
        (loaded,) = list(iter_records(path))
        assert loaded.extra == {"experimental_field": {"nested": [1, 2, 3]}}
        assert loaded.to_dict()["experimental_field"] == {"nested": [1, 2, 3]}

    def test_missing_required_key_is_schema_error(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"id": "x", "query": "q"}\n')
        with pytest.raises(SchemaError, match="line 1"):
            list(iter_records(path))

    def test_status_invariants(self):
        with pytest.raises(SchemaError):
            SampleRecord("a", "b", "c", [], status="labeled")
        with pytest.raises(SchemaError):
            SampleRecord("a", "b", "c", [], status="failed")
        with pytest.raises(SchemaError):
            SampleRecord("a", "b", "c", [], status="bogus")


class TestFeatureEncoding:
    def test_round_trip(self):
        v = np.array([1.5, -2.25, 0.0, 3e7], dtype=np.float64)
        blob = features_to_b64(v)
        assert blob["dim"] == 4
        out = features_from_b64(blob)
        assert np.allclose(out, v)
        assert out.dtype == np.float64

    def test_declared_dim_checked(self):
        blob = features_to_b64(np.ones(4))
        blob["dim"] = 3
        with pytest.raises(SchemaError):
            features_from_b64(blob)

    def test_compact_encoding(self):
        # 4-byte floats: 256 dims fit in ~344 base64 chars
        blob = features_to_b64(np.zeros(256))
        assert len(blob["b64"]) < 1400
