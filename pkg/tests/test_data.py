import numpy as np
import pytest

from ordinal_ws import OrdinalDataset, ingest_csv
from ordinal_ws.data import cumulative_coding, reference_coding
from ordinal_ws.errors import DomainError, IdentifiabilityError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_arthritis_layout(arthritis):
    assert arthritis.n == 301
    assert arthritis.N == 888
    assert arthritis.K == 5 and arthritis.d == 3
    assert arthritis.names[:3] == ["time[2,3]", "time[3]", "trt"]
    assert arthritis.names[3:7] == ["baseline[2,3,4,5]", "baseline[3,4,5]", "baseline[4,5]", "baseline[5]"]
    assert sorted(np.unique(arthritis.sizes).tolist()) == [1, 2, 3]


def test_cumulative_coding_labels():
    X, lab = cumulative_coding(np.array([1.0, 3.0, 5.0, 3.0]), "time")
    assert lab == ["time[2,3]", "time[3]"]
    assert X.tolist() == [[0, 0], [1, 0], [1, 1], [1, 0]]
    X, lab = reference_coding(np.array([1.0, 2.0, 3.0]), "g")
    assert lab == ["g=2", "g=3"] and X.tolist() == [[0, 0], [1, 0], [0, 1]]


def test_csv_quoting_missing_and_relabel(tmp_path, caplog):
    p = write(tmp_path, 'id,y,x,t\n"a,1",2,0.5,1\n"a,1",4,1.5,2\nb,,1,1\nb,6,2.0,2\nb,2,0.1,1\n')
    with caplog.at_level("INFO"):
        ds = ingest_csv(p, "id", "y", ["x"], time_col="t")
    assert "dropped 1 rows" in caplog.text
    assert ds.category_map == {2: 1, 4: 2, 6: 3}
    assert ds.n == 2 and ds.N == 4 and ds.K == 3
    assert ds.cluster_labels == ["a,1", "b"]


def test_time_gaps_keep_slots(tmp_path):
    p = write(tmp_path, "id,y,t\n1,1,1\n1,2,5\n2,2,3\n2,1,1\n")
    ds = ingest_csv(p, "id", "y", [], time_col="t")
    assert ds.index.tolist() == [0, 2, 0, 1]
    assert ds.d == 3


def test_ingest_errors(tmp_path):
    with pytest.raises(DomainError, match="not found"):
        ingest_csv(write(tmp_path, "id,y\n1,1\n"), "id", "y", ["x"])
    with pytest.raises(DomainError, match="non-numeric"):
        ingest_csv(write(tmp_path, "id,y,x\n1,1,abc\n1,2,1\n"), "id", "y", ["x"])
    with pytest.raises(DomainError, match="duplicate"):
        ingest_csv(write(tmp_path, "id,y,t\n1,1,1\n1,2,1\n"), "id", "y", [], time_col="t")
    with pytest.raises(IdentifiabilityError):
        ingest_csv(write(tmp_path, "id,y\n1,2\n2,2\n"), "id", "y", [])
    with pytest.raises(DomainError, match="integer"):
        ingest_csv(write(tmp_path, "id,y\n1,1.5\n2,2\n"), "id", "y", [])
    with pytest.raises(FileNotFoundError):
        ingest_csv(tmp_path / "missing.csv", "id", "y", [])


def test_dataset_validation():
    with pytest.raises(DomainError):
        OrdinalDataset([0, 0], [0, 1], [1, 4], np.zeros((2, 1)), ["x"], 3)
    with pytest.raises(DomainError):
        OrdinalDataset([0, 0], [0, 1], [1, 2], np.array([[0.0], [np.nan]]), ["x"], 2)
    with pytest.raises(DomainError):
        OrdinalDataset([0, 0], [1, 1], [1, 2], np.zeros((2, 1)), ["x"], 2)


def test_rows_sorted_and_select():
    ds = OrdinalDataset.from_arrays(["b", "a", "b", "a"], [2, 1, 1, 2], [1, 2, 2, 1],
                                    np.arange(8.0).reshape(4, 2), ["u", "v"])
    assert ds.cluster_labels == ["a", "b"]
    assert ds.cluster.tolist() == [0, 0, 1, 1] and ds.index.tolist() == [0, 1, 0, 1]
    sub = ds.select(["v"])
    assert sub.names == ["v"] and sub.X[:, 0].tolist() == ds.X[:, 1].tolist()
    with pytest.raises(IdentifiabilityError):
        OrdinalDataset.from_arrays([1, 1], [1, 2], [1, 1], np.zeros(2), K=3).check_categories()


def test_layout_pairs_follow_slots():
    ds = OrdinalDataset([0, 0, 0, 1, 1, 2], [0, 1, 2, 0, 2, 1], [1, 2, 1, 2, 1, 2], np.zeros((6, 0)), [], 2)
    lay = ds.layout
    assert lay.slots == [(0, 1), (0, 2), (1, 2)]
    assert lay.pair_slot.tolist() == [0, 1, 2, 1]
    assert [g.m for g in lay.groups] == [1, 2, 3]
