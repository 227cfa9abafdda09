import math
import textwrap

import pytest

import labloop


TRACEBACK = textwrap.dedent(
    """\
    Traceback (most recent call last):
      File "/work/exp/main.py", line 10, in main
        result = model.forward(batch)
      File "/usr/lib/python3.10/site-packages/torch/fn.py", line 4, in forward
        return impl(x)
      File "/work/exp/model.py", line 42, in forward
        return torch.matmul(x, w)
    ValueError: bad dims
    """
)


def test_parse_traceback_frames():
    tb = labloop.parse_traceback(TRACEBACK)
    assert tb.exception_type == "ValueError"
    assert tb.exception_message == "bad dims"
    assert [f.function_name for f in tb.frames] == ["main", "forward", "forward"]
    assert tb.frames[0].line_number == 10
    assert tb.chained is None


def test_render_round_trip():
    tb = labloop.parse_traceback(TRACEBACK)
    again = labloop.parse_traceback(labloop.render_traceback(tb))
    assert [f.file_path for f in again.frames] == [f.file_path for f in tb.frames]
    assert again.exception_type == tb.exception_type


def test_filter_custom_frames():
    tb = labloop.parse_traceback(TRACEBACK)
    custom = labloop.filter_custom_frames(tb, "/work/exp")
    assert [f.file_path for f in custom] == ["/work/exp/main.py", "/work/exp/model.py"]
    assert all(f.is_custom for f in custom)


def test_no_traceback_raises():
    with pytest.raises(labloop.LabloopError):
        labloop.parse_traceback("nothing to see here")


def test_cosine_similarity():
    assert labloop.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert labloop.cosine_similarity([1.0, 2.0, 2.0], [2.0, 1.0, 2.0]) == pytest.approx(8.0 / 9.0)


def test_independence_filter():
    flags = labloop.independence_filter(
        [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], tau=0.8
    )
    assert flags == [True, False, True]
    # Bank entries reject matching newcomers immediately.
    flags = labloop.independence_filter([[1.0, 0.0]], tau=0.8, bank=[[2.0, 0.0]])
    assert flags == [False]


def test_filter_by_score():
    papers = []
    for pid, score in [("a", 9), ("b", 8), ("c", 7)]:
        p = labloop.PaperRecord()
        p.external_id = pid
        p.title = "paper " + pid
        p.score = score
        papers.append(p)
    kept = labloop.filter_by_score(papers, 8)
    assert [p.external_id for p in kept] == ["a", "b"]


def test_keyword_frequency():
    p = labloop.PaperRecord()
    p.external_id = "x"
    p.title = "Shapes"
    p.abstract = "classification here and classification there"
    counts = labloop.keyword_frequency([p], ["classification", "completion"])
    assert counts["classification"] == 2
    assert counts["completion"] == 0


def test_categorize():
    assert labloop.categorize(91.0, 93.9) == "improvement"
    assert labloop.categorize(80.0, 80.0) == "maintenance"
    assert labloop.categorize(81.2, 81.15, epsilon=0.1) == "maintenance"
    assert labloop.categorize(81.2, 81.15, epsilon=0.01) == "decline"
    assert labloop.categorize(0.35, 0.2, higher_is_better=False) == "improvement"
    assert not math.isnan(0.0)
