import json

import numpy as np
import pytest
import torch

from soundsep.evaluation import (
    ConfigError,
    EvalReport,
    er_f1,
    evaluate,
    events_from_outputs,
)
from soundsep.model import Separator
from soundsep.model.checkpoint import save_checkpoint
from soundsep.simulator.corpus import SILENCE_ID
from soundsep.stft import StftConfig
from tests.toydata import TINY_MODEL, write_toy_dataset


def test_er_f1_identical_events():
    events = [[(3, 0.2, 1.7)], [(5, 0.0, 3.0), (2, 1.1, 2.4)]]
    er, f1 = er_f1(events, events)
    assert (er, f1) == (0.0, 1.0)


def test_er_f1_no_predictions():
    refs = [[(3, 0.0, 2.0)]]
    er, f1 = er_f1([[]], refs)
    assert (er, f1) == (1.0, 0.0)


def test_er_f1_pure_substitution():
    # one active segment, wrong class: S=1, D=0, I=0, N=2 across two segments
    refs = [[(3, 0.0, 2.0)]]
    preds = [[(3, 0.0, 1.0), (7, 1.0, 2.0)]]
    er, f1 = er_f1(preds, refs)
    assert er == pytest.approx(0.5)
    assert f1 == pytest.approx(0.5)


def test_er_f1_insertion_and_deletion():
    refs = [[(1, 0.0, 1.0)]]          # segment 0 only
    preds = [[(1, 3.0, 4.0)]]         # segment 3 only
    er, f1 = er_f1(preds, refs)
    # segment 0: deletion; segment 3: insertion; N = 1
    assert er == pytest.approx(2.0)
    assert f1 == 0.0


def test_er_f1_segment_union_deduplicates_tracks():
    # two tracks with the same class in one segment count once
    refs = [[(4, 0.0, 1.0)]]
    preds = [[(4, 0.0, 0.4), (4, 0.5, 1.0)]]
    er, f1 = er_f1(preds, refs)
    assert (er, f1) == (0.0, 1.0)


def test_er_f1_boundary_overlap_is_open():
    # an event ending exactly at a segment boundary does not enter the next one
    refs = [[(2, 0.0, 1.0)]]
    preds = [[(2, 0.0, 1.0), (9, 1.0, 2.0)]]
    er, _ = er_f1(preds, refs)
    assert er == pytest.approx(1.0)  # the class-9 event is one insertion


def test_er_f1_per_clip_durations():
    refs = [[(1, 0.0, 1.0)], [(1, 0.0, 1.0)]]
    preds = [[(1, 0.0, 1.0)], [(1, 0.0, 1.0)]]
    assert er_f1(preds, refs, duration_s=[1.0, 2.0]) == (0.0, 1.0)
    with pytest.raises(ValueError):
        er_f1(preds, refs, duration_s=[1.0])


def test_er_f1_requires_reference_events():
    with pytest.raises(ValueError):
        er_f1([[]], [[]])
    with pytest.raises(ValueError):
        er_f1([[]], [[], []])


def test_events_from_outputs_run_lengths():
    hop_s = 0.016
    probs = torch.zeros(2, 10, 14)
    probs[0, :, SILENCE_ID] = 1.0       # track 0 silent
    probs[1, :, SILENCE_ID] = 1.0
    probs[1, 2:5, SILENCE_ID] = 0.0
    probs[1, 2:5, 6] = 1.0              # frames 2..4 active
    probs[1, 7:9, SILENCE_ID] = 0.0
    probs[1, 7:9, 6] = 1.0              # frames 7..8 active
    events = events_from_outputs(probs, hop_s)
    assert events == [
        (6, pytest.approx(2 * hop_s), pytest.approx(5 * hop_s)),
        (6, pytest.approx(7 * hop_s), pytest.approx(9 * hop_s)),
    ]


def test_events_from_outputs_skips_inactive_tracks():
    probs = torch.zeros(1, 10, 14)
    probs[0, :, SILENCE_ID] = 0.6
    probs[0, :, 3] = 0.4
    # silence wins the pooled vote: no events even though frames tie-break
    assert events_from_outputs(probs, 0.016) == []


def test_report_json_round_trip(tmp_path):
    report = EvalReport(
        si_sdr_mean=4.2, sdr_mean=5.1, er=0.4, f1=0.7,
        sca_total=0.9, sca_by_count={2: 1.0, 3: None, 4: 0.5},
        num_clips=12, counting_method="threshold",
    )
    path = tmp_path / "report.json"
    path.write_text(json.dumps(report.to_dict()))
    back = EvalReport.from_dict(json.loads(path.read_text()))
    assert back == report


@pytest.fixture(scope="module")
def tiny_ckpt_and_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval")
    manifest = write_toy_dataset(root / "data", num_clips=2, seed=77)
    torch.manual_seed(0)
    model = Separator(TINY_MODEL)
    ckpt = root / "ckpt.pt"
    save_checkpoint(ckpt, model, stage="stage1")
    return ckpt, manifest


@pytest.mark.parametrize("method", ["classifier", "threshold"])
def test_evaluate_end_to_end(tiny_ckpt_and_data, tmp_path, method):
    ckpt, manifest = tiny_ckpt_and_data
    out = tmp_path / "report.json"
    report = evaluate(ckpt, manifest, counting_method=method, out_path=out)
    assert report.num_clips == 2
    assert report.counting_method == method
    assert np.isfinite([report.si_sdr_mean, report.sdr_mean, report.er, report.f1]).all()
    assert 0.0 <= report.sca_total <= 1.0
    written = EvalReport.from_dict(json.loads(out.read_text()))
    assert written == report


def test_evaluate_rejects_unknown_method(tiny_ckpt_and_data):
    ckpt, manifest = tiny_ckpt_and_data
    with pytest.raises(ValueError):
        evaluate(ckpt, manifest, counting_method="magic")


def test_evaluate_rejects_sample_rate_mismatch(tiny_ckpt_and_data, tmp_path):
    _, manifest = tiny_ckpt_and_data
    model = Separator(TINY_MODEL, StftConfig(sample_rate=8000))
    ckpt = tmp_path / "ckpt8k.pt"
    save_checkpoint(ckpt, model, stage="stage1")
    with pytest.raises(ConfigError):
        evaluate(ckpt, manifest)
