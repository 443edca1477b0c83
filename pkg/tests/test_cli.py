import json

import numpy as np
import pytest

from dyadengage.cli import main
from dyadengage.features import FEATURE_NAMES

from conftest import SR, build_wav_bytes, tone


@pytest.fixture
def speech_wav(tmp_path):
    pieces = []
    for k in range(2):
        pieces.append(np.zeros(int(0.5 * SR)))
        pieces.append(tone(180 + 80 * k, 0.4, amplitude=0.7))
    pieces.append(np.zeros(int(0.5 * SR)))
    samples = np.clip(np.concatenate(pieces), -1, 1)
    path = tmp_path / "speech.wav"
    path.write_bytes(build_wav_bytes((samples * 32767).astype(int)))
    return path


def test_segment_writes_spans(tmp_path, speech_wav):
    out = tmp_path / "seg"
    assert main(["--out", str(out), "segment", "--audio", str(speech_wav),
                 "--speaker", "A"]) == 0
    lines = (out / "spans.jsonl").read_text().strip().splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert first["speaker"] == "A"
    assert first["start_sample"] < first["end_sample"]


def test_features_produces_frozen_header(tmp_path, speech_wav):
    out = tmp_path / "feats"
    assert main(["--out", str(out), "features", "--audio", str(speech_wav),
                 "--speaker", "A", "--dialogue", "d0"]) == 0
    header = (out / "features.csv").read_text().splitlines()[0].split(",")
    assert header[5:] == list(FEATURE_NAMES)
    assert (out / "features.jsonl").exists()


def test_missing_audio_exits_2(tmp_path):
    assert main(["--out", str(tmp_path / "x"), "segment",
                 "--audio", str(tmp_path / "missing.wav")]) == 2


def test_malformed_config_exits_2(tmp_path, speech_wav):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{\"unknown_section\": {}}")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"),
                 "segment", "--audio", str(speech_wav)]) == 2


def test_synth_then_train_then_decode_then_evaluate(tmp_path):
    corpus_dir = tmp_path / "corpus"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"n_dialogues": 2, "n_steps": 30}}))
    assert main(["--config", str(cfg), "--seed", "3",
                 "--out", str(corpus_dir), "synth"]) == 0
    assert (corpus_dir / "timelines.jsonl").exists()
    assert (corpus_dir / "generator.json").exists()

    model_dir = tmp_path / "chmm"
    assert main(["--out", str(model_dir), "train-chmm",
                 "--timelines", str(corpus_dir / "timelines.jsonl")]) == 0
    model_path = model_dir / "chmm_model.json"
    assert model_path.exists()

    hmm_dir = tmp_path / "hmm"
    assert main(["--out", str(hmm_dir), "train-hmm",
                 "--timelines", str(corpus_dir / "timelines.jsonl")]) == 0
    assert (hmm_dir / "hmm_model.json").exists()

    decode_dir = tmp_path / "decoded"
    assert main(["--out", str(decode_dir), "decode", "--model", str(model_path),
                 "--timelines", str(corpus_dir / "timelines.jsonl"),
                 "--figures"]) == 0
    decoded_path = decode_dir / "decoded.jsonl"
    assert decoded_path.exists()
    assert list(decode_dir.glob("timeline_*.png"))

    eval_dir = tmp_path / "eval"
    assert main(["--out", str(eval_dir), "evaluate", "--decoded", str(decoded_path),
                 "--timelines", str(corpus_dir / "timelines.jsonl")]) == 0
    report = json.loads((eval_dir / "report.json").read_text())
    assert report["n"] > 0
    assert (eval_dir / "report.txt").exists()
    assert (eval_dir / "report_confusion.csv").exists()
    assert (eval_dir / "report_confusion.png").exists()


def test_pipeline_synth_reports_and_figures(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"n_dialogues": 4, "n_steps": 40}}))
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "--seed", "1", "--out", str(out),
                 "pipeline"]) == 0
    comparison = json.loads((out / "comparison.json").read_text())
    assert set(comparison["accuracies"]) == {"isolated_svm", "hmm", "chmm"}
    for name in ("isolated_svm", "hmm", "chmm"):
        assert (out / f"{name}.json").exists()
        assert (out / f"{name}_confusion.csv").exists()
        assert (out / f"{name}_confusion.png").exists()
    assert (out / "comparison.png").exists()
    assert (out / "comparison.txt").exists()
    assert list(out.glob("timeline_*.png"))


def test_synth_accepts_full_generator_config(tmp_path):
    # generator.json written by synth round-trips through --config
    first = tmp_path / "first"
    assert main(["--seed", "2", "--out", str(first), "synth"]) == 0
    gen_doc = json.loads((first / "generator.json").read_text())
    gen_doc["n_dialogues"] = 2
    gen_doc["n_steps"] = 25
    cfg = tmp_path / "gen_cfg.json"
    cfg.write_text(json.dumps({"synth": gen_doc}))
    second = tmp_path / "second"
    assert main(["--config", str(cfg), "--seed", "2", "--out", str(second),
                 "synth"]) == 0
    lines = (second / "timelines.jsonl").read_text().strip().splitlines()
    assert len(lines) == 2
    assert len(json.loads(lines[0])["steps"]) == 25


def test_pipeline_on_pregenerated_corpus(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"n_dialogues": 4, "n_steps": 40}}))
    corpus_dir = tmp_path / "corpus"
    assert main(["--config", str(cfg), "--seed", "5", "--out", str(corpus_dir),
                 "synth"]) == 0
    out = tmp_path / "run"
    assert main(["--out", str(out), "pipeline", "--corpus", str(corpus_dir)]) == 0
    comparison = json.loads((out / "comparison.json").read_text())
    assert comparison["n_dialogues"] == 4


def test_pipeline_byte_identical_reports(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"n_dialogues": 4, "n_steps": 40}}))
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["--config", str(cfg), "--seed", "7", "--out", str(out),
                     "pipeline"]) == 0
        outs.append(out)
    for fname in ("comparison.json", "isolated_svm.json", "hmm.json", "chmm.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_select_and_train_svm_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    from dyadengage.features import write_features_csv
    from dyadengage.labels import (LabeledUtterance, UtteranceLabels,
                                   write_labels_jsonl)

    rows, labels = [], []
    for u in range(40):
        arousal = (u % 2) + 1
        vec = np.zeros(len(FEATURE_NAMES))
        vec[0] = arousal + 0.1 * rng.standard_normal()
        vec[1] = rng.uniform()
        rows.append({"dialogue_id": "d", "speaker": "A", "utterance_id": u,
                     "start_sample": u, "end_sample": u + 1, "features": vec})
        labels.append(LabeledUtterance(
            dialogue_id="d", speaker="A", utterance_id=u, start_sample=u,
            end_sample=u + 1, labels=UtteranceLabels(arousal=arousal)))
    write_features_csv(tmp_path / "features.csv", rows)
    write_labels_jsonl(tmp_path / "labels.jsonl", labels)

    sel_dir = tmp_path / "sel"
    assert main(["--out", str(sel_dir), "select",
                 "--features", str(tmp_path / "features.csv"),
                 "--labels", str(tmp_path / "labels.jsonl"),
                 "--target", "arousal"]) == 0
    subsets = json.loads((sel_dir / "subsets.json").read_text())
    assert subsets["all"]["indices"][0] == 0  # the informative feature wins

    svm_dir = tmp_path / "svm"
    assert main(["--out", str(svm_dir), "train-svm",
                 "--features", str(tmp_path / "features.csv"),
                 "--labels", str(tmp_path / "labels.jsonl"),
                 "--target", "arousal"]) == 0
    doc = json.loads((svm_dir / "svm_model.json").read_text())
    assert doc["classes"] == [1, 2]
