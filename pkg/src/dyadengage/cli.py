"""Command-line interface.

Subcommands: segment, features, select, train-svm, train-hmm, train-chmm,
decode, evaluate, synth, pipeline. Global flags --config (JSON), --seed, and
--out (output directory). Exit code 0 on success, 2 on any validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import chmm as chmm_mod
from . import svm as svm_mod
from .audio import load_audio, segment_utterances
from .chmm import (read_timelines_jsonl, train_chmm_supervised,
                   train_hmm_supervised, viterbi_coupled, write_timelines_jsonl)
from .config import load_config
from .errors import DyadEngageError
from .features import (FEATURE_NAMES, extract_features, read_features_csv,
                       write_features_csv, write_features_jsonl)
from .labels import DEFAULT_LEVEL_MERGE, level_merge, read_labels_jsonl
from .pipeline import (CorpusManifest, read_spans_jsonl, assign_splits,
                       chain_sequences, compare_methods, evaluate, load_manifest,
                       materialize_corpus, merge_reports, run_pipeline)
from .selection import (LabeledDataset, NAMED_SUBSETS, partition_by_group,
                        relieff_weights, save_weights_json, select_top_k,
                        subset_to_json_dict)
from .svm import load_model, save_model, train_multiclass
from .synth import (DialogueCorpus, corpus_from_dir, corpus_to_dir,
                    default_generator_config, generator_from_json_dict,
                    generator_to_json_dict, synth_corpus)
from . import reporting


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_spans_or_segment(args, clip, cfg):
    if getattr(args, "spans", None):
        return read_spans_jsonl(args.spans)
    return segment_utterances(clip, cfg.vad)


def cmd_segment(args, cfg):
    clip = load_audio(args.audio, channel_id=args.speaker)
    spans = segment_utterances(clip, cfg.vad)
    out = _out_dir(args)
    with open(out / "spans.jsonl", "w") as fh:
        for s in spans:
            fh.write(json.dumps({
                "utterance_id": s.utterance_id, "speaker": s.speaker,
                "start_sample": s.start_sample, "end_sample": s.end_sample,
            }, sort_keys=True) + "\n")
    print(f"{len(spans)} utterances -> {out / 'spans.jsonl'}")
    return 0


def cmd_features(args, cfg):
    clip = load_audio(args.audio, channel_id=args.speaker)
    spans = _load_spans_or_segment(args, clip, cfg)
    rows = []
    for s in spans:
        rows.append({
            "dialogue_id": args.dialogue, "speaker": args.speaker or s.speaker,
            "utterance_id": s.utterance_id, "start_sample": s.start_sample,
            "end_sample": s.end_sample,
            "features": extract_features(clip, s, cfg.features),
        })
    out = _out_dir(args)
    write_features_csv(out / "features.csv", rows)
    write_features_jsonl(out / "features.jsonl", rows)
    print(f"{len(rows)} utterances x {len(FEATURE_NAMES)} features -> {out / 'features.csv'}")
    return 0


def _join_feature_labels(features_path, labels_path, target: str):
    rows = read_features_csv(features_path)
    labels = read_labels_jsonl(labels_path)
    key = {(u.dialogue_id, u.speaker, u.utterance_id): u for u in labels}
    X, y, speakers, groups = [], [], [], []
    for row in rows:
        u = key.get((row["dialogue_id"], row["speaker"], row["utterance_id"]))
        if u is None:
            continue
        value = getattr(u.labels, target)
        if value is None or value == "EXCLUDED":
            continue
        X.append(row["features"])
        y.append(value)
        speakers.append(u.speaker)
        groups.append(getattr(u, "group", ""))
    if not X:
        raise DyadEngageError("no feature rows matched the label file")
    return LabeledDataset(features=np.asarray(X), labels=y,
                          speaker_ids=speakers, group_keys=groups)


def cmd_select(args, cfg):
    data = _join_feature_labels(args.features, args.labels, args.target)
    out = _out_dir(args)
    groups = partition_by_group(data) if args.per_group else {"all": data}
    doc = {}
    for key, group_data in sorted(groups.items()):
        weights = relieff_weights(group_data, k_neighbors=cfg.relieff.k_neighbors,
                                  n_iters=cfg.relieff.n_iters, seed=args.seed)
        subset = select_top_k(weights, min(cfg.relieff.top_k, len(weights)),
                              name=f"{args.target}_{key}")
        save_weights_json(out / f"weights_{key}.json", weights, FEATURE_NAMES)
        doc[key] = subset_to_json_dict(subset)
    reporting.write_json(out / "subsets.json", doc)
    print(f"selection for {sorted(groups)} -> {out / 'subsets.json'}")
    return 0


def cmd_train_svm(args, cfg):
    data = _join_feature_labels(args.features, args.labels, args.target)
    if args.merge_levels and args.target in ("arousal", "valence", "engagement"):
        data = LabeledDataset(features=data.features,
                              labels=[level_merge(v, cfg.level_merge) for v in data.labels],
                              speaker_ids=data.speaker_ids, group_keys=data.group_keys)
    subset = NAMED_SUBSETS.get(args.subset) if args.subset else None
    model = train_multiclass(data, cfg.svm, feature_subset=subset,
                             provenance={"trained_on": "train", "target": args.target})
    out = _out_dir(args)
    save_model(out / "svm_model.json", model)
    print(f"classes {model.classes} -> {out / 'svm_model.json'}")
    return 0


def cmd_train_hmm(args, cfg):
    timelines = read_timelines_jsonl(args.timelines)
    seqs = []
    for tl in timelines:
        for chain in (0, 1):
            states, symbols, _ = chain_sequences(tl, chain)
            if states:
                seqs.append((states, symbols))
    model = train_hmm_supervised(seqs, alpha=cfg.chmm.smoothing,
                                 n_states=cfg.chmm.n_states)
    out = _out_dir(args)
    chmm_mod.save_json(out / "hmm_model.json", chmm_mod.hmm_to_json_dict(model))
    print(f"hmm over {model.n_states} states -> {out / 'hmm_model.json'}")
    return 0


def cmd_train_chmm(args, cfg):
    timelines = read_timelines_jsonl(args.timelines)
    model = train_chmm_supervised(timelines, alpha=cfg.chmm.smoothing,
                                  n_states=cfg.chmm.n_states)
    out = _out_dir(args)
    chmm_mod.save_json(out / "chmm_model.json", chmm_mod.chmm_to_json_dict(model))
    print(f"chmm over {model.n_states} states -> {out / 'chmm_model.json'}")
    return 0


def cmd_decode(args, cfg):
    model = chmm_mod.chmm_from_json_dict(chmm_mod.load_json(args.model))
    timelines = read_timelines_jsonl(args.timelines)
    out = _out_dir(args)
    with open(out / "decoded.jsonl", "w") as fh:
        for tl in timelines:
            path1, path2 = viterbi_coupled(model, tl)
            decoded = {"dialogue_id": tl.dialogue_id, "chain1": path1, "chain2": path2,
                       "timestamps": [s.timestamp for s in tl.steps]}
            fh.write(json.dumps(decoded, sort_keys=True) + "\n")
            if args.figures:
                reporting.save_timeline_figure(
                    out / f"timeline_{tl.dialogue_id or 'dialogue'}.png", decoded,
                    gold1=[s.gold1 for s in tl.steps], gold2=[s.gold2 for s in tl.steps],
                    title=tl.dialogue_id or "decoded engagement")
    print(f"{len(timelines)} dialogues -> {out / 'decoded.jsonl'}")
    return 0


def cmd_evaluate(args, cfg):
    decoded = {}
    with open(args.decoded) as fh:
        for line in fh:
            line = line.strip()
            if line:
                doc = json.loads(line)
                decoded[doc.get("dialogue_id", "")] = doc
    timelines = read_timelines_jsonl(args.timelines)
    reports = []
    for tl in timelines:
        doc = decoded.get(tl.dialogue_id)
        if doc is None:
            continue
        gold1 = [s.gold1 for s in tl.steps]
        gold2 = [s.gold2 for s in tl.steps]
        n_states = cfg.chmm.n_states or max(
            [g for g in gold1 + gold2 if g is not None] +
            [v for v in doc["chain1"] + doc["chain2"]])
        reports.append(evaluate(doc["chain1"], gold1, n_classes=n_states))
        reports.append(evaluate(doc["chain2"], gold2, n_classes=n_states))
    merged = merge_reports(reports)
    out = _out_dir(args)
    reporting.write_report_bundle(out, "report", merged)
    print(reporting.report_table(merged, title="engagement"), end="")
    return 0


def _generator_from_config(cfg, args):
    if cfg.synth:
        if "chmm" in cfg.synth:
            return generator_from_json_dict(cfg.synth)
        return default_generator_config(**cfg.synth)
    return default_generator_config()


def cmd_synth(args, cfg):
    gen = _generator_from_config(cfg, args)
    corpus = synth_corpus(gen, seed=args.seed)
    out = _out_dir(args)
    corpus_to_dir(corpus, out)
    reporting.write_json(out / "generator.json", generator_to_json_dict(gen))
    print(f"{len(corpus.dialogues)} dialogues -> {out}")
    return 0


def cmd_pipeline(args, cfg):
    if args.manifest:
        manifest = load_manifest(args.manifest)
        manifest = assign_splits(manifest, seed=args.seed)
        corpus = materialize_corpus(manifest, cfg.features, cfg.vad)
        if args.merge_levels:
            corpus = _merge_corpus_levels(corpus, cfg.level_merge)
    elif args.corpus:
        corpus = corpus_from_dir(args.corpus)
    else:
        gen = _generator_from_config(cfg, args)
        corpus = synth_corpus(gen, seed=args.seed)

    comparison = compare_methods(corpus, cfg.svm, alpha=cfg.chmm.smoothing,
                                 n_states=cfg.chmm.n_states)
    out = _out_dir(args)
    for name, report in comparison.reports.items():
        reporting.write_report_bundle(out, name, report)
    accs = comparison.accuracies()
    reporting.write_json(out / "comparison.json", {
        "accuracies": {k: (None if np.isnan(v) else v) for k, v in accs.items()},
        "seed": args.seed,
        "n_dialogues": len(corpus.dialogues),
        "split": corpus.split,
    })
    with open(out / "comparison.txt", "w") as fh:
        fh.write(reporting.comparison_table(accs))
    reporting.save_comparison_figure(out / "comparison.png", accs)
    for did, decoded in sorted(comparison.decoded.items())[:args.max_figures]:
        rec = next(r for r in corpus.dialogues if r.timeline.dialogue_id == did)
        decoded = dict(decoded)
        decoded["timestamps"] = [s.timestamp for s in rec.timeline.steps]
        reporting.save_timeline_figure(
            out / f"timeline_{did}.png", decoded,
            gold1=[s.gold1 for s in rec.timeline.steps],
            gold2=[s.gold2 for s in rec.timeline.steps],
            title=did)
    print(reporting.comparison_table(accs), end="")
    return 0


def _merge_corpus_levels(corpus: DialogueCorpus, scheme: dict) -> DialogueCorpus:
    from .chmm import DyadTimeline, TimelineStep
    from .synth import DyadRecord

    def merge_obs(v):
        return None if v is None else level_merge(v, scheme)

    dialogues = []
    for rec in corpus.dialogues:
        steps = [TimelineStep(obs1=merge_obs(s.obs1), obs2=merge_obs(s.obs2),
                              gold1=s.gold1, gold2=s.gold2, timestamp=s.timestamp)
                 for s in rec.timeline.steps]
        dialogues.append(DyadRecord(
            timeline=DyadTimeline(steps=steps, dialogue_id=rec.timeline.dialogue_id,
                                  speakers=rec.timeline.speakers),
            features=rec.features))
    return DialogueCorpus(dialogues=dialogues, feature_dim=corpus.feature_dim,
                          generator_seed=corpus.generator_seed, split=corpus.split)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadengage",
        description="Conversational engagement estimation from two-party speech.")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="detect utterance spans in a WAV file")
    p.add_argument("--audio", required=True)
    p.add_argument("--speaker", default="")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="extract the 46 acoustic features per utterance")
    p.add_argument("--audio", required=True)
    p.add_argument("--spans", default=None, help="manual utterance spans (JSON-lines)")
    p.add_argument("--speaker", default="")
    p.add_argument("--dialogue", default="")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("select", help="rank features with ReliefF")
    p.add_argument("--features", required=True, help="features CSV")
    p.add_argument("--labels", required=True, help="labels JSON-lines")
    p.add_argument("--target", default="arousal",
                   choices=["arousal", "valence", "engagement", "emotion"])
    p.add_argument("--per-group", action="store_true",
                   help="rank separately per group key (e.g. gender)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train-svm", help="train the one-vs-rest level classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--target", default="arousal",
                   choices=["arousal", "valence", "engagement", "emotion"])
    p.add_argument("--subset", default=None, choices=sorted(NAMED_SUBSETS),
                   help="use a published per-gender feature subset")
    p.add_argument("--merge-levels", action="store_true",
                   help="fold 1-5 labels to 3 levels before training")
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("train-hmm", help="train the single-chain engagement HMM")
    p.add_argument("--timelines", required=True, help="gold timelines JSON-lines")
    p.set_defaults(func=cmd_train_hmm)

    p = sub.add_parser("train-chmm", help="train the coupled engagement model")
    p.add_argument("--timelines", required=True)
    p.set_defaults(func=cmd_train_chmm)

    p = sub.add_parser("decode", help="Viterbi-decode dyad timelines")
    p.add_argument("--model", required=True, help="chmm_model.json")
    p.add_argument("--timelines", required=True)
    p.add_argument("--figures", action="store_true", help="render timeline figures")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="score decoded paths against gold timelines")
    p.add_argument("--decoded", required=True, help="decoded.jsonl")
    p.add_argument("--timelines", required=True, help="gold timelines JSON-lines")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dyad corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="end-to-end train/decode/evaluate comparison")
    p.add_argument("--manifest", default=None, help="corpus manifest JSON")
    p.add_argument("--corpus", default=None, help="pre-generated corpus directory")
    p.add_argument("--merge-levels", action="store_true")
    p.add_argument("--max-figures", type=int, default=2)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except DyadEngageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
