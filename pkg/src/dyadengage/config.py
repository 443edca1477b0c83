"""JSON config file handling for the CLI.

Every section is optional; omitted keys keep the library defaults. The synth
section feeds default_generator_config, so a config plus a seed pins a whole
synthetic experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .audio import VadConfig
from .errors import DyadEngageError
from .features import EnergyConfig, FeatureConfig, FormantConfig, PitchConfig
from .labels import DEFAULT_LEVEL_MERGE
from .svm import KernelParams, SvmConfig


@dataclass
class ReliefFConfig:
    k_neighbors: int = 10
    n_iters: int | None = None
    top_k: int = 7


@dataclass
class ChmmConfig:
    smoothing: float = 1.0
    n_states: int | None = None


@dataclass
class PipelineConfig:
    vad: VadConfig = field(default_factory=VadConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    relieff: ReliefFConfig = field(default_factory=ReliefFConfig)
    chmm: ChmmConfig = field(default_factory=ChmmConfig)
    level_merge: dict = field(default_factory=lambda: dict(DEFAULT_LEVEL_MERGE))
    synth: dict = field(default_factory=dict)   # kwargs of default_generator_config


def _build(cls, doc: dict, **extra):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise DyadEngageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{**doc, **extra})


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = dict(doc)
    pitch = _build(PitchConfig, doc.pop("pitch", {}))
    energy = _build(EnergyConfig, doc.pop("energy", {}))
    formant_doc = doc.pop("formant", {})
    formant_doc.pop("pitch", None)
    formant = _build(FormantConfig, formant_doc, pitch=pitch)

    svm_doc = dict(doc.pop("svm", {}))
    kernel = KernelParams(degree=svm_doc.pop("degree", 3),
                          gamma=svm_doc.pop("gamma", None),
                          coef0=svm_doc.pop("coef0", 1.0))
    svm = _build(SvmConfig, svm_doc, kernel=kernel)

    merge_doc = doc.pop("level_merge", None)
    merge = ({int(k): int(v) for k, v in merge_doc.items()}
             if merge_doc else dict(DEFAULT_LEVEL_MERGE))

    cfg = PipelineConfig(
        vad=_build(VadConfig, doc.pop("vad", {})),
        features=FeatureConfig(pitch=pitch, energy=energy, formant=formant),
        svm=svm,
        relieff=_build(ReliefFConfig, doc.pop("relieff", {})),
        chmm=_build(ChmmConfig, doc.pop("chmm", {})),
        level_merge=merge,
        synth=doc.pop("synth", {}),
    )
    if doc:
        raise DyadEngageError(f"unknown config sections: {sorted(doc)}")
    return cfg


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DyadEngageError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)
