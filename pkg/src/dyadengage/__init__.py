"""Conversational engagement estimation from two-party speech.

Per-utterance acoustic features feed polynomial-kernel SVM classifiers for
emotional state; a coupled hidden Markov model then decodes both
participants' engagement levels over the dialogue timeline.
"""

from .audio import (AudioClip, FrameSeries, UtteranceSpan, VadConfig,
                    frame_signal, load_audio, segment_utterances)
from .chmm import (MISSING, UNKNOWN, ChmmModel, DyadTimeline, HmmModel,
                   TimelineStep, coupled_step_score, train_chmm_supervised,
                   train_hmm_supervised, viterbi_coupled, viterbi_hmm)
from .errors import DyadEngageError
from .features import (FEATURE_NAMES, EnergyConfig, FeatureConfig,
                       FormantConfig, PitchConfig, PitchTrack,
                       energy_features, extract_features, formant_features,
                       pitch_stats, track_pitch)
from .labels import (DEFAULT_LEVEL_MERGE, EMOTION_TYPES, EXCLUDED,
                     UtteranceLabels, consensus_labels, level_merge)
from .pipeline import (CorpusManifest, EvalReport, ManifestEntry,
                       UtteranceEvent, build_timeline, compare_methods,
                       evaluate, fill_gold, run_pipeline, uncoupled_baseline)
from .selection import (FEMALE_AROUSAL_TOP7, MALE_AROUSAL_TOP7, FeatureSubset,
                        LabeledDataset, partition_by_group, relieff_weights,
                        select_top_k)
from .svm import (BinarySvm, KernelParams, SvmConfig, SvmModel, predict,
                  predict_level, train_binary_svm, train_multiclass)
from .synth import (DialogueCorpus, DyadRecord, GeneratorConfig,
                    default_generator_config, synth_corpus)

__version__ = "0.1.0"
