"""Engagement decoding with a supervised HMM and two-chain coupled HMM.

States are engagement levels and observation symbols are discrete emotional
states (e.g. arousal levels); both are 1-based on the public surface. The
coupled model scores a joint step as the unnormalized product

    trans1[i1,j1] * trans2[i2,j2] * cross21[i2,j1] * cross12[i1,j2]
      * emit1[j1,o1] * emit2[j2,o2]

where an absent observation contributes a factor of 1. Decoding maximizes
the product of step scores in log space; among equally good paths the
lexicographically smallest is returned, which a backward value pass plus a
greedy forward walk yields exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyObservation, EmptyTraining, MissingGold,
                     StateOutOfRange, SymbolOutOfRange)

MISSING = None     # absent observation in a timeline step
UNKNOWN = None     # absent gold state in a timeline step

MODEL_FORMAT_VERSION = 1


def _row_normalize(counts: np.ndarray, alpha: float) -> np.ndarray:
    """(count + alpha) / (row_sum + alpha * n_cols); zero-count rows with
    alpha = 0 fall back to uniform so every row remains stochastic."""
    counts = counts.astype(np.float64)
    k = counts.shape[-1]
    sums = counts.sum(axis=-1, keepdims=True)
    smoothed = counts + alpha
    denom = sums + alpha * k
    out = np.where(denom > 0.0, smoothed / np.where(denom > 0.0, denom, 1.0), 1.0 / k)
    return out


@dataclass
class HmmModel:
    """Single-chain model with multinomial emissions."""

    n_states: int
    n_symbols: int
    initial: np.ndarray   # (S,)
    trans: np.ndarray     # (S, S): trans[i, j] = p(next=j+1 | cur=i+1)
    emit: np.ndarray      # (S, O): emit[j, o] = p(obs=o+1 | state=j+1)

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.emit = np.asarray(self.emit, dtype=np.float64)


@dataclass
class ChmmModel:
    """Two chains with within-chain, cross-chain, and emission distributions.

    cross[m] feeds chain m: cross[0][i, j] = p(chain-1 next = j+1 given
    chain-2 previous = i+1), and cross[1] the mirror image.
    """

    n_states: int
    n_symbols: int
    initial: np.ndarray   # (2, S)
    trans: np.ndarray     # (2, S, S) within-chain
    cross: np.ndarray     # (2, S, S) influence into chain m from the other chain
    emit: np.ndarray      # (2, S, O)

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.cross = np.asarray(self.cross, dtype=np.float64)
        self.emit = np.asarray(self.emit, dtype=np.float64)

    def chain_view(self, m: int) -> HmmModel:
        """Chain m (0 or 1) as an independent HMM, ignoring coupling."""
        return HmmModel(n_states=self.n_states, n_symbols=self.n_symbols,
                        initial=self.initial[m], trans=self.trans[m], emit=self.emit[m])


@dataclass(frozen=True)
class TimelineStep:
    """One dyad event; observations and gold states are 1-based or None."""

    obs1: int | None = MISSING
    obs2: int | None = MISSING
    gold1: int | None = UNKNOWN
    gold2: int | None = UNKNOWN
    timestamp: float = 0.0

    def __post_init__(self):
        if self.obs1 is MISSING and self.obs2 is MISSING:
            raise ValueError("a timeline step needs at least one observation")


@dataclass
class DyadTimeline:
    """Temporally ordered two-participant steps."""

    steps: list
    dialogue_id: str = ""
    speakers: tuple = ("", "")

    def __post_init__(self):
        times = [s.timestamp for s in self.steps]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("timestamps must be non-decreasing")

    def __len__(self):
        return len(self.steps)


def _check_states(values, n_states: int, what: str = "state"):
    for v in values:
        if v is None:
            continue
        if not (1 <= v <= n_states):
            err = StateOutOfRange if what == "state" else SymbolOutOfRange
            raise err(f"{what} {v} outside 1..{n_states}")


def train_hmm_supervised(seqs, alpha: float = 1.0,
                         n_states: int | None = None,
                         n_symbols: int | None = None) -> HmmModel:
    """Count-based training from (states, observations) sequence pairs.

    Every transition, emission, and first-state count is Laplace-smoothed by
    alpha; alpha = 0 keeps raw frequencies (unvisited rows become uniform).
    """
    seqs = [(list(s), list(o)) for s, o in seqs if len(s) > 0]
    if not seqs:
        raise EmptyTraining("no training sequences")
    for s, o in seqs:
        if len(s) != len(o):
            raise ValueError("state and observation sequences differ in length")
        if any(v is None for v in s):
            raise MissingGold("every step needs a gold state")
        if any(v is None for v in o):
            raise ValueError("every step needs an observation")

    max_state = max(max(s) for s, _ in seqs if s)
    max_sym = max(max(o) for _, o in seqs if o)
    S = n_states or max_state
    O = n_symbols or max_sym
    for s, o in seqs:
        _check_states(s, S, "state")
        _check_states(o, O, "symbol")

    init = np.zeros(S)
    trans = np.zeros((S, S))
    emit = np.zeros((S, O))
    for s, o in seqs:
        init[s[0] - 1] += 1
        for a, b in zip(s, s[1:]):
            trans[a - 1, b - 1] += 1
        for st, ob in zip(s, o):
            emit[st - 1, ob - 1] += 1

    return HmmModel(n_states=S, n_symbols=O,
                    initial=_row_normalize(init, alpha),
                    trans=_row_normalize(trans, alpha),
                    emit=_row_normalize(emit, alpha))


def train_chmm_supervised(dyads, alpha: float = 1.0,
                          n_states: int | None = None,
                          n_symbols: int | None = None) -> ChmmModel:
    """Count-based coupled training from gold-labeled DyadTimelines.

    Within-chain counts follow each chain's own consecutive gold states,
    cross counts pair one chain's previous state with the other's current
    state, and emissions count only at steps where that chain observed a
    symbol. Both chains must carry gold states at every step.
    """
    dyads = list(dyads)
    if not dyads or all(len(d) == 0 for d in dyads):
        raise EmptyTraining("no training dyads")
    for d in dyads:
        for step in d.steps:
            if step.gold1 is UNKNOWN or step.gold2 is UNKNOWN:
                raise MissingGold(f"dyad {d.dialogue_id!r} has a step without both gold states")

    golds = [v for d in dyads for st in d.steps for v in (st.gold1, st.gold2)]
    obs = [v for d in dyads for st in d.steps for v in (st.obs1, st.obs2) if v is not MISSING]
    S = n_states or max(golds)
    O = n_symbols or (max(obs) if obs else 1)
    _check_states(golds, S, "state")
    _check_states(obs, O, "symbol")

    init = np.zeros((2, S))
    trans = np.zeros((2, S, S))
    cross = np.zeros((2, S, S))
    emit = np.zeros((2, S, O))
    for d in dyads:
        g1 = [st.gold1 for st in d.steps]
        g2 = [st.gold2 for st in d.steps]
        init[0, g1[0] - 1] += 1
        init[1, g2[0] - 1] += 1
        for t in range(1, len(d.steps)):
            trans[0, g1[t - 1] - 1, g1[t] - 1] += 1
            trans[1, g2[t - 1] - 1, g2[t] - 1] += 1
            cross[0, g2[t - 1] - 1, g1[t] - 1] += 1   # into chain 1 from chain 2
            cross[1, g1[t - 1] - 1, g2[t] - 1] += 1   # into chain 2 from chain 1
        for st in d.steps:
            if st.obs1 is not MISSING:
                emit[0, st.gold1 - 1, st.obs1 - 1] += 1
            if st.obs2 is not MISSING:
                emit[1, st.gold2 - 1, st.obs2 - 1] += 1

    return ChmmModel(n_states=S, n_symbols=O,
                     initial=_row_normalize(init, alpha),
                     trans=_row_normalize(trans, alpha),
                     cross=_row_normalize(cross, alpha),
                     emit=_row_normalize(emit, alpha))


def coupled_step_score(model: ChmmModel, prev, cur, obs=(MISSING, MISSING)) -> float:
    """Unnormalized potential for one joint transition with optional emissions."""
    (i1, i2), (j1, j2) = prev, cur
    _check_states((i1, i2, j1, j2), model.n_states, "state")
    o1, o2 = obs
    _check_states((v for v in (o1, o2) if v is not MISSING), model.n_symbols, "symbol")
    score = (model.trans[0, i1 - 1, j1 - 1] * model.trans[1, i2 - 1, j2 - 1]
             * model.cross[0, i2 - 1, j1 - 1] * model.cross[1, i1 - 1, j2 - 1])
    if o1 is not MISSING:
        score *= model.emit[0, j1 - 1, o1 - 1]
    if o2 is not MISSING:
        score *= model.emit[1, j2 - 1, o2 - 1]
    return float(score)


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


# Distinct random-model paths differ by far more than this, while paths that
# tie in exact arithmetic (identical factor multisets in different orders)
# differ only by float summation noise; the margin separates the two cases so
# tie-breaking is stable.
TIE_TOL = 1e-9


def _argmax_tied_low(values: np.ndarray) -> int:
    """Index of the maximum, resolving near-ties toward the lowest index."""
    best = np.max(values)
    if not np.isfinite(best):
        return 0
    return int(np.flatnonzero(values >= best - TIE_TOL)[0])


def _greedy_best_path(node0: np.ndarray, edges: list) -> tuple[list, float]:
    """Max-sum path through a trellis, lexicographically smallest among ties.

    node0 holds the scores of the first step's states; edges[t] the additive
    edge+node scores into step t+1. A backward sweep computes suffix values,
    then a forward walk greedily picks the smallest index whose continuation
    achieves each maximum.
    """
    T = len(edges) + 1
    n = len(node0)
    suffix = np.zeros((T, n))
    for t in range(T - 2, -1, -1):
        suffix[t] = np.max(edges[t] + suffix[t + 1][None, :], axis=1)
    total = node0 + suffix[0]
    path = [_argmax_tied_low(total)]
    for t in range(T - 1):
        step_scores = edges[t][path[-1]] + suffix[t + 1]
        path.append(_argmax_tied_low(step_scores))
    return path, float(np.max(total))


def viterbi_hmm(model: HmmModel, obs) -> list:
    """Most probable state path for a 1-based symbol sequence."""
    obs = list(obs)
    if not obs:
        raise EmptyObservation("empty observation sequence")
    _check_states(obs, model.n_symbols, "symbol")

    log_init = _log(model.initial)
    log_trans = _log(model.trans)
    log_emit = _log(model.emit)

    node0 = log_init + log_emit[:, obs[0] - 1]
    edges = [log_trans + log_emit[:, o - 1][None, :] for o in obs[1:]]
    path, _ = _greedy_best_path(node0, edges)
    return [p + 1 for p in path]


def viterbi_coupled(model: ChmmModel, timeline: DyadTimeline) -> tuple[list, list]:
    """Joint max-product decode; returns both chains' 1-based state paths.

    The joint state space has n_states**2 nodes per step; step t >= 2 uses the
    coupled potential and step 1 the per-chain initial distributions. Missing
    observations simply contribute no emission factor.
    """
    if len(timeline) == 0:
        raise EmptyObservation("empty timeline")
    S = model.n_states
    for st in timeline.steps:
        _check_states((v for v in (st.obs1, st.obs2) if v is not MISSING),
                      model.n_symbols, "symbol")

    log_init = _log(model.initial)
    log_trans = _log(model.trans)
    log_cross = _log(model.cross)
    log_emit = _log(model.emit)

    def emission_grid(step) -> np.ndarray:
        e = np.zeros((S, S))
        if step.obs1 is not MISSING:
            e += log_emit[0][:, step.obs1 - 1][:, None]
        if step.obs2 is not MISSING:
            e += log_emit[1][:, step.obs2 - 1][None, :]
        return e

    # base[(i1,i2),(j1,j2)] = log trans1 + log trans2 + log cross21 + log cross12
    base = (log_trans[0][:, None, :, None] + log_trans[1][None, :, None, :]
            + log_cross[0][None, :, :, None] + log_cross[1][:, None, None, :])
    base = base.reshape(S * S, S * S)

    node0 = (log_init[0][:, None] + log_init[1][None, :] + emission_grid(timeline.steps[0]))
    edges = [base + emission_grid(st).reshape(-1)[None, :] for st in timeline.steps[1:]]
    path, _ = _greedy_best_path(node0.reshape(-1), edges)
    chain1 = [p // S + 1 for p in path]
    chain2 = [p % S + 1 for p in path]
    return chain1, chain2


# -- serialization ------------------------------------------------------------

def hmm_to_json_dict(model: HmmModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "hmm",
        "n_states": model.n_states,
        "n_symbols": model.n_symbols,
        "state_names": [str(i + 1) for i in range(model.n_states)],
        "symbol_names": [str(i + 1) for i in range(model.n_symbols)],
        "initial": model.initial.tolist(),
        "trans": model.trans.tolist(),
        "emit": model.emit.tolist(),
    }


def hmm_from_json_dict(doc: dict) -> HmmModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')}")
    return HmmModel(n_states=doc["n_states"], n_symbols=doc["n_symbols"],
                    initial=doc["initial"], trans=doc["trans"], emit=doc["emit"])


def chmm_to_json_dict(model: ChmmModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "chmm",
        "n_states": model.n_states,
        "n_symbols": model.n_symbols,
        "state_names": [str(i + 1) for i in range(model.n_states)],
        "symbol_names": [str(i + 1) for i in range(model.n_symbols)],
        "initial": model.initial.tolist(),
        "trans": model.trans.tolist(),
        "cross": model.cross.tolist(),
        "emit": model.emit.tolist(),
    }


def chmm_from_json_dict(doc: dict) -> ChmmModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')}")
    return ChmmModel(n_states=doc["n_states"], n_symbols=doc["n_symbols"],
                     initial=doc["initial"], trans=doc["trans"],
                     cross=doc["cross"], emit=doc["emit"])


def save_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def timeline_to_json_dict(tl: DyadTimeline) -> dict:
    return {
        "dialogue_id": tl.dialogue_id,
        "speakers": list(tl.speakers),
        "steps": [
            {"t": st.timestamp, "obs1": st.obs1, "obs2": st.obs2,
             "gold1": st.gold1, "gold2": st.gold2}
            for st in tl.steps
        ],
    }


def timeline_from_json_dict(doc: dict) -> DyadTimeline:
    steps = [TimelineStep(obs1=s.get("obs1"), obs2=s.get("obs2"),
                          gold1=s.get("gold1"), gold2=s.get("gold2"),
                          timestamp=s.get("t", 0.0))
             for s in doc["steps"]]
    return DyadTimeline(steps=steps, dialogue_id=doc.get("dialogue_id", ""),
                        speakers=tuple(doc.get("speakers", ("", ""))))


def write_timelines_jsonl(path, timelines):
    with open(path, "w") as fh:
        for tl in timelines:
            fh.write(json.dumps(timeline_to_json_dict(tl), sort_keys=True) + "\n")


def read_timelines_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(timeline_from_json_dict(json.loads(line)))
    return out
