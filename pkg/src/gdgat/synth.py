"""Synthetic corpora and probability tables.

Three generator families:

* profile  - imbalanced label mix with generic events; pair distributions
             come from synth_prob_table (sharpness / flip-rate controlled).
* rank2    - a fixed share of pairs whose gold label is the second-ranked
             class of their own edge distribution, with the top-ranked
             class a deterministic function of gold.  The argmax is wrong
             on those pairs but the full distribution identifies gold;
             hardening destroys exactly that information.
* distance - each document carries a latent theme label; short-range pair
             distributions agree with gold, long-range ones are nearly
             uniform, and event types lean toward the theme, so long pairs
             are only recoverable by aggregating over the document.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Event, EventPairInstance, LabelSet, MATRES, TB_DENSE
from .probs import ProbTable
from .tensor import stable_softmax

TB_DENSE_PROFILE = {
    "VAGUE": 0.477,
    "BEFORE": 0.19,
    "AFTER": 0.19,
    "INCLUDES": 0.07,
    "IS_INCLUDED": 0.058,
    "SIMULTANEOUS": 0.015,
}

MATRES_IMBALANCE = {"BEFORE": 0.30, "AFTER": 0.20, "EQUAL": 0.02, "VAGUE": 0.48}


def exact_counts(fractions: dict, total: int) -> dict:
    """Largest-remainder allocation so counts sum to total exactly."""
    raw = {k: fractions[k] * total for k in fractions}
    counts = {k: int(np.floor(v)) for k, v in raw.items()}
    short = total - sum(counts.values())
    for k in sorted(raw, key=lambda k: raw[k] - counts[k], reverse=True)[:short]:
        counts[k] += 1
    return counts


def _sample_ordered_pairs(rng, n_events: int, n_pairs: int) -> list[tuple[int, int]]:
    candidates = [(i, j) for i in range(n_events) for j in range(n_events) if i != j]
    picks = rng.choice(len(candidates), size=n_pairs, replace=False)
    return [candidates[k] for k in picks]


def make_profile_corpus(
    label_set: LabelSet,
    fractions: dict,
    n_pairs: int,
    seed: int,
    split: str = "train",
    events_per_doc: tuple[int, int] = (4, 8),
    pairs_per_doc: int = 6,
    n_types: int = 4,
) -> Dataset:
    """Imbalanced corpus with generic events; labels hit fractions exactly
    (up to largest-remainder rounding)."""
    if set(fractions) != set(label_set.labels):
        raise ValueError("fractions must cover exactly the label set")
    rng = np.random.default_rng(seed)
    slots = [lbl for lbl, c in exact_counts(fractions, n_pairs).items() for _ in range(c)]
    rng.shuffle(slots)

    documents: dict[str, list[Event]] = {}
    pairs: list[EventPairInstance] = []
    doc_no = 0
    cursor = 0
    while cursor < n_pairs:
        doc_id = f"{split}_d{doc_no:04d}"
        n = int(rng.integers(events_per_doc[0], events_per_doc[1] + 1))
        documents[doc_id] = [
            Event(doc_id, k, f"t{int(rng.integers(n_types))}", f"w{k}") for k in range(n)
        ]
        take = min(pairs_per_doc, n_pairs - cursor, n * (n - 1))
        for (i, j) in _sample_ordered_pairs(rng, n, take):
            pairs.append(EventPairInstance(doc_id, i, j, slots[cursor], abs(i - j) - 1))
            cursor += 1
        doc_no += 1
    return Dataset(label_set, documents, pairs, split)


# ---------------------------------------------------------------------------
# rank-2 corpus (soft-vs-hard separation)

RANK2_SHARE = 0.30
RANK2_TOP_LOGIT = 6.2
RANK2_GOLD_LOGIT = 5.8
EASY_LOGIT = 8.0


def rank2_distractor(label_set: LabelSet, gold: str) -> str:
    """Top-ranked (wrong) class of a rank-2 pair: the label after gold."""
    idx = label_set.index(gold)
    return label_set.labels[(idx + 1) % label_set.size]


def make_rank2_corpus(
    n_pairs: int = 2000,
    seed: int = 0,
    split: str = "train",
    label_set: LabelSet = MATRES,
    fractions: dict | None = None,
    events_per_doc: int = 6,
    pairs_per_doc: int = 8,
) -> tuple[Dataset, ProbTable]:
    """Corpus + table where RANK2_SHARE of pairs hide gold at rank 2."""
    fractions = dict(fractions or MATRES_IMBALANCE)
    rng = np.random.default_rng(seed)

    joint = {}
    for lbl, frac in fractions.items():
        joint[(lbl, "rank2")] = frac * RANK2_SHARE
        joint[(lbl, "easy")] = frac * (1.0 - RANK2_SHARE)
    slots = [key for key, c in exact_counts(joint, n_pairs).items() for _ in range(c)]
    rng.shuffle(slots)

    documents: dict[str, list[Event]] = {}
    pairs: list[EventPairInstance] = []
    kind_by_pair: dict[tuple[str, int, int], tuple[str, str]] = {}
    doc_no = 0
    cursor = 0
    while cursor < n_pairs:
        doc_id = f"{split}_d{doc_no:04d}"
        documents[doc_id] = [
            Event(doc_id, k, f"t{int(rng.integers(4))}", f"w{k}")
            for k in range(events_per_doc)
        ]
        take = min(pairs_per_doc, n_pairs - cursor)
        for (i, j) in _sample_ordered_pairs(rng, events_per_doc, take):
            gold, kind = slots[cursor]
            pairs.append(EventPairInstance(doc_id, i, j, gold, abs(i - j) - 1))
            kind_by_pair[(doc_id, i, j)] = (gold, kind)
            cursor += 1
        doc_no += 1
    dataset = Dataset(label_set, documents, pairs, split)

    c = label_set.size
    eye = np.eye(c)
    entries = {}
    for doc_id in sorted(documents):
        n = len(documents[doc_id])
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                key = (doc_id, i, j)
                labeled = kind_by_pair.get(key)
                if labeled is None:
                    logits = 0.3 * rng.standard_normal(c)  # filler: near-uniform
                elif labeled[1] == "easy":
                    g = label_set.index(labeled[0])
                    logits = EASY_LOGIT * eye[g] + 0.5 * rng.standard_normal(c)
                else:
                    g = label_set.index(labeled[0])
                    d = label_set.index(rank2_distractor(label_set, labeled[0]))
                    logits = (RANK2_TOP_LOGIT * eye[d] + RANK2_GOLD_LOGIT * eye[g]
                              + 0.1 * rng.standard_normal(c))
                entries[key] = stable_softmax(logits)
    table = ProbTable(
        label_set, entries,
        provenance=f"synth-rank2(n_pairs={n_pairs}, seed={seed}, split={split})",
    )
    return dataset, table


# ---------------------------------------------------------------------------
# distance corpus (long-range recovery through aggregation)

DISTANCE_THEMES = ("BEFORE", "AFTER", "EQUAL")
DISTANCE_THEME_PROBS = (0.4, 0.4, 0.2)
DISTANCE_GOLD_FIDELITY = 0.9   # P(gold == theme)
DISTANCE_TYPE_BIAS = 0.65      # P(event type leans to the theme)
# distance -> (sharpness, flip_rate) of the pair's edge distribution
DISTANCE_BANDS = {
    0: (10.0, 0.05),
    1: (10.0, 0.05),
    2: (8.0, 0.25),
    3: (0.6, 0.50),
    4: (0.6, 0.65),
    5: (0.6, 0.75),
    6: (0.6, 0.75),
}
DISTANCE_QUOTAS = ((0, 2), (1, 2), (2, 3), (3, 3), (4, 3), (5, 3))  # (min distance, count)
DISTANCE_DOC_EVENTS = 8


def _distance_label(rng, label_set, theme):
    if rng.random() < DISTANCE_GOLD_FIDELITY:
        return theme
    others = [lbl for lbl in label_set.labels if lbl != theme]
    return others[int(rng.integers(len(others)))]


def _band_distribution(rng, label_set, label, distance):
    sharpness, flip = DISTANCE_BANDS[min(distance, max(DISTANCE_BANDS))]
    idx = label_set.index(label)
    if rng.random() < flip:
        idx = (idx + 1 + int(rng.integers(label_set.size - 1))) % label_set.size
    logits = sharpness * np.eye(label_set.size)[idx] \
        + (sharpness / 8.0) * rng.standard_normal(label_set.size)
    return stable_softmax(logits)


def make_distance_corpus(
    n_docs: int = 120,
    seed: int = 0,
    split: str = "train",
    label_set: LabelSet = MATRES,
) -> tuple[Dataset, ProbTable]:
    """Theme-per-document corpus with distance-graded edge informativeness."""
    rng = np.random.default_rng(seed)
    n_events = DISTANCE_DOC_EVENTS
    documents: dict[str, list[Event]] = {}
    pairs: list[EventPairInstance] = []
    theme_by_doc: dict[str, str] = {}

    for doc_no in range(n_docs):
        doc_id = f"{split}_d{doc_no:04d}"
        theme = DISTANCE_THEMES[int(rng.choice(len(DISTANCE_THEMES), p=DISTANCE_THEME_PROBS))]
        theme_by_doc[doc_id] = theme
        theme_type = f"T{DISTANCE_THEMES.index(theme)}"
        events = []
        for k in range(n_events):
            if rng.random() < DISTANCE_TYPE_BIAS:
                etype = theme_type
            else:
                etype = f"T{int(rng.integers(len(DISTANCE_THEMES)))}"
            events.append(Event(doc_id, k, etype, f"w{k}"))
        documents[doc_id] = events

        used = set()
        for min_dist, count in DISTANCE_QUOTAS:
            candidates = [
                (i, j)
                for i in range(n_events)
                for j in range(n_events)
                if i != j and (i, j) not in used
                and (abs(i - j) - 1 >= 5 if min_dist == 5 else abs(i - j) - 1 == min_dist)
            ]
            picks = rng.choice(len(candidates), size=min(count, len(candidates)), replace=False)
            for k in picks:
                i, j = candidates[k]
                used.add((i, j))
                gold = _distance_label(rng, label_set, theme)
                pairs.append(EventPairInstance(doc_id, i, j, gold, abs(i - j) - 1))
    dataset = Dataset(label_set, documents, pairs, split)

    gold_by_pair = {(p.doc_id, p.i, p.j): p.gold for p in pairs}
    entries = {}
    for doc_id in sorted(documents):
        theme = theme_by_doc[doc_id]
        for i in range(n_events):
            for j in range(n_events):
                if i == j:
                    continue
                key = (doc_id, i, j)
                label = gold_by_pair.get(key)
                if label is None:
                    # unlabeled filler still reflects the theme process
                    label = _distance_label(rng, label_set, theme)
                entries[key] = _band_distribution(rng, label_set, label, abs(i - j) - 1)
    table = ProbTable(
        label_set, entries,
        provenance=f"synth-distance(n_docs={n_docs}, seed={seed}, split={split})",
    )
    return dataset, table


# ---------------------------------------------------------------------------
# bundles for the CLI and the acceptance experiments

PROFILES = ("basic", "rank2", "distance")


def synth_bundle(profile: str, seed: int, *, basic_pairs=(600, 200, 200),
                 basic_sharpness: float = 20.0, basic_flip_rate: float = 0.0,
                 rank2_pairs=(2000, 400, 1000), distance_docs=(120, 25, 60),
                 label_set: LabelSet | None = None, fractions: dict | None = None):
    """Generate {split: (dataset, table)} for one synthetic profile."""
    from .probs import synth_prob_table

    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    splits = ("train", "dev", "test")
    out = {}
    if profile == "basic":
        ls = label_set or MATRES
        fr = fractions or MATRES_IMBALANCE
        for k, split in enumerate(splits):
            ds = make_profile_corpus(ls, fr, basic_pairs[k], seed + 101 * k, split)
            out[split] = (ds, synth_prob_table(ds, basic_sharpness, basic_flip_rate,
                                               seed + 101 * k + 7))
    elif profile == "rank2":
        for k, split in enumerate(splits):
            out[split] = make_rank2_corpus(rank2_pairs[k], seed + 101 * k, split)
    else:
        for k, split in enumerate(splits):
            out[split] = make_distance_corpus(distance_docs[k], seed + 101 * k, split)
    return out
