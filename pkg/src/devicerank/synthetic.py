"""Synthetic label corpora with known answers, for tests and demos.

Every label draws its content words from a private pool, so label
vocabularies are disjoint. Labels are grouped into topics and each word
vector is ``topic_weight * topic_direction + gaussian noise``: labels of the
same topic look alike, labels of different topics do not. Every
description also carries the same filler words, which end up as stop words.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import LabelEntry, TargetRecord, strip_regulation_refs, tokenize
from .embed import WordVectorTable

FILLERS = ("the", "device", "is", "used", "for")


@dataclass
class SyntheticSuite:
    labels: list
    targets: list
    table: WordVectorTable
    label_tokens: dict
    topic_of: dict

    def write(self, directory):
        """Write ``corpus.jsonl``, ``targets.jsonl`` and ``vectors.vec``; returns their paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        corpus = directory / "corpus.jsonl"
        targets = directory / "targets.jsonl"
        vectors = directory / "vectors.vec"
        with corpus.open("w", encoding="utf-8", newline="\n") as fh:
            for e in self.labels:
                fh.write(json.dumps({"label_id": e.label_id, "name": e.name, "description": e.raw_description}) + "\n")
        with targets.open("w", encoding="utf-8", newline="\n") as fh:
            for t in self.targets:
                rec = {"target_id": t.target_id, "description": t.description, "gold_label_id": t.gold_label_id}
                if t.mislabel_flag is not None:
                    rec["mislabel_flag"] = t.mislabel_flag
                fh.write(json.dumps(rec) + "\n")
        inv = sorted(self.table.words.items(), key=lambda kv: kv[1])
        with vectors.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(inv)} {self.table.dim}\n")
            for word, idx in inv:
                fh.write(word + " " + " ".join(repr(float(x)) for x in self.table.matrix[idx]) + "\n")
        return corpus, targets, vectors


def _word(label, j):
    return f"w{label:04d}x{j:02d}"


def make_suite(n_labels=500, n_topics=5, dim=50, label_words=8, paraphrase_shared=5,
               paraphrase_new=3, topic_weight=1.0, seed=0):
    """Build labels, one paraphrasing target per label, and the word vectors.

    A target keeps ``paraphrase_shared`` of its label's ``label_words``
    content words and adds ``paraphrase_new`` unused words from the same
    private pool.
    """
    if paraphrase_shared > label_words:
        raise ValueError("cannot share more words than a label has")
    rng = np.random.default_rng(seed)
    topics = rng.standard_normal((n_topics, dim))
    topics /= np.linalg.norm(topics, axis=1, keepdims=True)
    noise_scale = 1.0 / np.sqrt(dim)
    pool = label_words + paraphrase_new

    vectors = {}
    for w in FILLERS:
        vectors[w] = rng.standard_normal(dim) * noise_scale
    labels, targets, label_tokens, topic_of = [], [], {}, {}
    for i in range(n_labels):
        topic = i * n_topics // n_labels
        lid = f"L{i:04d}"
        topic_of[lid] = topic
        words = [_word(i, j) for j in range(pool)]
        for w in words:
            vectors[w] = topic_weight * topics[topic] + rng.standard_normal(dim) * noise_scale
        own = words[:label_words]
        label_tokens[lid] = own
        desc = " ".join(list(FILLERS) + own)
        labels.append(LabelEntry(lid, f"label {i}", strip_regulation_refs(desc), desc))
        kept = list(rng.choice(own, size=paraphrase_shared, replace=False))
        text_words = list(FILLERS) + kept + words[label_words:]
        rng.shuffle(text_words)
        text = " ".join(text_words)
        targets.append(TargetRecord(f"T{i:04d}", text, lid, None, len(tokenize(text)), text))
    table = WordVectorTable.from_dict(vectors)
    return SyntheticSuite(labels, targets, table, label_tokens, topic_of)


def reassign(suite: SyntheticSuite, target_id: str, new_gold: str, flag=True):
    """Point one target at a different gold label, marking it mislabeled."""
    out = []
    for t in suite.targets:
        if t.target_id == target_id:
            t = TargetRecord(t.target_id, t.description, new_gold, flag, t.word_count, t.raw_description)
        out.append(t)
    suite.targets = out
    return suite


def add_near_miss_label(suite: SyntheticSuite, source_label: str, shared_fraction=0.8, seed=1):
    """Append a label that copies ``shared_fraction`` of another label's words.

    Returns the new label id.
    """
    rng = np.random.default_rng(seed)
    own = suite.label_tokens[source_label]
    n_keep = int(np.ceil(shared_fraction * len(own)))
    keep = own[:n_keep]
    dim = suite.table.dim
    # replacement words sit near the source label's mean word vector
    base = np.mean([suite.table.lookup(w) for w in own], axis=0)
    vectors = {w: suite.table.matrix[suite.table.words[w]] for w in suite.table.words}
    new_id = f"{source_label}N"
    extra = []
    for j in range(len(own) - n_keep):
        w = f"n{source_label.lower()}x{j:02d}"
        vectors[w] = base + rng.standard_normal(dim) / np.sqrt(dim)
        extra.append(w)
    words = keep + extra
    desc = " ".join(list(FILLERS) + words)
    suite.labels.append(LabelEntry(new_id, f"variant of {source_label}", desc, desc))
    suite.label_tokens[new_id] = words
    suite.topic_of[new_id] = suite.topic_of[source_label]
    suite.table = WordVectorTable.from_dict(vectors)
    return new_id
