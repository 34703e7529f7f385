"""Dialog corpora: canonical JSON-lines I/O, vocabularies, label maps, encoding.

Canonical format, one dialog per line::

    {"id": "d1", "utterances": [{"speaker": "A", "tokens": ["hi"], "da": "greet", "sentiment": "neutral"}]}

Dataset-specific layouts (DailyDialog, Mastodon) go through the
``convert_*`` functions, which emit ``train.jsonl``/``dev.jsonl``/``test.jsonl``.
"""
from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from dcrnet._io import atomic_write_many

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
SPLITS = ("train", "dev", "test")
NEUTRAL_NAMES = ("neutral", "no_emotion")


class CorpusError(ValueError):
    pass


class CorpusParseError(CorpusError):
    pass


class SchemaError(CorpusError):
    pass


class EmptyCorpusError(CorpusError):
    pass


class UnknownLabelError(CorpusError):
    pass


@dataclass
class Utterance:
    tokens: list[str]
    da_label: str | None = None
    sentiment_label: str | None = None
    speaker: str | None = None

    def __post_init__(self):
        if not self.tokens:
            raise SchemaError("utterance has no tokens")


@dataclass
class Dialog:
    id: str
    utterances: list[Utterance]

    def __post_init__(self):
        if not self.utterances:
            raise SchemaError(f"dialog {self.id!r} has no utterances")

    def __len__(self):
        return len(self.utterances)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "utterances": [
                {"speaker": u.speaker, "tokens": list(u.tokens), "da": u.da_label, "sentiment": u.sentiment_label}
                for u in self.utterances
            ],
        }


class LabelMap:
    """Bijection between label strings and dense indices ``0..n-1``."""

    def __init__(self, labels, neutral_label: str | None = None):
        self.labels = list(labels)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in {self.labels}")
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        self.neutral_index = self._index.get(neutral_label) if neutral_label is not None else None

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        return isinstance(other, LabelMap) and self.labels == other.labels and self.neutral_index == other.neutral_index

    def index(self, label: str) -> int:
        return self._index[label]

    def label(self, i: int) -> str:
        return self.labels[i]

    def to_json(self) -> dict:
        return {"labels": self.labels, "neutral_index": self.neutral_index}

    @classmethod
    def from_json(cls, obj) -> LabelMap:
        lm = cls(obj["labels"])
        lm.neutral_index = obj.get("neutral_index")
        return lm

    def __repr__(self):
        return f"LabelMap({self.labels}, neutral_index={self.neutral_index})"


class Vocabulary:
    def __init__(self, tokens, min_freq: int = 1):
        self.itos = [PAD_TOKEN, UNK_TOKEN] + [t for t in tokens if t not in (PAD_TOKEN, UNK_TOKEN)]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        self.min_freq = min_freq

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_json(self) -> dict:
        return {"tokens": self.itos[2:], "min_freq": self.min_freq}

    @classmethod
    def from_json(cls, obj) -> Vocabulary:
        return cls(obj["tokens"], obj.get("min_freq", 1))


@dataclass
class Corpus:
    splits: dict[str, list[Dialog]]
    da_labels: LabelMap
    sentiment_labels: LabelMap

    def split(self, name: str) -> list[Dialog]:
        try:
            return self.splits[name]
        except KeyError:
            raise CorpusError(f"corpus has no {name!r} split (have {sorted(self.splits)})") from None

    def num_utterances(self, name: str) -> int:
        return sum(len(d) for d in self.split(name))


@dataclass
class EncodedDialog:
    id: str
    tokens: list[list[int]]
    da: list[int] | None = None
    sentiment: list[int] | None = None
    speakers: list[str | None] = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)


# ---------------------------------------------------------------- loading


def _parse_dialog(obj, lineno: int, require_labels: bool) -> Dialog:
    if not isinstance(obj, dict) or "utterances" not in obj:
        raise SchemaError(f"line {lineno}: expected an object with 'utterances'")
    did = str(obj.get("id", f"line{lineno}"))
    utts = []
    for j, u in enumerate(obj["utterances"]):
        tokens = u.get("tokens")
        if not isinstance(tokens, list) or not tokens:
            raise SchemaError(f"line {lineno}: utterance {j} of dialog {did!r} has no tokens")
        da, sent = u.get("da"), u.get("sentiment")
        if require_labels and (da is None or sent is None):
            missing = "da" if da is None else "sentiment"
            raise SchemaError(f"line {lineno}: utterance {j} of dialog {did!r} is missing label {missing!r}")
        utts.append(Utterance([str(t) for t in tokens], da, sent, u.get("speaker")))
    if not utts:
        raise SchemaError(f"line {lineno}: dialog {did!r} has no utterances")
    return Dialog(did, utts)


def load_dialogs(path, require_labels: bool = True) -> list[Dialog]:
    dialogs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusParseError(f"{path}: line {lineno}: {e.msg}") from None
            dialogs.append(_parse_dialog(obj, lineno, require_labels))
    return dialogs


def build_label_maps(splits: dict[str, list[Dialog]], neutral_label: str | None = None) -> tuple[LabelMap, LabelMap]:
    das, sents = set(), set()
    for dialogs in splits.values():
        for d in dialogs:
            for u in d.utterances:
                das.add(u.da_label)
                sents.add(u.sentiment_label)
    das.discard(None)
    sents.discard(None)
    if neutral_label is None:
        neutral_label = next((n for n in NEUTRAL_NAMES if n in sents), None)
    return LabelMap(sorted(das)), LabelMap(sorted(sents), neutral_label=neutral_label)


def load_canonical(path, split: str = "train", neutral_label: str | None = None) -> Corpus:
    """Load a canonical file (as ``split``) or a directory of ``{train,dev,test}.jsonl``."""
    path = Path(path)
    if path.is_dir():
        splits = {s: load_dialogs(path / f"{s}.jsonl") for s in SPLITS if (path / f"{s}.jsonl").exists()}
        if not splits:
            raise EmptyCorpusError(f"{path}: no train/dev/test .jsonl files found")
    else:
        splits = {split: load_dialogs(path)}
    if not any(splits.values()):
        raise EmptyCorpusError(f"{path}: corpus contains no dialogs")
    da, sent = build_label_maps(splits, neutral_label)
    return Corpus(splits, da, sent)


def write_canonical(dialogs) -> str:
    return "".join(json.dumps(d.to_json(), ensure_ascii=False) + "\n" for d in dialogs)


# ---------------------------------------------------------------- vocab & encoding


def build_vocab(corpus: Corpus, min_freq: int = 1) -> Vocabulary:
    """Vocabulary over the train split only, in first-occurrence order."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    train = corpus.split("train")
    if not train:
        raise EmptyCorpusError("train split is empty")
    counts = Counter()
    for d in train:
        for u in d.utterances:
            counts.update(u.tokens)
    kept = [t for t, c in counts.items() if c >= min_freq]
    return Vocabulary(kept, min_freq)


def encode_dialog(dialog: Dialog, vocab: Vocabulary, da_map: LabelMap, sent_map: LabelMap) -> EncodedDialog:
    """Index a dialog. Labels are encoded when present; an unmapped label is an error."""
    tokens = [vocab.encode(u.tokens) for u in dialog.utterances]
    da, sent = [], []
    for j, u in enumerate(dialog.utterances):
        for label, lm, out, kind in ((u.da_label, da_map, da, "dialog act"), (u.sentiment_label, sent_map, sent, "sentiment")):
            if label is None:
                continue
            if label not in lm:
                raise UnknownLabelError(f"unknown {kind} label {label!r} in dialog {dialog.id!r}, utterance {j}")
            out.append(lm.index(label))
    n = len(dialog)
    return EncodedDialog(
        dialog.id,
        tokens,
        da if len(da) == n else None,
        sent if len(sent) == n else None,
        [u.speaker for u in dialog.utterances],
    )


def decode_dialog(enc: EncodedDialog, vocab: Vocabulary, da_map: LabelMap, sent_map: LabelMap) -> Dialog:
    utts = []
    for j, ids in enumerate(enc.tokens):
        utts.append(
            Utterance(
                vocab.decode(ids),
                da_map.label(enc.da[j]) if enc.da is not None else None,
                sent_map.label(enc.sentiment[j]) if enc.sentiment is not None else None,
                enc.speakers[j] if enc.speakers else None,
            )
        )
    return Dialog(enc.id, utts)


# ---------------------------------------------------------------- converters

_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase; words (with inner apostrophes) and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


DAILYDIALOG_ACTS = {1: "inform", 2: "question", 3: "directive", 4: "commissive"}
DAILYDIALOG_EMOTIONS = {
    0: "no_emotion", 1: "anger", 2: "disgust", 3: "fear", 4: "happiness", 5: "sadness", 6: "surprise",
}
_DD_SPLITS = {"train": "train", "validation": "dev", "test": "test"}


def _find(src: Path, name: str) -> Path:
    hits = sorted(src.rglob(name))
    if not hits:
        raise FileNotFoundError(f"{name} not found under {src}")
    return hits[0]


def _read_dailydialog_split(src: Path, split: str) -> list[Dialog]:
    texts = _find(src, f"dialogues_{split}.txt").read_text(encoding="utf-8").splitlines()
    acts = _find(src, f"dialogues_act_{split}.txt").read_text(encoding="utf-8").splitlines()
    emos = _find(src, f"dialogues_emotion_{split}.txt").read_text(encoding="utf-8").splitlines()
    if not len(texts) == len(acts) == len(emos):
        raise CorpusParseError(f"DailyDialog {split}: file line counts differ ({len(texts)}, {len(acts)}, {len(emos)})")
    dialogs = []
    for i, (t, a, e) in enumerate(zip(texts, acts, emos), start=1):
        utts = [u.strip() for u in t.split("__eou__")]
        utts = [u for u in utts if u]
        a_ids, e_ids = [int(x) for x in a.split()], [int(x) for x in e.split()]
        if not len(utts) == len(a_ids) == len(e_ids):
            raise CorpusParseError(f"DailyDialog {split} line {i}: {len(utts)} utterances, {len(a_ids)} acts, {len(e_ids)} emotions")
        turns = []
        for j, (u, ai, ei) in enumerate(zip(utts, a_ids, e_ids)):
            toks = tokenize(u) or ["<empty>"]
            turns.append(Utterance(toks, DAILYDIALOG_ACTS[ai], DAILYDIALOG_EMOTIONS[ei], "AB"[j % 2]))
        dialogs.append(Dialog(f"{split}-{i}", turns))
    return dialogs


def convert_dailydialog(src, dst) -> dict[str, int]:
    """Convert the released ``ijcnlp_dailydialog`` layout into canonical files."""
    src, dst = Path(src), Path(dst)
    out, counts = {}, {}
    for raw, split in _DD_SPLITS.items():
        dialogs = _read_dailydialog_split(src, raw)
        out[dst / f"{split}.jsonl"] = write_canonical(dialogs)
        counts[split] = len(dialogs)
    out[dst / "PREPROCESSING.txt"] = (
        "source: DailyDialog (ijcnlp_dailydialog)\n"
        "splits: train / validation->dev / test as released\n"
        "tokens: lowercased; regex words-with-apostrophes + single punctuation marks\n"
        f"acts: {DAILYDIALOG_ACTS}\nemotions: {DAILYDIALOG_EMOTIONS}\n"
        "speakers: alternate A/B by turn position\n"
    )
    atomic_write_many(out)
    return counts


_COLUMN_ALIASES = {
    "dialog_id": ("dialog_id", "dialog", "dialogue", "dialogue_id", "conv", "conv_id", "conversation", "thread"),
    "speaker": ("speaker", "user", "author", "spk"),
    "text": ("text", "utterance", "message", "content", "toot"),
    "da": ("da", "act", "dialog_act", "dialogue_act", "da_label"),
    "sentiment": ("sentiment", "sent", "polarity", "sentiment_label"),
}
_SENTIMENT_NORMALIZE = {
    "+": "positive", "pos": "positive", "positive": "positive", "1": "positive",
    "-": "negative", "neg": "negative", "negative": "negative", "-1": "negative",
    "0": "neutral", "=": "neutral", "neu": "neutral", "neutral": "neutral",
}


def _resolve_columns(header: list[str]) -> dict[str, int]:
    lowered = [h.strip().lower() for h in header]
    cols = {}
    for key, aliases in _COLUMN_ALIASES.items():
        for a in aliases:
            if a in lowered:
                cols[key] = lowered.index(a)
                break
    missing = {"dialog_id", "text", "da", "sentiment"} - set(cols)
    if missing:
        raise SchemaError(f"Mastodon source header {header} lacks columns {sorted(missing)}")
    return cols


def _read_mastodon_file(path: Path) -> list[Dialog]:
    """Delimited rows with a header naming dialog id, text, act and sentiment columns.

    Rows of one dialog are contiguous and in utterance order.
    """
    text = path.read_text(encoding="utf-8")
    dialect = "excel-tab" if "\t" in text.splitlines()[0] else "excel"
    rows = list(csv.reader(text.splitlines(), dialect=dialect))
    if not rows:
        raise EmptyCorpusError(f"{path} is empty")
    cols = _resolve_columns(rows[0])
    dialogs: list[Dialog] = []
    current_id, current = None, []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) <= max(cols.values()):
            raise CorpusParseError(f"{path}: line {lineno}: expected {max(cols.values()) + 1} fields, got {len(row)}")
        did = row[cols["dialog_id"]].strip()
        if did != current_id and current:
            dialogs.append(Dialog(current_id, current))
            current = []
        current_id = did
        sent = row[cols["sentiment"]].strip()
        sent = _SENTIMENT_NORMALIZE.get(sent.lower(), sent.lower())
        toks = tokenize(row[cols["text"]]) or ["<empty>"]
        spk = row[cols["speaker"]].strip() if "speaker" in cols else None
        current.append(Utterance(toks, row[cols["da"]].strip(), sent, spk))
    if current:
        dialogs.append(Dialog(current_id, current))
    return dialogs


def _pick(src: Path, split: str) -> Path | None:
    for ext in (".tsv", ".csv", ".txt"):
        for p in sorted(src.glob(f"*{split}*{ext}")):
            return p
    return None


def convert_mastodon(src, dst, dev_fraction: float = 0.1) -> dict[str, int]:
    """Convert delimited Mastodon annotation files into canonical files.

    ``src`` holds files whose names contain ``train`` and ``test`` (and
    optionally ``dev``). Without a dev file, the last ``dev_fraction`` of
    train dialogs (file order) become dev.
    """
    src, dst = Path(src), Path(dst)
    train_p, test_p, dev_p = _pick(src, "train"), _pick(src, "test"), _pick(src, "dev")
    if train_p is None or test_p is None:
        raise FileNotFoundError(f"{src}: need files named *train*.tsv|csv|txt and *test*.tsv|csv|txt")
    train, test = _read_mastodon_file(train_p), _read_mastodon_file(test_p)
    carved = dev_p is None
    if carved:
        n_dev = max(1, round(dev_fraction * len(train)))
        train, dev = train[:-n_dev], train[-n_dev:]
    else:
        dev = _read_mastodon_file(dev_p)
    splits = {"train": train, "dev": dev, "test": test}
    out = {dst / f"{s}.jsonl": write_canonical(ds) for s, ds in splits.items()}
    out[dst / "PREPROCESSING.txt"] = (
        f"source: Mastodon annotation files ({train_p.name}, {test_p.name}"
        + (f", {dev_p.name}" if dev_p else "")
        + ")\n"
        + (f"dev: last {dev_fraction:.0%} of train dialogs by file order\n" if carved else "dev: provided file\n")
        + "tokens: lowercased; regex words-with-apostrophes + single punctuation marks; urls/mentions/emoji not special-cased\n"
        + f"sentiment normalization: {_SENTIMENT_NORMALIZE}\n"
        + "dialog acts: kept verbatim (whitespace-stripped)\n"
    )
    atomic_write_many(out)
    return {s: len(ds) for s, ds in splits.items()}
