import json

import pytest

from dcrnet import corpus as cp
from dcrnet.corpus import PAD, UNK

from conftest import utt, write_jsonl


def _corpus_dir(tmp_path, train, dev=None, test=None):
    write_jsonl(tmp_path / "train.jsonl", train)
    if dev is not None:
        write_jsonl(tmp_path / "dev.jsonl", dev)
    if test is not None:
        write_jsonl(tmp_path / "test.jsonl", test)
    return tmp_path


def test_load_single_dialog(tmp_path):
    path = write_jsonl(tmp_path / "one.jsonl", [{"id": "d1", "utterances": [utt("hello there"), utt("hi", "greet", "positive")]}])
    c = cp.load_canonical(path)
    (d,) = c.split("train")
    assert len(d) == 2 and d.id == "d1"
    assert d.utterances[1].da_label == "greet"


def test_empty_file(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(cp.EmptyCorpusError):
        cp.load_canonical(tmp_path / "empty.jsonl")


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps({"id": "a", "utterances": [utt("x")]}) + "\n{not json\n")
    with pytest.raises(cp.CorpusParseError, match="line 2"):
        cp.load_canonical(p)


def test_missing_label_is_schema_error(tmp_path):
    u = utt("x")
    del u["sentiment"]
    p = write_jsonl(tmp_path / "x.jsonl", [{"id": "a", "utterances": [u]}])
    with pytest.raises(cp.SchemaError, match="sentiment"):
        cp.load_canonical(p)
    # labels are optional when not required (predict time)
    assert cp.load_dialogs(p, require_labels=False)[0].utterances[0].sentiment_label is None


def test_empty_tokens_rejected(tmp_path):
    p = write_jsonl(tmp_path / "x.jsonl", [{"id": "a", "utterances": [utt([])]}])
    with pytest.raises(cp.SchemaError):
        cp.load_canonical(p)


def test_load_is_idempotent(tmp_path):
    d = _corpus_dir(tmp_path, [{"id": "a", "utterances": [utt("b a"), utt("c", "q", "negative")]}], dev=[{"id": "z", "utterances": [utt("q")]}])
    c1, c2 = cp.load_canonical(d), cp.load_canonical(d)
    assert c1 == c2
    assert c1.da_labels.labels == ["inform", "q"]
    assert c1.sentiment_labels.neutral_index == c1.sentiment_labels.index("neutral")


def test_label_maps_cover_all_splits(tmp_path):
    d = _corpus_dir(
        tmp_path,
        [{"id": "a", "utterances": [utt("x")]}],
        dev=[{"id": "b", "utterances": [utt("y", "only_dev", "positive")]}],
        test=[{"id": "c", "utterances": [utt("z", "only_test", "negative")]}],
    )
    c = cp.load_canonical(d)
    assert {"only_dev", "only_test", "inform"} == set(c.da_labels.labels)
    assert {"positive", "negative", "neutral"} == set(c.sentiment_labels.labels)


def _mini(train_tokens, test_tokens=None):
    splits = {"train": [cp.Dialog("t", [cp.Utterance(train_tokens, "a", "neutral")])]}
    if test_tokens:
        splits["test"] = [cp.Dialog("s", [cp.Utterance(test_tokens, "a", "neutral")])]
    da, sent = cp.build_label_maps(splits)
    return cp.Corpus(splits, da, sent)


def test_vocab_min_freq():
    v = cp.build_vocab(_mini(["a", "a", "b"]), min_freq=2)
    assert "a" in v and "b" not in v


def test_vocab_min_freq_one_is_distinct_train_tokens():
    c = _mini(["x", "y", "x", "z"], ["unseen"])
    v = cp.build_vocab(c, 1)
    assert set(v.itos) == {"x", "y", "z", cp.PAD_TOKEN, cp.UNK_TOKEN}
    assert len(v) == 5 and v.stoi[cp.PAD_TOKEN] == PAD and v.stoi[cp.UNK_TOKEN] == UNK


def test_test_only_tokens_encode_to_unk():
    c = _mini(["x"], ["p", "q"])
    v = cp.build_vocab(c, 1)
    enc = cp.encode_dialog(c.split("test")[0], v, c.da_labels, c.sentiment_labels)
    assert enc.tokens == [[UNK, UNK]]


def test_encode_decode_round_trip(toy):
    v = cp.build_vocab(toy, 1)
    for d in toy.split("train"):
        enc = cp.encode_dialog(d, v, toy.da_labels, toy.sentiment_labels)
        assert cp.decode_dialog(enc, v, toy.da_labels, toy.sentiment_labels) == d


def test_unknown_label_names_label_and_dialog(toy):
    v = cp.build_vocab(toy, 1)
    d = cp.Dialog("weird", [cp.Utterance(["hi"], "nonexistent_act", "neutral")])
    with pytest.raises(cp.UnknownLabelError, match="nonexistent_act.*weird"):
        cp.encode_dialog(d, v, toy.da_labels, toy.sentiment_labels)


def test_tokenize():
    assert cp.tokenize("Don't PANIC, it's fine!") == ["don't", "panic", ",", "it's", "fine", "!"]


# ---------------------------------------------------------------- converters


def _write_dailydialog(root):
    layout = {
        "train": (["Hi , how are you ? __eou__ Fine , thanks . __eou__", "Close the door . __eou__ OK . __eou__ Thanks ! __eou__"],
                  ["2 1", "3 4 1"], ["0 4", "1 0 4"]),
        "validation": (["Where is it ? __eou__ Here . __eou__"], ["2 1"], ["6 0"]),
        "test": (["I am so sad . __eou__"], ["1"], ["5"]),
    }
    for split, (texts, acts, emos) in layout.items():
        d = root / "ijcnlp_dailydialog" / split
        d.mkdir(parents=True)
        (d / f"dialogues_{split}.txt").write_text("\n".join(texts) + "\n")
        (d / f"dialogues_act_{split}.txt").write_text("\n".join(acts) + "\n")
        (d / f"dialogues_emotion_{split}.txt").write_text("\n".join(emos) + "\n")


def test_convert_dailydialog(tmp_path):
    _write_dailydialog(tmp_path / "src")
    counts = cp.convert_dailydialog(tmp_path / "src", tmp_path / "out")
    assert counts == {"train": 2, "dev": 1, "test": 1}
    c = cp.load_canonical(tmp_path / "out")
    d0 = c.split("train")[0]
    assert d0.utterances[0].tokens == ["hi", ",", "how", "are", "you", "?"]
    assert [u.da_label for u in d0.utterances] == ["question", "inform"]
    assert [u.sentiment_label for u in d0.utterances] == ["no_emotion", "happiness"]
    assert [u.speaker for u in c.split("train")[1].utterances] == ["A", "B", "A"]
    assert c.sentiment_labels.neutral_index == c.sentiment_labels.index("no_emotion")
    assert (tmp_path / "out" / "PREPROCESSING.txt").exists()


def test_convert_dailydialog_count_mismatch(tmp_path):
    _write_dailydialog(tmp_path / "src")
    (tmp_path / "src/ijcnlp_dailydialog/test/dialogues_act_test.txt").write_text("1 2\n")
    with pytest.raises(cp.CorpusParseError):
        cp.convert_dailydialog(tmp_path / "src", tmp_path / "out")
    assert not (tmp_path / "out" / "train.jsonl").exists()


def _write_mastodon(src, n_train=20):
    src.mkdir()
    rows = ["dialog_id\tspeaker\tsentiment\tact\ttext"]
    for i in range(n_train):
        rows.append(f"{i}\tu1\t+\tStatement\tGreat news about #thing, thanks!")
        rows.append(f"{i}\tu2\t0\tThanking\tThank you @friend")
    (src / "mastodon_train.tsv").write_text("\n".join(rows) + "\n")
    (src / "mastodon_test.tsv").write_text("dialog_id\tspeaker\tsentiment\tact\ttext\n100\tu1\t-\tDisagreement\tNo way.\n")


def test_convert_mastodon_carves_dev(tmp_path):
    _write_mastodon(tmp_path / "src")
    counts = cp.convert_mastodon(tmp_path / "src", tmp_path / "out")
    assert counts == {"train": 18, "dev": 2, "test": 1}
    c = cp.load_canonical(tmp_path / "out")
    # dev is the tail of the train file
    assert [d.id for d in c.split("dev")] == ["18", "19"]
    assert c.num_utterances("train") + c.num_utterances("dev") == 40
    assert set(c.sentiment_labels.labels) == {"positive", "neutral", "negative"}
    assert c.sentiment_labels.neutral_index is not None
    notes = (tmp_path / "out" / "PREPROCESSING.txt").read_text()
    assert "last 10%" in notes


def test_convert_mastodon_bad_header(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "train.tsv").write_text("a\tb\n1\t2\n")
    (src / "test.tsv").write_text("a\tb\n1\t2\n")
    with pytest.raises(cp.SchemaError):
        cp.convert_mastodon(src, tmp_path / "out")
