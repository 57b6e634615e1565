"""Checkpoint construction and fine-tuning behavior."""

import json
import math
from pathlib import Path

import pytest
import torch
from transformers import BertForSequenceClassification, BertTokenizer

from hfbridge import BridgeServerConfig, finetune, init_base, load_served_model
from hfbridge.model import read_labeled_jsonl


def state_dicts_equal(a_dir: str, b_dir: str) -> bool:
    a = BertForSequenceClassification.from_pretrained(a_dir).state_dict()
    b = BertForSequenceClassification.from_pretrained(b_dir).state_dict()
    if a.keys() != b.keys():
        return False
    return all(torch.equal(a[k], b[k]) for k in a)


class TestInitBase:
    def test_same_seed_same_weights(self, tmp_path):
        words = ["alpha", "beta", "gamma"]
        one = init_base(str(tmp_path / "one"), words, seed=4)
        two = init_base(str(tmp_path / "two"), words, seed=4)
        assert state_dicts_equal(one, two)

    def test_vocabulary_layout(self, base_checkpoint):
        lines = Path(base_checkpoint, "vocab.txt").read_text().splitlines()
        assert lines[:5] == ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        assert lines[5:] == sorted(lines[5:])
        tokenizer = BertTokenizer.from_pretrained(base_checkpoint)
        assert tokenizer.tokenize("shrapnel zzz") == ["shrapnel", "[UNK]"]

    def test_binary_head(self, base_checkpoint):
        _, model = load_served_model(base_checkpoint)
        assert model.config.num_labels == 2
        assert not model.training

    def test_rejects_indivisible_heads(self, tmp_path):
        with pytest.raises(ValueError, match="attention heads"):
            init_base(str(tmp_path / "bad"), ["a"], hidden_size=30, num_attention_heads=4)


class TestLoadServedModel:
    def test_rejects_non_binary_head(self, tmp_path, base_checkpoint):
        target = tmp_path / "three"
        tokenizer = BertTokenizer.from_pretrained(base_checkpoint)
        base = BertForSequenceClassification.from_pretrained(base_checkpoint)
        config = base.config
        config.num_labels = 3
        BertForSequenceClassification(config).save_pretrained(target)
        tokenizer.save_pretrained(target)
        with pytest.raises(ValueError, match="binary head"):
            load_served_model(str(target))


class TestFinetune:
    def test_loss_log(self, base_checkpoint, corpus, tmp_path):
        log = finetune(
            base_checkpoint, corpus["train_path"], str(tmp_path / "out"),
            lr=5e-3, epochs=4, seed=1,
        )
        assert len(log["epoch_losses"]) == 4
        assert all(math.isfinite(v) for v in log["epoch_losses"])
        assert log["epoch_losses"][-1] < log["epoch_losses"][0]
        on_disk = json.loads((tmp_path / "out" / "training_log.json").read_text())
        assert on_disk == log

    def test_deterministic_under_seed(self, base_checkpoint, corpus, tmp_path):
        kwargs = dict(lr=5e-3, epochs=2, seed=7)
        one = finetune(base_checkpoint, corpus["train_path"], str(tmp_path / "one"), **kwargs)
        two = finetune(base_checkpoint, corpus["train_path"], str(tmp_path / "two"), **kwargs)
        assert one["epoch_losses"] == two["epoch_losses"]
        assert state_dicts_equal(str(tmp_path / "one"), str(tmp_path / "two"))

    def test_zero_epochs_equals_base(self, base_checkpoint, corpus, tmp_path):
        out = tmp_path / "zero"
        log = finetune(base_checkpoint, corpus["train_path"], str(out), epochs=0)
        assert log["epoch_losses"] == []
        assert state_dicts_equal(base_checkpoint, str(out))

    def test_layer_truncation(self, base_checkpoint, corpus, tmp_path):
        out = tmp_path / "short"
        finetune(base_checkpoint, corpus["train_path"], str(out), n_layers=1, epochs=0)
        model = BertForSequenceClassification.from_pretrained(str(out))
        assert model.config.num_hidden_layers == 1
        assert len(model.bert.encoder.layer) == 1
        base = BertForSequenceClassification.from_pretrained(base_checkpoint)
        kept = model.bert.encoder.layer[0].state_dict()
        original = base.bert.encoder.layer[0].state_dict()
        assert all(torch.equal(kept[k], original[k]) for k in kept)

    def test_layer_count_validated(self, base_checkpoint, corpus, tmp_path):
        with pytest.raises(ValueError, match="n_layers"):
            finetune(base_checkpoint, corpus["train_path"], str(tmp_path / "x"), n_layers=9)

    def test_out_of_memory_is_actionable(
        self, base_checkpoint, corpus, tmp_path, monkeypatch
    ):
        def exploding_forward(self, *args, **kwargs):
            raise RuntimeError("CUDA out of memory. Tried to allocate 2.00 GiB")

        monkeypatch.setattr(BertForSequenceClassification, "forward", exploding_forward)
        with pytest.raises(RuntimeError, match="reduce batch_size"):
            finetune(base_checkpoint, corpus["train_path"], str(tmp_path / "x"), epochs=1)


class TestCorpusReader:
    def test_skips_unlabeled_rows(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id": "a", "text": "calm road", "label": 1}\n'
            '{"id": "b", "text": "no label here"}\n'
            '{"id": "c", "text": "quiet day", "label": 0}\n'
        )
        texts, labels = read_labeled_jsonl(str(path))
        assert texts == ["calm road", "quiet day"]
        assert labels == [1, 0]

    def test_rejects_bad_labels(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "x", "label": 2}\n')
        with pytest.raises(ValueError, match="line 1"):
            read_labeled_jsonl(str(path))

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "no label"}\n')
        with pytest.raises(ValueError, match="no labeled records"):
            read_labeled_jsonl(str(path))


class TestServerConfig:
    def test_transport_validated(self):
        with pytest.raises(ValueError, match="transport"):
            BridgeServerConfig(checkpoint="x", transport="carrier-pigeon")

    def test_max_length_validated(self):
        with pytest.raises(ValueError, match="max_length"):
            BridgeServerConfig(checkpoint="x", max_length=0)
