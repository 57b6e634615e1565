"""Model construction, loading, and fine-tuning.

Checkpoints are plain transformers save_pretrained directories holding a
BERT-style sequence classifier with a binary head plus its wordpiece
tokenizer. ``init_base`` builds a fresh one from scratch (any size, any
vocabulary), ``finetune`` trains the classifier on a labeled JSONL
corpus, and ``load_served_model`` prepares a checkpoint for inference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import BertConfig, BertForSequenceClassification, BertTokenizer

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


@dataclass(frozen=True)
class BridgeServerConfig:
    """How to load and expose one checkpoint over the wire."""

    checkpoint: str
    device: str = "cpu"
    max_length: int = 512
    transport: str = "stdio"
    host: str = "127.0.0.1"
    port: int = 0

    def __post_init__(self) -> None:
        if self.transport not in ("stdio", "tcp"):
            raise ValueError("transport must be 'stdio' or 'tcp'")
        if self.max_length < 1:
            raise ValueError("max_length must be positive")


def init_base(
    path: str,
    vocab_words,
    hidden_size: int = 32,
    num_hidden_layers: int = 2,
    num_attention_heads: int = 2,
    intermediate_size: int = 64,
    max_position_embeddings: int = 512,
    seed: int = 0,
) -> str:
    """Write a freshly initialized binary classifier checkpoint.

    The vocabulary is the special tokens plus the given words (lowercased,
    deduplicated, sorted), so the wordpiece tokenizer maps every known
    word to one id and everything else to [UNK].
    """
    if hidden_size % num_attention_heads != 0:
        raise ValueError("hidden_size must divide evenly among attention heads")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    words = sorted({w.lower() for w in vocab_words if w.strip()})
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(SPECIAL_TOKENS + words) + "\n", encoding="utf-8")
    config = BertConfig(
        vocab_size=len(SPECIAL_TOKENS) + len(words),
        hidden_size=hidden_size,
        num_hidden_layers=num_hidden_layers,
        num_attention_heads=num_attention_heads,
        intermediate_size=intermediate_size,
        max_position_embeddings=max_position_embeddings,
        num_labels=2,
    )
    torch.manual_seed(seed)
    model = BertForSequenceClassification(config)
    model.save_pretrained(out)
    tokenizer = BertTokenizer(str(vocab_file))
    tokenizer.save_pretrained(out)
    return str(out)


def load_served_model(checkpoint: str, device: str = "cpu"):
    """Load a checkpoint for inference: eval mode, binary head enforced."""
    tokenizer = BertTokenizer.from_pretrained(checkpoint)
    model = BertForSequenceClassification.from_pretrained(checkpoint)
    if model.config.num_labels != 2:
        raise ValueError(
            f"checkpoint head has {model.config.num_labels} labels, need a binary head"
        )
    model.to(device)
    model.eval()
    return tokenizer, model


def read_labeled_jsonl(path: str) -> tuple[list[str], list[int]]:
    """Texts and 0/1 labels from a newline-delimited JSON corpus file."""
    texts: list[str] = []
    labels: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            label = record.get("label")
            if label is None:
                continue
            if label not in (0, 1):
                raise ValueError(f"{path}: line {lineno}: label must be 0/1")
            texts.append(record["text"])
            labels.append(int(label))
    if not texts:
        raise ValueError(f"{path}: no labeled records")
    return texts, labels


def finetune(
    base: str,
    corpus_path: str,
    out: str,
    lr: float = 2e-5,
    n_layers: int | None = None,
    epochs: int = 3,
    batch_size: int = 16,
    seed: int = 0,
    device: str = "cpu",
    max_length: int = 512,
) -> dict:
    """Fine-tune the classifier head and encoder on a labeled corpus.

    ``n_layers`` keeps only the bottom n encoder layers, dropping the
    rest before training. Keeping-and-freezing the upper layers would be
    the other reading of a layer-count hyperparameter; truncation is the
    one implemented because it also shrinks the served model.

    With epochs=0 the checkpoint is written untouched, so serving it is
    exactly serving the initialization. Returns the training log (also
    written next to the checkpoint as training_log.json).
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    texts, labels = read_labeled_jsonl(corpus_path)
    torch.manual_seed(seed)
    tokenizer = BertTokenizer.from_pretrained(base)
    model = BertForSequenceClassification.from_pretrained(base)
    if model.config.num_labels != 2:
        raise ValueError("base checkpoint must have a binary head")
    if n_layers is not None:
        available = model.config.num_hidden_layers
        if not 1 <= n_layers <= available:
            raise ValueError(f"n_layers must be in 1..{available}")
        model.bert.encoder.layer = model.bert.encoder.layer[:n_layers]
        model.config.num_hidden_layers = n_layers
    model.to(device)

    encoded = tokenizer(
        texts,
        padding=True,
        truncation=True,
        max_length=min(max_length, model.config.max_position_embeddings),
        return_tensors="pt",
    )
    label_tensor = torch.tensor(labels, dtype=torch.long)
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    generator = torch.Generator().manual_seed(seed)
    losses: list[float] = []
    try:
        for _ in range(epochs):
            model.train()
            order = torch.randperm(len(texts), generator=generator)
            epoch_losses = []
            for start in range(0, len(texts), batch_size):
                batch = order[start : start + batch_size]
                optimizer.zero_grad()
                output = model(
                    input_ids=encoded["input_ids"][batch].to(device),
                    attention_mask=encoded["attention_mask"][batch].to(device),
                    labels=label_tensor[batch].to(device),
                )
                output.loss.backward()
                optimizer.step()
                epoch_losses.append(float(output.loss.detach()))
            losses.append(sum(epoch_losses) / len(epoch_losses))
    except torch.cuda.OutOfMemoryError as exc:
        raise RuntimeError(
            "out of memory during fine-tuning; reduce batch_size or max_length"
        ) from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise RuntimeError(
                "out of memory during fine-tuning; reduce batch_size or max_length"
            ) from exc
        raise

    model.eval()
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    log = {
        "base": str(base),
        "corpus": str(corpus_path),
        "lr": lr,
        "n_layers": n_layers,
        "epochs": epochs,
        "batch_size": batch_size,
        "seed": seed,
        "n_examples": len(texts),
        "epoch_losses": losses,
    }
    (out_dir / "training_log.json").write_text(
        json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return log
