"""Encoder loading, batched inference and the offline test encoder.

Hidden states come back per sample as float32 arrays with padding
stripped, paired with alignment data: a source word index per subword
position for pre-split input, a character offset pair per position for
raw strings. Special tokens carry None in either case.

``make_encoder`` builds a small randomly initialized BERT over a
character-level WordPiece vocabulary and saves it to a directory that
``load_encoder`` accepts. The weights are seeded and never trained;
that is enough to exercise every alignment and pooling path, and mean
pooling over such a model still orders lexically overlapping phrases
above unrelated ones, without shipping pretrained weights.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

log = logging.getLogger(__name__)


class EncoderError(RuntimeError):
    """Raised when an encoder cannot be loaded or built."""


SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
VOCAB_CHARS = (
    tuple(string.ascii_lowercase)
    + tuple(string.digits)
    + tuple(".,?!%-_/()'\":;=+<>[]&#@$*")
    + ("±",)
)


@dataclass
class Encoder:
    tokenizer: object
    model: object
    device: str

    @property
    def hidden(self) -> int:
        return int(self.model.config.hidden_size)


def load_encoder(model_id: str, device: str = "cpu") -> Encoder:
    """Load tokenizer and model from a local directory or a hub id.

    A path-shaped id (absolute, or starting with a dot) that does not
    exist fails as a missing artifact before any loader runs; anything
    else is handed to transformers, so hub ids keep working where the
    hub is reachable.
    """
    from transformers import AutoModel, AutoTokenizer
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()
    path = Path(model_id).expanduser()
    if not path.exists() and (path.is_absolute() or model_id.startswith(".")):
        raise FileNotFoundError(f"no encoder directory at {model_id}")
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except (OSError, ValueError) as exc:
        raise EncoderError(f"unknown model id {model_id!r}: {exc}") from exc
    if not getattr(tokenizer, "is_fast", False):
        raise EncoderError(f"{model_id}: subword alignment needs a fast tokenizer")
    model.eval()
    model.to(device)
    return Encoder(tokenizer=tokenizer, model=model, device=device)


def _forward(enc: Encoder, batch) -> np.ndarray:
    batch = batch.to(enc.device)
    with torch.no_grad():
        out = enc.model(**batch)
    return out.last_hidden_state.cpu().numpy().astype(np.float32, copy=False)


def encode_word_lists(
    enc: Encoder,
    word_lists: Sequence[Sequence[str]],
    max_len: int,
    batch_size: int,
) -> Iterator[tuple[np.ndarray, tuple]]:
    """Yield (hidden, word_ids) per input, in order.

    ``word_ids`` has one entry per kept subword position: the index of
    the source word, or None for [CLS] and [SEP]. Words cut off by
    ``max_len`` simply do not appear.
    """
    for start in range(0, len(word_lists), batch_size):
        chunk = [list(w) for w in word_lists[start : start + batch_size]]
        batch = enc.tokenizer(
            chunk,
            is_split_into_words=True,
            padding=True,
            truncation=True,
            max_length=max_len,
            return_tensors="pt",
        )
        hidden = _forward(enc, batch)
        for i in range(len(chunk)):
            n = int(batch["attention_mask"][i].sum().item())
            yield hidden[i, :n].copy(), tuple(batch.word_ids(i)[:n])


def encode_texts(
    enc: Encoder,
    texts: Sequence[str],
    max_len: int,
    batch_size: int,
) -> Iterator[tuple[np.ndarray, tuple]]:
    """Yield (hidden, offsets) per text, offsets None at special tokens."""
    for start in range(0, len(texts), batch_size):
        chunk = list(texts[start : start + batch_size])
        batch = enc.tokenizer(
            chunk,
            padding=True,
            truncation=True,
            max_length=max_len,
            return_offsets_mapping=True,
            return_tensors="pt",
        )
        offsets = batch.pop("offset_mapping")
        hidden = _forward(enc, batch)
        for i in range(len(chunk)):
            n = int(batch["attention_mask"][i].sum().item())
            pairs = [tuple(p) for p in offsets[i, :n].tolist()]
            yield hidden[i, :n].copy(), tuple(
                None if p == (0, 0) else p for p in pairs
            )


def pool_first(hidden: np.ndarray) -> np.ndarray:
    return hidden[0]


def pool_mean(hidden: np.ndarray, keep: Sequence[bool]) -> np.ndarray:
    """Mean over the kept positions; the first position when none are."""
    mask = np.fromiter(keep, dtype=bool, count=len(hidden))
    if not mask.any():
        return hidden[0]
    return hidden[mask].mean(axis=0)


def make_encoder(
    out_dir: str | Path,
    seed: int = 0,
    hidden: int = 32,
    layers: int = 2,
    heads: int = 4,
    intermediate: int = 64,
    max_positions: int = 512,
) -> Path:
    """Build and save the deterministic character-level encoder."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer
    from tokenizers.processors import TemplateProcessing
    from transformers import BertConfig, BertModel, BertTokenizerFast
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()
    if hidden % heads:
        raise EncoderError(f"hidden size {hidden} is not divisible by {heads} heads")
    vocab_list = list(SPECIALS) + list(VOCAB_CHARS) + ["##" + c for c in VOCAB_CHARS]
    vocab = {tok: i for i, tok in enumerate(vocab_list)}
    backend = Tokenizer(
        WordPiece(vocab, unk_token="[UNK]", continuing_subword_prefix="##")
    )
    backend.normalizer = BertNormalizer(lowercase=True)
    backend.pre_tokenizer = BertPreTokenizer()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = BertTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    config = BertConfig(
        vocab_size=len(vocab_list),
        hidden_size=hidden,
        num_hidden_layers=layers,
        num_attention_heads=heads,
        intermediate_size=intermediate,
        max_position_embeddings=max_positions,
    )
    torch.manual_seed(seed)
    model = BertModel(config)
    model.eval()
    out_dir = Path(out_dir)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    log.info("wrote %d-dim %d-layer encoder to %s", hidden, layers, out_dir)
    return out_dir
