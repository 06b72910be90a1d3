import json

import pytest
import torch

#: Stems and wordpiece continuations; "playing" and "dogs" split into two
#: subwords each, exercising the alignment pooling.
VOCAB_WORDS = ["the", "cat", "sat", "dog", "##s", "play", "##ing", "bark",
               "##ed", "on", "a", "mat", "fox", "jump", "quick", "##ly"]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A seeded, randomly initialized mini transformer saved locally (no network)."""
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("tiny-model")
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab = {t: i for i, t in enumerate(specials + VOCAB_WORDS)}

    tk = Tokenizer(models.WordPiece(vocab, unk_token="[UNK]"))
    tk.normalizer = normalizers.BertNormalizer(lowercase=True)
    tk.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tk.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tk, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]")

    torch.manual_seed(1234)
    config = BertConfig(vocab_size=len(vocab), hidden_size=16, num_hidden_layers=2,
                        num_attention_heads=2, intermediate_size=32,
                        max_position_embeddings=64)
    model = BertModel(config)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


def essay_obj(essay_id, words, scores=None):
    """A JSONL essay object with a single-sentence chain dependency tree."""
    n = len(words)
    deps = [[-1, 0]] + [[k - 1, k] for k in range(1, n)]
    obj = {"id": essay_id, "tokens": list(words), "sentences": [[0, n]], "deps": deps}
    if scores is not None:
        obj["scores"] = scores
    return obj


def write_essays(path, objs):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


GRID_SCORES = [
    {"cohesion": 2.0, "syntax": 2.5, "vocabulary": 3.0, "phraseology": 3.5,
     "grammar": 4.0, "conventions": 4.5},
    {"cohesion": 1.0, "syntax": 1.5, "vocabulary": 2.0, "phraseology": 2.5,
     "grammar": 3.0, "conventions": 3.5},
    {"cohesion": 5.0, "syntax": 4.5, "vocabulary": 4.0, "phraseology": 3.5,
     "grammar": 3.0, "conventions": 2.5},
    {"cohesion": 3.0, "syntax": 3.0, "vocabulary": 3.5, "phraseology": 4.0,
     "grammar": 2.0, "conventions": 1.5},
    {"cohesion": 4.0, "syntax": 2.0, "vocabulary": 1.5, "phraseology": 1.0,
     "grammar": 4.5, "conventions": 5.0},
]

FIXTURE_WORDS = [
    ["the", "cat", "sat"],
    ["dogs", "bark", "loudly"],
    ["the", "playing", "dog", "jumped"],
    ["a", "quick", "fox", "sat", "on", "a", "mat"],
    ["cats", "play"],
]


@pytest.fixture()
def fixture_essays_path(tmp_path):
    objs = [essay_obj(f"fix-{i}", words, scores)
            for i, (words, scores) in enumerate(zip(FIXTURE_WORDS, GRID_SCORES))]
    path = tmp_path / "essays.jsonl"
    write_essays(path, objs)
    return path
