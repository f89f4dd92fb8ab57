import pytest
import torch


WORDS = [
    "hello", "world", "the", "a", "of", "and", "to", "in", "is", "it",
    "model", "trace", "head", "layer", "neuron", "step", "token", "probe",
    "river", "stone", "lantern", "harbor", "signal", "quiet", "bright",
    "copper", "kettle", "archive", "festival", "winter", "mountain", "pass",
    ".", ",", "!", "?", ";", ":",
]


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A tiny randomly initialized GPT-2 checkpoint with a word-level
    tokenizer, built locally so the suite never touches the network."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import WhitespaceSplit
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    path = tmp_path_factory.mktemp("tiny-gpt2")
    vocab = {"<unk>": 0}
    for w in WORDS:
        vocab[w] = len(vocab)
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = WhitespaceSplit()
    PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="<unk>").save_pretrained(path)

    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=64,
        n_embd=32,
        n_layer=2,
        n_head=4,
        n_inner=48,
        bos_token_id=0,
        eos_token_id=0,
    )
    torch.manual_seed(1234)
    GPT2LMHeadModel(config).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def adapter(checkpoint):
    from hfadapter import AdapterConfig, HFAdapter

    return HFAdapter(AdapterConfig(checkpoint=checkpoint, max_steps=5))
