import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capunc.tokenizer import PAD, UNK, SubwordVocab, train_vocab


def test_small_corpus_merges():
    vocab = train_vocab(["aa", "aa", "ab"], 6)
    assert vocab.alphabet == ["a", "b"]
    assert vocab.merges == [("a", "a")]
    assert vocab.symbols == ["<pad>", "<unk>", "a", "b", "aa"]


def test_single_character_corpus():
    vocab = train_vocab(["x"], 3)
    assert vocab.symbols == ["<pad>", "<unk>", "x"]
    assert vocab.merges == []


def test_ties_broken_lexicographically():
    # (a,b) and (c,d) both occur twice; (a,b) sorts first
    vocab = train_vocab(["cd", "ab", "cd", "ab"], 7)
    assert vocab.merges == [("a", "b")]


def test_target_size_bounds_vocabulary():
    words = ["hello", "help", "held", "yellow", "mellow"] * 5
    for target in (12, 15, 20, 64):
        vocab = train_vocab(words, target)
        assert len(vocab) <= target
        assert all(UNK not in vocab.encode_word(w) for w in words)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError, match="empty"):
        train_vocab([], 10)
    with pytest.raises(ValueError, match="target_size"):
        train_vocab(["abc"], 4)
    with pytest.raises(ValueError):
        train_vocab(["a"], 3).encode_word("")


def test_determinism():
    words = ["bệnh", "viện", "bác", "sĩ", "bệnh", "nhân", "viện", "phí"] * 3
    assert train_vocab(words, 40).to_json() == train_vocab(list(words), 40).to_json()


def test_encode_known_word_single_id():
    vocab = train_vocab(["hello"] * 5, 100)
    assert len(vocab.encode_word("hello")) == 1


def test_encode_applies_merges_greedily():
    vocab = train_vocab(["aa", "aa", "ab"], 6)
    ids = vocab.encode_word("aab")
    assert [vocab.symbols[i] for i in ids] == ["aa", "b"]


def test_unseen_character_maps_to_unk():
    vocab = train_vocab(["abc"], 10)
    ids = vocab.encode_word("azb")
    assert UNK in ids and len(ids) >= 1
    assert vocab.encode_word("z") == [UNK]


def test_decode():
    vocab = train_vocab(["hello", "help", "yellow"] * 3, 30)
    assert vocab.decode(vocab.encode_word("hello")) == "hello"
    assert vocab.decode([PAD]) == ""
    multi = vocab.encode_word("hey")
    assert len(multi) > 1 and vocab.decode(multi) == "hey"
    with pytest.raises(ValueError, match="unknown id"):
        vocab.decode([len(vocab)])


def test_json_round_trip():
    vocab = train_vocab(["hello", "help", "yellow"] * 3, 30)
    again = SubwordVocab.from_json(vocab.to_json())
    assert again == vocab and again.symbols == vocab.symbols
    assert again.checksum() == vocab.checksum()


ALPHABET = "abcdeđêơư"


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.text(ALPHABET, min_size=1, max_size=8), min_size=1, max_size=30),
    st.integers(12, 60),
    st.text(ALPHABET, min_size=1, max_size=12),
)
def test_round_trip_and_nonempty(corpus, target, word):
    vocab = train_vocab(corpus, max(target, len(set("".join(corpus))) + 2))
    ids = vocab.encode_word(word)
    assert len(ids) >= 1
    assert all(0 <= i < len(vocab) for i in ids)
    if UNK not in ids:
        assert vocab.decode(ids) == word
    for w in corpus:
        assert vocab.decode(vocab.encode_word(w)) == w
