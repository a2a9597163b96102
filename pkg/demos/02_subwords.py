"""Byte-pair encoding from scratch: train, inspect, roundtrip.

The tokenizer is ordinary greedy BPE over whitespace-split words, with an
end-of-word sentinel so merges never cross word boundaries. Source and
target sides each get their own model.
"""

from ctxnmt.bpe import load_bpe, save_bpe, train_bpe

corpus = [
    "the cat sat on the mat",
    "the cats sat on the mats",
    "a cat and a mat",
    "the mat the cat wanted",
]

model = train_bpe(corpus, num_merges=12)
print(f"vocab size {model.vocab_size} after {len(model.merges)} merges")
print("first merges:", model.merges[:6])

# encode_word shows the subword split before ids are assigned.
for word in ["cat", "cats", "mats", "catamaran"]:
    print(f"{word:>10} -> {model.encode_word(word)}")

# encode/decode roundtrip on text made of training-time characters.
line = "the cats wanted the mat"
ids = model.encode(line)
print("ids:", ids)
print("decoded:", model.decode(ids))
assert model.decode(ids) == line

# The model serializes to a plain text file and reloads identically.
import tempfile, os

with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "demo.bpe")
    save_bpe(path, model)
    again = load_bpe(path)
    assert again.encode(line) == ids
    print("file roundtrip ok:", path.split(os.sep)[-1])
