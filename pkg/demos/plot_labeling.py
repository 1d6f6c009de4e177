"""
From raw text to labels and back
================================

Each word keeps its lowercase form, one casing label and the punctuation
mark that follows it.  Restoring the labels rebuilds canonical text.
"""

from capunc.corpus import normalize_and_label, restore, segment

for text in ("Chào Uyên, bạn có khoe không?", "Hi Uyen, how are you?", "WHO said so.", "wait... really?! (yes)"):
    tokens = normalize_and_label(text)
    print(text)
    for t in tokens:
        print(f"    {t.text:<8} {t.cap.name:<7} {t.punc.name}")
    print("  ->", restore(tokens))

# %%
# Segments pack whole sentences up to a word budget.  A sentence that is
# longer than the budget is cut into forced chunks.

words = normalize_and_label(" ".join(["one two three four."] * 3) + " " + " ".join(["x"] * 9) + ".")
for seg in segment(words, 8):
    print(len(seg), "forced" if seg.forced else "      ", restore(seg.tokens))
