"""Reference BPE trainer and greedy segmenter used to freeze tokenizer test values.

Symbols inside a word carry the "##" prefix after the first character. Each
merge picks the most frequent adjacent pair, ties going to the smallest
(left, right) in byte order.
"""
from collections import Counter

MARK = "##"


def train(corpus, merges):
    freq = Counter(w for line in corpus for w in line.split())
    words = {w: [w[0]] + [MARK + c for c in w[1:]] for w in freq}
    done = []
    for _ in range(merges):
        pairs = Counter()
        for w, syms in words.items():
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] += freq[w]
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p[0].encode(), p[1].encode()))
        done.append(best)
        merged = best[0] + best[1][len(MARK):]
        for w, syms in words.items():
            out, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[w] = out
    alphabet = sorted({c for w in freq for c in w})
    base = sorted({c for c in alphabet} | {MARK + c for c in alphabet}, key=str.encode)
    entries = list(base)
    for a, b in done:
        m = a + b[len(MARK):]
        if m not in entries:
            entries.append(m)
    return done, entries


def segment(word, entries):
    vocab = set(entries)
    out, i, first = [], 0, True
    while i < len(word):
        for j in range(len(word), i, -1):
            piece = word[i:j] if first else MARK + word[i:j]
            if piece in vocab:
                out.append(piece)
                i = j
                break
        else:
            out.append("<unk>")
            i += 1
        first = False
    return out


if __name__ == "__main__":
    merges, entries = train(["low lower lowest"], 3)
    print("merges", merges)
    print("entries", entries)
    print("lowest", segment("lowest", entries))
    print("lower", segment("lower", entries))
    print("slow", segment("slow", entries))
