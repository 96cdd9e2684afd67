"""Brute-force prefix replay for N-gram accuracy on a two-sentence set.

The scripted predictor ignores the source and answers from a fixed
hypothesis per sentence: with t words locked it returns hypothesis[t:t+N].
"""

REFS = ["a b c d", "e f g"]
HYPS = ["a b x d", "e q g"]


def replay(n):
    hits = total = 0
    for ref, hyp in zip(REFS, HYPS):
        r, h = ref.split(), hyp.split()
        for t in range(len(r)):
            if t + n > len(r):
                continue
            total += 1
            hits += h[t:t + n] == r[t:t + n]
    return hits, total


if __name__ == "__main__":
    for n in (1, 2, 3, 4, 5):
        hits, total = replay(n)
        denom = sum(max(len(r.split()) - n + 1, 0) for r in REFS)
        print(f"N={n}: hits={hits} total={total} formula={denom}")
