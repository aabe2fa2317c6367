"""How many guesses are left after a partial recovery?

Run: python demos/combine_guesses.py
"""
from keyclink.combiner import candidate_sets, iter_guesses, naive_count, prioritized_enumerate, truth_oracle
from keyclink.demodulation import PositionResult, RecoveryResult, Status, load_wordlist

wl = load_wordlist()
partial = RecoveryResult((
    PositionResult(Status.FULL, ("sterile",)),
    PositionResult(Status.PARTIAL, ("bulldozer", "bulldog"), support={"bulldozer": 3}),
    PositionResult(Status.NONE),
    PositionResult(Status.PARTIAL, ("shrill", "shrimp", "thrill")),
))
cs = candidate_sets(partial, wl)
total = naive_count(cs)
print(f"candidate set sizes {cs.sizes()} -> {total.count} combinations (2^{total.log2_exponent:.2f})")

guesses = iter_guesses(cs)
print("first guesses:", [" ".join(next(guesses)) for _ in range(4)])

out = prioritized_enumerate(cs, total.count, truth_oracle("sterile bulldozer scouting shrill"))
print(f"found after {out.attempts} attempts instead of up to {total.count}")
