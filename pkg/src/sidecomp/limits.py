"""Exact finite-blocklength limits of the optimal one-to-one code.

The optimal code orders source strings by decreasing conditional
probability given the side information and assigns binary codewords in
length-lexicographic order, so the string of probability rank ``m``
gets a codeword of ``floor(log2 m)`` bits.  Everything observable
about its performance is a functional of the *length law*: the ranked
list of per-string probabilities, grouped into classes of equal
probability with exact string counts.

Two evaluation tracks coexist:

* float: per-string probabilities as ``log2`` values (never as raw
  doubles, which underflow long before interesting blocklengths) with
  class counts kept as exact Python integers;
* exact: rational per-string probabilities, for small blocklengths,
  used as the ground truth the float track is tested against.

For conditionally i.i.d. models the law is assembled from type
classes: per y-symbol, strings with the same symbol histogram share a
probability, and counts are products of multinomials.  The brute-force
builders enumerate strings one by one and exist as independent
oracles; they are also the only exact route for Markov models.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate
from typing import Iterable, Iterator, Sequence

import numpy as np

from .models import CondIidModel, MarkovPairModel, Model, SideInfoString

MERGE_TOL = 1e-12
BRUTEFORCE_GUARD = 1 << 20
DEFAULT_CLASS_CAP = 10**8
MATERIALIZE_CAP = 1_000_000


class GuardExceededError(ValueError):
    """An enumeration would exceed its configured size guard."""


@dataclass(frozen=True)
class RatePoint:
    """Optimal rate at one (n, epsilon): smallest k with overflow <= epsilon.

    ``eps_at_k_plus_1 <= epsilon < eps_at_k`` always holds (the second
    part vacuously when ``k == 0`` and epsilon is close to 1).
    """

    n: int
    epsilon: float
    k: int
    rate: float
    eps_at_k: float
    eps_at_k_plus_1: float


def _floor_exp2(t: float) -> int:
    """floor(2**t) for possibly huge t, exact to double precision."""
    if t < 0:
        return 0
    e = int(math.floor(t))
    mant = 2.0 ** (t - e)
    scaled = int(mant * (1 << 52))
    if e >= 52:
        return scaled << (e - 52)
    return scaled >> (52 - e)


def _log2_int(value: int) -> float:
    return math.log2(value)


class LengthLaw:
    """Ranked per-string probability classes with exact counts.

    Classes are sorted by decreasing probability; ``log2p`` may end
    with ``-inf`` for the zero-probability strings, which still occupy
    ranks.  ``counts`` sums to the total number of source strings.
    """

    def __init__(
        self,
        n: int,
        num_strings: int,
        log2p: np.ndarray,
        counts: list[int],
        probs: list[Fraction] | None = None,
    ) -> None:
        if len(log2p) != len(counts):
            raise ValueError("log2p and counts length mismatch")
        if probs is not None and len(probs) != len(counts):
            raise ValueError("probs and counts length mismatch")
        total = sum(counts)
        if total != num_strings:
            raise ValueError(f"class counts sum to {total}, expected {num_strings}")
        self.n = n
        self.num_strings = num_strings
        self.log2p = log2p
        self.counts = counts
        self.probs = probs
        self.cum_counts = list(accumulate(counts))
        with np.errstate(invalid="ignore"):
            log_counts = np.array([_log2_int(c) for c in counts])
            mass = np.exp2(self.log2p + log_counts)
        mass[np.isnan(mass)] = 0.0
        suffix = np.zeros(len(counts) + 1)
        suffix[:-1] = mass[::-1].cumsum()[::-1]
        self.suffix_mass = suffix
        if probs is not None:
            acc = Fraction(0)
            tail = [Fraction(0)] * (len(counts) + 1)
            for j in range(len(counts) - 1, -1, -1):
                acc += probs[j] * counts[j]
                tail[j] = acc
            self.suffix_mass_exact = tail
        else:
            self.suffix_mass_exact = None

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def total_mass(self) -> float:
        return float(self.suffix_mass[0])

    def total_mass_exact(self) -> Fraction:
        if self.suffix_mass_exact is None:
            raise ValueError("law was built on the float track")
        return self.suffix_mass_exact[0]

    def excess_at_rank(self, b: int) -> float:
        """P[rank >= b], the mass of strings ranked b and beyond."""
        if b <= 1:
            return self.total_mass()
        if b > self.num_strings:
            return 0.0
        j = bisect_left(self.cum_counts, b)
        tail = float(self.suffix_mass[j + 1])
        d = self.cum_counts[j] - b + 1
        lp = self.log2p[j]
        if d > 0 and lp > -math.inf:
            tail += 2.0 ** (_log2_int(d) + lp)
        return tail

    def excess_at_rank_exact(self, b: int) -> Fraction:
        if self.suffix_mass_exact is None or self.probs is None:
            raise ValueError("law was built on the float track")
        if b <= 1:
            return self.suffix_mass_exact[0]
        if b > self.num_strings:
            return Fraction(0)
        j = bisect_left(self.cum_counts, b)
        d = self.cum_counts[j] - b + 1
        return self.probs[j] * d + self.suffix_mass_exact[j + 1]

    def epsilon_star(self, k: int) -> float:
        """Overflow probability of the optimal code at k bits."""
        if k < 0:
            raise ValueError("k must be >= 0")
        return self.excess_at_rank(1 << k)

    def epsilon_star_exact(self, k: int) -> Fraction:
        if k < 0:
            raise ValueError("k must be >= 0")
        return self.excess_at_rank_exact(1 << k)

    def info_tail(self, threshold: float) -> float:
        """P[-log2 P(string) >= threshold]; zero-probability strings carry no mass."""
        j = int(np.searchsorted(-self.log2p, threshold, side="left"))
        return float(self.suffix_mass[j])

    def info_tail_exact(self, threshold: Fraction) -> Fraction:
        """Exact P[-log2 P >= threshold] for rational threshold."""
        if self.probs is None:
            raise ValueError("law was built on the float track")
        total = Fraction(0)
        for p, c in zip(self.probs, self.counts):
            if p > 0 and _log2_at_least(p, threshold):
                total += p * c
        return total

    def rate_point(self, epsilon: float) -> RatePoint:
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        b_min = self._mass_crossing_rank(epsilon)
        k = max(0, (b_min - 1).bit_length() - 1)
        return RatePoint(
            n=self.n,
            epsilon=epsilon,
            k=k,
            rate=k / self.n,
            eps_at_k=self.epsilon_star(k),
            eps_at_k_plus_1=self.epsilon_star(k + 1),
        )

    def _mass_crossing_rank(self, epsilon: float) -> int:
        """Smallest rank b with excess_at_rank(b) <= epsilon."""
        suffix = self.suffix_mass
        idx = int(np.searchsorted(-suffix, -epsilon, side="left"))
        if idx == 0:
            return 1
        j = idx - 1
        prev_cum = self.cum_counts[j] - self.counts[j]
        lp = self.log2p[j]
        if lp == -math.inf:
            return prev_cum + 1
        room = epsilon - float(suffix[j + 1])
        if room <= 0:
            return self.cum_counts[j] + 1
        offset = _floor_exp2(math.log2(room) - lp)
        b = self.cum_counts[j] + 1 - offset
        return max(b, prev_cum + 1)


def _log2_at_least(p: Fraction, threshold: Fraction) -> bool:
    """Whether -log2(p) >= threshold, exactly, for rational threshold."""
    # -log2 p >= t  <=>  p <= 2^-t  <=>  p^q <= 2^-tq with t = num/den
    num, den = threshold.numerator, threshold.denominator
    lhs = p**den
    if num >= 0:
        return lhs * (1 << num) <= 1
    return lhs <= (1 << -num)


def _merge_classes(
    order_lp: np.ndarray,
    counts: list[int],
    probs: list[Fraction] | None,
    tol: float,
) -> tuple[np.ndarray, list[int], list[Fraction] | None]:
    """Merge adjacent sorted classes whose log-probabilities agree.

    On the exact track only identical probabilities merge; on the
    float track agreement within ``tol`` counts as identity.
    """
    if len(counts) <= 1:
        return order_lp, counts, probs
    out_lp: list[float] = []
    out_counts: list[int] = []
    out_probs: list[Fraction] | None = [] if probs is not None else None
    for i in range(len(counts)):
        same = False
        if out_lp:
            if probs is not None:
                same = probs[i] == out_probs[-1]  # type: ignore[index]
            else:
                a, b = out_lp[-1], order_lp[i]
                same = (a == b) or (abs(a - b) <= tol)
        if same:
            out_counts[-1] += counts[i]
        else:
            out_lp.append(float(order_lp[i]))
            out_counts.append(counts[i])
            if out_probs is not None:
                out_probs.append(probs[i])  # type: ignore[index]
    return np.array(out_lp), out_counts, out_probs


# ---------------------------------------------------------------------------
# Type-class construction for conditionally i.i.d. models


@dataclass
class _SymbolBlocks:
    """Classes contributed by all positions sharing one y-symbol."""

    lp: np.ndarray              # log2 probability contribution per class
    counts: list[int]           # exact string multiplicities
    probs: list[Fraction] | None


def _log2_factorials(n: int) -> np.ndarray:
    out = np.zeros(n + 1)
    if n >= 1:
        out[1:] = np.cumsum(np.log2(np.arange(1, n + 1, dtype=np.float64)))
    return out


def _binomial_row(n: int) -> list[int]:
    row = [1] * (n + 1)
    c = 1
    for i in range(n):
        c = c * (n - i) // (i + 1)
        row[i + 1] = c
    return row


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of ``parts`` nonnegative ints summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _multinomial(total: int, ks: Sequence[int]) -> int:
    out = 1
    rem = total
    for k in ks[:-1]:
        out *= math.comb(rem, k)
        rem -= k
    return out


def _blocks_for_symbol(
    row: Sequence[Fraction], count: int, exact: bool
) -> _SymbolBlocks:
    """Type classes of ``count`` positions that all see y-symbol ``a``.

    Only the support of the conditional row enters; strings using a
    zero-probability x-symbol are accounted for by the caller as one
    terminal zero class.
    """
    support = [p for p in row if p > 0]
    logs = [math.log2(float(p)) for p in support]
    s = len(support)
    if s == 1:
        lp = np.array([count * logs[0]])
        return _SymbolBlocks(
            lp=lp,
            counts=[1],
            probs=[support[0] ** count] if exact else None,
        )
    if s == 2:
        ks = np.arange(count + 1, dtype=np.float64)
        lp = ks * logs[1] + (count - ks) * logs[0]
        counts = _binomial_row(count)
        probs = None
        if exact:
            probs = [
                support[0] ** (count - k) * support[1] ** k for k in range(count + 1)
            ]
        return _SymbolBlocks(lp=lp, counts=counts, probs=probs)
    lps: list[float] = []
    counts_out: list[int] = []
    probs_out: list[Fraction] | None = [] if exact else None
    for ks in _compositions(count, s):
        lps.append(math.fsum(k * l for k, l in zip(ks, logs)))
        counts_out.append(_multinomial(count, ks))
        if probs_out is not None:
            p = Fraction(1)
            for k, q in zip(ks, support):
                p *= q**k
            probs_out.append(p)
    return _SymbolBlocks(lp=np.array(lps), counts=counts_out, probs=probs_out)


def _typeclass_factors(
    model: CondIidModel, composition: Sequence[int], exact: bool, class_cap: int
) -> tuple[list[_SymbolBlocks], int, int]:
    """Per-symbol blocks, total class estimate, and support string count."""
    n = sum(composition)
    if n < 1:
        raise ValueError("blocklength must be >= 1")
    factors = []
    est = 1
    support_total = 1
    for a, c in enumerate(composition):
        if c == 0:
            continue
        blocks = _blocks_for_symbol(model.p_x_given_y[a], c, exact)
        est *= len(blocks.counts)
        support = sum(1 for p in model.p_x_given_y[a] if p > 0)
        support_total *= support**c
        if est > class_cap:
            raise GuardExceededError(
                f"type-class count exceeds cap {class_cap} at composition {tuple(composition)}"
            )
        factors.append(blocks)
    return factors, est, support_total


def _law_from_factors(
    n: int,
    num_strings: int,
    factors: list[_SymbolBlocks],
    support_total: int,
    exact: bool,
) -> LengthLaw:
    lp = factors[0].lp
    counts = factors[0].counts
    probs = factors[0].probs
    for blk in factors[1:]:
        lp = np.add.outer(lp, blk.lp).ravel()
        counts = [a * b for a in counts for b in blk.counts]
        if exact:
            probs = [a * b for a in probs for b in blk.probs]  # type: ignore[union-attr]
    if exact:
        order = sorted(range(len(counts)), key=lambda i: probs[i], reverse=True)  # type: ignore[index]
        lp = lp[np.array(order)]
        counts = [counts[i] for i in order]
        probs = [probs[i] for i in order]  # type: ignore[index]
    else:
        order = np.argsort(-lp, kind="stable")
        lp = lp[order]
        counts = [counts[i] for i in order.tolist()]
    lp, counts, probs = _merge_classes(lp, counts, probs, MERGE_TOL)
    zero_count = num_strings - support_total
    if zero_count > 0:
        lp = np.append(lp, -math.inf)
        counts = counts + [zero_count]
        if probs is not None:
            probs = probs + [Fraction(0)]
    return LengthLaw(n, num_strings, lp, counts, probs)


def length_law_typeclass(
    model: CondIidModel,
    y: SideInfoString | Sequence[int],
    exact: bool = False,
    class_cap: int = DEFAULT_CLASS_CAP,
) -> LengthLaw:
    """Length law given a fixed y-string, built from type classes.

    ``y`` may be a :class:`SideInfoString` or a bare composition
    (occurrence count per y-symbol); the law depends on the string
    only through its composition.
    """
    composition = y.counts() if isinstance(y, SideInfoString) else tuple(y)
    if len(composition) != len(model.y_alphabet):
        raise ValueError("composition needs one count per y-symbol")
    n = sum(composition)
    num_strings = len(model.x_alphabet) ** n
    factors, _, support_total = _typeclass_factors(model, composition, exact, class_cap)
    return _law_from_factors(n, num_strings, factors, support_total, exact)


# ---------------------------------------------------------------------------
# Brute-force oracles


def _bruteforce_cond_iid_exact(
    model: CondIidModel, y: SideInfoString
) -> tuple[list[int], int]:
    """Integer numerators of P(x|y) over a common denominator."""
    nums = [1]
    den = 1
    for yi in y.indices:
        row = model.p_x_given_y[yi]
        lcm = math.lcm(*(p.denominator for p in row))
        row_nums = [int(p.numerator * (lcm // p.denominator)) for p in row]
        den *= lcm
        nums = [a * b for a in nums for b in row_nums]
    return nums, den


def length_law_bruteforce(
    model: Model,
    y: SideInfoString,
    exact: bool = False,
    guard: int = BRUTEFORCE_GUARD,
) -> LengthLaw:
    """Length law by enumerating every source string.

    Independent of the type-class path; the only exact route for
    Markov models.  Guarded at ``|X|^n <= guard``.
    """
    n = len(y)
    nx = len(model.x_alphabet)
    num_strings = nx**n
    if num_strings > guard:
        raise GuardExceededError(f"brute force needs |X|^n <= {guard}, got {num_strings}")
    if isinstance(model, CondIidModel):
        if exact:
            nums, den = _bruteforce_cond_iid_exact(model, y)
            return _law_from_string_probs_exact(n, num_strings, nums, den)
        logp = np.zeros(1)
        for yi in y.indices:
            logp = (logp[:, None] + model.cond_log2[yi][None, :]).ravel()
        return _law_from_string_log2(n, num_strings, logp)
    return _markov_law_bruteforce(model, y, exact)


def _law_from_string_probs_exact(
    n: int, num_strings: int, nums: list[int], den: int
) -> LengthLaw:
    nums_sorted = sorted(nums, reverse=True)
    lp: list[float] = []
    counts: list[int] = []
    probs: list[Fraction] = []
    i = 0
    while i < len(nums_sorted):
        j = i
        while j < len(nums_sorted) and nums_sorted[j] == nums_sorted[i]:
            j += 1
        v = nums_sorted[i]
        counts.append(j - i)
        probs.append(Fraction(v, den))
        lp.append(math.log2(v) - math.log2(den) if v > 0 else -math.inf)
        i = j
    return LengthLaw(n, num_strings, np.array(lp), counts, probs)


def _law_from_string_log2(n: int, num_strings: int, logp: np.ndarray) -> LengthLaw:
    logp = np.sort(logp)[::-1]
    boundaries = [0]
    for i in range(1, len(logp)):
        a, b = logp[boundaries[-1]], logp[i]
        if not (a == b or abs(a - b) <= MERGE_TOL or (np.isneginf(a) and np.isneginf(b))):
            boundaries.append(i)
    boundaries.append(len(logp))
    lp = np.array([logp[b] for b in boundaries[:-1]])
    counts = [boundaries[i + 1] - boundaries[i] for i in range(len(boundaries) - 1)]
    return LengthLaw(n, num_strings, lp, counts, None)


def _markov_string_probs(
    model: MarkovPairModel, y: SideInfoString, exact: bool
) -> list[Fraction] | np.ndarray:
    """Joint probabilities P(x, y) over all x-strings, y fixed."""
    n = len(y)
    d = model.order
    if n < d:
        raise ValueError(f"need blocklength >= markov order {d}")
    nx = len(model.x_alphabet)
    if exact:
        if model.initial is None:
            raise ValueError(
                "exact Markov enumeration needs an explicit rational initial law"
            )
        init = model.initial
        states: list[tuple[Fraction, int]] = []
        for xs in _all_tuples(nx, d):
            ctx = model.context_index(
                [model.pair_index(xs[t], y.indices[t]) for t in range(d)]
            )
            states.append((init[ctx], ctx))
        for t in range(d, n):
            nxt: list[tuple[Fraction, int]] = []
            for p, ctx in states:
                for xv in range(nx):
                    s = model.pair_index(xv, y.indices[t])
                    nxt.append((p * model.transition[ctx][s], model.shift_context(ctx, s)))
            states = nxt
        return [p for p, _ in states]
    initf = model.initial_f
    trans = model.transition_f
    statesf: list[tuple[float, int]] = []
    for xs in _all_tuples(nx, d):
        ctx = model.context_index(
            [model.pair_index(xs[t], y.indices[t]) for t in range(d)]
        )
        statesf.append((float(initf[ctx]), ctx))
    for t in range(d, n):
        nxtf: list[tuple[float, int]] = []
        for p, ctx in statesf:
            for xv in range(nx):
                s = model.pair_index(xv, y.indices[t])
                nxtf.append((p * trans[ctx, s], model.shift_context(ctx, s)))
        statesf = nxtf
    return np.array([p for p, _ in statesf])


def _all_tuples(base: int, length: int) -> Iterator[tuple[int, ...]]:
    if length == 0:
        yield ()
        return
    for head in range(base):
        for rest in _all_tuples(base, length - 1):
            yield (head,) + rest


def _law_from_string_fractions(
    n: int, num_strings: int, fracs: list[Fraction]
) -> LengthLaw:
    ordered = sorted(fracs, reverse=True)
    lp: list[float] = []
    counts: list[int] = []
    probs: list[Fraction] = []
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j] == ordered[i]:
            j += 1
        v = ordered[i]
        counts.append(j - i)
        probs.append(v)
        lp.append(
            math.log2(v.numerator) - math.log2(v.denominator) if v > 0 else -math.inf
        )
        i = j
    return LengthLaw(n, num_strings, np.array(lp), counts, probs)


def _markov_law_bruteforce(
    model: MarkovPairModel, y: SideInfoString, exact: bool
) -> LengthLaw:
    n = len(y)
    num_strings = len(model.x_alphabet) ** n
    if exact:
        joints = _markov_string_probs(model, y, exact=True)
        total = sum(joints)
        if total == 0:
            raise ValueError("side-information string has zero probability")
        return _law_from_string_fractions(n, num_strings, [p / total for p in joints])
    joints = _markov_string_probs(model, y, exact=False)
    total = joints.sum()
    if total <= 0:
        raise ValueError("side-information string has zero probability")
    with np.errstate(divide="ignore"):
        logp = np.log2(joints) - math.log2(total)
    return _law_from_string_log2(n, num_strings, logp)


# ---------------------------------------------------------------------------
# Streaming evaluation for very large type-class laws


class _StreamLaw:
    """Product-form law evaluated without materializing class counts.

    Holds the sorted order and float suffix masses; exact class counts
    are produced on demand by walking the sorted order and multiplying
    factor multiplicities, so memory stays linear in the factor sizes.
    """

    def __init__(self, model: CondIidModel, composition: Sequence[int], class_cap: int):
        factors, est, support_total = _typeclass_factors(
            model, composition, exact=False, class_cap=class_cap
        )
        self.n = sum(composition)
        self.num_strings = len(model.x_alphabet) ** self.n
        self.zero_count = self.num_strings - support_total
        lp = factors[0].lp
        lc = np.array([_log2_int(c) for c in factors[0].counts])
        for blk in factors[1:]:
            lp = np.add.outer(lp, blk.lp).ravel()
            lc = np.add.outer(lc, np.array([_log2_int(c) for c in blk.counts])).ravel()
        self.order = np.argsort(-lp, kind="stable")
        self.lp_sorted = lp[self.order]
        mass = np.exp2(self.lp_sorted + lc[self.order])
        suffix = np.zeros(len(mass) + 1)
        suffix[:-1] = mass[::-1].cumsum()[::-1]
        self.suffix = suffix
        self.factor_counts = [blk.counts for blk in factors]
        self.shape = tuple(len(blk.counts) for blk in factors)
        self._order_list = self.order.tolist()
        # (class index consumed through, cumulative exact count) pairs,
        # recorded during walks so later queries resume nearby
        self._checkpoints: list[tuple[int, int]] = [(-1, 0)]
        self._checkpoint_every = 1 << 15

    def _count_at(self, flat_index: int) -> int:
        out = 1
        rem = flat_index
        for dim, counts in zip(reversed(self.shape), reversed(self.factor_counts)):
            rem, k = divmod(rem, dim)
            out *= counts[k]
        return out

    def _walk(
        self, stop_class: int, rank_targets: list[int]
    ) -> tuple[int, dict[int, tuple[int, int]]]:
        """Accumulate exact counts class by class in ranked order.

        Stops once the class index passes ``stop_class`` and every
        rank target has been located.  Returns the cumulative count at
        ``stop_class`` and, per target rank b, the pair (class index
        holding rank b, cumulative count through that class).
        """
        targets = sorted(set(rank_targets))
        found: dict[int, tuple[int, int]] = {}
        start_j, cum = 0, 0
        for cj, cc in self._checkpoints:
            fits_stop = stop_class < 0 or cj <= stop_class
            fits_targets = not targets or cc < targets[0]
            if fits_stop and fits_targets and cj + 1 > start_j:
                start_j, cum = cj + 1, cc
        order_list = self._order_list
        frontier = self._checkpoints[-1][0]
        cum_at_stop = -1
        ti = 0
        exhausted = True
        for j in range(start_j, len(order_list)):
            cum += self._count_at(order_list[j])
            if j > frontier and (j + 1) % self._checkpoint_every == 0:
                self._checkpoints.append((j, cum))
                frontier = j
            while ti < len(targets) and targets[ti] <= cum:
                found[targets[ti]] = (j, cum)
                ti += 1
            if j == stop_class:
                cum_at_stop = cum
            if j >= stop_class and ti >= len(targets):
                exhausted = j == len(order_list) - 1
                break
        if cum_at_stop < 0:
            cum_at_stop = cum
        if exhausted:
            for b in targets[ti:]:
                if b <= cum + self.zero_count:
                    found[b] = (len(order_list), cum + self.zero_count)
        return cum_at_stop, found

    def _excess_from_hit(self, b: int, hit: tuple[int, int]) -> float:
        j, cum = hit
        if j >= len(self.lp_sorted):
            return 0.0
        tail = float(self.suffix[j + 1])
        d = cum - b + 1
        if d > 0:
            tail += 2.0 ** (_log2_int(d) + self.lp_sorted[j])
        return tail

    def epsilon_star(self, k: int) -> float:
        if k < 0:
            raise ValueError("k must be >= 0")
        b = 1 << k
        if b <= 1:
            return float(self.suffix[0])
        if b > self.num_strings:
            return 0.0
        _, found = self._walk(stop_class=-1, rank_targets=[b])
        return self._excess_from_hit(b, found[b])

    def rate_point(self, epsilon: float) -> RatePoint:
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        idx = int(np.searchsorted(-self.suffix, -epsilon, side="left"))
        if idx == 0:
            b_min = 1
        else:
            j_star = idx - 1
            cum_at_stop, _ = self._walk(stop_class=j_star, rank_targets=[])
            room = epsilon - float(self.suffix[j_star + 1])
            if room <= 0:
                b_min = cum_at_stop + 1
            else:
                offset = _floor_exp2(math.log2(room) - self.lp_sorted[j_star])
                prev_cum = cum_at_stop - self._count_at(int(self.order[j_star]))
                b_min = max(cum_at_stop + 1 - offset, prev_cum + 1)
        k = max(0, (b_min - 1).bit_length() - 1)
        b1, b2 = 1 << k, 1 << (k + 1)
        targets = [b for b in (b1, b2) if 1 < b <= self.num_strings]
        found: dict[int, tuple[int, int]] = {}
        if targets:
            _, found = self._walk(stop_class=-1, rank_targets=targets)
        def _eps_at(b: int) -> float:
            if b <= 1:
                return float(self.suffix[0])
            if b > self.num_strings:
                return 0.0
            return self._excess_from_hit(b, found[b])
        return RatePoint(
            n=self.n,
            epsilon=epsilon,
            k=k,
            rate=k / self.n,
            eps_at_k=_eps_at(b1),
            eps_at_k_plus_1=_eps_at(b2),
        )


# ---------------------------------------------------------------------------
# Public reference-based (fixed y) queries


def _resolve_method(model: Model, n: int, method: str) -> str:
    nx = len(model.x_alphabet)
    if method == "auto":
        if isinstance(model, MarkovPairModel):
            return "bruteforce"
        return "bruteforce" if nx**n <= BRUTEFORCE_GUARD else "typeclass"
    if method not in ("bruteforce", "typeclass"):
        raise ValueError(f"unknown method {method!r}")
    if method == "typeclass" and isinstance(model, MarkovPairModel):
        raise ValueError("type-class evaluation needs a conditionally i.i.d. model")
    return method


def _ref_law(
    model: Model,
    y: SideInfoString,
    method: str,
    exact: bool,
    class_cap: int = DEFAULT_CLASS_CAP,
) -> LengthLaw | _StreamLaw:
    method = _resolve_method(model, len(y), method)
    if method == "bruteforce":
        return length_law_bruteforce(model, y, exact=exact)
    assert isinstance(model, CondIidModel)
    composition = y.counts()
    factors, est, _ = _typeclass_factors(model, composition, exact=False, class_cap=class_cap)
    del factors
    if not exact and est > MATERIALIZE_CAP:
        return _StreamLaw(model, composition, class_cap)
    return length_law_typeclass(model, y, exact=exact, class_cap=class_cap)


def epsilon_star_ref(
    model: Model,
    y: SideInfoString,
    k: int,
    method: str = "auto",
    exact: bool = False,
) -> float | Fraction:
    """Best overflow probability at k bits given the y-string."""
    law = _ref_law(model, y, method, exact)
    if exact:
        assert isinstance(law, LengthLaw)
        return law.epsilon_star_exact(k)
    return law.epsilon_star(k)


def rate_star_ref(
    model: Model, y: SideInfoString, epsilon: float, method: str = "auto"
) -> RatePoint:
    """Best code rate at overflow budget epsilon, given the y-string."""
    law = _ref_law(model, y, method, exact=False)
    return law.rate_point(epsilon)


# ---------------------------------------------------------------------------
# Pair-averaged queries


def _y_compositions(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    return _compositions(n, parts)


def _composition_weight(
    p_y: Sequence[Fraction], comp: Sequence[int], exact: bool
) -> float | Fraction:
    mult = _multinomial(sum(comp), comp)
    if exact:
        w = Fraction(mult)
        for p, c in zip(p_y, comp):
            w *= p**c
        return w
    logw = _log2_int(mult) + math.fsum(
        c * math.log2(float(p)) for p, c in zip(p_y, comp) if c
    ) if all(p > 0 or c == 0 for p, c in zip(p_y, comp)) else -math.inf
    return 0.0 if logw == -math.inf else 2.0**logw


def _pair_curve_typeclass(
    model: CondIidModel, n: int, exact: bool, class_cap: int
) -> list[float] | list[Fraction]:
    """Pair overflow curve over k = 0..kmax via the composition sweep."""
    p_y = model.require_p_y()
    kmax = (len(model.x_alphabet) ** n).bit_length()
    total: list = [Fraction(0) if exact else 0.0] * (kmax + 1)
    for comp in _y_compositions(n, len(model.y_alphabet)):
        w = _composition_weight(p_y, comp, exact)
        if w == 0:
            continue
        law = length_law_typeclass(model, comp, exact=exact, class_cap=class_cap)
        for k in range(kmax + 1):
            total[k] += w * (law.epsilon_star_exact(k) if exact else law.epsilon_star(k))
    return total


def _pair_curve_bruteforce(model: Model, n: int, exact: bool) -> list:
    """Pair overflow curve by enumerating every y-string."""
    nx, ny = len(model.x_alphabet), len(model.y_alphabet)
    if (nx * ny) ** n > BRUTEFORCE_GUARD:
        raise GuardExceededError(
            f"pair brute force needs (|X||Y|)^n <= {BRUTEFORCE_GUARD}"
        )
    kmax = (nx**n).bit_length()
    total: list = [Fraction(0) if exact else 0.0] * (kmax + 1)
    for ys in _all_tuples(ny, n):
        y = SideInfoString(model.y_alphabet, ys)
        w = _y_string_prob(model, y, exact)
        if w == 0:
            continue
        law = length_law_bruteforce(model, y, exact=exact)
        for k in range(kmax + 1):
            total[k] += w * (law.epsilon_star_exact(k) if exact else law.epsilon_star(k))
    return total


def _y_string_prob(model: Model, y: SideInfoString, exact: bool) -> float | Fraction:
    if isinstance(model, CondIidModel):
        p_y = model.require_p_y()
        if exact:
            w = Fraction(1)
            for yi in y.indices:
                w *= p_y[yi]
            return w
        w = 1.0
        for yi in y.indices:
            w *= float(p_y[yi])
        return w
    if exact:
        if model.initial is None:
            raise ValueError("exact Markov weights need a rational initial law")
        joints = _markov_string_probs(model, y, exact=True)
        return sum(joints)
    return float(_markov_string_probs(model, y, exact=False).sum())


def _pair_method(model: Model, n: int, method: str) -> str:
    """Resolve the evaluation route for pair-averaged queries.

    ``auto`` prefers the brute-force oracle when the joint string
    enumeration fits its guard, otherwise the composition sweep.
    """
    if isinstance(model, MarkovPairModel):
        if method == "typeclass":
            raise ValueError("type-class evaluation needs a conditionally i.i.d. model")
        return "bruteforce"
    if method == "auto":
        joint = (len(model.x_alphabet) * len(model.y_alphabet)) ** n
        return "bruteforce" if joint <= BRUTEFORCE_GUARD else "typeclass"
    if method not in ("bruteforce", "typeclass"):
        raise ValueError(f"unknown method {method!r}")
    return method


def _pair_curve(
    model: Model, n: int, method: str, exact: bool, class_cap: int = DEFAULT_CLASS_CAP
) -> list:
    if _pair_method(model, n, method) == "bruteforce":
        return _pair_curve_bruteforce(model, n, exact)
    return _pair_curve_typeclass(model, n, exact, class_cap)


def epsilon_star_pair(
    model: Model, n: int, k: int, method: str = "auto", exact: bool = False
) -> float | Fraction:
    """Best overflow probability at k bits, averaged over y-strings.

    The type-class route sweeps y-compositions (the overflow given y
    depends on y only through its composition); the brute-force route
    enumerates y-strings one by one and is the independent oracle.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if _pair_method(model, n, method) == "typeclass":
        assert isinstance(model, CondIidModel)
        p_y = model.require_p_y()
        total: float | Fraction = Fraction(0) if exact else 0.0
        for comp in _y_compositions(n, len(model.y_alphabet)):
            w = _composition_weight(p_y, comp, exact)
            if w == 0:
                continue
            law = length_law_typeclass(model, comp, exact=exact)
            total += w * (law.epsilon_star_exact(k) if exact else law.epsilon_star(k))
        return total
    curve = _pair_curve(model, n, "bruteforce", exact)
    kmax = len(curve) - 1
    return curve[min(k, kmax)]


def rate_star_pair(
    model: Model, n: int, epsilon: float, method: str = "auto"
) -> RatePoint:
    """Best pair-averaged rate: smallest k/n with overflow <= epsilon."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    curve = _pair_curve(model, n, method, exact=False)
    k = next(k for k in range(len(curve)) if (curve[k + 1] if k + 1 < len(curve) else 0.0) <= epsilon)
    return RatePoint(
        n=n,
        epsilon=epsilon,
        k=k,
        rate=k / n,
        eps_at_k=float(curve[k]),
        eps_at_k_plus_1=float(curve[k + 1]) if k + 1 < len(curve) else 0.0,
    )


def epsilon_star_prefix(
    model: Model,
    n: int,
    k: int,
    y: SideInfoString | None = None,
    method: str = "auto",
    exact: bool = False,
) -> float | Fraction:
    """Best overflow probability among prefix codes at k bits.

    Equals the one-to-one value at ``k - 1`` until k exhausts the
    source alphabet, then drops to zero; ``y=None`` gives the
    pair-averaged version.
    """
    if k < 1:
        raise ValueError("prefix overflow needs k >= 1")
    num_strings = len(model.x_alphabet) ** n
    if (1 << (k - 1)) >= num_strings:
        return Fraction(0) if exact else 0.0
    if y is None:
        return epsilon_star_pair(model, n, k - 1, method=method, exact=exact)
    if len(y) != n:
        raise ValueError("y-string length must equal n")
    return epsilon_star_ref(model, y, k - 1, method=method, exact=exact)


# ---------------------------------------------------------------------------
# The general converse along a threshold grid


@dataclass(frozen=True)
class ConverseEntry:
    tau: float
    info_tail: float
    rhs: float
    ok: bool


@dataclass(frozen=True)
class ConverseCheck:
    """One run of the information-spectrum converse check.

    For each slack tau, the best overflow probability must dominate
    ``P[-log2 P >= k + tau] - 2^-tau``; ``ok`` aggregates over taus.
    """

    n: int
    k: int
    scope: str
    lhs: float
    entries: tuple[ConverseEntry, ...]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)


def check_general_converse(
    model: Model,
    k: int,
    taus: Sequence[float],
    y: SideInfoString | None = None,
    n: int | None = None,
    exact: bool = False,
) -> ConverseCheck:
    """Check the threshold converse at one k over a grid of slacks.

    With ``y`` fixed the conditional law given that string is used;
    otherwise the pair law (requires enumeration guards).  On the
    exact track the inequality is decided in rational arithmetic for
    dyadic slacks, so a pass means zero violations, not small ones.
    """
    if y is not None:
        n = len(y)
        laws: list[tuple[float | Fraction, LengthLaw]] = [
            (Fraction(1) if exact else 1.0, length_law_bruteforce(model, y, exact=exact))
        ]
        scope = "ref"
    else:
        if n is None:
            raise ValueError("pair scope needs n")
        nx, ny = len(model.x_alphabet), len(model.y_alphabet)
        if (nx * ny) ** n > BRUTEFORCE_GUARD:
            raise GuardExceededError("pair converse check exceeds enumeration guard")
        laws = []
        for ys in _all_tuples(ny, n):
            ystr = SideInfoString(model.y_alphabet, ys)
            w = _y_string_prob(model, ystr, exact)
            if w == 0:
                continue
            laws.append((w, length_law_bruteforce(model, ystr, exact=exact)))
        scope = "pair"
    if exact:
        lhs_val: Fraction = sum((w * law.epsilon_star_exact(k) for w, law in laws), Fraction(0))
    else:
        lhs_val = math.fsum(w * law.epsilon_star(k) for w, law in laws)
    entries = []
    for tau in taus:
        if tau <= 0:
            raise ValueError("slacks must be positive")
        if exact:
            ftau = Fraction(tau)
            thresh = Fraction(k) + ftau
            tail: Fraction = sum(
                (w * law.info_tail_exact(thresh) for w, law in laws), Fraction(0)
            )
            gap = tail - lhs_val
            ok = gap <= 0 or _pow2_at_most(gap, ftau)
            entries.append(
                ConverseEntry(float(tau), float(tail), float(tail) - 2.0 ** float(-tau), ok)
            )
        else:
            tail_f = math.fsum(w * law.info_tail(k + tau) for w, law in laws)
            rhs = tail_f - 2.0**-tau
            entries.append(ConverseEntry(float(tau), tail_f, rhs, lhs_val >= rhs - 1e-12))
    return ConverseCheck(n=int(n), k=k, scope=scope, lhs=float(lhs_val), entries=tuple(entries))


def _pow2_at_most(gap: Fraction, tau: Fraction) -> bool:
    """Whether gap <= 2^-tau, exactly, for rational tau > 0 and gap > 0."""
    num, den = tau.numerator, tau.denominator
    return gap**den * (1 << num) <= 1
