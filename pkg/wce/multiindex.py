"""
Multiindices alpha = (alpha_1, alpha_2, ...) with finite support, the index set
of the Cameron-Martin basis, and their truncations.

A MultiIndex is stored as a sorted tuple of (k, alpha_k) pairs with alpha_k >= 1,
so equality and hashing are structural and the empty tuple is the zero index.
"""
import itertools
import math
import re
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np
from scipy.special import comb, gammaln

from wce.errors import DomainError


_TEXT = re.compile(r'^a\(([0-9:,\s]*)\)$')


class MultiIndex(object):
    __slots__ = ('entries', '_degree', '_hash')

    def __init__(self, entries: Iterable[Tuple[int, int]] = ()):
        cleaned = {}
        for k, v in entries:
            k, v = int(k), int(v)
            if k < 1:
                raise DomainError("basis index must be positive, got {}".format(k))
            if v < 0:
                raise DomainError("multiindex entries must be nonnegative, got {}".format(v))
            if v:
                cleaned[k] = cleaned.get(k, 0) + v
        self.entries: Tuple[Tuple[int, int], ...] = tuple(sorted(cleaned.items()))
        self._degree = sum(v for _, v in self.entries)
        self._hash = hash(self.entries)

    @classmethod
    def unit(cls, k: int, times: int = 1) -> 'MultiIndex':
        return cls(((k, times),))

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> 'MultiIndex':
        return cls((k + 1, v) for k, v in enumerate(values))

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> 'MultiIndex':
        """alpha with alpha_k = number of times k occurs in `indices`."""
        counts: Dict[int, int] = {}
        for k in indices:
            counts[k] = counts.get(k, 0) + 1
        return cls(counts.items())

    @classmethod
    def parse(cls, text: str) -> 'MultiIndex':
        match = _TEXT.match(text.strip())
        if match is None:
            raise DomainError("cannot parse multiindex {!r}".format(text))
        body = match.group(1).strip()
        if not body:
            return cls()
        pairs = []
        for item in body.split(','):
            k, v = item.split(':')
            pairs.append((int(k), int(v)))
        return cls(pairs)

    @property
    def degree(self) -> int:
        return self._degree

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(k for k, _ in self.entries)

    def __getitem__(self, k: int) -> int:
        for kk, v in self.entries:
            if kk == k:
                return v
            if kk > k:
                break
        return 0

    def as_dict(self) -> Dict[int, int]:
        return dict(self.entries)

    def to_dense(self, size: int) -> List[int]:
        dense = [0] * size
        for k, v in self.entries:
            if k > size:
                raise DomainError("index {} does not fit a dense vector of size {}".format(k, size))
            dense[k - 1] = v
        return dense

    def indices(self) -> Tuple[int, ...]:
        """Sorted index tuple with k repeated alpha_k times (inverse of from_indices)."""
        return tuple(k for k, v in self.entries for _ in range(v))

    def leq(self, other: 'MultiIndex') -> bool:
        """Componentwise order beta <= alpha."""
        theirs = other.as_dict()
        return all(v <= theirs.get(k, 0) for k, v in self.entries)

    def sort_key(self):
        return (self._degree, self.indices())

    def __add__(self, other: 'MultiIndex') -> 'MultiIndex':
        return add(self, other)

    def __sub__(self, other: 'MultiIndex') -> 'MultiIndex':
        return sub_checked(self, other)

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self.entries == other.entries

    def __hash__(self):
        return self._hash

    def __bool__(self):
        return bool(self.entries)

    def __str__(self):
        return 'a(' + ','.join('{}:{}'.format(k, v) for k, v in self.entries) + ')'

    def __repr__(self):
        return 'MultiIndex({})'.format(str(self))


ZERO = MultiIndex()


def add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return MultiIndex(a.entries + b.entries)


def sub_checked(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    mine = a.as_dict()
    for k, v in b.entries:
        if v > mine.get(k, 0):
            raise DomainError("{} is not <= {}".format(b, a))
        mine[k] -= v
    return MultiIndex(mine.items())


def minimum(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    theirs = b.as_dict()
    return MultiIndex((k, min(v, theirs.get(k, 0))) for k, v in a.entries)


def sub_indices(a: MultiIndex) -> Iterator[MultiIndex]:
    """All beta with beta <= a, in product order."""
    keys = [k for k, _ in a.entries]
    ranges = [range(v + 1) for _, v in a.entries]
    for values in itertools.product(*ranges):
        yield MultiIndex(zip(keys, values))


def factorial_log(a: MultiIndex) -> float:
    if not a.entries:
        return 0.0
    return float(np.sum(gammaln(np.array([v for _, v in a.entries], dtype=np.float64) + 1.0)))


def _binomial_log(a: MultiIndex, b: MultiIndex) -> float:
    return factorial_log(a) - factorial_log(b) - factorial_log(sub_checked(a, b))


def chaos_binomial_sqrt(a: MultiIndex, b: MultiIndex) -> float:
    """sqrt(alpha! / (beta! (alpha - beta)!)); raises DomainError unless b <= a."""
    return math.exp(0.5 * _binomial_log(a, b))


def propagator_coeff(a: MultiIndex, b: MultiIndex, p: MultiIndex) -> float:
    """c(alpha, beta, p) = [C(alpha,beta) C(beta+p,p) C(alpha+p-beta,p)]^(1/2)."""
    log_c = _binomial_log(a, b)
    log_c += _binomial_log(add(b, p), p)
    log_c += _binomial_log(sub_checked(add(a, p), b), p)
    return math.exp(0.5 * log_c)


class TruncationSpec(object):
    """Finite projection of the multiindex set: |alpha| <= M, support in {1..K}."""

    def __init__(self, max_degree: int, max_basis_index: int):
        if max_degree < 0:
            raise DomainError("max_degree must be nonnegative, got {}".format(max_degree))
        if max_basis_index < 1:
            raise DomainError("max_basis_index must be positive, got {}".format(max_basis_index))
        self.max_degree = int(max_degree)
        self.max_basis_index = int(max_basis_index)
        self._members = None
        self._positions = None

    def size(self) -> int:
        K = self.max_basis_index
        return sum(int(comb(K + n - 1, n, exact=True)) for n in range(self.max_degree + 1))

    def enumerate(self) -> List[MultiIndex]:
        """
        Degree by degree, and inside a degree ascending on the sorted index tuple,
        i.e. [0, e1, e2, 2e1, e1+e2, 2e2, ...].
        """
        if self._members is None:
            members = []
            for n in range(self.max_degree + 1):
                for combo in itertools.combinations_with_replacement(range(1, self.max_basis_index + 1), n):
                    members.append(MultiIndex.from_indices(combo))
            self._members = members
            self._positions = {alpha: i for i, alpha in enumerate(members)}
        return list(self._members)

    def level(self, n: int) -> List[MultiIndex]:
        return [alpha for alpha in self.enumerate() if alpha.degree == n]

    def __contains__(self, alpha: MultiIndex) -> bool:
        if alpha.degree > self.max_degree:
            return False
        return all(k <= self.max_basis_index for k in alpha.support)

    def position(self, alpha: MultiIndex) -> int:
        self.enumerate()
        return self._positions[alpha]

    def __eq__(self, other):
        return (isinstance(other, TruncationSpec) and self.max_degree == other.max_degree
                and self.max_basis_index == other.max_basis_index)

    def __hash__(self):
        return hash((self.max_degree, self.max_basis_index))

    def __repr__(self):
        return 'TruncationSpec(M={}, K={})'.format(self.max_degree, self.max_basis_index)


def enumerate_multiindices(max_degree: int, max_basis_index: int) -> List[MultiIndex]:
    return TruncationSpec(max_degree, max_basis_index).enumerate()


def ordered(alphas: Iterable[MultiIndex]) -> List[MultiIndex]:
    """Deterministic order used by every reduction over coefficients."""
    return sorted(alphas, key=lambda alpha: alpha.sort_key())


def multinomial_log(a: MultiIndex) -> float:
    """log of |alpha|! / alpha!."""
    return float(gammaln(a.degree + 1.0)) - factorial_log(a)

