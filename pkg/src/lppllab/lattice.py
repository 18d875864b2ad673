"""Finite subsets of Z^nu with the l1 metric.

Sites are integer coordinate tuples.  A ``SiteSet`` is an immutable, ordered,
duplicate-free collection of sites; the order (lexicographic on coordinates)
is the canonical tensor-factor order used by every operator embedding in the
package.  Distances to the *infinite* complement of a region are computed by
growing l1 balls around each site, never by materializing complement sites.
"""

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .errors import ValidationError

Site = tuple[int, ...]

#: Returned by set distances involving an empty set.
INFINITE_DISTANCE = math.inf


def _as_site(coords) -> Site:
    return tuple(int(c) for c in coords)


@dataclass(frozen=True)
class SiteSet:
    """Ordered finite set of lattice sites of a common dimension ``nu``."""

    sites: tuple[Site, ...]
    nu: int

    @classmethod
    def from_sites(cls, coords: Iterable[Sequence[int]], nu: int | None = None) -> "SiteSet":
        sites = sorted({_as_site(c) for c in coords})
        if sites:
            dims = {len(s) for s in sites}
            if len(dims) != 1:
                raise ValidationError(f"sites of mixed dimension: {sorted(dims)}")
            found_nu = dims.pop()
            if nu is not None and nu != found_nu:
                raise ValidationError(f"sites have dimension {found_nu}, expected nu={nu}")
            nu = found_nu
        elif nu is None:
            raise ValidationError("empty site set needs an explicit nu")
        if nu < 1:
            raise ValidationError(f"nu must be >= 1, got {nu}")
        return cls(sites=tuple(sites), nu=nu)

    @classmethod
    def from_box(cls, ranges: Sequence[Sequence[int]]) -> "SiteSet":
        """Product of inclusive integer ranges, e.g. [[0, 5], [0, 3]]."""
        if not ranges:
            raise ValidationError("box needs at least one axis range")
        axes = []
        for r in ranges:
            lo, hi = int(r[0]), int(r[1])
            if hi < lo:
                raise ValidationError(f"empty box range [{lo}, {hi}]")
            axes.append(range(lo, hi + 1))
        return cls.from_sites(itertools.product(*axes), nu=len(ranges))

    @cached_property
    def _lookup(self) -> dict[Site, int]:
        return {s: i for i, s in enumerate(self.sites)}

    def __contains__(self, site) -> bool:
        return _as_site(site) in self._lookup

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def index_of(self, site) -> int:
        try:
            return self._lookup[_as_site(site)]
        except KeyError:
            raise ValidationError(f"site {site} not in set") from None

    def is_subset(self, other: "SiteSet") -> bool:
        return all(s in other for s in self.sites)

    def difference(self, other: "SiteSet") -> "SiteSet":
        return SiteSet.from_sites((s for s in self.sites if s not in other), nu=self.nu)

    def union(self, other: "SiteSet") -> "SiteSet":
        self._check_nu(other)
        return SiteSet.from_sites(self.sites + other.sites, nu=self.nu)

    def intersection(self, other: "SiteSet") -> "SiteSet":
        return SiteSet.from_sites((s for s in self.sites if s in other), nu=self.nu)

    def _check_nu(self, other: "SiteSet") -> None:
        if self.nu != other.nu:
            raise ValidationError(f"dimension mismatch: nu={self.nu} vs nu={other.nu}")


def l1_distance(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != len(b):
        raise ValidationError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return sum(abs(int(x) - int(y)) for x, y in zip(a, b))


def set_distance(a: SiteSet, b: SiteSet):
    """min l1 distance over pairs; INFINITE_DISTANCE if either set is empty."""
    a._check_nu(b)
    if not a.sites or not b.sites:
        return INFINITE_DISTANCE
    return min(l1_distance(x, y) for x in a.sites for y in b.sites)


def ball(x, radius: int, lam: SiteSet) -> SiteSet:
    """Sites of ``lam`` within l1 distance ``radius`` of ``x`` (x must lie in lam)."""
    x = _as_site(x)
    if x not in lam:
        raise ValidationError(f"ball center {x} not in the site set")
    if radius < 0:
        raise ValidationError(f"radius must be non-negative, got {radius}")
    return SiteSet.from_sites((y for y in lam.sites if l1_distance(x, y) <= radius), nu=lam.nu)


def _shell_offsets(nu: int, radius: int):
    if radius == 0:
        yield (0,) * nu
        return
    for off in itertools.product(range(-radius, radius + 1), repeat=nu):
        if sum(abs(o) for o in off) == radius:
            yield off


def complement_distance(x, region: SiteSet) -> int:
    """l1 distance from ``x`` to the infinite complement Z^nu minus ``region``.

    Equals 1 + the largest r such that the full l1 ball of radius r around x
    lies inside ``region``; found by scanning shells of growing radius.
    """
    x = _as_site(x)
    if x not in region:
        return 0
    # a shell of radius > |region| cannot be fully contained in region
    for r in range(1, len(region) + 2):
        for off in _shell_offsets(region.nu, r):
            if tuple(xi + oi for xi, oi in zip(x, off)) not in region:
                return r
    raise AssertionError("unreachable: finite region contains arbitrarily large balls")


def set_complement_distance(a: SiteSet, region: SiteSet):
    """min over sites of ``a`` of the distance to Z^nu minus ``region``."""
    a._check_nu(region)
    if not a.sites:
        return INFINITE_DISTANCE
    return min(complement_distance(x, region) for x in a.sites)


def bulk(lam_star: SiteSet, interaction_range: int) -> SiteSet:
    """Sites of ``lam_star`` at distance > 2R from the infinite complement."""
    if interaction_range < 1:
        raise ValidationError(f"interaction range must be >= 1, got {interaction_range}")
    threshold = 2 * interaction_range
    return SiteSet.from_sites(
        (x for x in lam_star.sites if complement_distance(x, lam_star) > threshold),
        nu=lam_star.nu,
    )


def bulk_distance_identity_check(y: SiteSet, x: SiteSet, lam: SiteSet, interaction_range: int):
    """Evaluate both sides of the bulk-distance identity independently.

    With lam_star = lam minus x, the distance from y to the complement of the
    bulk of lam_star equals min{ dist(y, complement of bulk(lam)),
    dist(y, x) - 2R }.  Requires y inside bulk(lam_star, R).  Returns the pair
    (lhs, rhs); both are exact integers under the precondition.
    """
    lam_star = lam.difference(x)
    inner_bulk = bulk(lam_star, interaction_range)
    if not y.is_subset(inner_bulk):
        raise ValidationError("y must lie inside the bulk of lam minus x")
    lhs = set_complement_distance(y, inner_bulk)
    rhs = min(
        set_complement_distance(y, bulk(lam, interaction_range)),
        set_distance(y, x) - 2 * interaction_range,
    )
    return lhs, rhs
