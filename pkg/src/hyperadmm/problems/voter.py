"""Synthetic voter-preference model grounded into hinge and simplex subproblems.

Rules (weight: rule), each relation observed as a directed 0/1 edge ``B -> A``::

    0.5 : RegisteredAs(A, P)                   -> Votes(A, P)
    0.3 : Votes(A, P) & KnowsWell(B, A)         -> Votes(B, P)
    0.1 : Votes(A, P) & Knows(B, A)             -> Votes(B, P)
    0.05: Votes(A, P) & Boss(B, A)              -> Votes(B, P)
    0.1 : Votes(A, P) & Mentor(B, A)            -> Votes(B, P)
    0.7 : Votes(A, P) & OlderRelative(B, A)     -> Votes(B, P)

plus the constraint that each person's Votes values sum to one.  A relation
rule grounds to ``w * max(0, v_AP - v_BP)`` and a registration to
``w * max(0, 1 - v_AP)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import GenerationError
from .problem import Problem
from .prox import HingeSpec, SimplexSpec

REGISTRATION_WEIGHT = 0.5
RELATIONS = (
    ("knows_well", 0.3),
    ("knows", 0.1),
    ("boss", 0.05),
    ("mentor", 0.1),
    ("older_relative", 0.7),
)
RULE_WEIGHTS = frozenset([REGISTRATION_WEIGHT] + [w for _, w in RELATIONS])


@dataclass(frozen=True)
class VoterConfig:
    """Size and density of a synthetic voter network.

    Relation fields are mean out-degrees per person.  The defaults put the
    subproblem/consensus ratio near 3 for two parties.
    """

    num_persons: int
    num_parties: int = 2
    knows_well: float = 0.5
    knows: float = 1.0
    boss: float = 0.25
    mentor: float = 0.25
    older_relative: float = 0.25
    registered_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_persons < 1:
            raise ValueError("num_persons must be >= 1")
        if self.num_parties < 2:
            raise ValueError("num_parties must be >= 2 (the Votes simplex needs two parties)")
        for name, _ in RELATIONS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} mean degree must be >= 0")
        if not 0.0 <= self.registered_fraction <= 1.0:
            raise ValueError("registered_fraction must be in [0, 1]")

    def describe(self) -> list[str]:
        return [f"voter {k}={v}" for k, v in asdict(self).items()]


def _random_pairs(rng, n, count):
    """``count`` distinct ordered pairs (b, a) with b != a, sorted."""
    total = n * (n - 1)
    count = min(count, total)
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    codes = np.sort(rng.choice(total, size=count, replace=False))
    b = codes // (n - 1)
    r = codes % (n - 1)
    a = np.where(r < b, r, r + 1)
    return np.stack([b, a], axis=1)


@dataclass(frozen=True, eq=False)
class VoterInstance:
    problem: Problem
    var_person: np.ndarray
    var_party: np.ndarray
    relations: dict
    registered: np.ndarray
    registered_party: np.ndarray


def ground_voter_model(cfg: VoterConfig) -> VoterInstance:
    """Ground the voter program on a random social network.

    A Votes variable touched only by its person's simplex would be a consensus
    node of degree one; it is kept as a private coordinate of that simplex
    instead, so the feasible set of the shared coordinates becomes
    ``{x >= 0, sum(x) <= 1}``.
    """
    rng = np.random.default_rng(cfg.seed)
    n, P = cfg.num_persons, cfg.num_parties
    relations = {}
    for name, _ in RELATIONS:
        relations[name] = _random_pairs(rng, n, int(round(getattr(cfg, name) * n)))
    k = int(round(cfg.registered_fraction * n))
    registered = np.sort(rng.choice(n, size=k, replace=False)) if k else np.empty(0, np.int64)
    reg_party = rng.integers(0, P, size=len(registered))

    def var(person, party):
        return person * P + party

    # (slots, weight, a, b) before renumbering; variable ids are person * P + party
    hinges = []
    for person, party in zip(registered.tolist(), reg_party.tolist()):
        hinges.append(((var(person, party),), REGISTRATION_WEIGHT, (-1.0,), 1.0))
    for name, w in RELATIONS:
        for b, a in relations[name].tolist():
            for p in range(P):
                hinges.append(((var(a, p), var(b, p)), w, (1.0, -1.0), 0.0))

    deg = np.zeros(n * P, dtype=np.int64)
    for slots, *_ in hinges:
        deg[list(slots)] += 1
    deg += 1  # the simplex
    shared = deg >= 2
    new_id = -np.ones(n * P, dtype=np.int64)
    new_id[shared] = np.arange(int(shared.sum()))
    if not shared.any():
        raise GenerationError("voter configuration produced no shared Votes variables")

    specs = [HingeSpec(new_id[list(s)], w, a, b, 1) for s, w, a, b in hinges]
    for person in range(n):
        ids = new_id[person * P:(person + 1) * P]
        ids = ids[ids >= 0]
        if len(ids):
            specs.append(SimplexSpec(ids, P))
    problem = Problem.from_specs(specs, int(shared.sum()))
    vid = np.flatnonzero(shared)
    return VoterInstance(problem, vid // P, vid % P, relations, registered, reg_party)
