"""Exact inference on discrete hidden Markov chains via pairwise fusion.

The center-state posterior given a window of observations is computed two
ways: brute-force enumeration over all hidden sequences (the oracle) and an
iterative pairwise-fusion pipeline (three filtering steps from the left, two
likelihood-recovery steps from the right, one final fusion). Their agreement
is the property the network fusion topology in ``blocks`` is modeled on.

Messages are posterior probability vectors. Conditioning on a message from
the right-hand side is implemented by likelihood recovery: dividing the
message by the chain marginal of its position turns it back into a
likelihood, up to normalization.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, UnreachableStateError, ZeroEvidenceError

_ROW_TOL = 1e-12


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _check_stochastic(mat, what):
    mat = np.asarray(mat, dtype=np.float64)
    if np.any(mat < 0):
        raise ContractViolation(f"{what} has negative entries")
    rows = np.atleast_2d(mat)
    bad = np.abs(rows.sum(axis=1) - 1.0) > _ROW_TOL
    if np.any(bad):
        raise ContractViolation(f"{what} row {int(np.flatnonzero(bad)[0])} does not sum to 1")
    return mat


@dataclass(frozen=True)
class DiscreteHMM:
    """Time-homogeneous chain: prior over states, transition A, emission B."""

    prior: np.ndarray
    trans: np.ndarray
    emis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prior", _check_stochastic(self.prior, "prior"))
        object.__setattr__(self, "trans", _check_stochastic(self.trans, "transition"))
        object.__setattr__(self, "emis", _check_stochastic(self.emis, "emission"))
        s = self.prior.shape[0]
        if s < 2 or self.emis.shape[1] < 2:
            raise ContractViolation("need at least 2 states and 2 observation symbols")
        if self.trans.shape != (s, s) or self.emis.shape[0] != s:
            raise ContractViolation(
                f"inconsistent shapes: prior {self.prior.shape}, trans {self.trans.shape}, "
                f"emis {self.emis.shape}"
            )

    @property
    def n_states(self):
        return self.prior.shape[0]

    @property
    def n_obs(self):
        return self.emis.shape[1]


@dataclass(frozen=True)
class FusionMessage:
    """Posterior over states at a chain position (offset from the center)."""

    position: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if np.any(p < 0) or abs(p.sum() - 1.0) > _ROW_TOL:
            raise ContractViolation("message is not a probability vector")
        object.__setattr__(self, "probs", p)


class PriorMarginals:
    """Chain marginals p(state at offset) propagated from the prior."""

    def __init__(self, hmm, half_window=3):
        self.half_window = half_window
        m = [np.asarray(hmm.prior)]
        for _ in range(2 * half_window):
            m.append(m[-1] @ hmm.trans)
        self.marginals = m

    def at(self, position):
        return self.marginals[position + self.half_window]


def _normalized(vec, position):
    z = vec.sum()
    if z <= 0.0:
        raise ZeroEvidenceError(f"zero evidence mass at position {position}")
    return FusionMessage(position, vec / z)


def _check_obs(hmm, obs):
    obs = [int(y) for y in obs]
    if len(obs) < 3 or len(obs) % 2 == 0:
        raise ContractViolation(f"need an odd number >= 3 of observations, got {len(obs)}")
    if any(not 0 <= y < hmm.n_obs for y in obs):
        raise ContractViolation(f"observation symbol out of range [0, {hmm.n_obs})")
    return obs


def brute_posterior(hmm, obs):
    """Center-state posterior by enumerating every hidden sequence.

    This is the ground-truth oracle: the joint probability of each of the
    |X|^n hidden sequences is evaluated explicitly (vectorized over
    sequences, no message passing) and the center marginal is normalized.
    """
    obs = _check_obs(hmm, obs)
    n = len(obs)
    s = hmm.n_states
    grids = np.meshgrid(*([np.arange(s)] * n), indexing="ij")
    seqs = np.stack([g.ravel() for g in grids], axis=1)
    p = hmm.prior[seqs[:, 0]].copy()
    for k in range(n - 1):
        p *= hmm.trans[seqs[:, k], seqs[:, k + 1]]
    for k in range(n):
        p *= hmm.emis[seqs[:, k], obs[k]]
    marginal = np.bincount(seqs[:, n // 2], weights=p, minlength=s)
    return _normalized(marginal, 0)


def single_obs_posterior(hmm, position, y, priors):
    """p(state | its own observation) at one position."""
    return _normalized(priors.at(position) * hmm.emis[:, y], position)


def forward_message(hmm, theta_prev, y_k):
    """Absorb the next observation on the left: one exact filtering step."""
    position = theta_prev.position + 1
    vec = hmm.emis[:, y_k] * (theta_prev.probs @ hmm.trans)
    return _normalized(vec, position)


def _right_likelihood(theta, priors):
    # Recover the right-block likelihood from a posterior message by
    # dividing out the chain marginal of its position.
    marg = priors.at(theta.position)
    unreachable = (marg <= 0.0) & (theta.probs > 0.0)
    if np.any(unreachable):
        raise UnreachableStateError(
            f"message at position {theta.position} puts mass on state "
            f"{int(np.flatnonzero(unreachable)[0])} with zero chain marginal"
        )
    return np.divide(theta.probs, marg, out=np.zeros_like(theta.probs), where=marg > 0.0)


def backward_message(hmm, y_k, theta_next, priors):
    """Absorb one observation on the right via likelihood recovery."""
    position = theta_next.position - 1
    lik = _right_likelihood(theta_next, priors)
    vec = hmm.emis[:, y_k] * priors.at(position) * (hmm.trans @ lik)
    return _normalized(vec, position)


def final_fuse(hmm, theta_t, theta_t1, priors):
    """Combine the left posterior with the right-block evidence at the center."""
    lik = _right_likelihood(theta_t1, priors)
    vec = theta_t.probs * (hmm.trans @ lik)
    return _normalized(vec, theta_t.position)


def sdi_posterior(hmm, obs):
    """Center posterior via successive pairwise fusion (2L fusions for 2L+1 obs)."""
    obs = _check_obs(hmm, obs)
    half = len(obs) // 2
    priors = PriorMarginals(hmm, half)
    theta = single_obs_posterior(hmm, -half, obs[0], priors)
    for pos in range(-half + 1, 1):
        theta = forward_message(hmm, theta, obs[pos + half])
    if half == 0:
        return theta
    right = single_obs_posterior(hmm, half, obs[-1], priors)
    for pos in range(half - 1, 0, -1):
        right = backward_message(hmm, obs[pos + half], right, priors)
    return final_fuse(hmm, theta, right, priors)


def fusion_schedule(num_positions):
    """Fusion-order trace of sdi_posterior as (left, right, out) node labels.

    Pre-fusion nodes are ``n{offset}``, fused nodes ``f{offset}``, the final
    result ``out``. Used to audit that the network fusion tree is wired
    isomorphically to this inference schedule.
    """
    if num_positions < 3 or num_positions % 2 == 0:
        raise ContractViolation("schedule needs an odd number >= 3 of positions")
    half = num_positions // 2
    events = []
    left = f"n{-half}"
    for pos in range(-half + 1, 1):
        events.append((left, f"n{pos}", f"f{pos}"))
        left = f"f{pos}"
    right = f"n{half}"
    for pos in range(half - 1, 0, -1):
        events.append((f"n{pos}", right, f"f{pos}"))
        right = f"f{pos}"
    events.append((left, right, "out"))
    return events


def random_hmm(n_states, n_obs, seed):
    """Rows drawn from the flat simplex distribution; deterministic per seed."""
    if n_states < 2 or n_obs < 2:
        raise ContractViolation("need at least 2 states and 2 observation symbols")
    rng = np.random.default_rng(seed)
    return DiscreteHMM(
        prior=rng.dirichlet(np.ones(n_states)),
        trans=rng.dirichlet(np.ones(n_states), size=n_states),
        emis=rng.dirichlet(np.ones(n_obs), size=n_states),
    )


@dataclass
class VerifyReport:
    trials: int
    max_deviation: float
    collisions: int = 0

    @property
    def passed(self):
        return self.max_deviation <= 1e-10


def decomposition_check(trials=200, max_states=6, max_obs=6, seed=0):
    """Compare sdi_posterior with brute_posterior on random models/observations."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        s = int(rng.integers(2, max_states + 1))
        o = int(rng.integers(2, max_obs + 1))
        hmm = random_hmm(s, o, seed=int(rng.integers(0, 2**63 - 1)))
        obs = rng.integers(0, o, size=7)
        worst = max(worst, total_variation(
            sdi_posterior(hmm, obs).probs, brute_posterior(hmm, obs).probs))
    return VerifyReport(trials=trials, max_deviation=worst)


def _prefix_message(hmm, priors, y0, y1, half):
    theta = single_obs_posterior(hmm, -half, y0, priors)
    return forward_message(hmm, theta, y1)


def _audit_model(hmm, length=7):
    """Max brute-posterior deviation over prefix pairs with equal messages."""
    from itertools import combinations, product

    half = length // 2
    priors = PriorMarginals(hmm, half)
    prefixes = list(product(range(hmm.n_obs), repeat=2))
    messages = {pf: _prefix_message(hmm, priors, *pf, half).probs for pf in prefixes}
    worst = 0.0
    collisions = 0
    for pa, pb in combinations(prefixes, 2):
        if np.max(np.abs(messages[pa] - messages[pb])) > _ROW_TOL:
            continue
        collisions += 1
        for suffix in product(range(hmm.n_obs), repeat=length - 2):
            try:
                post_a = brute_posterior(hmm, pa + suffix).probs
            except ZeroEvidenceError:
                post_a = None
            try:
                post_b = brute_posterior(hmm, pb + suffix).probs
            except ZeroEvidenceError:
                post_b = None
            if post_a is None and post_b is None:
                continue
            if post_a is None or post_b is None:
                worst = max(worst, 1.0)
            else:
                worst = max(worst, total_variation(post_a, post_b))
    return worst, collisions


def sufficiency_check(hmm=None, num_trials=50, seed=0, max_states=4, max_obs=4):
    """Audit that equal two-observation messages imply equal 7-obs posteriors.

    With an explicit model, audits just that model; otherwise audits
    ``num_trials`` random models with sizes up to the given bounds (kept
    small so prefix/suffix enumeration stays exhaustive).
    """
    if hmm is not None:
        dev, col = _audit_model(hmm)
        return VerifyReport(trials=1, max_deviation=dev, collisions=col)
    rng = np.random.default_rng(seed)
    worst = 0.0
    collisions = 0
    for _ in range(num_trials):
        s = int(rng.integers(2, max_states + 1))
        o = int(rng.integers(2, max_obs + 1))
        model = random_hmm(s, o, seed=int(rng.integers(0, 2**63 - 1)))
        dev, col = _audit_model(model)
        worst = max(worst, dev)
        collisions += col
    return VerifyReport(trials=num_trials, max_deviation=worst, collisions=collisions)
