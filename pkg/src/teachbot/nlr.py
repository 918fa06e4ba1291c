"""Natural-language rule inference.

Two rule sets bias the ranker: u-rules map user inputs to suggested system
actions, s-rules map the previous system action to a typical follow-up.
Matching is soft: cosine similarity sharpened by a learned temperature and
normalized by softmax, with learned "no match" bias logits whose candidate
embedding is the zero vector.  The output is a preference-weighted average
of candidate template embeddings, one half per rule set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError
from .optim import Parameter


@dataclass(frozen=True)
class Rule:
    """A (pre-condition, post-condition) pair of natural-language texts."""
    pre: str
    post: str


@dataclass
class RuleSet:
    kind: str               # "s": pre is a system action; "u": pre is a user input
    rules: list[Rule] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("s", "u"):
            raise ValidationError(f"unknown rule set kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.rules)


@dataclass
class RuleMemory:
    """Embedded pre/post conditions of one rule set; rows align with rules."""
    rules: list[Rule]
    pre: Tensor             # (R, d)
    post: Tensor            # (R, d)

    def __len__(self) -> int:
        return len(self.rules)


class MatcherParams:
    """Per-rule-set matcher parameters.

    The temperature is stored as its log so it stays positive under
    unconstrained updates.  Each matching process (pre side, post side)
    carries `n_biases` learnable no-match logits; their candidates are all
    the zero vector.
    """

    def __init__(self, name: str, init_temperature: float = 0.1, n_biases: int = 1):
        if init_temperature <= 0:
            raise ValueError("temperature must be positive")
        if n_biases < 1:
            raise ValueError("each matching process needs at least one bias")
        self.log_temp = Parameter(f"{name}.log_temp",
                                  np.array([np.log(init_temperature)]))
        self.pre_bias = Parameter(f"{name}.pre_bias", np.zeros(n_biases))
        self.post_bias = Parameter(f"{name}.post_bias", np.zeros(n_biases))

    @property
    def temperature(self) -> Tensor:
        return ad.exp(self.log_temp)

    def parameters(self) -> list[Parameter]:
        return [self.log_temp, self.pre_bias, self.post_bias]


def build_rule_memory(rule_set: RuleSet, encoder, cache: dict | None = None) -> RuleMemory:
    """Encode every rule's conditions with the current encoder parameters.

    Rebuilt each forward pass during training so gradients reach the encoder
    through the rule side of the matcher as well.
    """
    pre = ad.stack_rows([encoder.encode(r.pre, cache) for r in rule_set.rules],
                        width=encoder.dim)
    post = ad.stack_rows([encoder.encode(r.post, cache) for r in rule_set.rules],
                         width=encoder.dim)
    return RuleMemory(rules=list(rule_set.rules), pre=pre, post=post)


def match_probs(query: Tensor, memory_rows: Tensor, temperature: Tensor,
                nomatch_bias: Tensor) -> Tensor:
    """softmax([cosine(query, row)/temperature ..., bias...]) -> (N+B,).

    The trailing entries are the no-match probabilities; their associated
    candidate embedding is the zero vector.  An empty memory is legal and
    puts all mass on the biases.
    """
    sims = ad.cosine_rows(memory_rows, query)
    logits = ad.concat([ad.div(sims, temperature), nomatch_bias])
    return ad.softmax(logits)


def rule_relevance(input_emb: Tensor, memory: RuleMemory,
                   matcher: MatcherParams) -> Tensor:
    """How relevant each rule is to the inferencer input: (R+B,)."""
    return match_probs(input_emb, memory.pre, matcher.temperature,
                       matcher.pre_bias)


def action_affinity(memory: RuleMemory, candidate_embs: Tensor,
                    matcher: MatcherParams) -> Tensor:
    """Per-rule candidate match distribution: (R, K+B); each row sums to 1."""
    r = memory.post.data.shape[0]
    if r == 0:
        k = candidate_embs.data.shape[0]
        b = matcher.post_bias.data.shape[0]
        return Tensor(np.zeros((0, k + b)))
    sims = ad.cosine_cross(memory.post, candidate_embs)
    logits = ad.append_broadcast_cols(ad.div(sims, matcher.temperature),
                                      matcher.post_bias)
    return ad.row_softmax(logits)


def combine(mu: Tensor, nu: Tensor, n_rules: int, n_candidates: int) -> tuple[Tensor, Tensor]:
    """Fold rule relevance into per-candidate mass.

    alpha_j = sum_i mu_i * nu_ij over real rules/candidates; the leftover
    probability (no-match entries of both softmaxes) is returned as
    `zero_mass`, satisfying sum(alpha) + zero_mass = 1.
    """
    if mu.data.shape[0] < n_rules or nu.data.shape != (n_rules, nu.data.shape[1]):
        raise ValueError("combine: mu/nu shapes do not agree with R")
    if nu.data.shape[1] < n_candidates:
        raise ValueError("combine: nu has fewer columns than candidates")
    if n_rules == 0:
        return Tensor(np.zeros(n_candidates)), ad.tsum(mu)
    mu_rules = mu[0:n_rules]
    alpha = ad.matmul(mu_rules, nu[:, 0:n_candidates])
    residual = ad.tsum(mu[n_rules:]) + ad.matmul(mu_rules,
                                                 ad.tsum(nu[:, n_candidates:], axis=1))
    return alpha, residual


def expected_action(alpha: Tensor, zero_mass: Tensor,
                    candidate_embs: Tensor) -> Tensor:
    """Preference-weighted average of candidate embeddings.

    The zero-mass probability multiplies the zero vector, so it contributes
    nothing to the value; it is accepted here to keep the normalization
    contract (sum(alpha) + zero_mass = 1) visible at the call site.
    """
    if alpha.data.shape[0] != candidate_embs.data.shape[0]:
        raise ValueError("expected_action: alpha/candidate count mismatch")
    if alpha.data.shape[0] == 0:
        return ad.zeros(candidate_embs.data.shape[1])
    return ad.matmul(alpha, candidate_embs)


@dataclass
class MatchTrace:
    """Inference internals of one rule set, for debugging and invariants."""
    rules: list[Rule]
    mu: np.ndarray
    nu: np.ndarray
    alpha: np.ndarray
    zero_mass: float

    def top_rules(self, n: int = 3) -> list[tuple[float, Rule]]:
        order = np.argsort(-self.mu[:len(self.rules)])
        return [(float(self.mu[i]), self.rules[i]) for i in order[:n]]


@dataclass
class NlrResult:
    features: Tensor        # concat(e_s, e_u), length 2*d
    s_trace: MatchTrace | None
    u_trace: MatchTrace | None


def _infer_one(query_emb: Tensor, memory: RuleMemory, candidate_embs: Tensor,
               matcher: MatcherParams) -> tuple[Tensor, MatchTrace]:
    k = candidate_embs.data.shape[0]
    mu = rule_relevance(query_emb, memory, matcher)
    nu = action_affinity(memory, candidate_embs, matcher)
    alpha, zero_mass = combine(mu, nu, len(memory), k)
    e = expected_action(alpha, zero_mass, candidate_embs)
    trace = MatchTrace(rules=memory.rules, mu=mu.data.copy(), nu=nu.data.copy(),
                       alpha=alpha.data.copy(), zero_mass=float(zero_mass.data))
    return e, trace


def nlr_features(prev_sys_emb: Tensor, user_emb: Tensor,
                 s_memory: RuleMemory | None, u_memory: RuleMemory | None,
                 candidate_embs: Tensor, s_matcher: MatcherParams,
                 u_matcher: MatcherParams, dim: int) -> NlrResult:
    """Run both rule paths and concatenate their expected-action embeddings.

    The s-rule path queries with the previous system action, the u-rule path
    with the current user input.  A `None` memory (ablated rule set) zeroes
    its half while keeping the feature layout fixed.
    """
    if s_memory is not None:
        e_s, s_trace = _infer_one(prev_sys_emb, s_memory, candidate_embs, s_matcher)
    else:
        e_s, s_trace = ad.zeros(dim), None
    if u_memory is not None:
        e_u, u_trace = _infer_one(user_emb, u_memory, candidate_embs, u_matcher)
    else:
        e_u, u_trace = ad.zeros(dim), None
    return NlrResult(features=ad.concat([e_s, e_u]), s_trace=s_trace,
                     u_trace=u_trace)


def parse_rules(doc: dict) -> tuple[RuleSet, RuleSet]:
    """Validate and build (s_rules, u_rules) from a parsed rule document."""
    sets = {}
    for kind in ("s", "u"):
        entries = doc.get(f"{kind}_rules", [])
        if not isinstance(entries, list):
            raise ValidationError(f"{kind}_rules must be a list")
        rules = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict) or "pre" not in entry or "post" not in entry:
                raise ValidationError(
                    f"{kind}_rules[{i}]: expected an object with 'pre' and 'post'")
            pre = str(entry["pre"]).strip()
            post = str(entry["post"]).strip()
            if not pre:
                raise ValidationError(f"{kind}_rules[{i}]: empty pre-condition")
            if not post:
                raise ValidationError(f"{kind}_rules[{i}]: empty post-condition")
            for text in (pre, post):
                if text.count("<") != text.count(">"):
                    raise ValidationError(
                        f"{kind}_rules[{i}]: unbalanced placeholder brackets in {text!r}")
            rules.append(Rule(pre=pre, post=post))
        sets[kind] = RuleSet(kind=kind, rules=rules)
    return sets["s"], sets["u"]


def load_rules(path) -> tuple[RuleSet, RuleSet]:
    """Load a rule file: {"s_rules": [{"pre", "post"}...], "u_rules": [...]}."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return parse_rules(doc)
