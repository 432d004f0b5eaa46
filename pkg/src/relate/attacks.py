"""Seven adversarial attacks against zoo models, plus the attack success rate.

Gradient attacks (fgsm/bim/mim/auto_pgd) respect an exact l-inf budget. The
boundary attack touches the model only through predicted labels. All attacks
are pure given (model, input, spec, seed); batch application vectorizes over
samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeriesSample
from .util import derive_seed

ATTACK_KINDS = ("fgsm", "bim", "mim", "auto_pgd", "deepfool", "elastic_net", "boundary")

GROUP1_ITERATION_BASED = frozenset({"fgsm", "bim", "mim", "auto_pgd"})
GROUP2_OPTIMIZATION_DECISION = frozenset({"deepfool", "elastic_net", "boundary"})

GROUP1 = "group1_iteration_based"
GROUP2 = "group2_optimization_decision_based"

DEFAULT_ITERATIONS = {
    "fgsm": 1,
    "bim": 10,
    "mim": 10,
    "auto_pgd": 10,
    "deepfool": 50,
    "elastic_net": 100,
    "boundary": 500,
}


def group_of(kind: str) -> str:
    if kind in GROUP1_ITERATION_BASED:
        return GROUP1
    if kind in GROUP2_OPTIMIZATION_DECISION:
        return GROUP2
    raise ValueError(f"unknown attack kind '{kind}'")


def attacks_in_group(group: str) -> tuple:
    members = GROUP1_ITERATION_BASED if group == GROUP1 else GROUP2_OPTIMIZATION_DECISION
    return tuple(k for k in ATTACK_KINDS if k in members)


@dataclass(frozen=True)
class AttackSpec:
    """Attack identity and budget; epsilon only applies to the sign-step kinds."""

    kind: str
    epsilon: float = 0.1
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind '{self.kind}'")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        iters = self.iterations or DEFAULT_ITERATIONS[self.kind]
        if iters < 1:
            raise ValueError("iterations must be >= 1")
        object.__setattr__(self, "iterations", int(iters))

    @property
    def group(self) -> str:
        return group_of(self.kind)


class AttackInitializationError(RuntimeError):
    pass


def _values(sample) -> np.ndarray:
    return sample.values if isinstance(sample, TimeSeriesSample) else np.asarray(sample, dtype=np.float64)


def _clip(x: np.ndarray, bounds) -> np.ndarray:
    if bounds is None:
        return x
    return np.clip(x, bounds[0], bounds[1])


def fgsm_batch(model, x0: np.ndarray, y: np.ndarray, eps: float, bounds=None) -> np.ndarray:
    _, grads = model.losses_and_input_gradients(x0, y)
    return _clip(x0 + eps * np.sign(grads), bounds)


def bim_batch(model, x0, y, eps, iters, bounds=None) -> np.ndarray:
    alpha = eps / iters
    x = x0.copy()
    for _ in range(iters):
        _, grads = model.losses_and_input_gradients(x, y)
        x = np.clip(x + alpha * np.sign(grads), x0 - eps, x0 + eps)
        x = _clip(x, bounds)
    return x


def mim_batch(model, x0, y, eps, iters, mu, bounds=None) -> np.ndarray:
    alpha = eps / iters
    x = x0.copy()
    g_acc = np.zeros_like(x0)
    for _ in range(iters):
        _, grads = model.losses_and_input_gradients(x, y)
        l1 = np.abs(grads).sum(axis=(1, 2), keepdims=True)
        normed = np.divide(grads, l1, out=np.zeros_like(grads), where=l1 > 0)
        g_acc = mu * g_acc + normed
        x = np.clip(x + alpha * np.sign(g_acc), x0 - eps, x0 + eps)
        x = _clip(x, bounds)
    return x


def auto_pgd_batch(model, x0, y, eps, iters, bounds=None):
    """PGD with per-sample step halving after two non-improving iterations.

    Returns the visited iterate of maximal loss (the start point counts).
    """
    if iters < 2:
        raise ValueError("auto_pgd needs iters >= 2")
    n = len(x0)
    step = np.full((n, 1, 1), 2.0 * eps / iters)
    x = x0.copy()
    losses, _ = model.losses_and_input_gradients(x, y)
    best_x = x0.copy()
    best_loss = losses.copy()
    prev_loss = losses.copy()
    fails = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        _, grads = model.losses_and_input_gradients(x, y)
        x = np.clip(x + step * np.sign(grads), x0 - eps, x0 + eps)
        x = _clip(x, bounds)
        losses, _ = model.losses_and_input_gradients(x, y)
        improved = losses > best_loss
        best_loss = np.where(improved, losses, best_loss)
        best_x = np.where(improved[:, None, None], x, best_x)
        fails = np.where(losses > prev_loss, 0, fails + 1)
        halve = fails >= 2
        step = np.where(halve[:, None, None], step / 2.0, step)
        fails = np.where(halve, 0, fails)
        prev_loss = losses
    return best_x, best_loss


def deepfool_batch(model, x0, y, iters, overshoot=1.02, bounds=None):
    """Iterative minimal-step push to the nearest linearized class boundary.

    Samples the model already misclassifies are returned unchanged. Returns
    (adversarial batch, flipped flags).
    """
    n = len(x0)
    pert = np.zeros_like(x0)
    active = model.predict(x0) == y
    for _ in range(iters):
        if not active.any():
            break
        xa = x0[active] + overshoot * pert[active]
        rows, logits = model.logit_jacobian_rows(xa)
        ya = y[active]
        idx = np.arange(len(ya))
        w = rows - rows[idx, ya][:, None]
        f = logits - logits[idx, ya][:, None]
        norms = np.sqrt((w ** 2).sum(axis=(2, 3)))
        dist = np.abs(f) / np.maximum(norms, 1e-12)
        dist[idx, ya] = np.inf
        target = dist.argmin(axis=1)
        w_t = w[idx, target]
        f_t = f[idx, target]
        denom = np.maximum((w_t ** 2).sum(axis=(1, 2)), 1e-24)
        r = (np.abs(f_t) / denom)[:, None, None] * w_t
        upd = np.zeros_like(pert)
        upd[active] = r
        pert = pert + upd
        adv = _clip(x0 + overshoot * pert, bounds)
        active = active & (model.predict(adv) == y)
    adv = _clip(x0 + overshoot * pert, bounds)
    flipped = model.predict(adv) != y
    return adv, flipped


def soft_threshold(z: np.ndarray, beta: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - beta, 0.0)


def elastic_net_batch(model, x0, y, iters, beta, step=0.05, bounds=None):
    """ISTA-style sparse attack: normalized ascent step, then soft-threshold.

    Keeps the misclassifying iterate of lowest elastic-net cost
    ``||d||_2^2 + beta * ||d||_1``. Returns (batch, adversarial flags).
    """
    n = len(x0)
    delta = np.zeros_like(x0)
    best_delta = np.zeros_like(x0)
    best_cost = np.full(n, np.inf)
    found = np.zeros(n, dtype=bool)
    for _ in range(iters):
        _, grads = model.losses_and_input_gradients(_clip(x0 + delta, bounds), y)
        ginf = np.abs(grads).max(axis=(1, 2), keepdims=True)
        direction = np.divide(grads, ginf, out=np.zeros_like(grads), where=ginf > 0)
        delta = soft_threshold(delta + step * direction, beta)
        adv = _clip(x0 + delta, bounds)
        mis = model.predict(adv) != y
        cost = (delta ** 2).sum(axis=(1, 2)) + beta * np.abs(delta).sum(axis=(1, 2))
        better = mis & (cost < best_cost)
        best_cost = np.where(better, cost, best_cost)
        best_delta = np.where(better[:, None, None], delta, best_delta)
        found |= mis
    out_delta = np.where(found[:, None, None], best_delta, delta)
    return _clip(x0 + out_delta, bounds), found


def _boundary_init(predict, x0, y, rng, max_draws=1000):
    """Find a misclassified Gaussian blend around each sample."""
    n = len(x0)
    start = x0.copy()
    found = np.zeros(n, dtype=bool)
    scale = 0.5
    for _ in range(max_draws):
        if found.all():
            break
        cand = x0 + scale * rng.standard_normal(x0.shape)
        mis = predict(cand) != y
        take = mis & ~found
        start[take] = cand[take]
        found |= mis
        scale = min(scale * 1.05, 64.0)
    return start, found


def boundary_batch(predict, x0, y, iters, seed, bounds=None, orth_step=0.3,
                   contract_step=0.05, trace=None):
    """Decision-based attack using only predicted labels.

    Alternates an on-sphere orthogonal move with a contraction toward the
    original input, accepting only misclassified candidates, so the distance
    to the original never increases over accepted steps. ``trace``, when a
    list, receives the per-iteration distance vector.
    """
    rng = np.random.default_rng(seed)
    n = len(x0)
    cur, found = _boundary_init(predict, x0, y, rng)
    active = found.copy()
    stalls = np.zeros(n, dtype=np.int64)
    contract = np.full(n, contract_step)
    for _ in range(iters):
        if not active.any():
            break
        diff = cur - x0
        d = np.sqrt((diff ** 2).sum(axis=(1, 2), keepdims=True))
        u = rng.standard_normal(x0.shape)
        vhat = np.divide(diff, d, out=np.zeros_like(diff), where=d > 0)
        u -= (u * vhat).sum(axis=(1, 2), keepdims=True) * vhat
        unorm = np.sqrt((u ** 2).sum(axis=(1, 2), keepdims=True))
        u = np.divide(u, unorm, out=np.zeros_like(u), where=unorm > 0) * (orth_step * d)
        stepped = diff + u
        snorm = np.sqrt((stepped ** 2).sum(axis=(1, 2), keepdims=True))
        cand = x0 + np.divide(stepped, snorm, out=np.zeros_like(stepped), where=snorm > 0) * d
        cand = _clip(cand, bounds)
        ok = (predict(cand) != y) & active
        cur = np.where(ok[:, None, None], cand, cur)

        cand2 = x0 + (1.0 - contract[:, None, None]) * (cur - x0)
        cand2 = _clip(cand2, bounds)
        ok2 = (predict(cand2) != y) & active
        cur = np.where(ok2[:, None, None], cand2, cur)
        stalls = np.where(ok2 | ~active, 0, stalls + 1)
        shrink = stalls >= 15
        contract = np.where(shrink, contract / 2.0, contract)
        stalls = np.where(shrink, 0, stalls)
        if trace is not None:
            trace.append(np.sqrt(((cur - x0) ** 2).sum(axis=(1, 2))))
    return cur, found


def _single(fn, model, sample, *args, **kwargs):
    x = _values(sample)[None]
    out = fn(model, x, *args, **kwargs)
    adv = out[0] if isinstance(out, tuple) else out
    if isinstance(sample, TimeSeriesSample):
        return TimeSeriesSample(adv[0], sample.label)
    return adv[0]


def fgsm(model, sample, label, epsilon, bounds=None):
    return _single(fgsm_batch, model, sample, np.array([label]), epsilon, bounds)


def bim(model, sample, label, epsilon, iters, bounds=None):
    if iters < 1:
        raise ValueError("iters must be >= 1")
    return _single(bim_batch, model, sample, np.array([label]), epsilon, iters, bounds)


def mim(model, sample, label, epsilon, iters, mu, bounds=None):
    if mu < 0:
        raise ValueError("momentum decay must be >= 0")
    return _single(mim_batch, model, sample, np.array([label]), epsilon, iters, mu, bounds)


def auto_pgd(model, sample, label, epsilon, iters, bounds=None):
    return _single(auto_pgd_batch, model, sample, np.array([label]), epsilon, iters, bounds)


def deepfool(model, sample, iters, overshoot=1.02, bounds=None):
    label = sample.label if isinstance(sample, TimeSeriesSample) else None
    if label is None:
        raise ValueError("deepfool needs a labeled sample")
    x = _values(sample)[None]
    adv, flipped = deepfool_batch(model, x, np.array([label]), iters, overshoot, bounds)
    return TimeSeriesSample(adv[0], label), bool(flipped[0])


def elastic_net(model, sample, label, iters, beta, step=0.05, bounds=None):
    if beta <= 0:
        raise ValueError("l1 weight must be > 0")
    x = _values(sample)[None]
    adv, found = elastic_net_batch(model, x, np.array([label]), iters, beta, step, bounds)
    if isinstance(sample, TimeSeriesSample):
        return TimeSeriesSample(adv[0], sample.label), bool(found[0])
    return adv[0], bool(found[0])


def boundary_attack(model, sample, iters, seed, bounds=None):
    """Single-sample decision-based attack; raises when no misclassified
    starting point turns up within 1000 draws."""
    label = sample.label if isinstance(sample, TimeSeriesSample) else None
    if label is None:
        raise ValueError("boundary attack needs a labeled sample")
    x = _values(sample)[None]
    adv, found = boundary_batch(model.predict, x, np.array([label]), iters, seed, bounds)
    if not found[0]:
        raise AttackInitializationError("attack initialization failed")
    return TimeSeriesSample(adv[0], label)


def attack_batch(model, x0: np.ndarray, y: np.ndarray, spec: AttackSpec, seed: int):
    """Dispatch one attack over a batch. Returns (adversarial, flags).

    Flags mark per-sample success/failure for the attacks that can fail
    (deepfool flip, elastic-net flip, boundary initialization); sign-step
    attacks always report True.
    """
    bounds = spec.extras.get("clip")
    kind = spec.kind
    if kind == "fgsm":
        adv = fgsm_batch(model, x0, y, spec.epsilon, bounds)
    elif kind == "bim":
        adv = bim_batch(model, x0, y, spec.epsilon, spec.iterations, bounds)
    elif kind == "mim":
        adv = mim_batch(model, x0, y, spec.epsilon, spec.iterations,
                        spec.extras.get("momentum_decay", 1.0), bounds)
    elif kind == "auto_pgd":
        adv, _ = auto_pgd_batch(model, x0, y, spec.epsilon, spec.iterations, bounds)
    elif kind == "deepfool":
        return deepfool_batch(model, x0, y, spec.iterations,
                              spec.extras.get("overshoot", 1.02), bounds)
    elif kind == "elastic_net":
        return elastic_net_batch(model, x0, y, spec.iterations,
                                 spec.extras.get("l1_weight", 0.01),
                                 spec.extras.get("step", 0.05), bounds)
    elif kind == "boundary":
        return boundary_batch(model.predict, x0, y, spec.iterations,
                              derive_seed(seed, "boundary"), bounds,
                              spec.extras.get("orth_step", 0.3),
                              spec.extras.get("contract_step", 0.05))
    else:  # pragma: no cover - guarded by AttackSpec
        raise ValueError(kind)
    return adv, np.ones(len(x0), dtype=bool)


def attack_dataset(model, samples, spec: AttackSpec, seed: int):
    """Element-wise attack application; labels and shapes are preserved.

    Per-sample failures surface in the flags array, never as exceptions.
    """
    if not samples:
        return [], np.zeros(0, dtype=bool)
    x0 = np.stack([s.values for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    adv, flags = attack_batch(model, x0, y, spec, seed)
    out = [TimeSeriesSample(adv[i], samples[i].label) for i in range(len(samples))]
    return out, flags


def attack_success_rate(model, clean_samples, attacked_samples) -> float:
    """Fraction of aligned samples whose predicted label changed."""
    if len(clean_samples) != len(attacked_samples):
        raise ValueError("clean and attacked sample lists differ in length")
    if not clean_samples:
        raise ValueError("empty sample list")
    clean = np.stack([s.values for s in clean_samples])
    attacked = np.stack([s.values for s in attacked_samples])
    return float(np.mean(model.predict(clean) != model.predict(attacked)))
