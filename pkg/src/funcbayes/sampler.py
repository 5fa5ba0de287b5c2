"""Adaptive No-U-Turn Hamiltonian Monte Carlo.

Multinomial trajectory sampling with the generalized no-U-turn criterion, a
diagonal Euclidean metric estimated over doubling warmup windows, and
dual-averaging step-size adaptation. Each chain owns an RNG stream derived
from (seed, chain index).
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .config import SamplerConfig
from .diagnostics import diagnostics
from .errors import DivergenceWarning, InitError, NumericalError
from .posteriors import ModelPosterior
from .types import PosteriorDraws

logger = logging.getLogger(__name__)

MAX_DELTA_H = 1000.0
DIVERGENCE_WARN_FRACTION = 0.1


@dataclass
class _Point:
    theta: np.ndarray
    p: np.ndarray
    value: float
    grad: np.ndarray


@dataclass
class _Subtree:
    valid: bool
    beg: _Point
    end: _Point
    propose: _Point
    log_weight: float
    rho: np.ndarray
    n_leapfrog: int
    sum_metro: float
    divergent: bool


class HamiltonianSystem:
    """Separable Hamiltonian with a diagonal mass matrix M = diag(1 / inv_mass)."""

    def __init__(self, model: ModelPosterior, inv_mass: np.ndarray) -> None:
        self.model = model
        self.inv_mass = np.asarray(inv_mass, dtype=float)

    def evaluate(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            value, grad = self.model.log_density(theta)
        except NumericalError:
            return -np.inf, np.zeros_like(theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros_like(theta)
        return value, grad

    def point(self, theta: np.ndarray, p: np.ndarray) -> _Point:
        value, grad = self.evaluate(theta)
        return _Point(theta=theta, p=p, value=value, grad=grad)

    def hamiltonian(self, pt: _Point) -> float:
        if not np.isfinite(pt.value):
            return np.inf
        return -pt.value + 0.5 * float(pt.p @ (self.inv_mass * pt.p))

    def sharp(self, p: np.ndarray) -> np.ndarray:
        return self.inv_mass * p

    def leapfrog(self, pt: _Point, step: float) -> _Point:
        p_half = pt.p + 0.5 * step * pt.grad
        theta = pt.theta + step * self.inv_mass * p_half
        value, grad = self.evaluate(theta)
        if not np.isfinite(value):
            return _Point(theta=theta, p=p_half, value=value, grad=grad)
        return _Point(theta=theta, p=p_half + 0.5 * step * grad, value=value, grad=grad)

    def sample_momentum(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.inv_mass.size) / np.sqrt(self.inv_mass)


def _no_uturn(sharp_a: np.ndarray, sharp_b: np.ndarray, rho: np.ndarray) -> bool:
    return float(sharp_a @ rho) > 0 and float(sharp_b @ rho) > 0


class StepSizeAdapter:
    """Nesterov dual averaging on log step size."""

    def __init__(self, target: float, gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75) -> None:
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(1.0)

    def restart(self, step_size: float) -> None:
        self.mu = np.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def learn(self, accept_stat: float) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat)
        x = self.mu - self.s_bar * np.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return float(np.exp(x))

    def final(self) -> float:
        return float(np.exp(self.x_bar))


class _Welford:
    def __init__(self, dim: int) -> None:
        self.dim = dim
        self.restart()

    def restart(self) -> None:
        self.n = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        return self.m2 / (self.n - 1.0)


class WarmupSchedule:
    """Fast/slow/fast warmup windows for metric estimation."""

    def __init__(self, num_warmup: int, init_buffer: int = 75, term_buffer: int = 50, base_window: int = 25) -> None:
        self.num_warmup = num_warmup
        self.enabled = num_warmup >= 20
        if self.enabled and init_buffer + base_window + term_buffer > num_warmup:
            init_buffer = int(0.15 * num_warmup)
            term_buffer = int(0.1 * num_warmup)
            base_window = num_warmup - (init_buffer + term_buffer)
            logger.debug(
                "warmup too short for default windows; using init=%d window=%d term=%d",
                init_buffer,
                base_window,
                term_buffer,
            )
        self.init_buffer = init_buffer
        self.term_buffer = term_buffer
        self.window_size = base_window
        self.counter = 0
        self.next_window = init_buffer + base_window - 1

    def in_window(self) -> bool:
        return (
            self.enabled
            and self.counter >= self.init_buffer
            and self.counter < self.num_warmup - self.term_buffer
            and self.counter != self.num_warmup
        )

    def window_ends(self) -> bool:
        return self.enabled and self.counter == self.next_window and self.counter != self.num_warmup

    def advance_window(self) -> None:
        last = self.num_warmup - self.term_buffer - 1
        if self.next_window == last:
            return
        self.window_size *= 2
        self.next_window = self.counter + self.window_size
        if self.next_window != last and self.next_window + 2 * self.window_size >= self.num_warmup - self.term_buffer:
            self.next_window = last
        logger.debug("next metric window ends at iteration %d", self.next_window)


class NutsChain:
    def __init__(self, model: ModelPosterior, config: SamplerConfig, chain: int) -> None:
        self.model = model
        self.config = config
        self.chain = chain
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, chain]))
        self.system = HamiltonianSystem(model, np.ones(model.layout.size))
        self.step_size = 1.0

    def initial_point(self) -> np.ndarray:
        dim = self.model.layout.size
        for attempt in range(self.config.max_init_tries):
            theta = self.rng.uniform(-self.config.init_radius, self.config.init_radius, size=dim)
            value, _ = self.system.evaluate(theta)
            if np.isfinite(value):
                if attempt:
                    logger.debug("chain %d initialized after %d retries", self.chain, attempt)
                return theta
        raise InitError(
            f"chain {self.chain}: non-finite log density at {self.config.max_init_tries} jittered initial points"
        )

    def _find_step_size(self, pt: _Point) -> None:
        system = self.system
        log_target = np.log(0.8)
        p = system.sample_momentum(self.rng)
        start = _Point(pt.theta, p, pt.value, pt.grad)
        h0 = system.hamiltonian(start)
        delta_h = h0 - system.hamiltonian(system.leapfrog(start, self.step_size))
        direction = 1 if delta_h > log_target else -1
        for _ in range(100):
            p = system.sample_momentum(self.rng)
            start = _Point(pt.theta, p, pt.value, pt.grad)
            h0 = system.hamiltonian(start)
            delta_h = h0 - system.hamiltonian(system.leapfrog(start, self.step_size))
            if direction == 1 and not delta_h > log_target:
                break
            if direction == -1 and not delta_h < log_target:
                break
            self.step_size = self.step_size * 2.0 if direction == 1 else self.step_size / 2.0
            if self.step_size > 1e7 or self.step_size < 1e-10:
                raise NumericalError(f"chain {self.chain}: step size search diverged at {self.step_size}")

    def _leaf(self, pt: _Point, direction: int, h0: float) -> _Subtree:
        new = self.system.leapfrog(pt, direction * self.step_size)
        h = self.system.hamiltonian(new)
        if np.isnan(h):
            h = np.inf
        divergent = h - h0 > MAX_DELTA_H
        log_weight = h0 - h
        metro = 1.0 if log_weight > 0 else float(np.exp(log_weight))
        return _Subtree(
            valid=not divergent,
            beg=new,
            end=new,
            propose=new,
            log_weight=log_weight,
            rho=new.p.copy(),
            n_leapfrog=1,
            sum_metro=metro,
            divergent=divergent,
        )

    def _persist(self, init: _Subtree, final: _Subtree) -> bool:
        """Generalized no-U-turn check across the join of two adjacent subtrees."""
        sharp = self.system.sharp
        rho = init.rho + final.rho
        if not _no_uturn(sharp(init.beg.p), sharp(final.end.p), rho):
            return False
        if not _no_uturn(sharp(init.beg.p), sharp(final.beg.p), init.rho + final.beg.p):
            return False
        return _no_uturn(sharp(init.end.p), sharp(final.end.p), final.rho + init.end.p)

    def _build_tree(self, pt: _Point, depth: int, direction: int, h0: float) -> _Subtree:
        if depth == 0:
            return self._leaf(pt, direction, h0)
        init = self._build_tree(pt, depth - 1, direction, h0)
        if not init.valid:
            return init
        final = self._build_tree(init.end, depth - 1, direction, h0)
        n_leapfrog = init.n_leapfrog + final.n_leapfrog
        sum_metro = init.sum_metro + final.sum_metro
        if not final.valid:
            final.n_leapfrog, final.sum_metro = n_leapfrog, sum_metro
            return final
        log_weight = float(np.logaddexp(init.log_weight, final.log_weight))
        if self.rng.uniform() < np.exp(final.log_weight - log_weight):
            propose = final.propose
        else:
            propose = init.propose
        return _Subtree(
            valid=self._persist(init, final),
            beg=init.beg,
            end=final.end,
            propose=propose,
            log_weight=log_weight,
            rho=init.rho + final.rho,
            n_leapfrog=n_leapfrog,
            sum_metro=sum_metro,
            divergent=False,
        )

    def transition(self, current: _Point) -> Tuple[_Point, float, bool, int]:
        system = self.system
        p0 = system.sample_momentum(self.rng)
        start = _Point(current.theta, p0, current.value, current.grad)
        h0 = system.hamiltonian(start)

        trajectory = _Subtree(
            valid=True,
            beg=start,
            end=start,
            propose=start,
            log_weight=0.0,
            rho=p0.copy(),
            n_leapfrog=0,
            sum_metro=0.0,
            divergent=False,
        )
        bck, fwd = start, start
        sample = start
        depth = 0
        n_leapfrog = 0
        sum_metro = 0.0
        divergent = False

        while depth < self.config.max_tree_depth:
            direction = 1 if self.rng.uniform() > 0.5 else -1
            origin = fwd if direction > 0 else bck
            sub = self._build_tree(origin, depth, direction, h0)
            n_leapfrog += sub.n_leapfrog
            sum_metro += sub.sum_metro
            if not sub.valid:
                divergent = sub.divergent
                break
            depth += 1

            if sub.log_weight > trajectory.log_weight:
                sample = sub.propose
            elif self.rng.uniform() < np.exp(sub.log_weight - trajectory.log_weight):
                sample = sub.propose

            if direction > 0:
                init = _Subtree(True, bck, fwd, sample, trajectory.log_weight, trajectory.rho, 0, 0.0, False)
            else:
                init = _Subtree(True, fwd, bck, sample, trajectory.log_weight, trajectory.rho, 0, 0.0, False)
            persist = self._persist(init, sub)
            if direction > 0:
                fwd = sub.end
            else:
                bck = sub.end
            trajectory.log_weight = float(np.logaddexp(trajectory.log_weight, sub.log_weight))
            trajectory.rho = trajectory.rho + sub.rho
            if not persist:
                break

        accept_stat = sum_metro / n_leapfrog if n_leapfrog else 0.0
        result = _Point(sample.theta, sample.p, sample.value, sample.grad)
        return result, accept_stat, divergent, depth

    def run(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
        cfg = self.config
        theta = self.initial_point()
        current = self.system.point(theta, np.zeros_like(theta))
        self._find_step_size(current)

        adapter = StepSizeAdapter(cfg.target_accept)
        adapter.restart(self.step_size)
        schedule = WarmupSchedule(cfg.n_warmup, cfg.init_buffer, cfg.term_buffer, cfg.base_window)
        welford = _Welford(theta.size)

        for _ in range(cfg.n_warmup):
            current, accept_stat, _, _ = self.transition(current)
            self.step_size = adapter.learn(accept_stat)
            if schedule.in_window():
                welford.add(current.theta)
            if schedule.window_ends():
                schedule.advance_window()
                n = welford.n
                var = (n / (n + 5.0)) * welford.variance() + 1e-3 * (5.0 / (n + 5.0))
                self.system.inv_mass = var
                welford.restart()
                current = self.system.point(current.theta, current.p)
                self._find_step_size(current)
                adapter.restart(self.step_size)
            schedule.counter += 1
        if cfg.n_warmup > 0:
            self.step_size = adapter.final()
        logger.info("chain %d: warmup done, step size %.4g", self.chain, self.step_size)

        q = cfg.n_draws
        draws = np.empty((q, theta.size))
        divergent = np.zeros(q, dtype=bool)
        accept = np.empty(q)
        depths = np.empty(q, dtype=int)
        for i in range(q):
            current, accept[i], divergent[i], depths[i] = self.transition(current)
            draws[i] = current.theta
        return draws, divergent, accept, depths, self.step_size


def _run_chain(model: ModelPosterior, config: SamplerConfig, chain: int):
    return NutsChain(model, config, chain).run()


def run_hmc(model: ModelPosterior, config: SamplerConfig) -> PosteriorDraws:
    logger.info(
        "sampling %s posterior: dim=%d chains=%d iter=%d warmup=%d",
        getattr(model, "family", type(model).__name__),
        model.layout.size,
        config.n_chains,
        config.n_iter,
        config.n_warmup,
    )
    chains = range(config.n_chains)
    if config.parallel and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=config.n_chains) as pool:
            results = list(pool.map(lambda c: _run_chain(model, config, c), chains))
    else:
        results = [_run_chain(model, config, c) for c in chains]

    draws = np.stack([r[0] for r in results])
    divergent = np.stack([r[1] for r in results])
    result = PosteriorDraws(
        draws=draws,
        layout=model.layout,
        divergences=divergent.sum(axis=1),
        accept_stat=np.array([r[2].mean() if r[2].size else np.nan for r in results]),
        step_size=np.array([r[4] for r in results]),
        tree_depth=np.array([r[3].mean() if r[3].size else np.nan for r in results]),
    )

    fraction = divergent.mean() if divergent.size else 0.0
    if fraction > DIVERGENCE_WARN_FRACTION:
        message = f"{fraction:.1%} of post-warmup transitions diverged"
        result.warnings.append(message)
        logger.warning(message)
        warnings.warn(message, DivergenceWarning, stacklevel=2)

    if result.num_chains >= 2 and result.num_draws >= 4:
        stats = diagnostics(result)
        result.rhat, result.ess = stats["rhat"], stats["ess"]
        worst = np.nanmax(result.rhat) if np.any(np.isfinite(result.rhat)) else np.nan
        if np.isfinite(worst) and worst > 1.01:
            message = f"max rhat {worst:.3f} exceeds 1.01"
            result.warnings.append(message)
            logger.warning(message)
    return result


def collect_chain_stats(draws: PosteriorDraws) -> List[dict]:
    """Per-chain sampler statistics as plain records."""
    records = []
    for c in range(draws.num_chains):
        records.append(
            {
                "chain": c,
                "divergences": int(draws.divergences[c]),
                "accept_stat": float(draws.accept_stat[c]),
                "step_size": float(draws.step_size[c]),
                "tree_depth": float(draws.tree_depth[c]) if draws.tree_depth is not None else None,
            }
        )
    return records
