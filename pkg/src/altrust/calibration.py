"""Bayesian calibration of the discrete leverage/trust model to ROE data.

Model (calendar time, one observation per step ``dt``)::

    roe_t = g_t + L_t/(1-L_t) (g_t - r_t) + eps_t,   eps_t ~ N(0, sigma2)
    (L_{t+1}, T_{t+1}) = explicit Euler step of the leverage/trust recursion
    g_t = c1 in state s1, c2 in state s2, states follow a two-state
          continuous-time Markov chain with rates (lambda, mu)

Priors: ``sigma2 ~ IG(0.01, 0.01)``, ``c1, c2 ~ U(-0.25, 0.25)``,
``lambda, mu ~ U(0, 100)``, ``L1 ~ U(0.2, 0.3)``, ``T1 ~ U(0.3, 0.4)``;
``a = k = 0.05`` and ``dt = 0.1`` are held fixed.

The sampler is Metropolis-within-Gibbs. ``sigma2`` has a conjugate
inverse-gamma conditional. The other scalars use component-wise random-walk
Metropolis with proposals outside the prior support rejected. States are
updated by single-site flips. Because ``L_t`` depends on every earlier
state, the emission at ``t`` is not Markov in ``s``, so forward filtering /
backward sampling does not apply; a flip at ``t`` only requires the path
from ``t`` on to be recomputed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .trajectory import euler_state_step

__all__ = [
    "ObservationSeries",
    "MsmParams",
    "StatePath",
    "ChainConfig",
    "PosteriorDraws",
    "PosteriorSummary",
    "GibbsSampler",
    "forward_paths",
    "log_likelihood",
    "transition_matrix",
    "stationary_distribution",
    "log_state_prior",
    "gibbs_run",
    "generate_synthetic",
    "posterior_summary",
    "gelman_rubin",
    "credible_interval",
    "PRIOR",
    "INTERVAL_LEVELS",
]

# prior hyperparameters and supports
PRIOR = {
    "sigma2_shape": 1e-2,
    "sigma2_scale": 1e-2,
    "c": (-0.25, 0.25),
    "rate": (0.0, 100.0),
    "L1": (0.2, 0.3),
    "T1": (0.3, 0.4),
}
INTERVAL_LEVELS = (20, 40, 60, 80)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ObservationSeries:
    roe: np.ndarray
    rate: np.ndarray
    dates: tuple[str, ...] | None = None

    def __post_init__(self):
        roe = np.asarray(self.roe, dtype=float)
        rate = np.asarray(self.rate, dtype=float)
        if roe.ndim != 1 or roe.shape != rate.shape:
            raise ConfigError("roe and rate must be 1-d series of equal length")
        if roe.size == 0:
            raise ConfigError("observation series is empty")
        if not (np.all(np.isfinite(roe)) and np.all(np.isfinite(rate))):
            raise ConfigError("observation series contains non-finite values")
        if self.dates is not None and len(self.dates) != roe.size:
            raise ConfigError("dates must match the series length")
        object.__setattr__(self, "roe", roe)
        object.__setattr__(self, "rate", rate)
        if self.dates is not None:
            object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self):
        return self.roe.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)


@dataclass(frozen=True)
class MsmParams:
    c1: float
    c2: float
    sigma_eps2: float
    lambda_rate: float
    mu_rate: float
    L1: float
    T1: float
    a: float = 0.05
    k: float = 0.05
    dt: float = 0.1

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v!r}")
        if self.sigma_eps2 < 0:
            raise ConfigError("sigma_eps2 must be >= 0")
        if self.lambda_rate < 0 or self.mu_rate < 0:
            raise ConfigError("transition rates must be >= 0")
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")

    def in_support(self) -> bool:
        lo, hi = PRIOR["c"]
        rlo, rhi = PRIOR["rate"]
        return (self.sigma_eps2 > 0 and lo <= self.c1 <= hi and lo <= self.c2 <= hi
                and rlo <= self.lambda_rate <= rhi and rlo <= self.mu_rate <= rhi
                and PRIOR["L1"][0] <= self.L1 <= PRIOR["L1"][1]
                and PRIOR["T1"][0] <= self.T1 <= PRIOR["T1"][1])

    def g_levels(self) -> tuple[float, float]:
        return (self.c1, self.c2)


@dataclass(frozen=True)
class StatePath:
    """State labels (0 for s1, 1 for s2) with the implied leverage and trust."""

    s: np.ndarray
    L: np.ndarray
    T: np.ndarray
    valid: bool


def transition_matrix(lambda_rate: float, mu_rate: float, dt: float) -> np.ndarray:
    """Exact transition probabilities of the two-state chain over ``dt``."""
    if lambda_rate < 0 or mu_rate < 0:
        raise ConfigError("transition rates must be >= 0")
    s = lambda_rate + mu_rate
    if s == 0.0:
        return np.eye(2)
    decay = -math.expm1(-s * dt)
    p12 = lambda_rate / s * decay
    p21 = mu_rate / s * decay
    return np.array([[1.0 - p12, p12], [p21, 1.0 - p21]])


def stationary_distribution(lambda_rate: float, mu_rate: float) -> tuple[float, float]:
    """Long-run state probabilities; uniform when both rates vanish."""
    s = lambda_rate + mu_rate
    if s == 0.0:
        return (0.5, 0.5)
    return (mu_rate / s, lambda_rate / s)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def log_state_prior(s, lambda_rate: float, mu_rate: float, dt: float) -> float:
    """log p(s | lambda, mu), starting from the stationary distribution."""
    s = np.asarray(s, dtype=int)
    P = transition_matrix(lambda_rate, mu_rate, dt)
    pi = stationary_distribution(lambda_rate, mu_rate)
    counts = np.zeros((2, 2))
    np.add.at(counts, (s[:-1], s[1:]), 1)
    out = _log(pi[s[0]])
    for i in range(2):
        for j in range(2):
            if counts[i, j]:
                out += counts[i, j] * _log(P[i, j])
    return out


def _path(t0, L, T, s, c, rate, roe, a, k, dt, n, ssr0):
    """Leverage/trust/residuals from index ``t0`` given ``(L, T)`` there.

    Returns ``(Ls, Ts, cum)`` where ``cum[i]`` is the running sum of squared
    residuals through index ``t0 + i`` (starting from ``ssr0``), or None as
    soon as a state leaves (0, 1).
    """
    Ls, Ts, cum = [], [], []
    ssr = ssr0
    for t in range(t0, n):
        if not (0.0 < L < 1.0 and 0.0 < T < 1.0):
            return None
        g = c[s[t]]
        r = rate[t]
        e = roe[t] - g - L / (1.0 - L) * (g - r)
        ssr += e * e
        Ls.append(L)
        Ts.append(T)
        cum.append(ssr)
        L, T = euler_state_step(L, T, g, r, a, k, dt)
    return Ls, Ts, cum


def forward_paths(params: MsmParams, s, obs: ObservationSeries, k: float | None = None) -> StatePath:
    """Deterministic leverage/trust recursion for a given state sequence.

    ``k`` overrides ``params.k`` (for example ``k=0`` freezes trust).
    A path that leaves (0, 1) is returned with ``valid=False``; entries from
    the first offending index on are NaN.
    """
    s = np.asarray(s, dtype=int)
    n = len(obs)
    if s.shape != (n,):
        raise ConfigError(f"state sequence must have length {n}")
    if np.any((s != 0) & (s != 1)):
        raise ConfigError("states must be 0 (s1) or 1 (s2)")
    kk = params.k if k is None else k
    c = params.g_levels()
    L, T = params.L1, params.T1
    Ls = np.full(n, np.nan)
    Ts = np.full(n, np.nan)
    valid = True
    for t in range(n):
        if not (0.0 < L < 1.0 and 0.0 < T < 1.0):
            valid = False
            break
        Ls[t], Ts[t] = L, T
        L, T = euler_state_step(L, T, c[s[t]], obs.rate[t], params.a, kk, params.dt)
    return StatePath(s, Ls, Ts, valid)


def _loglik_from_ssr(ssr: float, n: int, sigma2: float) -> float:
    return -0.5 * n * (_LOG_2PI + math.log(sigma2)) - 0.5 * ssr / sigma2


def log_likelihood(params: MsmParams, s, obs: ObservationSeries) -> float:
    """Gaussian log-density of the observed ROE; -inf for an invalid path."""
    path = forward_paths(params, s, obs)
    if not path.valid:
        return -math.inf
    g = np.where(path.s == 0, params.c1, params.c2)
    resid = obs.roe - g - path.L / (1.0 - path.L) * (g - obs.rate)
    return _loglik_from_ssr(float(np.sum(resid * resid)), len(obs), params.sigma_eps2)


# -- sampler ---------------------------------------------------------------

BLOCKS = ("sigma2", "c", "rates", "initial", "states")


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 200
    burn_in: int = 100
    adapt_every: int = 50
    target_acceptance: tuple[float, float] = (0.2, 0.4)
    scale_c: float = 0.01
    scale_rate: float = 0.5
    scale_initial: float = 0.005
    blocks: tuple[str, ...] = BLOCKS
    init_retries: int = 50
    keep_paths: bool = True

    def __post_init__(self):
        if self.n_iter < 1:
            raise ConfigError("n_iter must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ConfigError("burn_in must lie in [0, n_iter)")
        if self.adapt_every < 1:
            raise ConfigError("adapt_every must be >= 1")
        lo, hi = self.target_acceptance
        if not 0 < lo < hi < 1:
            raise ConfigError("target acceptance band must satisfy 0 < lo < hi < 1")
        for name in ("scale_c", "scale_rate", "scale_initial"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        bad = set(self.blocks) - set(BLOCKS)
        if bad:
            raise ConfigError(f"unknown sampler blocks {sorted(bad)}")
        if self.init_retries < 1:
            raise ConfigError("init_retries must be >= 1")


@dataclass
class PosteriorDraws:
    c1: np.ndarray
    c2: np.ndarray
    sigma2: np.ndarray
    lambda_rate: np.ndarray
    mu_rate: np.ndarray
    L1: np.ndarray
    T1: np.ndarray
    states: np.ndarray          # (n_keep, n) with 0 = s1, 1 = s2
    L: np.ndarray | None        # (n_keep, n) leverage paths
    T: np.ndarray | None
    rate: np.ndarray            # observed r_t, kept for fitted ROE
    n_iter: int
    burn_in: int
    acceptance: dict
    scales: dict
    seed: int | None
    config: dict = field(default_factory=dict)

    SCALARS = ("c1", "c2", "sigma2", "lambda_rate", "mu_rate", "L1", "T1")

    def __len__(self):
        return self.c1.size

    def scalar(self, name: str) -> np.ndarray:
        if name not in self.SCALARS:
            raise KeyError(name)
        return getattr(self, name)


class GibbsSampler:
    """Metropolis-within-Gibbs chain over (c, sigma2, lambda, mu, L1, T1, s).

    Each ``update_*`` method performs one block update in place and returns
    whether something changed. ``step`` runs the enabled blocks in order.
    """

    def __init__(self, obs: ObservationSeries, config: ChainConfig = ChainConfig(),
                 seed: int | None = None, init: MsmParams | None = None, states=None,
                 fixed: MsmParams | None = None):
        self.obs = obs
        self.cfg = config
        self.rng = np.random.default_rng(seed)
        self.n = len(obs)
        self._roe = obs.roe.tolist()
        self._rate = obs.rate.tolist()
        self.scales = {"c1": config.scale_c, "c2": config.scale_c,
                       "lambda_rate": config.scale_rate, "mu_rate": config.scale_rate,
                       "L1": config.scale_initial, "T1": config.scale_initial}
        self._acc = {name: [0, 0] for name in (*self.scales, "states")}
        self._window = {name: [0, 0] for name in self.scales}
        base = fixed or init
        self._initialise(base, states)

    # -- state handling --------------------------------------------------

    def _initialise(self, init: MsmParams | None, states) -> None:
        n = self.n
        lo, hi = PRIOR["c"]
        for attempt in range(self.cfg.init_retries):
            if init is not None and attempt == 0:
                p = init
            else:
                p = self._default_init(attempt)
            if states is not None:
                s = [int(x) for x in states]
                if len(s) != n or any(x not in (0, 1) for x in s):
                    raise ConfigError("initial states must be a 0/1 sequence of the series length")
            else:
                s = self._nearest_states(p)
            self.c = [p.c1, p.c2]
            self.sigma2 = p.sigma_eps2 if p.sigma_eps2 > 0 else 0.01
            self.lam, self.mu = p.lambda_rate, p.mu_rate
            self.L1, self.T1 = p.L1, p.T1
            self.a, self.k, self.dt = p.a, p.k, p.dt
            self.s = s
            if not (lo <= self.c[0] <= hi and lo <= self.c[1] <= hi):
                continue
            if self._refresh():
                return
        raise NumericalError(f"no valid leverage/trust path after {self.cfg.init_retries} initialisations")

    def _implied_g(self, L: float = 0.25) -> np.ndarray:
        # invert the observation equation at a representative leverage
        return (self.obs.roe + self.obs.rate * L / (1.0 - L)) * (1.0 - L)

    def _default_init(self, attempt: int) -> MsmParams:
        lo, hi = PRIOR["c"]
        g_hat = self._implied_g()
        shrink = 0.8 ** attempt
        c1 = float(np.clip(np.percentile(g_hat, 75) * shrink, lo, hi))
        c2 = float(np.clip(np.percentile(g_hat, 25) * shrink, lo, hi))
        if attempt == 0:
            L1, T1 = 0.25, 0.35
        else:
            L1 = float(self.rng.uniform(*PRIOR["L1"]))
            T1 = float(self.rng.uniform(*PRIOR["T1"]))
        return MsmParams(c1, c2, 0.01, 1.0, 1.0, L1, T1)

    def _nearest_states(self, p: MsmParams) -> list[int]:
        g_hat = self._implied_g(p.L1)
        return [0 if abs(g - p.c1) <= abs(g - p.c2) else 1 for g in g_hat]

    def _compute(self, c, L1, T1, s, t0=0):
        if t0 == 0:
            return _path(0, L1, T1, s, c, self._rate, self._roe, self.a, self.k, self.dt, self.n, 0.0)
        return _path(t0, self.L[t0], self.T[t0], s, c, self._rate, self._roe,
                     self.a, self.k, self.dt, self.n, self.cum[t0 - 1])

    def _refresh(self) -> bool:
        out = self._compute(self.c, self.L1, self.T1, self.s)
        if out is None:
            return False
        self.L, self.T, self.cum = out
        self._counts = self._transition_counts()
        return True

    @property
    def ssr(self) -> float:
        return self.cum[-1]

    def _loglik(self, ssr: float) -> float:
        return _loglik_from_ssr(ssr, self.n, self.sigma2)

    def _transition_counts(self):
        counts = [[0, 0], [0, 0]]
        s = self.s
        for i in range(self.n - 1):
            counts[s[i]][s[i + 1]] += 1
        return counts

    def _log_state_prior(self, lam: float, mu: float) -> float:
        P = transition_matrix(lam, mu, self.dt)
        pi = stationary_distribution(lam, mu)
        out = _log(pi[self.s[0]])
        for i in range(2):
            for j in range(2):
                if self._counts[i][j]:
                    out += self._counts[i][j] * _log(P[i][j])
        return out

    @property
    def params(self) -> MsmParams:
        return MsmParams(self.c[0], self.c[1], self.sigma2, self.lam, self.mu, self.L1, self.T1,
                         self.a, self.k, self.dt)

    # -- blocks ----------------------------------------------------------

    def update_sigma2(self) -> bool:
        shape = PRIOR["sigma2_shape"] + 0.5 * self.n
        scale = PRIOR["sigma2_scale"] + 0.5 * self.ssr
        self.sigma2 = float(scale / self.rng.gamma(shape))
        return True

    def _mh(self, name: str, log_ratio: float) -> bool:
        acc = self._acc[name]
        win = self._window[name]
        acc[1] += 1
        win[1] += 1
        if log_ratio >= 0 or self.rng.random() < math.exp(log_ratio):
            acc[0] += 1
            win[0] += 1
            return True
        return False

    def _propose(self, name: str, value: float, lo: float, hi: float) -> float | None:
        prop = value + self.scales[name] * self.rng.standard_normal()
        if not lo <= prop <= hi:
            # outside the prior support: counted as a rejection
            self._acc[name][1] += 1
            self._window[name][1] += 1
            return None
        return prop

    def update_c(self) -> bool:
        changed = False
        lo, hi = PRIOR["c"]
        ll = self._loglik(self.ssr)
        for j, name in enumerate(("c1", "c2")):
            prop = self._propose(name, self.c[j], lo, hi)
            if prop is None:
                continue
            c_new = list(self.c)
            c_new[j] = prop
            out = self._compute(c_new, self.L1, self.T1, self.s)
            if out is None:
                self._mh(name, -math.inf)
                continue
            ll_new = self._loglik(out[2][-1])
            if self._mh(name, ll_new - ll):
                self.c = c_new
                self.L, self.T, self.cum = out
                ll = ll_new
                changed = True
        return changed

    def update_rates(self) -> bool:
        changed = False
        lo, hi = PRIOR["rate"]
        lp = self._log_state_prior(self.lam, self.mu)
        for name in ("lambda_rate", "mu_rate"):
            cur = self.lam if name == "lambda_rate" else self.mu
            prop = self._propose(name, cur, lo, hi)
            if prop is None:
                continue
            lam, mu = (prop, self.mu) if name == "lambda_rate" else (self.lam, prop)
            lp_new = self._log_state_prior(lam, mu)
            ratio = lp_new - lp if lp_new > -math.inf else -math.inf
            if self._mh(name, ratio):
                self.lam, self.mu = lam, mu
                lp = lp_new
                changed = True
        return changed

    def update_initial(self) -> bool:
        changed = False
        ll = self._loglik(self.ssr)
        for name in ("L1", "T1"):
            cur = self.L1 if name == "L1" else self.T1
            prop = self._propose(name, cur, *PRIOR[name])
            if prop is None:
                continue
            L1, T1 = (prop, self.T1) if name == "L1" else (self.L1, prop)
            out = self._compute(self.c, L1, T1, self.s)
            if out is None:
                self._mh(name, -math.inf)
                continue
            ll_new = self._loglik(out[2][-1])
            if self._mh(name, ll_new - ll):
                self.L1, self.T1 = L1, T1
                self.L, self.T, self.cum = out
                ll = ll_new
                changed = True
        return changed

    def update_states(self) -> bool:
        """One sequential sweep of single-site flips over t = 0..n-1."""
        n = self.n
        P = transition_matrix(self.lam, self.mu, self.dt)
        logP = [[_log(P[i][j]) for j in range(2)] for i in range(2)]
        pi = stationary_distribution(self.lam, self.mu)
        log_pi = [_log(pi[0]), _log(pi[1])]
        u = self.rng.random(n)
        changed = False
        acc = self._acc["states"]
        s = self.s
        for t in range(n):
            old = s[t]
            new = 1 - old
            # prior terms that involve s_t
            d_prior = 0.0
            if t == 0:
                d_prior += log_pi[new] - log_pi[old]
            else:
                d_prior += logP[s[t - 1]][new] - logP[s[t - 1]][old]
            if t < n - 1:
                d_prior += logP[new][s[t + 1]] - logP[old][s[t + 1]]
            acc[1] += 1
            if d_prior == -math.inf:
                continue
            s[t] = new
            out = self._compute(self.c, self.L1, self.T1, s, t)
            if out is None:
                s[t] = old
                continue
            ssr_new = out[2][-1]
            log_ratio = (self._loglik(ssr_new) - self._loglik(self.ssr)) + d_prior
            if log_ratio >= 0 or u[t] < math.exp(log_ratio):
                self.L[t:], self.T[t:], self.cum[t:] = out
                if t > 0:
                    self._counts[s[t - 1]][old] -= 1
                    self._counts[s[t - 1]][new] += 1
                if t < n - 1:
                    self._counts[old][s[t + 1]] -= 1
                    self._counts[new][s[t + 1]] += 1
                acc[0] += 1
                changed = True
            else:
                s[t] = old
        return changed

    def step(self) -> None:
        blocks = self.cfg.blocks
        if "sigma2" in blocks:
            self.update_sigma2()
        if "c" in blocks:
            self.update_c()
        if "rates" in blocks:
            self.update_rates()
        if "initial" in blocks:
            self.update_initial()
        if "states" in blocks:
            self.update_states()

    def adapt(self) -> None:
        """Rescale random-walk proposals towards the target acceptance band."""
        lo, hi = self.cfg.target_acceptance
        mid = 0.5 * (lo + hi)
        for name, (a, m) in self._window.items():
            if m == 0:
                continue
            rate = a / m
            if rate < lo:
                self.scales[name] *= max(0.1, rate / mid)
            elif rate > hi:
                self.scales[name] *= min(10.0, rate / mid)
            self._window[name] = [0, 0]

    def acceptance_rates(self) -> dict:
        return {k: (a / m if m else math.nan) for k, (a, m) in self._acc.items()}

    def reset_acceptance(self) -> None:
        self._acc = {k: [0, 0] for k in self._acc}


def gibbs_run(obs: ObservationSeries, config: ChainConfig = ChainConfig(), seed: int | None = None,
              init: MsmParams | None = None, states=None) -> PosteriorDraws:
    """Run one chain. Identical inputs and seed give identical draws.

    Proposal scales adapt every ``adapt_every`` iterations during burn-in
    and are frozen afterwards. Acceptance rates are reported over the
    retained iterations only.
    """
    cfg = config
    sampler = GibbsSampler(obs, cfg, seed, init=init, states=states)
    n_keep = cfg.n_iter - cfg.burn_in
    n = len(obs)
    rec = {name: np.empty(n_keep) for name in PosteriorDraws.SCALARS}
    st = np.empty((n_keep, n), dtype=np.int8)
    Lp = np.empty((n_keep, n)) if cfg.keep_paths else None
    Tp = np.empty((n_keep, n)) if cfg.keep_paths else None
    for it in range(cfg.n_iter):
        sampler.step()
        if it < cfg.burn_in:
            if (it + 1) % cfg.adapt_every == 0:
                sampler.adapt()
            if it + 1 == cfg.burn_in:
                sampler.reset_acceptance()
            continue
        j = it - cfg.burn_in
        p = sampler.params
        rec["c1"][j], rec["c2"][j] = p.c1, p.c2
        rec["sigma2"][j] = p.sigma_eps2
        rec["lambda_rate"][j], rec["mu_rate"][j] = p.lambda_rate, p.mu_rate
        rec["L1"][j], rec["T1"][j] = p.L1, p.T1
        st[j] = sampler.s
        if Lp is not None:
            Lp[j] = sampler.L
            Tp[j] = sampler.T
    return PosteriorDraws(**rec, states=st, L=Lp, T=Tp, rate=obs.rate.copy(), n_iter=cfg.n_iter,
                          burn_in=cfg.burn_in, acceptance=sampler.acceptance_rates(),
                          scales=dict(sampler.scales), seed=seed, config=asdict(cfg))


# -- synthetic data --------------------------------------------------------

def generate_synthetic(params: MsmParams, n: int, seed: int | None = None, rate=None,
                       initial_state: int | None = None, max_retries: int = 100,
                       start: str = "2000-01") -> tuple[ObservationSeries, StatePath]:
    """Simulate states, leverage/trust paths and noisy ROE observations.

    ``rate`` defaults to a constant 3% per year. The first state is drawn
    from the stationary distribution unless ``initial_state`` is given.
    State sequences whose path leaves (0, 1) are redrawn, at most
    ``max_retries`` times. Monthly ISO dates start at ``start``.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rate = np.full(n, 0.03) if rate is None else np.asarray(rate, dtype=float)
    if rate.shape != (n,):
        raise ConfigError(f"rate series must have length {n}")
    rng = np.random.default_rng(seed)
    P = transition_matrix(params.lambda_rate, params.mu_rate, params.dt)
    pi = stationary_distribution(params.lambda_rate, params.mu_rate)
    dummy = ObservationSeries(np.zeros(n), rate)
    for _ in range(max_retries):
        s = np.empty(n, dtype=int)
        s[0] = initial_state if initial_state is not None else int(rng.random() < pi[1])
        u = rng.random(n)
        for t in range(1, n):
            s[t] = s[t - 1] if u[t] >= P[s[t - 1], 1 - s[t - 1]] else 1 - s[t - 1]
        path = forward_paths(params, s, dummy)
        if path.valid:
            break
    else:
        raise NumericalError(f"no valid synthetic path after {max_retries} state draws")
    g = np.where(s == 0, params.c1, params.c2)
    mean = g + path.L / (1.0 - path.L) * (g - rate)
    noise = rng.standard_normal(n) * math.sqrt(params.sigma_eps2)
    roe = mean + noise
    return ObservationSeries(roe, rate, _month_range(start, n)), path


def _month_range(start: str, n: int) -> tuple[str, ...]:
    y, m = (int(x) for x in start.split("-")[:2])
    out = []
    for _ in range(n):
        out.append(f"{y:04d}-{m:02d}-01")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return tuple(out)


# -- summaries -------------------------------------------------------------

def _bands(x: np.ndarray, axis=0) -> dict:
    out = {"median": np.median(x, axis=axis)}
    for lev in INTERVAL_LEVELS:
        lo, hi = np.percentile(x, [50 - lev / 2, 50 + lev / 2], axis=axis)
        out[f"lo{lev}"] = lo
        out[f"hi{lev}"] = hi
    return out


@dataclass
class PosteriorSummary:
    params: dict            # name -> bands
    series: dict            # quantity -> bands over time
    p_s2: np.ndarray        # posterior probability of state s2 per time step
    n_draws: int


def posterior_summary(draws: PosteriorDraws) -> PosteriorSummary:
    """Medians and central 20/40/60/80% intervals, plus P(s = s2) per step."""
    if len(draws) == 0:
        raise ConfigError("no retained draws to summarise")
    params = {name: {k: float(v) for k, v in _bands(draws.scalar(name)).items()}
              for name in PosteriorDraws.SCALARS}
    series = {}
    g = np.where(draws.states == 0, draws.c1[:, None], draws.c2[:, None])
    series["g"] = _bands(g)
    if draws.L is not None:
        series["L"] = _bands(draws.L)
        series["T"] = _bands(draws.T)
        series["rE"] = _bands(g + draws.L / (1.0 - draws.L) * (g - draws.rate[None, :]))
    p_s2 = draws.states.mean(axis=0)
    return PosteriorSummary(params, series, p_s2, len(draws))


def credible_interval(x: np.ndarray, level: float) -> tuple[float, float]:
    lo, hi = np.percentile(x, [50 - level / 2, 50 + level / 2])
    return float(lo), float(hi)


def gelman_rubin(chains: list[np.ndarray]) -> float:
    """Potential scale reduction factor for one scalar over several chains."""
    x = np.array([np.asarray(c, dtype=float) for c in chains])
    m, n = x.shape
    if m < 2 or n < 2:
        raise ConfigError("need at least two chains of length >= 2")
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    var = (n - 1) / n * W + B / n
    return float(math.sqrt(var / W)) if W > 0 else math.nan
