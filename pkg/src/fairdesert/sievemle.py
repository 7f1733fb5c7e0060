"""Sieve maximum likelihood for the latent decision rule and mechanism.

Fits xi = (tau0, tau1, alpha, beta) by maximizing the empirical conditional
log-likelihood of Y given (S, Z, X) over logistic series families, with each
function parametrized as c + (1 - 2c) expit{gamma' phi(x)} so the floor
constraint holds by construction.  The relevance requirement
|tau1 - tau0| >= c enters as a smooth hinge penalty and is re-checked after
optimization.  Three sensitivity variants replace the stratum mixture
components: prescribed legitimate support (kappa), two-sided unfairness
(delta), and a z-differential mechanism (zeta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisConfig, SeriesFunction, expand_matrix, expit, logit
from .data import Dataset, require_positivity
from .errors import FairdesertError, FitError
from .identify import PointwiseMu, recover_mechanism
from .optimize import bfgs_minimize
from .regress import fit_mu_models

VARIANTS = ("baseline", "kappa", "delta", "zeta")


@dataclass(frozen=True)
class SensitivityParams:
    """Misspecification settings selecting a model variant.

    ``v0``/``v1`` are the two sensitivity levels for the chosen variant -
    (kappa0, kappa1), (delta0, delta1) or (zeta0, zeta1) - each either a
    constant or a callable mapping the scaled covariate matrix to per-row
    values (for grid-tabulated, x-dependent settings).
    """

    variant: str = "baseline"
    v0: object = 0.0
    v1: object = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for v in (self.v0, self.v1):
            if not callable(v):
                self._validate_value(float(v))

    def _validate_value(self, v):
        if self.variant == "delta" and not 0.0 <= v < 1.0:
            raise ValueError("delta parameters must lie in [0, 1)")
        if self.variant == "zeta" and v <= -1.0:
            raise ValueError("zeta parameters must exceed -1")
        if self.variant == "kappa" and not -1.0 <= v <= 1.0:
            raise ValueError("kappa parameters must lie in [-1, 1]")

    def evaluate(self, x):
        """Per-row sensitivity values (v0_i, v1_i) at the scaled covariates."""
        n = np.atleast_2d(x).shape[0]
        out = []
        for v in (self.v0, self.v1):
            vals = np.asarray(v(x) if callable(v) else v, dtype=np.float64)
            vals = np.broadcast_to(vals, (n,)).copy()
            for value in (np.min(vals), np.max(vals)):
                self._validate_value(float(value))
            out.append(vals)
        return out[0], out[1]

    def is_zero(self):
        return (not callable(self.v0) and not callable(self.v1)
                and float(self.v0) == 0.0 and float(self.v1) == 0.0)

    def to_json_dict(self):
        return {
            "variant": self.variant,
            "v0": None if callable(self.v0) else float(self.v0),
            "v1": None if callable(self.v1) else float(self.v1),
        }

    @classmethod
    def baseline(cls):
        return cls("baseline", 0.0, 0.0)


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings for the sieve fit.

    ``restarts`` counts total initializations: the plug-in start derived from
    the closed-form inversion (always included when it can be built) plus
    randomized stratum-mean intercept starts.  ``init_coefficients`` prepends
    a warm start (used by sensitivity sweeps).
    """

    restarts: int = 10
    max_iter: int = 500
    grad_tol: float = 1e-8
    floor: float = 1e-3
    relevance_penalty: float = 1e3
    relevance_margin: float | None = None
    ridge_init: float = 1e-8
    ridge: float = 0.0
    seed: int = 0
    include_plugin_start: bool = True
    init_coefficients: np.ndarray | None = None

    @property
    def margin(self):
        return self.floor if self.relevance_margin is None else self.relevance_margin


@dataclass(frozen=True)
class FitDiagnostics:
    criterion: float
    penalty: float
    grad_norm: float
    iterations: int
    restarts_used: int
    converged: bool
    relevance_violation_frac: float
    n: int

    def to_json_dict(self):
        return {
            "criterion": self.criterion,
            "penalty": self.penalty,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "relevance_violation_frac": self.relevance_violation_frac,
            "n": self.n,
        }


@dataclass(frozen=True)
class NuisanceEstimates:
    """Fitted nuisance functions plus the variant they were fit under."""

    tau0: SeriesFunction
    tau1: SeriesFunction
    alpha: SeriesFunction
    beta: SeriesFunction
    variant: str = "baseline"
    sensitivity: SensitivityParams = field(default_factory=SensitivityParams.baseline)
    diagnostics: FitDiagnostics | None = None

    @property
    def config(self):
        return self.tau0.config

    @property
    def floor(self):
        return self.tau0.lo

    def values(self, x):
        """Evaluate (tau0, tau1, alpha, beta) at scaled covariates; (n, 4) columns."""
        phi = expand_matrix(x, self.config)
        return tuple(f.eval_features(phi) for f in (self.tau0, self.tau1, self.alpha, self.beta))

    def coefficient_stack(self):
        return np.concatenate(
            [self.tau0.gamma, self.tau1.gamma, self.alpha.gamma, self.beta.gamma]
        )


def stratum_probability(t0, t1, a, b, s, z, variant="baseline", sv0=0.0, sv1=0.0):
    """f(Y=1 | s, z, x) for candidate function values under a model variant.

    Values are clamped into [1e-12, 1-1e-12] for log safety; the clamp only
    binds for extreme sensitivity settings.
    """
    t0, t1, a, b, s, z, sv0, sv1 = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (t0, t1, a, b, s, z, sv0, sv1))
    )
    tz = np.where(z == 1, t1, t0)
    s1 = s == 1
    p = np.empty_like(tz)
    if variant == "baseline":
        p[~s1] = (tz * (1 - a))[~s1]
        p[s1] = (b + tz * (1 - b))[s1]
    elif variant == "kappa":
        kz = np.where(z == 1, sv1, sv0)
        p[~s1] = (tz * (1 - a))[~s1]
        p[s1] = (b + (tz + kz) * (1 - b))[s1]
    elif variant == "delta":
        p[~s1] = (sv0 + tz * (1 - sv0 - a))[~s1]
        p[s1] = (b + tz * (1 - sv1 - b))[s1]
    elif variant == "zeta":
        f0 = np.where(z == 1, 1 + sv0, 1.0)
        f1 = np.where(z == 1, 1 + sv1, 1.0)
        p[~s1] = (f0 * tz * (1 - a))[~s1]
        p[s1] = (1 - f1 * (1 - tz) * (1 - b))[s1]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.clip(p, 1e-12, 1 - 1e-12)


def model_prob(xi, s, z, x, variant="baseline", sensitivity=None):
    """f(Y=1 | s, z, x) for a candidate xi (NuisanceEstimates or 4 callables)."""
    sensitivity = sensitivity or SensitivityParams(variant)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if isinstance(xi, NuisanceEstimates):
        t0, t1, a, b = xi.values(x)
    else:
        t0, t1, a, b = (np.asarray(f(x), dtype=np.float64) for f in xi)
    sv0, sv1 = sensitivity.evaluate(x)
    out = stratum_probability(t0, t1, a, b, s, z, variant, sv0, sv1)
    return float(out[0]) if out.shape == (1,) else out


class SieveProblem:
    """Penalized negative log-likelihood with analytic gradient.

    Packs the four coefficient vectors as [tau0, tau1, alpha, beta]; each
    function is c + (1 - 2c) expit(gamma' phi).  With ``precondition`` the
    feature columns are orthonormalized (QR) and optimization runs in the
    rotated coordinates - the polynomial Gram matrix is badly conditioned and
    quasi-Newton convergence suffers without this; `to_original` maps packed
    coefficients back to the raw basis exactly.
    """

    def __init__(self, data: Dataset, config: BasisConfig, options: FitOptions,
                 variant="baseline", sensitivity=None, precondition=False):
        sensitivity = sensitivity or SensitivityParams(variant)
        if sensitivity.variant != variant:
            raise ValueError("sensitivity variant does not match the requested variant")
        self.config = config
        self.options = options
        self.variant = variant
        self.sensitivity = sensitivity
        self.phi = expand_matrix(data.x, config)
        self.n, self.j = self.phi.shape
        self.r_block = None
        if precondition:
            q, r = np.linalg.qr(self.phi)
            if np.min(np.abs(np.diag(r))) > 1e-10 * np.max(np.abs(np.diag(r))):
                scale = math.sqrt(self.n)
                self.phi = q * scale
                self.r_block = r / scale
        self.y = np.asarray(data.y, dtype=np.float64)
        self.s = np.asarray(data.s, dtype=np.float64)
        self.z = np.asarray(data.z, dtype=np.float64)
        self.sv0, self.sv1 = sensitivity.evaluate(data.x)
        self.c = options.floor
        self.margin = options.margin
        self.lam = options.relevance_penalty
        self.ridge = options.ridge

    @property
    def dim(self):
        return 4 * self.j

    def unpack(self, stack):
        j = self.j
        return stack[:j], stack[j:2 * j], stack[2 * j:3 * j], stack[3 * j:]

    def to_original(self, stack):
        """Map packed coefficients from working coordinates to the raw basis."""
        if self.r_block is None:
            return np.asarray(stack, dtype=np.float64)
        return np.concatenate([np.linalg.solve(self.r_block, g) for g in self.unpack(stack)])

    def from_original(self, stack):
        if self.r_block is None:
            return np.asarray(stack, dtype=np.float64)
        return np.concatenate([self.r_block @ g for g in self.unpack(stack)])

    def functions(self, stack):
        """Function values, expit derivative factors, and logits per point."""
        c = self.c
        vals, slopes, logits = [], [], []
        for gamma in self.unpack(stack):
            u = self.phi @ gamma
            sig = expit(u)
            vals.append(c + (1 - 2 * c) * sig)
            slopes.append((1 - 2 * c) * sig * (1 - sig))
            logits.append(u)
        return vals, slopes, logits

    def value_grad(self, stack):
        (t0, t1, a, b), slopes, logits = self.functions(stack)
        s1 = self.s == 1
        z1 = self.z == 1
        tz = np.where(z1, t1, t0)
        dp_dt = np.empty(self.n)
        dp_da = np.zeros(self.n)
        dp_db = np.zeros(self.n)
        p = np.empty(self.n)
        if self.variant == "baseline":
            p[~s1] = (tz * (1 - a))[~s1]
            p[s1] = (b + tz * (1 - b))[s1]
            dp_dt[~s1] = (1 - a)[~s1]
            dp_dt[s1] = (1 - b)[s1]
            dp_da[~s1] = -tz[~s1]
            dp_db[s1] = (1 - tz)[s1]
        elif self.variant == "kappa":
            kz = np.where(z1, self.sv1, self.sv0)
            p[~s1] = (tz * (1 - a))[~s1]
            p[s1] = (b + (tz + kz) * (1 - b))[s1]
            dp_dt[~s1] = (1 - a)[~s1]
            dp_dt[s1] = (1 - b)[s1]
            dp_da[~s1] = -tz[~s1]
            dp_db[s1] = (1 - tz - kz)[s1]
        elif self.variant == "delta":
            p[~s1] = (self.sv0 + tz * (1 - self.sv0 - a))[~s1]
            p[s1] = (b + tz * (1 - self.sv1 - b))[s1]
            dp_dt[~s1] = (1 - self.sv0 - a)[~s1]
            dp_dt[s1] = (1 - self.sv1 - b)[s1]
            dp_da[~s1] = -tz[~s1]
            dp_db[s1] = (1 - tz)[s1]
        elif self.variant == "zeta":
            f0 = np.where(z1, 1 + self.sv0, 1.0)
            f1 = np.where(z1, 1 + self.sv1, 1.0)
            p[~s1] = (f0 * tz * (1 - a))[~s1]
            p[s1] = (1 - f1 * (1 - tz) * (1 - b))[s1]
            dp_dt[~s1] = (f0 * (1 - a))[~s1]
            dp_dt[s1] = (f1 * (1 - b))[s1]
            dp_da[~s1] = (-f0 * tz)[~s1]
            dp_db[s1] = (f1 * (1 - tz))[s1]
        else:
            raise ValueError(f"unknown variant {self.variant!r}")
        p = np.clip(p, 1e-12, 1 - 1e-12)
        value = -np.mean(self.y * np.log(p) + (1 - self.y) * np.log1p(-p))
        dneg_dp = (p - self.y) / (p * (1 - p)) / self.n

        diff = t1 - t0
        hinge = np.maximum(0.0, self.margin - np.abs(diff))
        value += self.lam * np.mean(hinge ** 2)
        dpen_ddiff = self.lam * 2 * hinge * (-np.sign(diff)) / self.n

        w_t = dneg_dp * dp_dt
        weights = [
            np.where(z1, 0.0, w_t) - dpen_ddiff,
            np.where(z1, w_t, 0.0) + dpen_ddiff,
            dneg_dp * dp_da,
            dneg_dp * dp_db,
        ]
        grad = np.concatenate(
            [self.phi.T @ (w * slope) for w, slope in zip(weights, slopes)]
        )
        if self.ridge > 0:
            # coordinate-free shrinkage of the demeaned logit functions;
            # stabilizes the decomposition into (tau, alpha, beta) at small n
            j = self.j
            for k, u in enumerate(logits):
                centered = u - u.mean()
                value += 0.5 * self.ridge * float(centered @ centered) / self.n
                grad[k * j:(k + 1) * j] += self.ridge * (self.phi.T @ centered) / self.n
        return float(value), grad

    def criterion(self, stack):
        """Mean conditional log-likelihood (no penalty) at the packed point."""
        (t0, t1, a, b), _, _ = self.functions(stack)
        p = stratum_probability(t0, t1, a, b, self.s, self.z, self.variant, self.sv0, self.sv1)
        return float(np.mean(self.y * np.log(p) + (1 - self.y) * np.log1p(-p)))


def negloglik_and_grad(gamma_stack, data: Dataset, config: BasisConfig,
                       variant="baseline", sensitivity=None,
                       options: FitOptions | None = None):
    """Penalized empirical negative log-likelihood and its analytic gradient."""
    problem = SieveProblem(data, config, options or FitOptions(), variant, sensitivity)
    stack = np.asarray(gamma_stack, dtype=np.float64)
    if stack.size != problem.dim:
        raise ValueError(f"packed coefficients must have length {problem.dim}")
    return problem.value_grad(stack)


def _target_to_gamma(problem, values, valid):
    """Least-squares pull-back of target function values onto the basis."""
    c = problem.c
    lo, hi = c + 1e-4, 1 - c - 1e-4
    w = logit((np.clip(values, lo, hi) - c) / (1 - 2 * c))
    gamma, *_ = np.linalg.lstsq(problem.phi[valid], w[valid], rcond=None)
    return gamma


def _plugin_start(problem, data):
    """Initialization from the closed-form inversion of direct mu_sz fits."""
    mu_model = fit_mu_models(data, problem.config, ridge=max(problem.options.ridge_init, 1e-8))
    mu = mu_model.predict_all(data.x)
    m = PointwiseMu(mu[:, 0], mu[:, 1], mu[:, 2], mu[:, 3])
    denom = m.mu01 * (1 - m.mu10) - m.mu00 * (1 - m.mu11)
    valid = np.abs(denom) > 1e-8
    if valid.sum() < problem.j:
        raise FitError("too few identifiable points for a plug-in start")
    spread = m.mu11 - m.mu10
    t0 = np.where(valid, m.mu00 * spread / np.where(valid, denom, 1.0), 0.5)
    t1 = np.where(valid, m.mu01 * spread / np.where(valid, denom, 1.0), 0.5)
    t0c = np.clip(t0, 0.02, 0.98)
    t1c = np.clip(t1, 0.02, 0.98)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = recover_mechanism(m, t0c, t1c)
    return np.concatenate([
        _target_to_gamma(problem, t0, valid),
        _target_to_gamma(problem, t1, valid),
        _target_to_gamma(problem, np.asarray(rec.alpha), valid),
        _target_to_gamma(problem, np.asarray(rec.beta), valid),
    ])


def _random_starts(problem, data, count, seed):
    """Zero-slope starts with randomized intercepts around stratum means."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(17,)))
    means = {}
    for s in (0, 1):
        for z in (0, 1):
            mask = (data.s == s) & (data.z == z)
            means[(s, z)] = float(np.clip(data.y[mask].mean(), 0.05, 0.95))
    starts = []
    for _ in range(count):
        stack = np.zeros(problem.dim)
        t0 = means[(0, 0)]
        t1 = means[(0, 1)]
        a = rng.uniform(0.02, 0.35)
        b = rng.uniform(0.02, 0.35)
        for k, v in enumerate((t0, t1, a, b)):
            u = logit(v) + rng.normal(0.0, 0.5)
            stack[k * problem.j] = u
        starts.append(stack)
    return starts


def fit(data: Dataset, config: BasisConfig, options: FitOptions | None = None,
        variant="baseline", sensitivity=None) -> NuisanceEstimates:
    """Sieve maximum likelihood fit; best of multi-start quasi-Newton runs.

    Deterministic given (data, config, options.seed).  Raises FitError when no
    restart reaches an acceptable gradient norm; attaches a warning when the
    relevance constraint fails on more than 10% of the sample.
    """
    options = options or FitOptions()
    sensitivity = sensitivity or SensitivityParams(variant)
    require_positivity(data)
    problem = SieveProblem(data, config, options, variant, sensitivity, precondition=True)

    starts = []
    if options.init_coefficients is not None:
        init = np.asarray(options.init_coefficients, dtype=np.float64)
        if init.size != problem.dim:
            raise ValueError("init_coefficients length mismatch")
        starts.append(problem.from_original(init))
    if options.include_plugin_start:
        try:
            starts.append(_plugin_start(problem, data))
        except (FairdesertError, np.linalg.LinAlgError):
            pass
    n_random = max(options.restarts - len(starts), 0)
    if not starts and n_random == 0:
        n_random = 1
    starts.extend(
        problem.from_original(s0)
        for s0 in _random_starts(problem, data, n_random, options.seed)
    )

    results = [
        bfgs_minimize(problem.value_grad, s0, tol=options.grad_tol, max_iter=options.max_iter)
        for s0 in starts
    ]
    acceptable = [r for r in results if np.isfinite(r.fun) and r.grad_norm <= 1e-4]
    if not acceptable:
        best_norm = min((r.grad_norm for r in results), default=math.inf)
        raise FitError(
            f"no restart converged (best gradient norm {best_norm:.2e} over "
            f"{len(results)} starts)"
        )
    best = min(acceptable, key=lambda r: r.fun)

    (t0, t1, a, b), _, _ = problem.functions(best.x)
    viol_frac = float(np.mean(np.abs(t1 - t0) < problem.margin))
    if viol_frac > 0.10:
        warnings.warn(
            f"relevance constraint |tau1 - tau0| >= {problem.margin:g} fails on "
            f"{viol_frac:.1%} of the sample: the auxiliary variable may be irrelevant",
            stacklevel=2,
        )
    criterion = problem.criterion(best.x)
    diagnostics = FitDiagnostics(
        criterion=criterion,
        penalty=float(best.fun + criterion),
        grad_norm=best.grad_norm,
        iterations=best.iterations,
        restarts_used=len(starts),
        converged=best.converged,
        relevance_violation_frac=viol_frac,
        n=data.n,
    )
    c = options.floor
    g0, g1, ga, gb = problem.unpack(problem.to_original(best.x))
    make = lambda g: SeriesFunction(config, g, lo=c, hi=1 - c)  # noqa: E731
    return NuisanceEstimates(
        tau0=make(g0), tau1=make(g1), alpha=make(ga), beta=make(gb),
        variant=variant, sensitivity=sensitivity, diagnostics=diagnostics,
    )


def predict_tau(est: NuisanceEstimates, z, x):
    """tau_hat(z, x) = (1 - z) tau0_hat(x) + z tau1_hat(x) at scaled covariates."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    phi = expand_matrix(x, est.config)
    z = np.broadcast_to(np.asarray(z), (x.shape[0],))
    out = np.where(z == 1, est.tau1.eval_features(phi), est.tau0.eval_features(phi))
    return float(out[0]) if out.shape == (1,) else out


def predict_tau_sz(est: NuisanceEstimates, s, z, x):
    """Decision rule including prescribed legitimate support (kappa variant):
    tau_hat_{sz}(x) = tau_hat_{0z}(x) + s kappa_z(x), clipped into [0, 1]."""
    base = predict_tau(est, z, x)
    if est.variant != "kappa":
        return base
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k0, k1 = est.sensitivity.evaluate(x2)
    z = np.broadcast_to(np.asarray(z), (x2.shape[0],))
    s = np.broadcast_to(np.asarray(s), (x2.shape[0],))
    kz = np.where(z == 1, k1, k0)
    shifted = np.asarray(base) + s * kz
    clipped = (shifted < 0) | (shifted > 1)
    if np.any(clipped):
        warnings.warn(
            f"kappa shift left [0, 1] at {int(np.sum(clipped))} point(s); clipped",
            stacklevel=2,
        )
    out = np.clip(shifted, 0.0, 1.0)
    return float(out[0]) if out.shape == (1,) else out


def decision_scores(est: NuisanceEstimates, data: Dataset):
    """Per-row decision scores: tau_hat_sz under kappa, tau_hat(Z, X) otherwise."""
    if est.variant == "kappa":
        return np.asarray(predict_tau_sz(est, data.s, data.z, data.x))
    return np.asarray(predict_tau(est, data.z, data.x))


def rate_threshold(scores, target_rate):
    """Largest threshold whose predicted-positive rate is >= target_rate."""
    if not 0.0 < target_rate <= 1.0:
        raise ValueError("target rate must lie in (0, 1]")
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    k = min(max(int(math.ceil(target_rate * n)), 1), n)
    return float(np.partition(scores, n - k)[n - k])


def threshold_preserving_rate(est: NuisanceEstimates, data: Dataset, target_rate):
    """Largest score cutoff whose sample positive rate meets the target."""
    return rate_threshold(decision_scores(est, data), target_rate)
