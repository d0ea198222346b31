"""Discrete-time LIF network with surrogate-gradient training.

Per layer and time step n, with presynaptic traces P, Q over the inputs
and refractory state R over the outputs:

    U[n]   = (W/eta)^T P[n] - delta * R[n]
    S[n]   = step(U[n] - theta)              (spike when U >= theta)
    Q[n+1] = alpha * Q[n] + S_in[n]
    P[n+1] = beta  * P[n] + Q[n]
    R[n+1] = gamma * R[n] + S[n]

The step function's derivative is replaced for learning by the normalized
negative branch of a fast sigmoid, h(u) = 1 / (beta_s * |u - theta| + 1)^2,
which peaks at 1 on the threshold. Training minimizes the van Rossum
distance between the output raster and a target raster; the distance is
evaluated in floating point and its gradient flows through the exponential
filter analytically.

Stored weights are kept on the quantized grid scaled by the power-of-two
factor eta (scale into storage, unscale at use); gradients are normalized,
clipped and quantized, then applied with stochastic rounding onto the grid.

A training run is single-threaded and deterministic under its seed; sweep
cells derive independent seeds and can run in parallel.
"""

from dataclasses import dataclass, field

import numpy as np

from .energy import DEFAULT_MODEL, pass_energy
from .quant import (eta, quantize_error, quantize_weights, sigma,
                    stochastic_round, weight_range)
from .rng import CounterRng, derive_seed
from .stores import fc_pass_traces
from .trace import AccessTrace


@dataclass(frozen=True)
class LifParams:
    alpha: float = 0.5      # synaptic trace decay
    beta: float = 0.75      # membrane trace decay
    gamma: float = 0.875    # refractory decay
    delta: float = 1.0      # refractory magnitude
    theta: float = 1.0      # firing threshold
    beta_s: float = 10.0    # surrogate sharpness

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not np.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if self.beta_s <= 0:
            raise ValueError("beta_s must be positive")


class LifLayerState:
    """Mutable per-layer state plus the recorded episode history."""

    def __init__(self, n_pre, n_post):
        self.n_pre = n_pre
        self.n_post = n_post
        self.q = np.zeros(n_pre)
        self.p = np.zeros(n_pre)
        self.r = np.zeros(n_post)
        self.u = np.zeros(n_post)
        self.s = np.zeros(n_post)
        self.u_history = []     # membrane per step, quantized to b_m when set
        self.s_history = []
        self.p_history = []

    def reset(self):
        self.__init__(self.n_pre, self.n_post)


def surrogate_derivative(u, params):
    """h(u) = 1 / (beta_s * |u - theta| + 1)^2; peak 1 at the threshold."""
    return 1.0 / (params.beta_s * np.abs(u - params.theta) + 1.0) ** 2


def soft_spike(u, params):
    """Differentiable stand-in for the step, with d/du == surrogate_derivative.

    f(x) = x / (1 + beta_s |x|) shifted by +0.5 so activity propagates;
    used only by gradient checks ("soft mode").
    """
    x = u - params.theta
    return x / (1.0 + params.beta_s * np.abs(x)) + 0.5


def _as_weight_matrix(w):
    if isinstance(w, np.ndarray):
        return w
    return w.to_dense()    # any connectivity store


def lif_step(state, in_spikes, weights, params, layer_eta=1.0, b_m=None,
             soft=False, record=True):
    """One time step; returns the spike vector and mutates `state`.

    `weights` is an (n_pre, n_post) array or any connectivity store; values
    are divided by layer_eta at use. Membrane history is kept at b_m
    precision when b_m is given.
    """
    w = _as_weight_matrix(weights)
    in_spikes = np.asarray(in_spikes, dtype=np.float64)
    if w.shape != (state.n_pre, state.n_post):
        raise ValueError(f"weights shape {w.shape} != ({state.n_pre}, {state.n_post})")
    if in_spikes.shape != (state.n_pre,):
        raise ValueError(f"input shape {in_spikes.shape} != ({state.n_pre},)")
    u = (state.p @ w) / layer_eta - params.delta * state.r
    s = soft_spike(u, params) if soft else (u >= params.theta).astype(np.float64)
    if record:
        u_store = u if b_m is None else \
            np.sign(u) * np.floor(np.abs(u) / sigma(b_m) + 0.5) * sigma(b_m)
        state.u_history.append(u_store)
        state.s_history.append(s)
        state.p_history.append(state.p.copy())
    q_new = params.alpha * state.q + in_spikes
    p_new = params.beta * state.p + state.q      # uses the pre-update trace
    state.r = params.gamma * state.r + s
    state.q = q_new
    state.p = p_new
    state.u = u
    state.s = s
    return s


def vr_filter(raster, tau_vr):
    """Leaky accumulation of a (neurons, steps) raster, decay exp(-1/tau)."""
    raster = np.asarray(raster, dtype=np.float64)
    lam = np.exp(-1.0 / tau_vr)
    out = np.empty_like(raster)
    acc = np.zeros(raster.shape[0])
    for n in range(raster.shape[1]):
        acc = lam * acc + raster[:, n]
        out[:, n] = acc
    return out


def van_rossum(s, t, tau_vr):
    """Distance between filtered rasters: sqrt of summed squared differences."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"raster shapes differ: {s.shape} vs {t.shape}")
    diff = vr_filter(s, tau_vr) - vr_filter(t, tau_vr)
    return float(np.sqrt(np.sum(diff * diff)))


def generate_poisson_input(n, steps, rates, seed):
    """Independent Bernoulli(rate) spikes per neuron and step."""
    rates = np.broadcast_to(np.asarray(rates, dtype=np.float64), (n, steps))
    if rates.min() < 0 or rates.max() > 1:
        raise ValueError("rates must lie in [0, 1]")
    rng = CounterRng(seed)
    return rng.bernoulli(rates, (n, steps))


def clean_pattern(n_out, steps, seed, period=20, band=3):
    """Deterministic diagonal-stripe raster; seed picks the phase."""
    phase = CounterRng(seed).randint(period)
    i = np.arange(n_out)[:, None]
    n = np.arange(steps)[None, :]
    shift = np.round(i * (steps - 1) / max(n_out - 1, 1)).astype(np.int64)
    return (((n - shift + phase) % period) < band).astype(np.uint8)


def generate_target(clean, p, seed):
    """Clean pattern thinned by an elementwise Bernoulli(p) keep mask."""
    clean = np.asarray(clean)
    if not ((clean == 0) | (clean == 1)).all():
        raise ValueError("clean pattern must be binary")
    rng = CounterRng(seed)
    keep = rng.bernoulli(p, clean.shape)
    return (clean * keep).astype(np.uint8)


def run_episode(weights, in_raster, params, etas=None, b_m=None, soft=False):
    """Forward simulation over a full episode.

    weights: list of per-layer (n_pre, n_post) arrays (already on their
    storage grid); etas: per-layer scale factors. Returns the output raster
    and the per-layer state objects carrying the recorded history.
    """
    steps = in_raster.shape[1]
    etas = etas or [1.0] * len(weights)
    states = [LifLayerState(w.shape[0], w.shape[1]) for w in weights]
    out = np.zeros((weights[-1].shape[1], steps))
    for n in range(steps):
        spikes = in_raster[:, n]
        for st, w, e in zip(states, weights, etas):
            spikes = lif_step(st, spikes, w, params, layer_eta=e, b_m=b_m, soft=soft)
        out[:, n] = spikes
    return out, states


def _loss_spike_gradient(out_raster, target, tau_vr):
    """d(van Rossum)/d(output spikes); zero when the rasters already match."""
    lam = np.exp(-1.0 / tau_vr)
    e = vr_filter(out_raster, tau_vr) - vr_filter(target, tau_vr)
    vr = np.sqrt(np.sum(e * e))
    if vr == 0.0:
        return np.zeros_like(e), 0.0
    e = e / vr
    g = np.zeros_like(e)
    acc = np.zeros(e.shape[0])
    for n in range(e.shape[1] - 1, -1, -1):
        acc = lam * acc + e[:, n]
        g[:, n] = acc
    return g, float(vr)


def bptt_gradients(states, weights, out_raster, target, params, tau_vr,
                   etas=None):
    """Reverse-time gradients of the van Rossum loss w.r.t. stored weights.

    Unrolls the recurrences backwards with the step derivative replaced by
    surrogate_derivative, evaluated on the stored membrane history. Returns
    one (n_pre, n_post) array per layer.
    """
    if not states or not states[0].u_history:
        raise ValueError("episode history is empty")
    etas = etas or [1.0] * len(weights)
    steps = len(states[0].u_history)
    g_spikes, _ = _loss_spike_gradient(out_raster, target, tau_vr)
    g_s_ext = g_spikes.T      # (steps, n_out)
    grads = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        st = states[l]
        w_eff = weights[l] / etas[l]
        g_w = np.zeros_like(weights[l])
        g_p_next = np.zeros(st.n_pre)
        g_q_next = np.zeros(st.n_pre)
        g_r_next = np.zeros(st.n_post)
        g_s_prev = np.zeros((steps, st.n_pre))
        for n in range(steps - 1, -1, -1):
            g_s_prev[n] = g_q_next           # S_in[n] feeds Q[n+1]
            h = surrogate_derivative(st.u_history[n], params)
            g_u = (g_s_ext[n] + g_r_next) * h
            g_w += np.outer(st.p_history[n], g_u)
            g_p = params.beta * g_p_next + w_eff @ g_u
            g_q = params.alpha * g_q_next + g_p_next
            g_r = params.gamma * g_r_next - params.delta * g_u
            g_p_next, g_q_next, g_r_next = g_p, g_q, g_r
        grads[l] = g_w / etas[l]             # d/d stored = d/d effective / eta
        g_s_ext = g_s_prev
    return grads


@dataclass
class NetworkConfig:
    layer_sizes: tuple = (200, 100, 50)
    steps: int = 100
    tau_vr: float = 10.0
    lr: float = 5e-4
    lr_anneal: int = 180          # epochs of linear decay to exactly zero; 0 = constant lr
    rate_lo: float = 0.02
    rate_hi: float = 0.2
    target_keep_p: float = 0.95
    params: LifParams = field(default_factory=LifParams)
    pattern_period: int = 20
    pattern_band: int = 3


@dataclass
class TrainResult:
    vr_curve: list                 # per-epoch distance, index 0 = pre-training
    energy: dict                   # scheme -> list of (fwd_pJ, bwd_pJ) per epoch
    traces: dict                   # scheme -> per-layer accumulated AccessTrace
    sparsity: list                 # per-epoch fraction of exactly-zero weights
    weights: list
    diverged: bool = False

    @property
    def final_vr(self):
        return self.vr_curve[-1]

    @property
    def best_vr(self):
        return min(self.vr_curve)

    @property
    def mean_sparsity(self):
        return float(np.mean(self.sparsity)) if self.sparsity else 0.0

    def total_energy(self, scheme):
        return sum(f + b for f, b in self.energy[scheme])


SCHEMES = ("CB", "PB-CSR", "PB-BMP")


def _epoch_energy(weights, schemes, steps, quant, cost_model, traces, energy):
    """Account one epoch: `steps` forward and backward scans, one update pass.

    Stores are re-encoded from the current zero pattern, so the sparsity the
    run develops shows up in the sparse schemes' traffic and capacities.
    """
    b_w = quant.b_w if quant else 32
    for scheme in schemes:
        fwd_pj = bwd_pj = 0.0
        for li, w in enumerate(weights):
            nnz = int(np.count_nonzero(w))
            fwd_1, bwd_1, upd_t = fc_pass_traces(scheme, w.shape[0], w.shape[1],
                                                 nnz, b_w)
            fwd_t = fwd_1.scaled(steps)
            bwd_t = bwd_1.scaled(steps)
            fwd_pj += pass_energy(fwd_t, cost_model, scheme).active_energy
            bwd_pj += pass_energy(bwd_t + upd_t, cost_model, scheme).active_energy
            traces[scheme][li] += fwd_t + bwd_t + upd_t
        energy[scheme].append((fwd_pj, bwd_pj))


def train(cfg, scheme, quant, epochs, seed, cost_model=None):
    """Gradient-descent pattern retention with per-epoch energy accounting.

    scheme: one of "CB", "PB-CSR", "PB-BMP", or a list of them (the spike
    dynamics do not depend on the encoding, so one numeric run can be
    accounted under several schemes). quant=None trains in full precision.
    Aborts with diverged=True if the distance stops being finite.
    """
    if cost_model is None:
        cost_model = DEFAULT_MODEL
    schemes = [scheme] if isinstance(scheme, str) else list(scheme)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    if len(cfg.layer_sizes) < 2 or any(n < 1 for n in cfg.layer_sizes):
        raise ValueError(f"need >= 2 positive layer sizes, got {cfg.layer_sizes}")
    if cfg.steps < 1:
        raise ValueError(f"steps must be >= 1, got {cfg.steps}")

    sizes = cfg.layer_sizes
    rng = CounterRng(seed)
    rates = rng.spawn(0).uniform_range(cfg.rate_lo, cfg.rate_hi, (sizes[0], 1))
    in_raster = generate_poisson_input(sizes[0], cfg.steps, rates,
                                       derive_seed(seed, 1))
    clean = clean_pattern(sizes[-1], cfg.steps, derive_seed(seed, 2),
                          cfg.pattern_period, cfg.pattern_band)
    target = generate_target(clean, cfg.target_keep_p, derive_seed(seed, 3))

    weights = []
    etas = []
    for li, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w_rng = rng.spawn(10 + li)
        bound = np.sqrt(3.0 / n_in)
        w = w_rng.uniform_range(-bound, bound, (n_in, n_out))
        if quant:
            e = eta(quant.b_w, n_in)
            weights.append(quantize_weights(w * e, quant.b_w))
            etas.append(e)
        else:
            weights.append(w)
            etas.append(1.0)
    round_rng = rng.spawn(99)
    b_m = quant.b_m if quant else None

    traces = {s: [AccessTrace() for _ in weights] for s in schemes}
    energy = {s: [] for s in schemes}
    sparsity = []
    out, states = run_episode(weights, in_raster, cfg.params, etas, b_m)
    vr_curve = [van_rossum(out, target, cfg.tau_vr)]
    diverged = False

    for epoch in range(epochs):
        # linear anneal to zero freezes the raster once learning is done;
        # held-at-threshold neurons otherwise chatter forever
        lr = cfg.lr * max(0.0, 1.0 - epoch / cfg.lr_anneal) if cfg.lr_anneal \
            else cfg.lr
        grads = bptt_gradients(states, weights, out, target, cfg.params,
                               cfg.tau_vr, etas)
        # descend on the squared distance: steps shrink as the raster locks in
        vr_scale = vr_curve[-1]
        for li, g in enumerate(grads):
            if quant:
                g_q = quantize_error(g, quant.b_e)
                stepped = weights[li] - lr * etas[li] * g_q
                lo, hi = weight_range(quant.b_w)
                weights[li] = np.clip(
                    stochastic_round(stepped, sigma(quant.b_w), round_rng), lo, hi)
            else:
                weights[li] = weights[li] - lr * vr_scale * g
        out, states = run_episode(weights, in_raster, cfg.params, etas, b_m)
        vr = van_rossum(out, target, cfg.tau_vr)
        vr_curve.append(vr)
        total = sum(w.size for w in weights)
        zeros = sum(int((w == 0.0).sum()) for w in weights)
        sparsity.append(zeros / total)
        _epoch_energy(weights, schemes, cfg.steps, quant, cost_model,
                      traces, energy)
        if not np.isfinite(vr):
            diverged = True
            break

    return TrainResult(vr_curve, energy, traces, sparsity, weights, diverged)
