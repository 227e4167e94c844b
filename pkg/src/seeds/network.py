"""Axial vision-transformer score network over sequences of cubed-sphere snapshots.

Tensors follow the index order ``(batch, s, q, l, d)``: ``s`` is the position
in the snapshot sequence, ``q`` the physical field, ``l`` the spatial patch
and ``d`` the embedding channel.  Three transformer stacks attend along one
axis each: ``T_L`` over patches, ``T_F`` over fields and ``T_S`` over the
sequence, which is prefixed by a diffusion-time token.

The sequence for the conditional score is ``[Denoise, seed_1..seed_K,
Climatology]``.  Seeds share one type label and one time embedding and the
sequence axis has no positional table, so the output is invariant to the
order of the seeds.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .diffusion import DiffusionSchedule, sigma_of

__all__ = [
    "SNAPSHOT_TYPES",
    "ScoreNetConfig",
    "FULL_SCALE_CONFIG",
    "ScoreNet",
    "ConditionalScore",
    "build_score_net",
    "param_count",
    "param_breakdown",
    "score_forward",
    "save_score_net",
    "load_score_net",
]

SNAPSHOT_TYPES = ("Denoise", "GEFS", "Climatology")
DENOISE, SEED, CLIMATOLOGY = range(3)


def _vocab(labels):
    return tuple(dict.fromkeys(labels))


@dataclass(frozen=True)
class ScoreNetConfig:
    """Architecture hyperparameters.

    ``heads=None`` resolves to ``max(1, D // 64)``.  ``fields`` and
    ``levels`` give the field and level label of each channel ``q``.
    """

    C: int = 8
    P: int = 4
    D: int = 64
    layers: tuple = (2, 2, 2)
    heads: int = None
    fields: tuple = ("field0", "field1")
    levels: tuple = ("surface", "surface")
    mlp_ratio: int = 4
    n_fourier: int = 32
    fourier_scale: float = 1.0
    schedule_base: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(n) for n in self.layers))
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.P < 1 or self.C % self.P:
            raise ValueError(f"patch size P={self.P} must divide C={self.C}")
        if len(self.layers) != 3 or min(self.layers) < 0:
            raise ValueError("layers must be three non-negative counts (T_L, T_F, T_S)")
        if len(self.fields) != len(self.levels) or not self.fields:
            raise ValueError("need one field label and one level label per channel")
        if self.D % self.n_heads:
            raise ValueError(f"D={self.D} is not divisible by {self.n_heads} heads")

    @property
    def n_heads(self):
        return self.heads if self.heads else max(1, self.D // 64)

    @property
    def n_patches(self):
        return 6 * (self.C // self.P) ** 2

    @property
    def n_fields(self):
        return len(self.fields)

    @property
    def n_points(self):
        return 6 * self.C * self.C

    @property
    def field_vocab(self):
        return _vocab(self.fields)

    @property
    def level_vocab(self):
        return _vocab(self.levels)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


FULL_SCALE_CONFIG = ScoreNetConfig(
    C=48,
    P=12,
    D=768,
    layers=(6, 4, 6),
    fields=(
        "mean_sea_level_pressure",
        "temperature",
        "eastward_wind",
        "northward_wind",
        "geopotential",
        "temperature",
        "total_column_water_vapour",
        "specific_humidity",
    ),
    levels=("surface", "2m", "850hPa", "850hPa", "500hPa", "850hPa", "integral", "500hPa"),
)


class TransformerBlock(nn.Module):
    """Pre-norm block: ``x + MHA(LN(x))`` then ``x + MLP(LN(x))``."""

    def __init__(self, dim, heads, hidden):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x, query=None):
        """Apply the block to ``x`` of shape ``(n, length, dim)``.

        With ``query=i`` only position ``i`` is updated and returned, shape
        ``(n, 1, dim)``; keys and values still come from the whole sequence.
        """
        n, length, dim = x.shape
        qkv = self.qkv(self.norm1(x)).reshape(n, length, 3, self.heads, dim // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        if query is not None:
            q = q[:, :, query : query + 1]
            x = x[:, query : query + 1]
        a = F.scaled_dot_product_attention(q, k, v)
        x = x + self.proj(a.transpose(1, 2).reshape(n, x.shape[1], dim))
        return x + self.fc2(F.gelu(self.fc1(self.norm2(x))))


class TransformerStack(nn.Sequential):
    def __init__(self, depth, dim, heads, hidden):
        super().__init__(*[TransformerBlock(dim, heads, hidden) for _ in range(depth)])

    def forward(self, x, query=None):
        """Run all blocks; with ``query`` set, return only that position."""
        if query is None or len(self) == 0:
            for block in list(self):
                x = block(x)
            return x if query is None else x[:, query : query + 1]
        blocks = list(self)
        for block in blocks[:-1]:
            x = block(x)
        return blocks[-1](x, query=query)


class FourierEmbedding(nn.Module):
    """Fixed random Fourier features ``[sin 2 pi f t, cos 2 pi f t]`` projected to ``D``."""

    def __init__(self, n_freq, dim, scale):
        super().__init__()
        self.register_buffer("freqs", torch.randn(n_freq) * scale)
        self.proj = nn.Linear(2 * n_freq, dim)

    def forward(self, t):
        arg = 2 * math.pi * t[..., None] * self.freqs
        return self.proj(torch.cat([torch.sin(arg), torch.cos(arg)], dim=-1))


class ScoreNet(nn.Module):
    """Normalised score ``sigma * s_theta`` for the seed-conditioned task.

    Input preconditioning: the noised sample enters as
    ``v / sqrt(1 + sigma**2)`` and the output is
    ``-sigma v / (1 + sigma**2) + F / sqrt(1 + sigma**2)``, where ``F`` is the
    transformer output.  With ``F = 0`` this is exactly the normalised score of
    unit-variance Gaussian data, which is the natural reference for
    standardised anomalies.
    """

    def __init__(self, config):
        super().__init__()
        cfg = self.config = config
        D, P2, hidden = cfg.D, cfg.P * cfg.P, cfg.mlp_ratio * cfg.D
        self.patch_embed = nn.Linear(P2, D)
        self.pos_embed = nn.Parameter(0.02 * torch.randn(cfg.n_patches, D))
        self.field_embed = nn.Embedding(len(cfg.field_vocab), D)
        self.level_embed = nn.Embedding(len(cfg.level_vocab), D)
        self.type_embed = nn.Embedding(len(SNAPSHOT_TYPES), D)
        self.time_embed = FourierEmbedding(cfg.n_fourier, D, cfg.fourier_scale)
        self.tau_embed = FourierEmbedding(cfg.n_fourier, D, cfg.fourier_scale)
        T_L, T_F, T_S = cfg.layers
        self.spatial = TransformerStack(T_L, D, cfg.n_heads, hidden)
        self.field = TransformerStack(T_F, D, cfg.n_heads, hidden)
        self.sequence = TransformerStack(T_S, D, cfg.n_heads, hidden)
        self.unembed = nn.Linear(D, P2)
        for emb in (self.field_embed, self.level_embed, self.type_embed):
            nn.init.normal_(emb.weight, std=0.02)
        nn.init.zeros_(self.unembed.weight)
        nn.init.zeros_(self.unembed.bias)

        field_ids = [cfg.field_vocab.index(f) for f in cfg.fields]
        level_ids = [cfg.level_vocab.index(lv) for lv in cfg.levels]
        self.register_buffer("field_ids", torch.tensor(field_ids), persistent=False)
        self.register_buffer("level_ids", torch.tensor(level_ids), persistent=False)
        self._log_base = math.log(cfg.schedule_base)

    # --- patches -------------------------------------------------------------

    def patchify(self, x):
        """``(..., 6 C^2) -> (..., L, P^2)``, faces first, then patch rows."""
        C, P = self.config.C, self.config.P
        n = C // P
        lead = x.shape[:-1]
        x = x.reshape(*lead, 6, n, P, n, P)
        x = x.movedim(-3, -2)  # (..., 6, n, n, P, P)
        return x.reshape(*lead, 6 * n * n, P * P)

    def unpatchify(self, y):
        """Inverse of :meth:`patchify`."""
        C, P = self.config.C, self.config.P
        n = C // P
        lead = y.shape[:-2]
        y = y.reshape(*lead, 6, n, n, P, P).movedim(-2, -3)
        return y.reshape(*lead, 6 * C * C)

    # --- the three axial stacks --------------------------------------------------

    def embed_patches(self, x):
        """``(B, S, Q, p) -> (B, S, Q, L, D)``."""
        return self.patch_embed(self.patchify(x))

    def spatial_transform(self, h):
        B, S, Q, L, D = h.shape
        h = (h + self.pos_embed).reshape(B * S * Q, L, D)
        return self.spatial(h).reshape(B, S, Q, L, D)

    def field_transform(self, h, field_ids=None, level_ids=None):
        B, S, Q, L, D = h.shape
        field_ids = self.field_ids if field_ids is None else torch.as_tensor(field_ids)
        level_ids = self.level_ids if level_ids is None else torch.as_tensor(level_ids)
        if len(field_ids) != Q or len(level_ids) != Q:
            raise ValueError(f"expected {Q} field and level labels")
        emb = self.field_embed(field_ids) + self.level_embed(level_ids)  # (Q, D)
        h = (h + emb[:, None, :]).transpose(2, 3).reshape(B * S * L, Q, D)
        return self.field(h).reshape(B, S, L, Q, D).transpose(2, 3)

    def encode_snapshots(self, x, field_ids=None, level_ids=None):
        """Per-snapshot part of the network (patch embed, ``T_L``, ``T_F``)."""
        h = self.spatial_transform(self.embed_patches(x))
        return self.field_transform(h, field_ids, level_ids)

    def tau_from_sigma(self, sigma):
        return torch.log1p(2 * self._log_base * sigma**2) / (2 * self._log_base)

    def _tag(self, types, times, dtype):
        """Type plus physical-time embedding, ``(..., D)``."""
        times = torch.as_tensor(times, dtype=dtype)
        return self.type_embed(torch.as_tensor(types)) + self.time_embed(times / 24.0)  # hours -> days

    def _tau_token(self, tau, B, Q, L):
        D = self.config.D
        tok = self.tau_embed(tau.reshape(-1).expand(B))
        return tok[:, None, None, :].expand(B, Q, L, D).reshape(B * Q * L, 1, D)

    def sequence_transform(self, h, types, times, tau):
        """Add type/time embeddings, prepend the ``tau`` token and run ``T_S``.

        Returns all ``S + 1`` output tokens, shape ``(B, S + 1, Q, L, D)``.
        """
        B, S, Q, L, D = h.shape
        types = torch.as_tensor(types, device=h.device).expand(B, S)
        if torch.any((types == DENOISE).sum(dim=1) != 1):
            raise ValueError("every sequence needs exactly one Denoise snapshot")
        times = torch.as_tensor(times, dtype=h.dtype).expand(B, S)
        h = h + self._tag(types, times, h.dtype)[:, :, None, None, :]
        h = h.permute(0, 2, 3, 1, 4).reshape(B * Q * L, S, D)
        tau = torch.as_tensor(tau, dtype=h.dtype)
        h = self.sequence(torch.cat([self._tau_token(tau, B, Q, L), h], dim=1))
        return h.reshape(B, Q, L, S + 1, D).permute(0, 3, 1, 2, 4)

    def _denoise_output(self, h_denoise, h_context, tau):
        """Output token of the Denoise snapshot only.

        ``h_denoise`` is ``(B, Q, L, D)`` and ``h_context`` ``(B or 1, Q, L, S - 1, D)``,
        both already tagged.  The sequence order is ``[tau, Denoise, context...]``.
        """
        B, Q, L, D = h_denoise.shape
        ctx = h_context.expand(B, *h_context.shape[1:])
        seq = torch.cat([h_denoise[:, :, :, None], ctx], dim=3).reshape(B * Q * L, -1, D)
        seq = torch.cat([self._tau_token(tau, B, Q, L), seq], dim=1)
        return self.sequence(seq, query=1).reshape(B, Q, L, D)

    # --- full forward ----------------------------------------------------------

    def _sigma(self, sigma, batch, dtype):
        sigma = torch.as_tensor(sigma, dtype=dtype).reshape(-1)
        return sigma.expand(batch) if sigma.numel() == 1 else sigma

    def _output(self, h_denoise, v_tau, sigma):
        F_out = self.unpatchify(self.unembed(h_denoise))
        s = sigma[:, None, None]
        return -s * v_tau / (1 + s**2) + F_out / torch.sqrt(1 + s**2)

    def forward(self, v_tau, seeds, clim, sigma, times=None):
        """Normalised score.

        Parameters
        ----------
        v_tau : Tensor (B, Q, p)
            Noised standardised anomalies.
        seeds : Tensor (B, K, Q, p)
            Conditioning ensemble members.
        clim : Tensor (B, Q, p)
            Climatology snapshot.
        sigma : float or Tensor (B,)
            Noise level.
        times : Tensor (S,) or (B, S), optional
            Relative physical time (hours) of ``[Denoise, seeds..., Climatology]``.
        """
        B, K = seeds.shape[0], seeds.shape[1]
        sigma = self._sigma(sigma, B, v_tau.dtype)
        x_in = v_tau / torch.sqrt(1 + sigma**2)[:, None, None]
        snaps = torch.cat([x_in[:, None], seeds, clim[:, None]], dim=1)
        types = torch.tensor([DENOISE] + [SEED] * K + [CLIMATOLOGY])
        if times is None:
            times = torch.zeros(K + 2, dtype=v_tau.dtype)
        tag = self._tag(types, times, v_tau.dtype)
        tag = tag[None].expand(B, K + 2, -1) if tag.dim() == 2 else tag
        h = self.encode_snapshots(snaps) + tag[:, :, None, None, :]
        h_context = h[:, 1:].permute(0, 2, 3, 1, 4)
        out = self._denoise_output(h[:, 0], h_context, self.tau_from_sigma(sigma))
        return self._output(out, v_tau, sigma)


class ConditionalScore:
    """Score function for sampling with fixed conditioning inputs.

    Seeds and the climatology snapshot do not depend on the noised sample, so
    their per-snapshot encodings are computed once and reused at every
    sampler step and for every ensemble member.
    """

    def __init__(self, model, seeds, clim, times=None):
        self.model = model
        self.schedule = DiffusionSchedule(model.config.schedule_base)
        dtype = next(model.parameters()).dtype
        seeds = torch.as_tensor(np.asarray(seeds), dtype=dtype)
        clim = torch.as_tensor(np.asarray(clim), dtype=dtype)
        self.K = seeds.shape[0]
        self.dtype = dtype
        self.times = torch.zeros(self.K + 2, dtype=dtype) if times is None else times
        types = torch.tensor([DENOISE] + [SEED] * self.K + [CLIMATOLOGY])
        with torch.inference_mode():
            tag = model._tag(types, self.times, dtype)
            self.denoise_tag = tag[0]
            ctx = torch.cat([seeds, clim[None]], dim=0)[None]
            h = model.encode_snapshots(ctx) + tag[None, 1:, None, None, :]
            self.context = h.permute(0, 2, 3, 1, 4).contiguous()

    def normalized(self, v, sigma):
        model = self.model
        v = torch.as_tensor(np.asarray(v), dtype=self.dtype)
        B = v.shape[0]
        with torch.inference_mode():
            sig = model._sigma(float(sigma), B, self.dtype)
            x_in = v / torch.sqrt(1 + sig**2)[:, None, None]
            h = model.encode_snapshots(x_in[:, None])[:, 0] + self.denoise_tag
            out = model._denoise_output(h, self.context, model.tau_from_sigma(sig))
            return model._output(out, v, sig)

    def __call__(self, v, tau):
        sigma = sigma_of(tau, self.schedule)
        return self.normalized(v, sigma).double().numpy() / sigma


def build_score_net(config, seed=0, dtype=torch.float32):
    """Instantiate a :class:`ScoreNet` with a reproducible initialisation."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ScoreNet(config)
    return model.to(dtype)


def score_forward(model, v_tau, seeds, clim, sigma, times=None):
    """Score ``s_theta`` (the normalised output divided by ``sigma``)."""
    n = model(v_tau, seeds, clim, sigma, times)
    sigma = model._sigma(sigma, n.shape[0], n.dtype)
    return n / sigma[:, None, None]


def param_breakdown(config):
    """Closed-form parameter count of each block of :class:`ScoreNet`."""
    D, P2 = config.D, config.P * config.P
    H = config.mlp_ratio * D
    block = (4 * D) + (3 * D * D + 3 * D) + (D * D + D) + (D * H + H) + (H * D + D)
    fourier = 2 * config.n_fourier * D + D
    T_L, T_F, T_S = config.layers
    return {
        "patch_embed": P2 * D + D,
        "pos_embed": config.n_patches * D,
        "field_embed": len(config.field_vocab) * D,
        "level_embed": len(config.level_vocab) * D,
        "type_embed": len(SNAPSHOT_TYPES) * D,
        "time_embed": fourier,
        "tau_embed": fourier,
        "spatial": T_L * block,
        "field": T_F * block,
        "sequence": T_S * block,
        "unembed": D * P2 + P2,
    }


def param_count(config):
    """Number of trainable scalars of :class:`ScoreNet` for ``config``."""
    return sum(param_breakdown(config).values())


def save_score_net(path, model, **meta):
    """Write parameters and architecture to a tensor container."""
    from .container import write_container

    tensors = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    info = {"config": json.dumps(model.config.to_dict())}
    info.update(meta)
    write_container(path, tensors, meta=info)


def load_score_net(path):
    """Inverse of :func:`save_score_net`; returns ``(model, metadata)``."""
    from .container import read_container

    tensors, meta = read_container(path, with_meta=True)
    if "config" not in meta:
        raise ValueError(f"{path} does not hold a score network")
    model = ScoreNet(ScoreNetConfig.from_dict(json.loads(meta.pop("config"))))
    state = {k[len("param/"):]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith("param/")}
    model.load_state_dict(state)
    model.eval()
    return model, meta
