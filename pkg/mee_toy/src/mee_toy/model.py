"""Toy-scale map element encoder.

Lane vectors become token sequences: one learnable [VEC] token in front of
the sinusoidally encoded points of each vector, with type, instance, and
within-vector position embeddings added on. A stack of masked transformer
layers alternates intra-instance and inter-instance attention (points only
ever talk within their vector; [VEC] tokens additionally talk to each
other), then cross-attention layers fuse in a rule embedding, and a binary
head on each [VEC] token scores the association of that vector with the
rule.

Tokens are processed in a canonical order (instances sorted by their
assigned instance-embedding id) and logits are mapped back to input order
afterwards, which makes permutation equivariance exact rather than merely
up to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from mee_toy.config import EncoderConfig
from mee_toy.data import RuleRecord, VectorRecord


@dataclass
class TokenTemplate:
    """The static token layout of one clip's vectors, in input order.

    Everything here is independent of the per-iteration instance-id
    assignment and of the trainable parameters, so clips can be tokenized
    once and re-embedded cheaply every step.
    """

    point_features: torch.Tensor  # (T, enc_dim); zero rows under [VEC] tokens
    slot_ids: torch.Tensor  # (T,) input vector index owning each token
    type_ids: torch.Tensor  # (T,)
    position_ids: torch.Tensor  # (T,) 0 marks the [VEC] token
    is_vec: torch.Tensor  # (T,) bool
    block_ranges: Tuple[Tuple[int, int], ...]  # token span per input vector


@dataclass
class VectorBatch:
    """Embedded tokens of one clip's vectors, in canonical instance order."""

    embeddings: torch.Tensor  # (T, d)
    point_component: torch.Tensor  # (T, d), the coordinate-driven part alone
    instance_ids: torch.Tensor  # (T,) assigned embedding ids
    type_ids: torch.Tensor  # (T,)
    position_ids: torch.Tensor  # (T,) 0 marks the [VEC] token
    is_vec: torch.Tensor  # (T,) bool
    input_index: torch.Tensor  # (n,) original input position of each canonical instance

    @property
    def token_count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def instance_count(self) -> int:
        return self.input_index.shape[0]

    def structure_signature(self) -> tuple:
        """Hashable token layout; batches may only stack equal signatures.

        Only the position layout matters: it pins down the instance block
        structure and with it the attention masks.
        """
        return tuple(self.position_ids.tolist())


def build_masks(batch: VectorBatch) -> Tuple[torch.Tensor, torch.Tensor]:
    """Boolean (T, T) attention masks; True permits attention.

    The intra mask is block-diagonal over instances. The inter mask adds
    the [VEC]-to-[VEC] cross block so aggregate tokens can exchange
    context while point tokens stay private to their vector.
    """
    same_instance = batch.instance_ids.unsqueeze(0) == batch.instance_ids.unsqueeze(1)
    vec_pairs = batch.is_vec.unsqueeze(0) & batch.is_vec.unsqueeze(1)
    return same_instance, same_instance | vec_pairs


class SelfAttentionLayer(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)
        self.norm_attn = nn.LayerNorm(width)
        self.ffn = nn.Sequential(nn.Linear(width, 2 * width), nn.ReLU(), nn.Linear(2 * width, width))
        self.norm_ffn = nn.LayerNorm(width)

    def forward(
        self,
        x: torch.Tensor,
        mask: torch.Tensor,
        attention_sink: Optional[List[torch.Tensor]] = None,
    ) -> torch.Tensor:
        batch, tokens, width = x.shape
        qkv = self.qkv(x).view(batch, tokens, 3, self.heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))  # (B, H, T, dh)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        if attention_sink is not None:
            attention_sink.append(weights.detach())
        mixed = (weights @ v).transpose(1, 2).reshape(batch, tokens, width)
        x = self.norm_attn(x + self.out(mixed))
        return self.norm_ffn(x + self.ffn(x))


class RuleFusionLayer(nn.Module):
    """Cross-attention of every token against the rule embedding.

    A learnable null slot sits next to the rule in the key/value set;
    without it the softmax over a single key is constant and the
    query-rule dot product (the part that can express "this lane matches
    that rule") would never influence anything.
    """

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.q = nn.Linear(width, width)
        self.kv = nn.Linear(width, 2 * width)
        self.null_key = nn.Parameter(torch.zeros(width))
        self.null_value = nn.Parameter(torch.zeros(width))
        self.out = nn.Linear(width, width)
        self.norm_attn = nn.LayerNorm(width)
        self.ffn = nn.Sequential(nn.Linear(width, 2 * width), nn.ReLU(), nn.Linear(2 * width, width))
        self.norm_ffn = nn.LayerNorm(width)
        nn.init.normal_(self.null_key, 0.0, 0.02)
        nn.init.normal_(self.null_value, 0.0, 0.02)

    def forward(self, x: torch.Tensor, rule: torch.Tensor) -> torch.Tensor:
        batch, tokens, width = x.shape
        q = self.q(x).view(batch, tokens, self.heads, self.head_dim).transpose(1, 2)
        kv = self.kv(rule).view(batch, 1, 2, self.heads, self.head_dim)
        k_rule, v_rule = (kv[:, :, i].transpose(1, 2) for i in range(2))  # (B, H, 1, dh)
        k_null = self.null_key.view(1, self.heads, 1, self.head_dim).expand(batch, -1, -1, -1)
        v_null = self.null_value.view(1, self.heads, 1, self.head_dim).expand(batch, -1, -1, -1)
        k = torch.cat([k_rule, k_null], dim=2)
        v = torch.cat([v_rule, v_null], dim=2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(batch, tokens, width)
        x = self.norm_attn(x + self.out(mixed))
        return self.norm_ffn(x + self.ffn(x))


class MapElementEncoder(nn.Module):
    def __init__(self, cfg: Optional[EncoderConfig] = None):
        super().__init__()
        self.cfg = cfg or EncoderConfig()
        cfg = self.cfg
        d = cfg.width

        wavelengths = torch.logspace(
            math.log10(cfg.min_wavelength), math.log10(cfg.max_wavelength), cfg.point_frequencies
        )
        self.register_buffer("angular_freq", 2 * math.pi / wavelengths)

        enc_dim = 3 * 2 * cfg.point_frequencies
        self.point_proj = nn.Linear(enc_dim, d)
        self.vec_token = nn.Parameter(torch.zeros(d))
        self.type_embedding = nn.Embedding(cfg.type_count, d)
        self.instance_embedding = nn.Embedding(cfg.max_vectors, d)
        self.position_embedding = nn.Embedding(cfg.max_points + 1, d)

        self.lane_type_embedding = nn.Embedding(9, d)
        self.rule_index_embedding = nn.Embedding(cfg.rule_index_vocab + 1, d)
        self.direction_embedding = nn.Embedding(6, d)
        self.transport_embedding = nn.Embedding(5, d)
        self.date_embedding = nn.Embedding(2, d)
        self.sign_proj = nn.Linear(enc_dim, d)
        self.rule_mlp = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, d))

        self.encoder_layers = nn.ModuleList(
            SelfAttentionLayer(d, cfg.heads) for _ in range(cfg.vector_depth)
        )
        self.fusion_layers = nn.ModuleList(
            RuleFusionLayer(d, cfg.heads) for _ in range(cfg.fusion_depth)
        )
        self.head = nn.Sequential(
            nn.Linear(d, cfg.head_hidden), nn.ReLU(), nn.Linear(cfg.head_hidden, 1)
        )
        self._init_parameters()

    def _init_parameters(self) -> None:
        # embeddings share the residual stream with O(1) sinusoidal
        # projections; give them unit-norm scale so neither side drowns
        scale = 1.0 / math.sqrt(self.cfg.width)
        with torch.no_grad():
            self.vec_token.normal_(0.0, scale)
        for emb in (
            self.type_embedding, self.instance_embedding, self.position_embedding,
            self.lane_type_embedding, self.rule_index_embedding, self.direction_embedding,
            self.transport_embedding, self.date_embedding,
        ):
            nn.init.normal_(emb.weight, 0.0, scale)

    @property
    def dtype(self) -> torch.dtype:
        return self.point_proj.weight.dtype

    def point_encoding(self, coords: torch.Tensor) -> torch.Tensor:
        """Sinusoidal features of (..., 3) coordinates, wavelength-banded."""
        phases = coords.unsqueeze(-1) * self.angular_freq  # (..., 3, F)
        features = torch.cat([torch.sin(phases), torch.cos(phases)], dim=-1)
        return features.flatten(-2)

    def mask_for_layer(self, layer_index: int, intra: torch.Tensor, inter: torch.Tensor) -> torch.Tensor:
        schedule = self.cfg.mask_schedule
        if schedule == "intra_only":
            return intra
        if schedule == "inter_only":
            return inter
        first_intra = schedule == "intra_first"
        return intra if (layer_index % 2 == 0) == first_intra else inter

    def build_template(self, vectors: Sequence[VectorRecord]) -> TokenTemplate:
        """Tokenize vectors once: a [VEC] slot then the encoded points of each."""
        if len(vectors) > self.cfg.max_vectors:
            raise ValueError(f"batch of {len(vectors)} exceeds max_vectors={self.cfg.max_vectors}")
        device = self.vec_token.device
        tok_slot, tok_type, tok_position, tok_isvec = [], [], [], []
        ranges = []
        coords = []
        cursor = 0
        for slot, vec in enumerate(vectors):
            n_points = vec.points.shape[0]
            if n_points > self.cfg.max_points:
                raise ValueError(f"vector {vec.vec_id} has {n_points} points > max_points")
            tok_slot += [slot] * (n_points + 1)
            tok_type += [vec.type_id] * (n_points + 1)
            tok_position += list(range(n_points + 1))
            tok_isvec += [True] + [False] * n_points
            ranges.append((cursor, cursor + n_points + 1))
            cursor += n_points + 1
            coords.append(vec.points)

        isvec_t = torch.tensor(tok_isvec, dtype=torch.bool, device=device)
        enc_dim = 3 * 2 * self.cfg.point_frequencies
        features = torch.zeros(cursor, enc_dim, dtype=self.dtype, device=device)
        if coords:
            stacked = torch.as_tensor(np.concatenate(coords, axis=0), dtype=self.dtype, device=device)
            features[~isvec_t] = self.point_encoding(stacked)
        return TokenTemplate(
            point_features=features,
            slot_ids=torch.tensor(tok_slot, dtype=torch.long, device=device),
            type_ids=torch.tensor(tok_type, dtype=torch.long, device=device),
            position_ids=torch.tensor(tok_position, dtype=torch.long, device=device),
            is_vec=isvec_t,
            block_ranges=tuple(ranges),
        )

    def embed_template(self, template: TokenTemplate, instance_ids: Sequence[int]) -> VectorBatch:
        """Embed a tokenized clip under one instance-id assignment.

        ``instance_ids`` assigns one embedding row per vector; during
        training the assignment is reshuffled every iteration. Instances
        are laid out sorted by assigned id (the canonical order).
        """
        ids = [int(i) for i in instance_ids]
        if len(ids) != len(template.block_ranges):
            raise ValueError("one instance id per vector required")
        if len(set(ids)) != len(ids) or ids and (min(ids) < 0 or max(ids) >= self.cfg.max_vectors):
            raise ValueError("instance ids must be unique and within capacity")

        device = self.vec_token.device
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        perm = torch.cat(
            [torch.arange(*template.block_ranges[i], device=device) for i in order]
        ) if ids else torch.empty(0, dtype=torch.long, device=device)

        ids_t = torch.tensor(ids, dtype=torch.long, device=device)
        instance_t = ids_t[template.slot_ids[perm]]
        type_t = template.type_ids[perm]
        position_t = template.position_ids[perm]
        isvec_t = template.is_vec[perm]

        point_component = self.point_proj(template.point_features[perm])
        point_component = torch.where(isvec_t.unsqueeze(-1), self.vec_token, point_component)

        embeddings = (
            point_component
            + self.instance_embedding(instance_t)
            + self.type_embedding(type_t)
            + self.position_embedding(position_t)
        )
        return VectorBatch(
            embeddings=embeddings,
            point_component=point_component,
            instance_ids=instance_t,
            type_ids=type_t,
            position_ids=position_t,
            is_vec=isvec_t,
            input_index=torch.tensor(order, dtype=torch.long, device=device),
        )

    def embed_points(
        self, vectors: Sequence[VectorRecord], instance_ids: Sequence[int]
    ) -> VectorBatch:
        """:meth:`build_template` plus :meth:`embed_template` in one call."""
        return self.embed_template(self.build_template(vectors), instance_ids)

    def embed_rule(self, rule: RuleRecord, sign_corners: np.ndarray) -> torch.Tensor:
        """Sum of per-property embeddings plus the sign-position encoding.

        The free-text time and speed properties are left out; they carry no
        vocabulary to embed.
        """
        device = self.vec_token.device
        parts = (
            self.lane_type_embedding(torch.tensor(rule.lane_type_id, device=device))
            + self.rule_index_embedding(torch.tensor(rule.index_bucket, device=device))
            + self.direction_embedding(torch.tensor(rule.direction_ids, device=device)).sum(dim=0)
            + self.transport_embedding(torch.tensor(rule.transport_id, device=device))
            + self.date_embedding(torch.tensor(rule.date_id, device=device))
        )
        corners = torch.as_tensor(sign_corners, dtype=self.dtype, device=device)
        parts = parts + self.sign_proj(self.point_encoding(corners)).mean(dim=0)
        return self.rule_mlp(parts)

    def forward(
        self,
        batches: VectorBatch | Sequence[VectorBatch],
        rule_embeddings: torch.Tensor,
        attention_sink: Optional[List[torch.Tensor]] = None,
    ) -> torch.Tensor:
        """Per-instance association logits, in each batch's input order.

        Accepts one batch (rule embedding (d,)) or a list of batches with
        identical token structure (rule embeddings (B, d)).
        """
        single = isinstance(batches, VectorBatch)
        if single:
            batches = [batches]
            rule_embeddings = rule_embeddings.unsqueeze(0)
        signatures = {b.structure_signature() for b in batches}
        if len(signatures) != 1:
            raise ValueError("stacked batches must share one token structure")

        x = torch.stack([b.embeddings for b in batches])  # (B, T, d)
        intra, inter = build_masks(batches[0])
        for index, layer in enumerate(self.encoder_layers):
            x = layer(x, self.mask_for_layer(index, intra, inter), attention_sink)
        rule = rule_embeddings.unsqueeze(1)  # (B, 1, d)
        for layer in self.fusion_layers:
            x = layer(x, rule)

        vec_features = x[:, batches[0].is_vec]  # (B, n, d) canonical instance order
        logits = self.head(vec_features).squeeze(-1)
        restored = torch.empty_like(logits)
        for row, batch in enumerate(batches):
            restored[row, batch.input_index] = logits[row]
        return restored[0] if single else restored
