"""Multi-state GVP-GNN encoder, conformer pooling, and AR / NAR decoders.

Tensor layouts:
    encoder node states   s [n, k, ns]      v [n, k, nv, 3]
    encoder edge features s [E, k, es]      v [E, k, ev, 3]
    decoder node states   s [n, B, ns]      v [n, B, nv, 3]

The encoder's second axis holds conformations; the decoder's second axis
holds independent sequences (one for training, many for sampling/scoring).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

import config
from core import autodiff as ad
from core.autodiff import Tensor, constant
from core.errors import DimensionError, InputValidationError
from core.featurizer import MultiGraph
from core.nn import GVP, LayerNorm, Linear, Module, ScalarVector, dropout, vector_dropout
from runner.schema import ModelConfig

logger = logging.getLogger(__name__)


def sequence_to_indices(sequence: str) -> np.ndarray:
    """Base indices in ALPHABET order; unknown bases map to -1."""
    return np.array([config.BASE_TO_INDEX.get(b, -1) for b in sequence], dtype=np.int64)


def indices_to_sequence(indices: Sequence[int]) -> str:
    return "".join(config.ALPHABET[int(i)] if 0 <= i < len(config.ALPHABET) else "N" for i in indices)


def _row_mask(mask: np.ndarray, shape: Tuple[int, ...]) -> Tensor:
    """Constant mask broadcastable onto a tensor of `shape` (trailing singleton)."""
    target = shape[:-1] + (1,)
    return constant(np.broadcast_to(mask.reshape(mask.shape + (1,) * (len(target) - mask.ndim)), target).astype(np.float64))


def _expand_batch(t: Tensor, batch: int) -> Tensor:
    """[n, ...] -> [n, batch, ...]."""
    return ad.expand(ad.reshape(t, (t.shape[0], 1) + t.shape[1:]), 1, batch)


def pool_conformers(s: Tensor, v: Tensor) -> ScalarVector:
    """Mean over the conformer axis: [n, k, f] -> [n, f], [n, k, f', 3] -> [n, f', 3]."""
    return ad.mean(s, 1), ad.mean(v, 1)


class MultiGVPConvLayer(Module):
    """Message passing over a shared edge list with a per-column edge mask.

    m_i = sum_j Msg(s_j ++ e_ji ++ s_i, v_j ++ e_ji ++ v_i)   (masked edges skipped)
    x_i = LN(x_i + dropout(m_i))
    x_i = LN(x_i + dropout(FF(x_i)))
    """

    def __init__(
        self,
        node_dims: Tuple[int, int],
        edge_dims: Tuple[int, int],
        rng: np.random.Generator,
        num_message_gvps: int = config.NUM_MESSAGE_GVPS,
        drop_rate: float = config.DROPOUT,
    ):
        ns, nv = node_dims
        es, ev = edge_dims
        self.drop_rate = drop_rate
        dims = [(2 * ns + es, 2 * nv + ev)] + [(ns, nv)] * num_message_gvps
        self.message = [
            GVP(dims[i], dims[i + 1], rng, scalar_act=(i < num_message_gvps - 1))
            for i in range(num_message_gvps)
        ]
        self.norm_message = LayerNorm(ns)
        self.ff = [
            GVP((ns, nv), (4 * ns, 2 * nv), rng),
            GVP((4 * ns, 2 * nv), (ns, nv), rng, scalar_act=False),
        ]
        self.norm_ff = LayerNorm(ns)

    def propagate(
        self,
        dst_s: Tensor,
        dst_v: Tensor,
        src_s: Tensor,
        src_v: Tensor,
        edge_s: Tensor,
        edge_v: Tensor,
        dst_local: np.ndarray,
        edge_mask: Optional[np.ndarray],
        training: bool,
        rng: Optional[np.random.Generator],
    ) -> ScalarVector:
        """Update `dst` nodes from per-edge source states.

        Args:
            dst_s, dst_v: States of the m nodes being updated
            src_s, src_v: Source-node states gathered per edge
            edge_s, edge_v: Edge features per edge
            dst_local: [E'] index into the m updated nodes for each edge
            edge_mask: [E', b] bool, None when every edge is present
        """
        s_i = ad.gather(dst_s, dst_local)
        v_i = ad.gather(dst_v, dst_local)
        ms = ad.concat([src_s, edge_s, s_i], axis=-1)
        mv = ad.concat([src_v, edge_v, v_i], axis=-2)
        for gvp in self.message:
            ms, mv = gvp(ms, mv)
        if edge_mask is not None:
            ms = ad.mul(ms, _row_mask(edge_mask, ms.shape))
            mv = ad.mul(mv, _row_mask(edge_mask[..., None], mv.shape))

        m = dst_s.shape[0]
        agg_s = ad.scatter_sum(ms, dst_local, m)
        agg_v = ad.scatter_sum(mv, dst_local, m)
        s = ad.add(dst_s, dropout(agg_s, self.drop_rate, rng, training))
        v = ad.add(dst_v, vector_dropout(agg_v, self.drop_rate, rng, training))
        s, v = self.norm_message(s, v)

        fs, fv = s, v
        for gvp in self.ff:
            fs, fv = gvp(fs, fv)
        s = ad.add(s, dropout(fs, self.drop_rate, rng, training))
        v = ad.add(v, vector_dropout(fv, self.drop_rate, rng, training))
        return self.norm_ff(s, v)

    def __call__(self, s, v, edge_index, edge_s, edge_v, edge_mask=None, training=False, rng=None) -> ScalarVector:
        src, dst = edge_index
        return self.propagate(s, v, ad.gather(s, src), ad.gather(v, src), edge_s, edge_v,
                              dst, edge_mask, training, rng)


@dataclass
class Encoding:
    """Pooled encoder output plus the state-averaged edge embeddings the decoder reads."""

    node_s: Tensor          # [n, ns]
    node_v: Tensor          # [n, nv, 3]
    edge_s: Tensor          # [E, es]
    edge_v: Tensor          # [E, ev, 3]
    edge_index: np.ndarray  # [2, E]

    @property
    def n(self) -> int:
        return self.node_s.shape[0]


class RnaDesignModel(Module):
    """Multi-state GVP-GNN for RNA inverse folding.

    Args:
        cfg: Network dimensions and decoder kind
        seed: Initialization seed
    """

    def __init__(self, cfg: Optional[ModelConfig] = None, seed: int = config.DEFAULT_SEED):
        self.cfg = cfg or ModelConfig()
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, config.STREAM_INIT]))
        node_dims = (self.cfg.node_scalar_dim, self.cfg.node_vector_dim)
        edge_dims = (self.cfg.edge_scalar_dim, self.cfg.edge_vector_dim)

        self.node_in_norm = LayerNorm(config.NODE_SCALAR_IN)
        self.node_in = GVP((config.NODE_SCALAR_IN, config.NODE_VECTOR_IN), node_dims, rng, scalar_act=False)
        self.edge_in_norm = LayerNorm(config.EDGE_SCALAR_IN)
        self.edge_in = GVP((config.EDGE_SCALAR_IN, config.EDGE_VECTOR_IN), edge_dims, rng, scalar_act=False)
        self.encoder = [
            MultiGVPConvLayer(node_dims, edge_dims, rng, self.cfg.num_message_gvps, self.cfg.dropout)
            for _ in range(self.cfg.num_encoder_layers)
        ]

        if self.cfg.decoder_kind == "AR":
            self.seq_embedding = Tensor(
                rng.normal(0.0, 1.0, size=(len(config.ALPHABET), self.cfg.seq_embed_dim)), requires_grad=True
            )
            dec_edge_dims = (self.cfg.edge_scalar_dim + self.cfg.seq_embed_dim, self.cfg.edge_vector_dim)
            self.decoder = [
                MultiGVPConvLayer(node_dims, dec_edge_dims, rng, self.cfg.num_message_gvps, self.cfg.dropout)
                for _ in range(self.cfg.num_decoder_layers)
            ]
            self.head = GVP(node_dims, (len(config.ALPHABET), 0), rng, scalar_act=False)
        else:
            self.nar_hidden = Linear(self.cfg.node_scalar_dim, self.cfg.node_scalar_dim, rng)
            self.nar_out = Linear(self.cfg.node_scalar_dim, len(config.ALPHABET), rng)

        logger.info(
            f"Built {self.cfg.decoder_kind} model with {self.num_parameters():,} parameters "
            f"(reference full-size count {config.REFERENCE_PARAM_COUNT:,})"
        )

    @property
    def decoder_kind(self) -> str:
        return self.cfg.decoder_kind

    # ------------------------------------------------------------------
    # Encoder
    # ------------------------------------------------------------------

    def encode(self, mg: MultiGraph, training: bool = False, rng: Optional[np.random.Generator] = None) -> Encoding:
        """Embed, run the multi-state encoder layers, and pool over conformers."""
        s, v = self.node_in_norm(constant(mg.node_s), constant(mg.node_v))
        s, v = self.node_in(s, v)
        es, ev = self.edge_in_norm(constant(mg.edge_s), constant(mg.edge_v))
        es, ev = self.edge_in(es, ev)
        for layer in self.encoder:
            s, v = layer(s, v, mg.edge_index, es, ev, mg.edge_mask, training, rng)
        node_s, node_v = pool_conformers(s, v)

        counts = mg.edge_mask.sum(axis=1).astype(np.float64)
        present = mg.edge_mask.astype(np.float64)
        es = ad.sum(ad.mul(es, _row_mask(present, es.shape)), 1)
        ev = ad.sum(ad.mul(ev, _row_mask(present[..., None], ev.shape)), 1)
        es = ad.mul(es, _row_mask(1.0 / counts, es.shape))
        ev = ad.mul(ev, _row_mask(np.broadcast_to((1.0 / counts)[:, None], ev.shape[:2]), ev.shape))
        return Encoding(node_s, node_v, es, ev, mg.edge_index)

    # ------------------------------------------------------------------
    # Decoders
    # ------------------------------------------------------------------

    def _decoder_edge_inputs(self, enc: Encoding, batch: int, edge_ids: np.ndarray, src_bases: np.ndarray, causal: np.ndarray):
        """Edge features for decoder edges: pooled edge embedding ++ masked sequence embedding.

        Args:
            edge_ids: [E'] edges to build
            src_bases: [E', B] base index of each edge source (-1 unknown)
            causal: [E'] True where src < dst
        """
        es = _expand_batch(ad.gather(enc.edge_s, edge_ids), batch)
        ev = _expand_batch(ad.gather(enc.edge_v, edge_ids), batch)
        visible = causal[:, None] & (src_bases >= 0)
        emb = ad.gather(self.seq_embedding, np.maximum(src_bases, 0))
        emb = ad.mul(emb, _row_mask(visible, emb.shape))
        return ad.concat([es, emb], axis=-1), ev

    def _causal_sources(self, enc_s, enc_v, dec_s, dec_v, src: np.ndarray, causal: np.ndarray, batch: int):
        """Per-edge source states: decoder state when src < dst, encoder state otherwise."""
        fwd = np.broadcast_to(causal[:, None], (len(src), batch))
        s = ad.add(
            ad.mul(ad.gather(dec_s, src), _row_mask(fwd, (len(src), batch, dec_s.shape[-1]))),
            ad.mul(ad.gather(enc_s, src), _row_mask(~fwd, (len(src), batch, enc_s.shape[-1]))),
        )
        vshape = (len(src), batch) + dec_v.shape[2:]
        v = ad.add(
            ad.mul(ad.gather(dec_v, src), _row_mask(fwd[..., None], vshape)),
            ad.mul(ad.gather(enc_v, src), _row_mask(~fwd[..., None], vshape)),
        )
        return s, v

    def decode_logits_ar(
        self,
        enc: Encoding,
        sequences: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """Teacher-forced autoregressive pass.

        The message into node i carries the embedding of base j only for j < i,
        and edges with j >= i read the encoder state of j, so logits at i depend
        on the structure and on bases before i only.

        Args:
            enc: Encoder output
            sequences: [n] or [n, B] base indices (-1 unknown)

        Returns:
            Logits [n, 4] for 1-D input, [n, B, 4] otherwise
        """
        if self.decoder_kind != "AR":
            raise InputValidationError("decode_logits_ar called on a NAR model")
        sequences = np.asarray(sequences, dtype=np.int64)
        squeeze = sequences.ndim == 1
        if squeeze:
            sequences = sequences[:, None]
        if sequences.shape[0] != enc.n:
            raise DimensionError(f"sequence length {sequences.shape[0]} != node count {enc.n}")
        batch = sequences.shape[1]
        src, dst = enc.edge_index
        causal = src < dst
        all_edges = np.arange(len(src))

        enc_s = _expand_batch(enc.node_s, batch)
        enc_v = _expand_batch(enc.node_v, batch)
        es, ev = self._decoder_edge_inputs(enc, batch, all_edges, sequences[src], causal)
        s, v = enc_s, enc_v
        for layer in self.decoder:
            src_s, src_v = self._causal_sources(enc_s, enc_v, s, v, src, causal, batch)
            s, v = layer.propagate(s, v, src_s, src_v, es, ev, dst, None, training, rng)
        logits, _ = self.head(s, v)
        return ad.reshape(logits, (enc.n, len(config.ALPHABET))) if squeeze else logits

    def decode_logits_nar(self, enc: Encoding, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """One-shot per-node MLP on pooled scalars -> [n, 4]."""
        if self.decoder_kind != "NAR":
            raise InputValidationError("decode_logits_nar called on an AR model")
        hidden = ad.relu(self.nar_hidden(enc.node_s))
        hidden = dropout(hidden, self.cfg.dropout, rng, training)
        return self.nar_out(hidden)

    def logits(self, mg: MultiGraph, sequence: np.ndarray, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """Encode then decode; NAR ignores `sequence`."""
        enc = self.encode(mg, training, rng)
        if self.decoder_kind == "AR":
            return self.decode_logits_ar(enc, sequence, training, rng)
        return self.decode_logits_nar(enc, training, rng)

    def loss(self, mg: MultiGraph, sequence: np.ndarray, smoothing: float = config.LABEL_SMOOTHING,
             training: bool = False, rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        """Label-smoothed cross-entropy over positions with known bases.

        Returns:
            (scalar loss, logits [n, 4])
        """
        sequence = np.asarray(sequence, dtype=np.int64)
        logits = self.logits(mg, sequence, training, rng)
        known = np.nonzero(sequence >= 0)[0]
        if len(known) == 0:
            raise InputValidationError("loss needs at least one known base")
        scored = logits if len(known) == len(sequence) else ad.gather(logits, known)
        return ad.softmax_cross_entropy(scored, sequence[known], smoothing), logits

    def start_decoding(self, enc: Encoding, batch: int) -> "IncrementalDecoder":
        return IncrementalDecoder(self, enc, batch)


class IncrementalDecoder:
    """Position-by-position AR decoding with cached per-layer decoder states.

    Node j's state at every decoder layer depends only on bases before j, so
    it is final once position j has been visited; each step updates a single
    node per layer. Logits match decode_logits_ar on the committed sequence.
    Runs tape-free (inference only).
    """

    def __init__(self, model: RnaDesignModel, enc: Encoding, batch: int):
        if model.decoder_kind != "AR":
            raise InputValidationError("incremental decoding needs an AR model")
        self.model = model
        self.enc = enc
        self.batch = batch
        n = enc.n
        self.bases = np.full((n, batch), -1, dtype=np.int64)
        self.enc_s = _expand_batch(enc.node_s, batch)
        self.enc_v = _expand_batch(enc.node_v, batch)
        layers = len(model.decoder)
        self.state_s = [self.enc_s.data.copy()] + [np.zeros_like(self.enc_s.data) for _ in range(layers)]
        self.state_v = [self.enc_v.data.copy()] + [np.zeros_like(self.enc_v.data) for _ in range(layers)]
        src, dst = enc.edge_index
        order = np.argsort(dst, kind="stable")
        self._edges_sorted = order
        self._bounds = np.searchsorted(dst[order], np.arange(n + 1))

    def step(self, i: int) -> np.ndarray:
        """Logits [B, 4] for position i given committed bases at positions < i."""
        model = self.model
        src_all, _ = self.enc.edge_index
        edges = self._edges_sorted[self._bounds[i]:self._bounds[i + 1]]
        src = src_all[edges]
        causal = src < i
        es, ev = model._decoder_edge_inputs(self.enc, self.batch, edges, self.bases[src], causal)
        dst_local = np.zeros(len(edges), dtype=np.int64)
        for layer_idx, layer in enumerate(model.decoder):
            prev_s = constant(self.state_s[layer_idx])
            prev_v = constant(self.state_v[layer_idx])
            src_s, src_v = model._causal_sources(self.enc_s, self.enc_v, prev_s, prev_v, src, causal, self.batch)
            node_s = constant(self.state_s[layer_idx][i:i + 1])
            node_v = constant(self.state_v[layer_idx][i:i + 1])
            s, v = layer.propagate(node_s, node_v, src_s, src_v, es, ev, dst_local, None, False, None)
            self.state_s[layer_idx + 1][i] = s.data[0]
            self.state_v[layer_idx + 1][i] = v.data[0]
        logits, _ = model.head(constant(self.state_s[-1][i:i + 1]), constant(self.state_v[-1][i:i + 1]))
        return logits.data[0]

    def commit(self, i: int, bases: np.ndarray) -> None:
        self.bases[i] = np.asarray(bases, dtype=np.int64)


def parameter_manifest(model: Module) -> List[Tuple[str, Tuple[int, ...]]]:
    """(name, shape) of every parameter in checkpoint order."""
    return [(name, p.shape) for name, p in model.named_parameters()]
