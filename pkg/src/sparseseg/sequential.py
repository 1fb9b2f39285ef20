"""Gated recurrent cell (LSTM) carried across the frames of a sequence.

All vectors are 1×size rows. Gate pre-activations act on the concatenation
``[h_prev, x_t]`` (hidden state first).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GATES = ("f", "i", "c", "o")


@dataclass
class LstmParams:
    W_f: ad.Node
    W_i: ad.Node
    W_c: ad.Node
    W_o: ad.Node
    b_f: ad.Node
    b_i: ad.Node
    b_c: ad.Node
    b_o: ad.Node

    def __post_init__(self):
        h, hd = self.W_f.shape
        for g in GATES:
            if getattr(self, f"W_{g}").shape != (h, hd):
                raise ad.ShapeError(f"W_{g} has shape {getattr(self, f'W_{g}').shape}, expected {(h, hd)}")
            if getattr(self, f"b_{g}").shape != (1, h):
                raise ad.ShapeError(f"b_{g} has shape {getattr(self, f'b_{g}').shape}, expected {(1, h)}")
        if hd <= h:
            raise ad.ShapeError(f"gate matrices {self.W_f.shape} leave no room for input features")

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def named(self, prefix: str = "lstm") -> dict[str, ad.Node]:
        out = {}
        for g in GATES:
            out[f"{prefix}.W_{g}"] = getattr(self, f"W_{g}")
            out[f"{prefix}.b_{g}"] = getattr(self, f"b_{g}")
        return out

    @classmethod
    def init(cls, hidden: int, input_size: int, rng: np.random.Generator) -> "LstmParams":
        """Uniform fan-in initialisation in ±1/sqrt(hidden + input_size)."""
        bound = 1.0 / np.sqrt(hidden + input_size)
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = ad.parameter(rng.uniform(-bound, bound, (hidden, hidden + input_size)), f"W_{g}")
        for g in GATES:
            kw[f"b_{g}"] = ad.parameter(rng.uniform(-bound, bound, (1, hidden)), f"b_{g}")
        return cls(**kw)

    @classmethod
    def zeros(cls, hidden: int, input_size: int) -> "LstmParams":
        kw = {f"W_{g}": ad.parameter(np.zeros((hidden, hidden + input_size))) for g in GATES}
        kw.update({f"b_{g}": ad.parameter(np.zeros((1, hidden))) for g in GATES})
        return cls(**kw)


@dataclass
class LstmState:
    h: ad.Node  # final output h_t
    c: ad.Node  # long-term memory C_t

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(ad.constant(np.zeros((1, hidden))), ad.constant(np.zeros((1, hidden))))


def _gate(W: ad.Node, b: ad.Node, hx_T: ad.Node) -> ad.Node:
    # (W · [h, x]^T)^T + b, computed as [h, x] · W^T to stay in row layout
    return ad.add(ad.transpose(ad.matmul(W, hx_T)), b)


def lstm_step(params: LstmParams, prev: LstmState, x_t: ad.Node) -> LstmState:
    h = params.hidden
    if prev.h.shape != (1, h) or prev.c.shape != (1, h):
        raise ad.ShapeError(f"state shapes {prev.h.shape}/{prev.c.shape} do not match hidden size {h}")
    if x_t.shape != (1, params.input_size):
        raise ad.ShapeError(f"input has shape {x_t.shape}, expected (1, {params.input_size})")
    hx_T = ad.transpose(ad.concat([prev.h, x_t], axis=1))
    f_t = ad.sigmoid(_gate(params.W_f, params.b_f, hx_T))
    i_t = ad.sigmoid(_gate(params.W_i, params.b_i, hx_T))
    c_tilde = ad.tanh(_gate(params.W_c, params.b_c, hx_T))
    c_t = ad.add(ad.mul(f_t, prev.c), ad.mul(i_t, c_tilde))
    o_t = ad.sigmoid(_gate(params.W_o, params.b_o, hx_T))
    h_t = ad.mul(o_t, ad.tanh(c_t))
    return LstmState(h_t, c_t)


def run_sequence(params: LstmParams, initial: LstmState, inputs) -> list[LstmState]:
    inputs = list(inputs)
    if not inputs:
        raise ValueError("run_sequence needs at least one input")
    states = []
    state = initial
    for x in inputs:
        state = lstm_step(params, state, x)
        states.append(state)
    return states
