"""Child-sum tree-LSTM encoders: uni-, bi-directional, and alternating.

A cell at node j aggregates child hidden states by summation and keeps one
forget gate per child:

    h~_j = sum_k h_k
    i_j  = sigmoid(W_i x_j + U_i h~_j + b_i)
    f_jk = sigmoid(W_f x_j + U_f h_k  + b_f)        (one per child k)
    o_j  = sigmoid(W_o x_j + U_o h~_j + b_o)
    u_j  = tanh   (W_u x_j + U_u h~_j + b_u)
    c_j  = i_j * u_j + sum_k f_jk * c_k
    h_j  = o_j * tanh(c_j)

Layer stacks: `uni` runs leaf-to-root passes only; `bi` runs both
directions per layer and concatenates [up, down] per node, except the
final layer, whose downward half would never reach the root readout and
is omitted; `alternating` flips direction layer by layer (up, down, ...,
up), halving the parameter count relative to `bi`.

In a downward pass each node's single "child" is its parent's state (the
root gets none), so the same cell equations serve both directions.

All math is float64, and child-state summation always runs in ascending
node-id order, so encodings are bitwise reproducible. Backward passes
replay a recorded forward tape and produce exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from perfdiff.ast import Ast
from perfdiff.embed import EmbeddingTable, NodeVocab, kind_row

GATES = ("i", "f", "o", "u")

VARIANTS = ("uni", "bi", "alternating")


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # exp argument clipped inside the representable range; sigmoid already
    # saturates to exactly 0.0/1.0 in float64 well before +-700
    return 1.0 / (1.0 + np.exp(-np.clip(a, -700.0, 700.0)))


@dataclass
class NodeState:
    h: np.ndarray
    c: np.ndarray


def zero_state(d: int) -> NodeState:
    return NodeState(h=np.zeros(d), c=np.zeros(d))


@dataclass
class CellParams:
    """One tree-LSTM cell: W (d x in_dim), U (d x d), b (d) per gate."""

    W: dict[str, np.ndarray]
    U: dict[str, np.ndarray]
    b: dict[str, np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.W["i"].shape[1]

    @property
    def d(self) -> int:
        return self.W["i"].shape[0]

    def named_arrays(self, prefix: str = ""):
        for g in GATES:
            yield f"{prefix}W_{g}", self.W[g]
            yield f"{prefix}U_{g}", self.U[g]
            yield f"{prefix}b_{g}", self.b[g]


def init_cell(in_dim: int, d: int, rng: np.random.Generator) -> CellParams:
    wb = 1.0 / np.sqrt(in_dim)
    ub = 1.0 / np.sqrt(d)
    return CellParams(
        W={g: rng.uniform(-wb, wb, size=(d, in_dim)) for g in GATES},
        U={g: rng.uniform(-ub, ub, size=(d, d)) for g in GATES},
        b={g: np.zeros(d) for g in GATES},
    )


def zero_cell(in_dim: int, d: int) -> CellParams:
    return CellParams(
        W={g: np.zeros((d, in_dim)) for g in GATES},
        U={g: np.zeros((d, d)) for g in GATES},
        b={g: np.zeros(d) for g in GATES},
    )


@dataclass(frozen=True)
class Architecture:
    variant: str
    layers: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.variant == "alternating" and self.layers % 2 == 0:
            raise ValueError("alternating architecture needs an odd layer count")


@dataclass
class _Stacked:
    """Per-pass view of a cell with the i/o/u gates stacked for one matmul."""

    cell: CellParams
    Wiou: np.ndarray   # (3d, in_dim)
    Uiou: np.ndarray   # (3d, d)
    biou: np.ndarray   # (3d,)


def _stack_cell(cell: CellParams) -> _Stacked:
    return _Stacked(
        cell=cell,
        Wiou=np.concatenate([cell.W["i"], cell.W["o"], cell.W["u"]], axis=0),
        Uiou=np.concatenate([cell.U["i"], cell.U["o"], cell.U["u"]], axis=0),
        biou=np.concatenate([cell.b["i"], cell.b["o"], cell.b["u"]]),
    )


@dataclass
class _CellTape:
    x: np.ndarray
    h_tilde: np.ndarray
    i: np.ndarray
    o: np.ndarray
    u: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    preds: list[int]
    f: np.ndarray | None           # (n_preds, d)
    pred_h: np.ndarray | None      # (n_preds, d)
    pred_c: np.ndarray | None      # (n_preds, d)


@dataclass
class _PassTape:
    order: list[int]
    cells: dict[int, _CellTape]
    states: dict[int, NodeState]


@dataclass
class EncodeTape:
    """Forward record for one tree; required by backward()."""

    ast: Ast
    rows: dict[int, int]                      # node id -> embedding row
    layer_passes: list[dict[str, _PassTape]]  # per layer: direction -> tape


@dataclass
class Gradients:
    """Parameter-name-keyed gradients plus touched embedding rows."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    embedding_rows: dict[int, np.ndarray] = field(default_factory=dict)

    def add_param(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            self.params[name] += value
        else:
            self.params[name] = value.copy()

    def add_row(self, row: int, value: np.ndarray) -> None:
        if row in self.embedding_rows:
            self.embedding_rows[row] += value
        else:
            self.embedding_rows[row] = value.copy()

    def merge(self, other: "Gradients", scale: float = 1.0) -> None:
        for name, g in other.params.items():
            self.add_param(name, g * scale if scale != 1.0 else g)
        for row, g in other.embedding_rows.items():
            self.add_row(row, g * scale if scale != 1.0 else g)


def cell_forward(
    params: CellParams, x: np.ndarray, child_states: list[NodeState]
) -> NodeState:
    state, _ = _cell_forward_tape(
        _stack_cell(params), x, list(range(len(child_states))), child_states
    )
    return state


def _cell_forward_tape(
    st: _Stacked, x: np.ndarray, preds: list[int], states: list[NodeState]
) -> tuple[NodeState, _CellTape]:
    d = st.cell.d
    pre = st.Wiou @ x + st.biou
    if states:
        h_tilde = states[0].h.copy()
        for s in states[1:]:
            h_tilde += s.h
        pre = pre + st.Uiou @ h_tilde
    else:
        h_tilde = np.zeros(d)

    i = _sigmoid(pre[:d])
    o = _sigmoid(pre[d : 2 * d])
    u = np.tanh(pre[2 * d :])

    if states:
        pred_h = np.stack([s.h for s in states])
        pred_c = np.stack([s.c for s in states])
        wf_x = st.cell.W["f"] @ x + st.cell.b["f"]
        f = _sigmoid(wf_x + pred_h @ st.cell.U["f"].T)
        c = i * u + (f * pred_c).sum(axis=0)
    else:
        pred_h = pred_c = f = None
        c = i * u
    tanh_c = np.tanh(c)
    h = o * tanh_c
    tape = _CellTape(
        x=x, h_tilde=h_tilde, i=i, o=o, u=u, c=c, tanh_c=tanh_c,
        preds=preds, f=f, pred_h=pred_h, pred_c=pred_c,
    )
    return NodeState(h=h, c=c), tape


def _children_sorted(ast: Ast) -> dict[int, list[int]]:
    return {nid: sorted(n.children) for nid, n in ast.nodes.items()}


def _post_order(ast: Ast) -> list[int]:
    order: list[int] = []
    stack: list[tuple[int, bool]] = [(ast.root, False)]
    while stack:
        nid, expanded = stack.pop()
        if expanded:
            order.append(nid)
            continue
        stack.append((nid, True))
        for child in reversed(ast.nodes[nid].children):
            stack.append((child, False))
    return order


def _run_pass(
    cell: CellParams,
    xs: dict[int, np.ndarray],
    order: list[int],
    preds: dict[int, list[int]],
) -> _PassTape:
    st = _stack_cell(cell)
    states: dict[int, NodeState] = {}
    cells: dict[int, _CellTape] = {}
    for nid in order:
        p = preds[nid]
        state, tape = _cell_forward_tape(st, xs[nid], p, [states[k] for k in p])
        states[nid] = state
        cells[nid] = tape
    return _PassTape(order=order, cells=cells, states=states)


class TreeLstmEncoder:
    """Stack of tree-LSTM layers mapping a whole tree to a d-vector."""

    def __init__(self, architecture: Architecture, input_dim: int, d: int, seed: int = 0):
        self.architecture = architecture
        self.input_dim = input_dim
        self.d = d
        rng = np.random.default_rng(seed)
        self.layer_cells: list[dict[str, CellParams]] = []
        for k in range(architecture.layers):
            in_dim = self.layer_input_dim(k)
            directions = self._layer_directions(k)
            self.layer_cells.append(
                {dn: init_cell(in_dim, d, rng) for dn in directions}
            )

    def _layer_directions(self, k: int) -> tuple[str, ...]:
        arch = self.architecture
        if arch.variant == "uni":
            return ("up",)
        if arch.variant == "bi":
            return ("up",) if k == arch.layers - 1 else ("up", "down")
        return ("up",) if k % 2 == 0 else ("down",)

    def layer_input_dim(self, k: int) -> int:
        if k == 0:
            return self.input_dim
        if self.architecture.variant == "bi":
            return 2 * self.d
        return self.d

    def named_parameters(self):
        for k, layer in enumerate(self.layer_cells):
            for direction in ("up", "down"):
                if direction in layer:
                    yield from layer[direction].named_arrays(
                        f"layer{k}.{direction}."
                    )

    def param_count(self) -> int:
        return sum(a.size for _, a in self.named_parameters())

    def encode(
        self, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
    ) -> np.ndarray:
        return self.encode_recorded(ast, table, vocab)[0]

    def encode_recorded(
        self, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
    ) -> tuple[np.ndarray, EncodeTape]:
        rows = {nid: kind_row(table, vocab, n.kind) for nid, n in ast.nodes.items()}
        reps: dict[int, np.ndarray] = {
            nid: table.vectors[row] for nid, row in rows.items()
        }
        post = _post_order(ast)
        pre = post[::-1]
        kids = _children_sorted(ast)
        parent: dict[int, list[int]] = {ast.root: []}
        for nid, node in ast.nodes.items():
            for child in node.children:
                parent[child] = [nid]

        layer_passes: list[dict[str, _PassTape]] = []
        for k, layer in enumerate(self.layer_cells):
            passes: dict[str, _PassTape] = {}
            if "up" in layer:
                passes["up"] = _run_pass(layer["up"], reps, post, kids)
            if "down" in layer:
                passes["down"] = _run_pass(layer["down"], reps, pre, parent)
            layer_passes.append(passes)
            if len(passes) == 2:
                reps = {
                    nid: np.concatenate(
                        [passes["up"].states[nid].h, passes["down"].states[nid].h]
                    )
                    for nid in ast.nodes
                }
            else:
                (tape,) = passes.values()
                reps = {nid: tape.states[nid].h for nid in ast.nodes}

        final = layer_passes[-1]
        direction = "up" if "up" in final else "down"
        out = final[direction].states[ast.root].h
        return out, EncodeTape(ast=ast, rows=rows, layer_passes=layer_passes)


def _pass_backward(
    cell: CellParams,
    tape: _PassTape,
    dh_init: dict[int, np.ndarray],
    grads: Gradients,
    prefix: str,
) -> dict[int, np.ndarray]:
    """Backprop one pass; returns d(loss)/d(pass input x) per node.

    The reverse walk is inherently sequential (dh/dc flow along the tree),
    but per-gate pre-activation gradients are collected and turned into
    parameter gradients with a few dense matmuls afterwards.
    """
    st = _stack_cell(cell)
    d = cell.d
    n = len(tape.order)
    dh = {nid: dh_init[nid].copy() if nid in dh_init else np.zeros(d) for nid in tape.order}
    dc = {nid: np.zeros(d) for nid in tape.order}

    DA = np.empty((n, 3 * d))          # da_i | da_o | da_u per node
    X = np.empty((n, cell.in_dim))
    HT = np.empty((n, d))
    DAFsum = np.zeros((n, d))          # sum over children of da_f
    f_da_blocks: list[np.ndarray] = []
    f_h_blocks: list[np.ndarray] = []

    for row, nid in enumerate(reversed(tape.order)):
        t = tape.cells[nid]
        g_h = dh[nid]
        g_c = dc[nid]

        do = g_h * t.tanh_c
        g_c = g_c + g_h * t.o * (1.0 - t.tanh_c * t.tanh_c)

        di = g_c * t.u
        du = g_c * t.i

        da_iou = DA[row]
        da_iou[:d] = di * t.i * (1.0 - t.i)
        da_iou[d : 2 * d] = do * t.o * (1.0 - t.o)
        da_iou[2 * d :] = du * (1.0 - t.u * t.u)
        X[row] = t.x
        HT[row] = t.h_tilde

        dh_tilde = st.Uiou.T @ da_iou

        if t.preds:
            df = g_c * t.pred_c
            da_f = df * t.f * (1.0 - t.f)
            dc_add = g_c * t.f
            dh_add = da_f @ cell.U["f"]
            for idx, k in enumerate(t.preds):
                dc[k] += dc_add[idx]
                dh[k] += dh_add[idx] + dh_tilde
            DAFsum[row] = da_f.sum(axis=0)
            f_da_blocks.append(da_f)
            f_h_blocks.append(t.pred_h)

    gW_iou = DA.T @ X                   # (3d, in_dim)
    gU_iou = DA.T @ HT                  # (3d, d)
    gb_iou = DA.sum(axis=0)
    for slot, g in enumerate(("i", "o", "u")):
        grads.add_param(f"{prefix}W_{g}", gW_iou[slot * d : (slot + 1) * d])
        grads.add_param(f"{prefix}U_{g}", gU_iou[slot * d : (slot + 1) * d])
        grads.add_param(f"{prefix}b_{g}", gb_iou[slot * d : (slot + 1) * d])

    if f_da_blocks:
        DAF = np.concatenate(f_da_blocks)
        FH = np.concatenate(f_h_blocks)
        grads.add_param(f"{prefix}W_f", DAFsum.T @ X)
        grads.add_param(f"{prefix}U_f", DAF.T @ FH)
        grads.add_param(f"{prefix}b_f", DAF.sum(axis=0))
    else:
        grads.add_param(f"{prefix}W_f", np.zeros_like(cell.W["f"]))
        grads.add_param(f"{prefix}U_f", np.zeros_like(cell.U["f"]))
        grads.add_param(f"{prefix}b_f", np.zeros_like(cell.b["f"]))

    DX = DA @ st.Wiou + DAFsum @ cell.W["f"]
    return {nid: DX[row] for row, nid in enumerate(reversed(tape.order))}


def backward(
    encoder: TreeLstmEncoder, tape: EncodeTape, upstream_gradient: np.ndarray
) -> Gradients:
    """Exact gradients of (upstream . root output) for params and embeddings."""
    if tape is None:
        raise ValueError("backward called without a recorded forward pass")
    ast = tape.ast
    grads = Gradients()
    d = encoder.d
    d_reps: dict[int, np.ndarray] = {ast.root: np.asarray(upstream_gradient, dtype=np.float64)}

    for k in range(len(encoder.layer_cells) - 1, -1, -1):
        layer = encoder.layer_cells[k]
        passes = tape.layer_passes[k]
        dx_total: dict[int, np.ndarray] = {nid: np.zeros(encoder.layer_input_dim(k)) for nid in ast.nodes}
        if len(passes) == 2:
            dh_up = {nid: g[:d] for nid, g in d_reps.items()}
            dh_down = {nid: g[d:] for nid, g in d_reps.items()}
            for direction, dh_init in (("up", dh_up), ("down", dh_down)):
                dxs = _pass_backward(
                    layer[direction], passes[direction], dh_init, grads,
                    f"layer{k}.{direction}.",
                )
                for nid, dx in dxs.items():
                    dx_total[nid] += dx
        else:
            (direction,) = passes.keys()
            dxs = _pass_backward(
                layer[direction], passes[direction], d_reps, grads,
                f"layer{k}.{direction}.",
            )
            for nid, dx in dxs.items():
                dx_total[nid] += dx
        d_reps = dx_total

    for nid, dx in d_reps.items():
        grads.add_row(tape.rows[nid], dx)
    return grads


def encode_uni(
    encoder: TreeLstmEncoder, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
) -> np.ndarray:
    if encoder.architecture.variant != "uni":
        raise ValueError("encoder is not uni-directional")
    return encoder.encode(ast, table, vocab)


def encode_bi(
    encoder: TreeLstmEncoder, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
) -> np.ndarray:
    if encoder.architecture.variant != "bi":
        raise ValueError("encoder is not bi-directional")
    return encoder.encode(ast, table, vocab)


def encode_alternating(
    encoder: TreeLstmEncoder, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
) -> np.ndarray:
    if encoder.architecture.variant != "alternating":
        raise ValueError("encoder is not alternating")
    return encoder.encode(ast, table, vocab)
