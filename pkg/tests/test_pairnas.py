import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synergraph import chem, pairnas
from synergraph.diffcore import ParamStore, Tensor, grad_check, no_grad
from synergraph.graphs import GraphBatch
from synergraph.pairnas import OPERATOR_KINDS, PairAttention, RoutedStack, RoutingLayer

from helpers import randomize, relu

F = 24


def batch_of(*smiles):
    return GraphBatch.from_graphs([chem.parse_smiles(s) for s in smiles], F)


def op(kind, d_out=5, seed=0, rng=None):
    store = ParamStore()
    o = pairnas.make_operator(kind, store, kind, seed, F, d_out)
    if rng is not None:
        randomize(store, rng)
    return o


def test_gcn_on_ethanol_matches_hand_computation(rng):
    b = batch_of("CCO")
    g = op("GCNmol", rng=rng)
    x = rng.normal(size=(3, F))
    e = g.bond_emb.data[0]  # all single bonds
    deg = np.array([2.0, 3.0, 2.0])  # in-degree + self loop
    agg = x / deg[:, None]
    for i, j in [(0, 1), (1, 0), (1, 2), (2, 1)]:
        agg[j] += relu(x[i] + e) / np.sqrt(deg[i] * deg[j])
    expected = agg @ g.lin.W.data + g.lin.b.data
    assert np.abs(g(Tensor(x), b).data - expected).max() < 1e-12


def test_gin_isolated_node_is_mlp(rng):
    b = batch_of("C")
    g = op("GINmol", rng=rng)
    g.eps.data[:] = 0.0
    x = rng.normal(size=(1, F))
    expected = relu(x @ g.lin1.W.data + g.lin1.b.data) @ g.lin2.W.data + g.lin2.b.data
    assert np.allclose(g(Tensor(x), b).data, expected, atol=1e-12)


def test_gat_single_neighbour(rng):
    b = batch_of("CO")
    g = op("GATmol", rng=rng)
    x = rng.normal(size=(2, F))
    with no_grad():
        msg, alpha = g.attention(Tensor(x), b)
    assert np.allclose(alpha.data, 1.0)
    assert np.allclose(msg.data[0], relu(x[0] + g.bond_emb.data[0]))


@pytest.mark.parametrize("kind", OPERATOR_KINDS)
def test_operators_equivariant(kind, rng):
    b = batch_of("CC(=O)Nc1ccccc1", "C1CC1O")
    g = op(kind, rng=rng)
    x = rng.normal(size=b.x.shape)
    perm = rng.permutation(b.n_nodes)
    out = g(Tensor(x), b).data
    out_p = g(Tensor(x[perm]), b.permuted(perm)).data
    assert np.allclose(out_p, out[perm], atol=1e-12)


def test_routing_weight_landmarks():
    same = np.ones((6, 3))
    a = pairnas.routing_weights(np.array([[0.3, -1.0, 2.0]]), Tensor(same)).data
    assert np.allclose(a, 1 / 6) and a.shape == (1, 6)
    desc = Tensor(np.array([[np.log(2.0)], [0.0], [0.0]]))
    assert np.allclose(pairnas.routing_weights(np.array([[1.0]]), desc).data, [[0.5, 0.25, 0.25]], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 5.0))
def test_routing_simplex(seed, scale):
    rng = np.random.default_rng(seed)
    a = pairnas.routing_weights(rng.normal(scale=scale, size=(4, 8)), Tensor(rng.normal(size=(6, 8)))).data
    assert np.all(a > 0) and np.allclose(a.sum(axis=1), 1.0, atol=1e-9)


def test_mixed_layer_decomposition(rng):
    b = batch_of("CCO", "c1ccncc1")
    layer = RoutingLayer(ParamStore(), "r", 0, 0, F, 5, 4, kinds=("GCNmol", "GATmol", "MLPmol"))
    randomize(layer.store, rng)
    x = Tensor(rng.normal(size=b.x.shape))
    alpha = rng.dirichlet(np.ones(3), size=2)
    out = pairnas.mixed_layer(x, b, alpha, layer).data
    per_node = alpha[b.node_graph]
    expected = sum(per_node[:, i:i + 1] * o(x, b).data for i, o in enumerate(layer.ops))
    assert np.array_equal(out, expected)


def test_uniform_over_copies_equals_single(rng):
    b = batch_of("CCN")
    layer = RoutingLayer(ParamStore(), "r", 0, 0, F, 4, 3, kinds=("Graphmol", "Graphmol"))
    src = layer.ops[0]
    for name, p in layer.store.items():
        if name.startswith("r.op1."):
            p.data = layer.store[name.replace("r.op1.", "r.op0.")].data.copy()
    x = Tensor(rng.normal(size=b.x.shape))
    out = layer.mixed(x, b, np.full((1, 2), 0.5)).data
    assert np.allclose(out, src(x, b).data, atol=1e-14)


def test_separation_landmarks():
    assert pairnas.separation_loss([np.eye(2)]).item() == 0.0
    assert pairnas.separation_loss([np.array([[1.0, 2.0], [1.0, 2.0]])]).item() == pytest.approx(1.0, abs=1e-12)
    at45 = np.array([[1.0, 0.0], [1.0, 1.0]])
    assert pairnas.separation_loss([at45]).item() == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(pairnas.DegenerateDescriptor):
        pairnas.separation_loss([np.array([[0.0, 0.0], [1.0, 0.0]])])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_separation_in_unit_interval(seed):
    d = np.random.default_rng(seed).normal(size=(6, 4))
    assert 0.0 <= pairnas.separation_loss([d]).item() <= 1.0


def test_descriptor_init():
    d = pairnas.init_descriptors(np.random.default_rng(0), 6, 16)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    s = pairnas.separation_loss([d]).item()
    assert 0 < s < 0.05


# pair attention

def make_pair(rng, **kw):
    store = ParamStore()
    attn = PairAttention(store, "p", 0, d_irr=3, d_k=2, k_max=2, d_attn=4, heads=2, d_ff=6, **kw)
    randomize(store, rng)
    return attn


def test_pair_attention_zero_ffn_is_identity(rng):
    attn = make_pair(rng)
    attn.ff2.W.data[:] = 0
    attn.ff2.b.data[:] = 0
    e1, e2 = rng.normal(size=(2, 7)), rng.normal(size=(2, 7))
    h1, h2 = pairnas.pair_attend(Tensor(e1), Tensor(e2), attn)
    assert np.array_equal(h1.data, e1) and np.array_equal(h2.data, e2)


def test_pair_attention_symmetric_inputs(rng):
    attn = make_pair(rng)
    e = rng.normal(size=(3, 7))
    h1, h2 = attn(Tensor(e), Tensor(e.copy()))
    assert np.array_equal(h1.data, h2.data)


def test_pair_attention_loop_oracle(rng):
    attn = make_pair(rng)
    e1, e2 = rng.normal(size=(1, 7)), rng.normal(size=(1, 7))
    W = lambda lin: lin.W.data
    # explicit loops: query from e1, tokens from e2
    tokens_k = [e2[0, :3] @ W(attn.k_irr)] + [e2[0, 3 + 2 * j:5 + 2 * j] @ W(attn.k_slot) for j in range(2)]
    tokens_v = [e2[0, :3] @ W(attn.v_irr)] + [e2[0, 3 + 2 * j:5 + 2 * j] @ W(attn.v_slot) for j in range(2)]
    q = e1[0] @ W(attn.q)
    ctx = np.zeros(4)
    for h in range(2):
        sl = slice(2 * h, 2 * h + 2)
        logits = np.array([q[sl] @ k[sl] / np.sqrt(2) for k in tokens_k])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        for t in range(3):
            ctx[sl] += w[t] * tokens_v[t][sl]
    o = ctx @ W(attn.out) + attn.out.b.data
    upd = relu(o @ W(attn.ff1) + attn.ff1.b.data) @ W(attn.ff2) + attn.ff2.b.data
    h1, _ = attn(Tensor(e1), Tensor(e2))
    assert np.abs(h1.data[0] - (e1[0] + upd)).max() < 1e-10


def test_routed_stack_gradients(rng):
    b = batch_of("CCO", "c1ccccc1N")
    store = ParamStore()
    stack = RoutedStack(store, "s", 0, F, 4, 7, 3, n_layers=2, d_out=3)
    attn = PairAttention(store, "p", 0, d_irr=3, d_k=2, k_max=2, d_attn=4, heads=2, d_ff=6)
    e = Tensor(rng.normal(size=(2, 7)), requires_grad=True)
    x0 = Tensor(b.x)

    def f():
        h1, h2 = attn(e[0:1], e[1:2])
        from synergraph.diffcore import concat, sum as tsum
        out, _ = stack(x0, b, concat([h1, h2], axis=0))
        return tsum(out * out) + stack.separation_loss()

    params = [("e", e)] + [(n, p) for n, p in store.items()]
    assert grad_check(f, params, max_coords=3) < 1e-3
