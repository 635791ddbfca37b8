import numpy as np
import pytest
from hypothesis import settings

from sherbet import _kernels
from sherbet.ontology import load_ontology, pad_virtual_leaves

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

BACKENDS = _kernels.available_backends()


@pytest.fixture(params=BACKENDS, ids=[m.BACKEND for m in BACKENDS])
def backend(request):
    return request.param


TOY_EDGES = [("ROOT", "root"), ("root", "a"), ("root", "b"), ("a", "c1")]


@pytest.fixture
def toy_tree():
    """root -> a -> c1, root -> b; padded so b gains a virtual leaf."""
    return pad_virtual_leaves(load_ontology(TOY_EDGES))


def random_tree(rng, depth=3, fanout=(1, 3), prefix="n"):
    """Edge list of a random tree with every leaf at ``depth`` levels below the root."""
    edges = [("ROOT", "r")]
    frontier = ["r"]
    for lvl in range(depth - 1):
        nxt = []
        for node in frontier:
            for k in range(int(rng.integers(fanout[0], fanout[1] + 1))):
                child = f"{node}.{k}"
                edges.append((node, child))
                nxt.append(child)
        frontier = nxt
    return edges


def random_patients(rng, n_codes, n_patients, max_adm=4, max_codes=5):
    out = []
    for _ in range(n_patients):
        T = int(rng.integers(1, max_adm + 1))
        out.append([rng.choice(n_codes, size=int(rng.integers(1, min(max_codes, n_codes) + 1)), replace=False)
                    for _ in range(T)])
    return out


def tiny_model(seed=0, depth=3, fanout=(2, 3), use_graph=True, hierarchical=True, dropout=0.0):
    """Small seeded model plus its ontology and a batch of patients."""
    from sherbet.graph import build_adjacency, count_cooccurrence
    from sherbet.model import ModelConfig, SherbetModel

    rng = np.random.default_rng(seed)
    ont = pad_virtual_leaves(load_ontology(random_tree(rng, depth=depth, fanout=fanout)))
    patients = random_patients(rng, ont.n_codes, 12, max_adm=3, max_codes=3)
    B = count_cooccurrence([a for p in patients for a in p], n_codes=ont.n_codes)
    _, A_hat = build_adjacency(B)
    cfg = ModelConfig(embed_dim=4, hidden_dim=5, patient_dim=6, code_attention_dim=4,
                      admission_attention_dim=3, graph_dropout=dropout, decoder_dropout=dropout,
                      use_graph=use_graph, hierarchical=hierarchical)
    E = rng.uniform(-0.3, 0.3, size=(ont.n_codes, 4))
    return SherbetModel.create(ont, A_hat, E, cfg, rng), patients


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
