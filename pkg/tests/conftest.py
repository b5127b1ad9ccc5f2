import numpy as np
import pytest
from hypothesis import settings

from services.cascade_engine import CascadeModel
from services.graph_core import DirectedGraph
from utils.synthetic import random_linear_instance

settings.register_profile("fracspread", deadline=None, max_examples=25)
settings.load_profile("fracspread")


def random_instance(seed: int, n: int, dag: bool = False, arc_probability: float = 0.5) -> DirectedGraph:
    return random_linear_instance(n, np.random.default_rng(seed), arc_probability=arc_probability, dag=dag)


@pytest.fixture
def path_graph():
    """0 -> 1 -> 2 -> 3, weight 1/2 on every arc"""
    return DirectedGraph.from_arcs(4, [(0, 1, 0.5), (1, 2, 0.5), (2, 3, 0.5)])


@pytest.fixture
def star_graph():
    """Center 0 with full-weight arcs to three leaves"""
    return DirectedGraph.from_arcs(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])


@pytest.fixture
def diamond_dag():
    return DirectedGraph.from_arcs(4, [(0, 1, 0.5), (0, 2, 0.25), (1, 3, 0.5), (2, 3, 0.5)])


@pytest.fixture
def linear_model(diamond_dag):
    return CascadeModel.linear(diamond_dag)


@pytest.fixture
def edge_file(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("# comment\n10 20 0.5\n20 30 0.25\n\n30 10 1.0\n")
    return path
