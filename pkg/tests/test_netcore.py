import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import networks, random_network
from dime.netcore import (
    AlignedPair,
    AnchorError,
    DanglingReferenceError,
    DuplicateEdgeError,
    HeterogeneousNetwork,
    NetworkFormatError,
    build_transition_matrix,
    dump_anchors,
    dump_network,
    format_network,
    load_anchors,
    load_network,
    parse_network,
    sample_network,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_file(tmp_path):
    net = load_network(write(tmp_path, "g.edges", "U a\nU b\nF a b\n"))
    assert net.n_users == 2
    assert net.n_follows == 1
    assert net.follow.tolist() == [[0, 1]]


def test_undeclared_user_is_dangling(tmp_path):
    with pytest.raises(DanglingReferenceError) as err:
        load_network(write(tmp_path, "g.edges", "U b\nF a b\n"))
    assert err.value.lineno == 2


def test_parse_errors_carry_line_numbers():
    with pytest.raises(NetworkFormatError, match="line 3"):
        parse_network(["U a", "# comment", "X a"])
    with pytest.raises(DuplicateEdgeError, match="line 4"):
        parse_network(["U a", "U b", "F a b", "F a b"])
    with pytest.raises(NetworkFormatError, match="self-loop"):
        parse_network(["U a", "F a a"])
    with pytest.raises(NetworkFormatError, match="not an integer"):
        parse_network(["U a", "P p a", "AT p noon"])
    with pytest.raises(DanglingReferenceError):
        parse_network(["U a", "AW p hello"])
    with pytest.raises(NetworkFormatError):
        parse_network(["U a", "U a"])


def test_indices_follow_declaration_order():
    net = parse_network(["U z", "U a", "P p2 a", "P p1 z", "F a z", "AW p1 hi", "AT p2 3600"])
    assert net.user_ids == ("z", "a")
    assert net.post_ids == ("p2", "p1")
    assert net.post_author.tolist() == [1, 0]
    assert net.post_words == (frozenset(), frozenset({"hi"}))
    assert net.attribute_tokens("time") == (frozenset({"1"}), frozenset())


def test_time_bucketing_choices():
    lines = ["U a", "P p a", f"AT p {3 * 86400 + 5 * 3600}"]
    assert parse_network(lines).attribute_tokens("time") == (frozenset({"77"}),)
    assert parse_network(lines, "hour-of-day").attribute_tokens("time") == (frozenset({"5"}),)
    assert parse_network(lines, "day-of-week").attribute_tokens("time") == (frozenset({"3"}),)


def test_invariants_enforced_on_construction():
    with pytest.raises(NetworkFormatError):
        HeterogeneousNetwork(user_ids=["a"], follow=[(0, 0)])
    with pytest.raises(DuplicateEdgeError):
        HeterogeneousNetwork(user_ids=["a", "b"], follow=[(0, 1), (0, 1)])
    with pytest.raises(DanglingReferenceError):
        HeterogeneousNetwork(user_ids=["a"], follow=[(0, 1)])
    with pytest.raises(DanglingReferenceError):
        HeterogeneousNetwork(user_ids=["a"], post_ids=["p"], post_author=[3])


def test_arrays_are_read_only():
    net = HeterogeneousNetwork(user_ids=["a", "b"], follow=[(0, 1)])
    with pytest.raises(ValueError):
        net.follow[0, 0] = 1


@settings(max_examples=60, deadline=None)
@given(networks())
def test_round_trip_is_canonical(net):
    text = format_network(net)
    again = parse_network(text.splitlines())
    assert format_network(again) == text
    assert again.follow_set() == net.follow_set()
    assert again.post_words == net.post_words
    assert again.post_timestamps == net.post_timestamps
    assert again.post_locations == net.post_locations


def test_dump_then_load(tmp_path):
    net = random_network(np.random.default_rng(3))
    dump_network(net, tmp_path / "g.edges")
    assert load_network(tmp_path / "g.edges").same_as(
        parse_network(format_network(net).splitlines())
    )


def test_unsupported_format(tmp_path):
    with pytest.raises(ValueError):
        load_network(write(tmp_path, "g", "U a\n"), format="graphml")


# anchors --------------------------------------------------------------------


def three_user(prefix):
    return HeterogeneousNetwork(user_ids=[f"{prefix}{i}" for i in range(3)])


def test_single_anchor(tmp_path):
    g1, g2 = three_user("a"), three_user("b")
    pair = load_anchors(write(tmp_path, "anchors", "a0 b0\n"), g1, g2)
    assert pair.n_anchors == 1
    assert pair.anchors == ((0, 0),)


def test_non_injective_anchor(tmp_path):
    g1, g2 = three_user("a"), three_user("b")
    with pytest.raises(AnchorError, match="injective"):
        load_anchors(write(tmp_path, "anchors", "a0 b0\na0 b1\n"), g1, g2)
    with pytest.raises(AnchorError, match="injective"):
        load_anchors(write(tmp_path, "anchors", "a0 b0\na1 b0\n"), g1, g2)
    with pytest.raises(AnchorError, match="duplicate"):
        load_anchors(write(tmp_path, "anchors", "a0 b0\na0 b0\n"), g1, g2)


def test_unknown_anchor_user(tmp_path):
    g1, g2 = three_user("a"), three_user("b")
    with pytest.raises(AnchorError, match="unknown"):
        load_anchors(write(tmp_path, "anchors", "a9 b0\n"), g1, g2)
    with pytest.raises(AnchorError, match="unknown"):
        load_anchors(write(tmp_path, "anchors", "a0 a0\n"), g1, g2)


def test_anchor_round_trip(tmp_path):
    g1, g2 = three_user("a"), three_user("b")
    pair = AlignedPair(g1, g2, [(2, 0), (0, 1)])
    dump_anchors(pair, tmp_path / "anchors")
    assert load_anchors(tmp_path / "anchors", g1, g2).anchors == pair.anchors
    assert pair.swapped().anchors == ((0, 2), (1, 0))


def test_transition_matrix_examples():
    g1, g2 = three_user("a"), three_user("b")
    assert build_transition_matrix(AlignedPair(g1, g2, [])).nnz == 0
    two1 = HeterogeneousNetwork(user_ids=["x", "y"])
    two2 = HeterogeneousNetwork(user_ids=["p", "q"])
    T = build_transition_matrix(AlignedPair(two1, two2, [(0, 1)])).toarray()
    assert T.tolist() == [[0, 1], [0, 0]]
    T = build_transition_matrix(AlignedPair(two1, two2, [(0, 0), (1, 1)])).toarray()
    assert np.array_equal(T, np.eye(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.data())
def test_transition_matrix_sums_at_most_one(n1, n2, data):
    k = data.draw(st.integers(0, min(n1, n2)))
    left = data.draw(st.permutations(range(n1)))[:k]
    right = data.draw(st.permutations(range(n2)))[:k]
    pair = AlignedPair(three_user("a").with_changes(user_ids=[f"a{i}" for i in range(n1)]),
                       three_user("b").with_changes(user_ids=[f"b{i}" for i in range(n2)]),
                       list(zip(left, right)))
    T = build_transition_matrix(pair)
    assert T.shape == (n1, n2)
    T_dense = T.toarray()
    assert (T_dense.sum(axis=1) <= 1).all() and (T_dense.sum(axis=0) <= 1).all()
    assert {(int(i), int(j)) for i, j in zip(*T.nonzero())} == set(pair.anchors)


# sampling -------------------------------------------------------------------


def test_lambda_one_is_identity():
    net = random_network(np.random.default_rng(0), edge_p=0.3)
    assert sample_network(net, 1.0, seed=5).same_as(net)


def test_exact_counts_and_reproducible():
    edges = [(0, i) for i in range(1, 6)] + [(1, i) for i in range(2, 6)] + [(5, 0)]
    ten = HeterogeneousNetwork(user_ids=[f"u{i}" for i in range(6)], follow=edges)
    assert ten.n_follows == 10
    a = sample_network(ten, 0.3, seed=11)
    b = sample_network(ten, 0.3, seed=11)
    assert a.n_follows == 3
    assert np.array_equal(a.follow, b.follow)
    assert a.follow_set() <= ten.follow_set()
    assert a.n_users == ten.n_users


def test_protected_edges_survive():
    net = random_network(np.random.default_rng(2), max_users=15, edge_p=0.4)
    protected = [tuple(e) for e in net.follow[:5].tolist()]
    out = sample_network(net, 0.1, seed=0, protected_edges=protected)
    assert set(protected) <= out.follow_set()
    expected = 5 + int(np.ceil(0.1 * (net.n_follows - 5) - 1e-9))
    assert out.n_follows == expected


def test_sampling_posts_keeps_attributes_aligned():
    net = random_network(np.random.default_rng(4), max_posts=30)
    out = sample_network(net, 0.5, seed=1)
    assert out.n_posts == int(np.ceil(0.5 * net.n_posts - 1e-9))
    where = {p: k for k, p in enumerate(net.post_ids)}
    for k, pid in enumerate(out.post_ids):
        src = where[pid]
        assert out.post_words[k] == net.post_words[src]
        assert out.post_author[k] == net.post_author[src]


def test_lambda_out_of_range():
    net = HeterogeneousNetwork(user_ids=["a"])
    for lam in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            sample_network(net, lam, seed=0)


@settings(max_examples=40, deadline=None)
@given(networks(), st.floats(0.05, 1.0), st.integers(0, 10**6))
def test_sampling_properties(net, lam, seed):
    a = sample_network(net, lam, seed)
    assert a.same_as(sample_network(net, lam, seed))
    assert a.follow_set() <= net.follow_set()
    assert a.n_follows == min(net.n_follows, int(np.ceil(round(lam * net.n_follows, 9))))
    assert a.user_ids == net.user_ids
