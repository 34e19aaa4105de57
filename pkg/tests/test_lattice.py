import json
from importlib import resources

import numpy as np
import pytest

from tsolab.lattice import (MAX_EXHAUSTIVE_SITES, SectorLabel, brute_force_spectrum, build_model, export_classification,
                            model_from_bonds, read_bonds, read_classification, sector_distribution, sector_label,
                            sector_minima, sector_populations, sq_reference_winding, sq_windings, tri_row_defects,
                            write_bonds)
from tsolab.statevector import StateVector

# Brute-forced regression constants; the same numbers are frozen in the package data.
LEVELS = {
    "tri": [(-17.6, 2), (-16.0, 24), (-14.4, 16)],
    "sq": [(-16.8, 2), (-16.0, 12), (-15.8, 64)],
    "chain": [(-16.0, 2), (-12.0, 240)],
    "ising2d": [(-3.2, 2), (-2.4, 32)],
}
POPULATIONS = {"tri": {"invalid": 65494, 0: 2, 2: 24, 4: 16}, "sq": {"invalid": 65264, 0: 2, 2: 264, 4: 6}}
MINIMA = {"tri": {0: -17.6, 2: -16.0, 4: -14.4}, "sq": {0: -16.8, 2: -16.0, 4: -15.2}}
N_BONDS = {"tri": 48, "sq": 32, "chain": 16, "ising2d": 32}


def _reference(kind):
    return json.loads(resources.files("tsolab").joinpath(f"data/oracle_{kind}.json").read_text())


def _energy_loop(model, config):
    z = [1 - 2 * ((config >> q) & 1) for q in range(model.n_sites)]
    return sum(b.coupling * z[b.j] * z[b.k] for b in model.bonds)


@pytest.mark.parametrize("kind", ["tri", "sq", "chain", "ising2d"])
def test_levels_and_bond_counts(kind, request):
    m = request.getfixturevalue(kind)
    assert m.n_sites == 16 and m.n_bonds == N_BONDS[kind]
    levels = brute_force_spectrum(m)
    for (e, d), (e_ref, d_ref) in zip(levels, LEVELS[kind]):
        assert e == pytest.approx(e_ref, abs=1e-9) and d == d_ref


@pytest.mark.parametrize("kind", ["tri", "sq", "chain", "ising2d"])
def test_frozen_oracle_matches_fresh_enumeration(kind, request):
    m = request.getfixturevalue(kind)
    ref = _reference(kind)
    levels = brute_force_spectrum(m)
    assert ref["e0"] == pytest.approx(levels[0][0], abs=1e-12)
    assert ref["e1"] == pytest.approx(levels[1][0], abs=1e-12)
    assert ref["degeneracy0"] == levels[0][1]


@pytest.mark.parametrize("kind", ["tri", "sq", "chain", "ising2d"])
def test_energy_table_matches_direct_sum(kind, request):
    m = request.getfixturevalue(kind)
    rng = np.random.default_rng(0)
    for config in rng.integers(0, 1 << 16, 50):
        assert m.energies[config] == pytest.approx(_energy_loop(m, int(config)), abs=1e-12)


@pytest.mark.parametrize("kind", ["tri", "sq", "chain", "ising2d"])
def test_energy_table_flip_symmetric(kind, request):
    E = request.getfixturevalue(kind).energies
    assert np.array_equal(E, E[::-1])  # complement(i) = 2**n - 1 - i


def test_energy_table_is_read_only(tri):
    with pytest.raises(ValueError):
        tri.energies[0] = 0.0


def test_ising2d_neel_is_ground(ising2d):
    neel = sum(1 << ising2d.site(x, y) for y in range(4) for x in range(4) if (x + y) % 2)
    assert ising2d.energies[neel] == pytest.approx(-3.2)


@pytest.mark.parametrize("kind", ["tri", "sq"])
def test_sector_populations_and_minima(kind, request):
    m = request.getfixturevalue(kind)
    assert sector_populations(m) == POPULATIONS[kind]
    minima = sector_minima(m)
    for nd, e in MINIMA[kind].items():
        assert minima[nd] == pytest.approx(e, abs=1e-9)
    assert minima[0] < minima[2] < minima[4]


@pytest.mark.parametrize("kind", ["tri", "sq"])
def test_ground_pair_is_in_target_sector(kind, request):
    m = request.getfixturevalue(kind)
    ground = np.flatnonzero(np.isclose(m.energies, m.energies.min()))
    assert ground.size == 2
    assert all(m.classification[g] == 0 for g in ground)


def test_tri_row_invariance_all_configurations(tri):
    rows = tri_row_defects(tri)
    valid = tri.classification >= 0
    assert np.all(rows[valid] == rows[valid][:, :1])
    assert np.array_equal(rows[valid][:, 0], tri.classification[valid])


def test_sq_winding_cut_invariance(sq):
    Wr, Wc = sq_windings(sq)
    valid = sq.classification >= 0
    assert np.all(Wr[valid] == Wr[valid][:, :1])
    assert np.all(Wc[valid] == Wc[valid][:, :1])
    assert sq_reference_winding(sq) == (0, -2)


def _sector_changing_flips(m):
    """(validity-preserving single flips, those among them that change N_D)."""
    cls = m.classification
    moves = changed = 0
    for config in np.flatnonzero(cls >= 0):
        for q in range(m.n_sites):
            other = cls[config ^ (1 << q)]
            if other >= 0:
                moves += 1
                changed += other != cls[config]
    return moves, changed


def test_local_flips_preserve_sector_sq(sq):
    moves, changed = _sector_changing_flips(sq)
    assert moves > 0 and changed == 0


def test_tri_4x4_has_no_flippable_spins(tri):
    # Every valid 4x4 configuration is frozen under single flips; the
    # non-vacuous check runs on the largest lattice the enumeration allows.
    assert _sector_changing_flips(tri) == (0, 0)


def test_local_flips_preserve_sector_tri_6x4():
    m = build_model("tri", 6, 4)
    moves, changed = _sector_changing_flips(m)
    assert moves == 9600 and changed == 0


def _honeycomb_matchings(m):
    """Perfect matchings of the triangle-adjacency graph, each as a set of bond indices."""
    s = m.site
    tris = []
    for y in range(m.Ly):
        for x in range(m.Lx):
            a, b, c, d = s(x, y), s(x + 1, y), s(x + 1, y + 1), s(x, y + 1)
            tris.append({frozenset(p) for p in ((a, b), (b, c), (a, c))})
            tris.append({frozenset(p) for p in ((a, d), (d, c), (a, c))})
    bonds = [frozenset((bd.j, bd.k)) for bd in m.bonds]
    ends = {i: [t for t, tr in enumerate(tris) if bd in tr] for i, bd in enumerate(bonds)}
    incident = {t: [i for i, e in ends.items() if t in e] for t in range(len(tris))}
    out = []

    def rec(used, chosen):
        free = next((t for t in range(len(tris)) if t not in used), None)
        if free is None:
            out.append(frozenset(chosen))
            return
        for i in incident[free]:
            other = ends[i][0] if ends[i][1] == free else ends[i][1]
            if other not in used:
                rec(used | {free, other}, chosen + [i])

    rec(frozenset(), [])
    return bonds, out


def test_triangle_rule_count_matches_dimer_oracle(tri):
    # Each valid spin pair maps to one honeycomb dimer covering (the parallel
    # bonds). On the torus only coverings with an even number of dimers across
    # both cuts lift to spins.
    bonds, matchings = _honeycomb_matchings(tri)
    assert len(matchings) == 417
    row = {bonds.index(frozenset((tri.site(x, 0), tri.site(x + 1, 0)))) for x in range(4)}
    col = {bonds.index(frozenset((tri.site(0, y), tri.site(0, y + 1)))) for y in range(4)}
    liftable = [mt for mt in matchings if len(mt & row) % 2 == 0 and len(mt & col) % 2 == 0]
    assert 2 * len(liftable) == int(np.sum(tri.classification >= 0)) == 42


def test_sector_label_and_distribution(tri):
    ground = int(np.argmin(tri.energies))
    assert sector_label(tri, ground).defect_count == 0 and sector_label(tri, ground).valid
    bad = int(np.flatnonzero(tri.classification < 0)[0])
    assert sector_label(tri, bad) == SectorLabel(-1, False)
    with pytest.raises(ValueError):
        sector_label(tri, 1 << 16)
    dist = sector_distribution(StateVector.basis(16, ground), tri)
    assert dist[0] == 1.0 and dist["invalid"] == 0.0
    uniform = sector_distribution(StateVector.plus(16), tri)
    assert sum(uniform.values()) == pytest.approx(1.0)
    assert uniform["invalid"] == pytest.approx(65494 / 65536)


def test_sector_labels_undefined_for_plain_ising(chain):
    with pytest.raises(ValueError):
        chain.classification


def test_sq_kp_pattern_one_per_plaquette(sq):
    vert = {(b.j, b.k): b for b in sq.bonds}
    kp = [b for b in sq.bonds if b.cls == "Kp"]
    assert len(kp) == 8 and all(abs(b.coupling) == 0.9 for b in kp)
    for y in range(4):
        for x in range(4):
            left = vert[(sq.site(x, y), sq.site(x, y + 1))]
            right = vert[(sq.site(x + 1, y), sq.site(x + 1, y + 1))]
            assert (left.cls == "Kp") + (right.cls == "Kp") == 1


@pytest.mark.parametrize("kind", ["tri", "sq", "chain", "ising2d"])
def test_shipped_bond_fixtures_match_builder(kind, request):
    m = request.getfixturevalue(kind)
    path = resources.files("tsolab").joinpath(f"data/{kind}.bonds")
    assert tuple(read_bonds(path)) == m.bonds


def test_bond_roundtrip(tmp_path, sq):
    path = tmp_path / "sq.bonds"
    write_bonds(path, sq)
    rebuilt = model_from_bonds("sq", 4, 4, read_bonds(path))
    assert rebuilt.bonds == sq.bonds
    assert np.array_equal(rebuilt.energies, sq.energies)


def test_bad_bond_files_rejected(tmp_path):
    p = tmp_path / "bad.bonds"
    p.write_text("0 1 1.0\n")
    with pytest.raises(ValueError):
        read_bonds(p)
    p.write_text("0 1 1.0 nope\n")
    with pytest.raises(ValueError):
        read_bonds(p)
    from tsolab.lattice import Bond
    with pytest.raises(ValueError):
        model_from_bonds("chain", 4, 1, [Bond(0, 7, 1.0, "chain")])


def test_classification_binary_roundtrip(tmp_path, tri):
    path = tmp_path / "tri.cls"
    export_classification(path, tri)
    raw = path.read_bytes()
    assert len(raw) == 8 + 65536
    assert raw[:8] == (16).to_bytes(4, "little") + (1).to_bytes(4, "little")
    n, kind, table = read_classification(path)
    assert (n, kind) == (16, "tri") and np.array_equal(table, tri.classification)


def test_build_model_validation():
    with pytest.raises(ValueError):
        build_model("kagome")
    with pytest.raises(ValueError):
        build_model("chain", 8, 2)
    with pytest.raises(ValueError):
        build_model("tri", couplings={"nope": 1.0})
    with pytest.warns(UserWarning):
        build_model("tri", 3, 4)


def test_exhaustive_guard():
    big = build_model("chain", MAX_EXHAUSTIVE_SITES + 1, 1)
    with pytest.raises(ValueError):
        big.energies


def test_custom_couplings():
    m = build_model("tri", couplings={"Jx": 0.5})
    assert {b.coupling for b in m.bonds if b.cls == "Jx"} == {0.5}
    assert build_model("ising2d", couplings={"J": 1.0}).energies.min() == pytest.approx(-32.0)
