"""Brush semantics, combine modes, projections, selection export."""

import numpy as np
import pytest

from conftest import atoms_collection, make_table, two_system_collection
from featurescope.analytics import apply_transform, histogram2d, pca_fit, pca_project_source
from featurescope.errors import RangeError, SchemaError, WriteError
from featurescope.ingest import parse_feature_csv
from featurescope.model import ATOMS, VOXELS
from featurescope.selection import (
    Brush,
    DerivedColumnSource,
    SelectionState,
    apply_brush,
    brush_projection,
    clear_brushes,
    export_selection,
    initial_state,
    remove_brush,
    selected_in_system,
    set_combine_mode,
    with_derived_columns,
)


def brush(bid, x, y, xr, yr, **kw):
    return Brush(bid, f"plot-{bid}", x, y, xr, yr, **kw)


class TestBrushType:
    def test_inverted_range_rejected(self):
        with pytest.raises(RangeError, match="inverted"):
            brush("b", "x", "y", (1.0, 0.0), (0.0, 1.0))

    def test_transforms_normalized(self):
        b = brush("b", "x", "y", (0, 1), (0, 1), x_transform="log10")
        assert b.x_transform == ("log10",)


class TestStateLifecycle:
    def test_initial_state_selects_everything(self):
        coll = two_system_collection()
        st = initial_state(coll)
        assert st.version == 0
        assert st.mask(ATOMS).all() and st.mask(VOXELS).all()

    def test_version_strictly_increases_across_mutations(self):
        coll = two_system_collection()
        st = initial_state(coll)
        versions = [st.version]
        st = apply_brush(st, brush("a", "e", "q", (0, 1), (-9, 9)))
        versions.append(st.version)
        st = set_combine_mode(st, "union")
        versions.append(st.version)
        st = remove_brush(st, "a")
        versions.append(st.version)
        st = clear_brushes(st)
        versions.append(st.version)
        assert versions == sorted(set(versions))
        assert all(b > a for a, b in zip(versions, versions[1:]))

    def test_reapplying_same_brush_id_replaces(self):
        coll = atoms_collection(x=np.arange(10.0), y=np.zeros(10))
        st = initial_state(coll)
        st = apply_brush(st, brush("b", "x", "y", (0, 3), (-1, 1)))
        assert st.mask(ATOMS).sum() == 4
        st = apply_brush(st, brush("b", "x", "y", (0, 5), (-1, 1)))
        assert st.mask(ATOMS).sum() == 6
        assert len(st.brushes) == 1

    def test_remove_unknown_brush_is_range_error(self):
        st = initial_state(atoms_collection(x=[1.0], y=[1.0]))
        with pytest.raises(RangeError, match="ghost"):
            remove_brush(st, "ghost")

    def test_clear_restores_all_selected(self):
        coll = atoms_collection(x=np.arange(4.0), y=np.zeros(4))
        st = apply_brush(
            initial_state(coll), brush("b", "x", "y", (0, 1), (-1, 1))
        )
        assert not st.mask(ATOMS).all()
        st = clear_brushes(st)
        assert st.mask(ATOMS).all()

    def test_states_are_immutable_snapshots(self):
        coll = atoms_collection(x=np.arange(4.0), y=np.zeros(4))
        st0 = initial_state(coll)
        st1 = apply_brush(st0, brush("b", "x", "y", (0, 1), (-1, 1)))
        assert st0.mask(ATOMS).all()  # old snapshot untouched
        with pytest.raises(ValueError):
            st1.mask(ATOMS)[0] = False

    def test_inactive_brush_does_not_constrain(self):
        coll = atoms_collection(x=np.arange(4.0), y=np.zeros(4))
        st = apply_brush(
            initial_state(coll),
            brush("b", "x", "y", (0, 1), (-1, 1), active=False),
        )
        assert st.mask(ATOMS).all()


class TestBrushSemantics:
    def test_closed_interval_includes_both_edges(self):
        coll = atoms_collection(x=np.array([0.0, 1.0, 2.0]), y=np.zeros(3))
        st = apply_brush(
            initial_state(coll), brush("b", "x", "y", (0.0, 1.0), (-1, 1))
        )
        assert st.mask(ATOMS).tolist() == [True, True, False]

    def test_brush_in_transformed_coordinates(self):
        coll = atoms_collection(x=np.array([1.0, 10.0, 100.0]), y=np.zeros(3))
        st = apply_brush(
            initial_state(coll),
            brush("b", "x", "y", (0.5, 1.5), (-1, 1), x_transform=("log10",)),
        )
        assert st.mask(ATOMS).tolist() == [False, True, False]

    def test_nan_rows_never_selected_by_a_brush(self):
        coll = atoms_collection(x=np.array([np.nan, 1.0]), y=np.zeros(2))
        st = apply_brush(
            initial_state(coll), brush("b", "x", "y", (-9, 9), (-9, 9))
        )
        assert st.mask(ATOMS).tolist() == [False, True]

    def test_unconstrained_kind_stays_all_selected_in_both_modes(self):
        coll = two_system_collection()  # atoms: e,q; voxels: density,err
        for mode in ("intersection", "union"):
            st = set_combine_mode(initial_state(coll), mode)
            st = apply_brush(st, brush("b", "e", "q", (-0.5, 0.5), (-9, 9)))
            assert st.mask(VOXELS).all(), mode
            assert not st.mask(ATOMS).all(), mode

    def test_brush_constrains_every_kind_carrying_both_columns(self):
        coll = two_system_collection()
        # "err" and "density" exist only on voxels; "e"/"q" only on atoms
        st = apply_brush(
            initial_state(coll), brush("b", "err", "density", (0, 99), (0, 99))
        )
        assert st.mask(ATOMS).all()
        assert not st.mask(VOXELS).all()

    def test_brush_on_columns_absent_everywhere_is_schema_error(self):
        coll = two_system_collection()
        with pytest.raises(SchemaError, match="ghost"):
            apply_brush(
                initial_state(coll), brush("b", "ghost", "e", (0, 1), (0, 1))
            )


class TestOracle:
    """Brute-force predicate re-evaluation on 500 random instances."""

    def test_five_hundred_random_instances(self):
        rng = np.random.default_rng(1234)
        transforms = ([], ["log10"], ["abs"], ["negate"], ["abs", "log10"])
        for trial in range(500):
            n = int(rng.integers(1, 10_000))
            f = int(rng.integers(2, 6))
            X = rng.normal(scale=10.0, size=(n, f))
            X[rng.random((n, f)) < 0.02] = np.nan
            names = [f"c{i}" for i in range(f)]
            coll = atoms_collection(**{nm: X[:, i] for i, nm in enumerate(names)})
            mode = "intersection" if rng.random() < 0.5 else "union"
            st = set_combine_mode(initial_state(coll), mode)

            n_brushes = int(rng.integers(1, 4))
            expected = None
            for b in range(n_brushes):
                i, j = rng.choice(f, size=2, replace=True)
                tx = list(transforms[rng.integers(len(transforms))])
                ty = list(transforms[rng.integers(len(transforms))])
                xv = apply_transform(X[:, i], tx)
                yv = apply_transform(X[:, j], ty)
                xr = np.sort(rng.normal(scale=10.0, size=2))
                yr = np.sort(rng.normal(scale=10.0, size=2))
                st = apply_brush(
                    st,
                    brush(
                        f"b{b}", names[i], names[j],
                        tuple(xr), tuple(yr),
                        x_transform=tuple(tx), y_transform=tuple(ty),
                    ),
                )
                m = (
                    (xv >= xr[0]) & (xv <= xr[1])
                    & (yv >= yr[0]) & (yv <= yr[1])
                )
                if expected is None:
                    expected = m
                elif mode == "intersection":
                    expected = expected & m
                else:
                    expected = expected | m
            assert np.array_equal(st.mask(ATOMS), expected), (trial, mode)

    def test_intersection_monotonicity(self):
        rng = np.random.default_rng(77)
        X = rng.standard_normal((2000, 3))
        coll = atoms_collection(a=X[:, 0], b=X[:, 1], c=X[:, 2])
        st = initial_state(coll)
        prev = st.mask(ATOMS).sum()
        for i in range(6):
            lo, hi = np.sort(rng.standard_normal(2))
            st = apply_brush(
                st, brush(f"b{i}", "a", ("b", "c")[i % 2], (lo, hi), (-9, 9))
            )
            cur = st.mask(ATOMS).sum()
            assert cur <= prev
            prev = cur


class TestDerivedColumns:
    def test_pca_axes_become_brushable(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((200, 3))
        coll = atoms_collection(a=X[:, 0], b=X[:, 1], c=X[:, 2])
        model = pca_fit(coll, ATOMS, ("a", "b", "c"), 2, standardized=False)
        scores = pca_project_source(model, coll)
        st = initial_state(coll)
        st = with_derived_columns(
            st, ATOMS, dict(zip(model.output_names(), scores.T))
        )
        name0, name1 = model.output_names()
        st = apply_brush(st, brush("b", name0, name1, (0.0, 99.0), (-99.0, 99.0)))
        assert np.array_equal(st.mask(ATOMS), scores[:, 0] >= 0.0)

    def test_derived_source_delegates_and_extends(self):
        coll = atoms_collection(a=[1.0, 2.0], b=[3.0, 4.0])
        src = DerivedColumnSource(coll, {ATOMS: {"d": np.array([5.0, 6.0])}})
        assert src.has_column(ATOMS, "a") and src.has_column(ATOMS, "d")
        assert set(src.column_names(ATOMS)) == {"a", "b", "d"}
        assert src.column(ATOMS, "d").tolist() == [5.0, 6.0]
        assert src.n_points(ATOMS) == 2
        assert src.system_slice(ATOMS, "s") == (0, 2)

    def test_derived_length_mismatch_rejected(self):
        coll = atoms_collection(a=[1.0, 2.0])
        with pytest.raises(SchemaError):
            DerivedColumnSource(coll, {ATOMS: {"d": np.array([1.0])}})

    def test_derived_name_collision_rejected(self):
        coll = atoms_collection(a=[1.0, 2.0])
        with pytest.raises(SchemaError, match="a"):
            DerivedColumnSource(coll, {ATOMS: {"a": np.array([1.0, 2.0])}})


class TestPerSystem:
    def test_selected_in_system_returns_local_indices(self):
        coll = two_system_collection()
        st = apply_brush(
            initial_state(coll), brush("b", "e", "q", (1.0, 99.0), (-99, 99))
        )
        pooled = st.mask(ATOMS)
        lo, hi = coll.system_slice(ATOMS, "s2")
        assert np.array_equal(
            selected_in_system(st, ATOMS, "s2"), np.flatnonzero(pooled[lo:hi])
        )

    def test_unknown_system_raises(self):
        st = initial_state(two_system_collection())
        with pytest.raises(RangeError):
            selected_in_system(st, ATOMS, "nope")


class TestProjection:
    def test_projection_matches_filter_then_bin_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(3000)
        y = rng.standard_normal(3000)
        z = rng.standard_normal(3000)
        coll = atoms_collection(x=x, y=y, z=z)
        st = apply_brush(
            initial_state(coll), brush("b", "x", "y", (-0.5, 0.5), (-9, 9))
        )
        spec = {"kind": ATOMS, "x": "z", "y": "y", "bins": 16}
        proj = brush_projection(st, spec)
        base = histogram2d(coll, ATOMS, "z", "y", bins=16)
        # edges identical to the unfiltered plot's edges, bit for bit
        assert np.array_equal(proj.x_edges, base.x_edges)
        assert np.array_equal(proj.y_edges, base.y_edges)
        mask = st.mask(ATOMS)
        expect, _, _ = np.histogram2d(
            z[mask], y[mask], bins=[base.x_edges, base.y_edges]
        )
        assert np.array_equal(proj.counts, expect.astype(np.int64))
        assert proj.n_binned + proj.n_dropped == 3000

    def test_projection_with_no_selection_is_empty(self):
        coll = atoms_collection(x=np.arange(4.0), y=np.zeros(4))
        st = apply_brush(
            initial_state(coll), brush("b", "x", "y", (99.0, 100.0), (-1, 1))
        )
        proj = brush_projection(st, {"kind": ATOMS, "x": "x", "y": "y", "bins": 4})
        assert proj.n_binned == 0
        assert proj.n_dropped == 4


class TestExport:
    def test_round_trips_bit_exactly(self, tmp_path):
        coll = two_system_collection()
        st = apply_brush(
            initial_state(coll), brush("b", "e", "q", (-0.5, 99.0), (-99, 99))
        )
        dest = tmp_path / "sel.csv"
        n = export_selection(st, ATOMS, dest)
        mask = st.mask(ATOMS)
        assert n == int(mask.sum()) > 0

        text = dest.read_text().splitlines()
        header = text[0].split(",")
        assert header[:5] == ["system_id", "local_index", "x", "y", "z"]
        assert tuple(header[5:]) == coll.pooled_table(ATOMS).names
        assert len(text) == n + 1

        # numeric body re-imports bit-exactly
        body = "\n".join(",".join(row.split(",")[2:]) for row in text[1:])
        names = ",".join(header[2:])
        table = parse_feature_csv(
            (names + "\n" + body + "\n").encode(), expected_rows=n
        )
        sel = np.flatnonzero(mask)
        assert np.array_equal(table.column("e"), coll.column(ATOMS, "e")[sel])
        assert np.array_equal(table.column("q"), coll.column(ATOMS, "q")[sel])

        # positions are the atom positions, system by system
        exported_x = table.column("x")
        at = 0
        for sid in coll.system_ids:
            locs = selected_in_system(st, ATOMS, sid)
            pos = coll.system(sid).atoms.positions[locs]
            assert np.array_equal(exported_x[at : at + locs.size], pos[:, 0])
            at += locs.size

    def test_voxel_rows_use_voxel_centers(self, tmp_path):
        coll = two_system_collection()
        st = apply_brush(
            initial_state(coll),
            brush("b", "err", "density", (-99.0, 99.0), (-99, 99)),
        )
        dest = tmp_path / "vox.csv"
        n = export_selection(st, VOXELS, dest)
        first = dest.read_text().splitlines()[1].split(",")
        sid = first[0]
        local = int(first[1])
        center = coll.system(sid).grid.voxel_centers([local])[0]
        assert [float(v) for v in first[2:5]] == center.tolist()

    def test_unwritable_destination_is_write_error(self, tmp_path):
        coll = two_system_collection()
        st = initial_state(coll)
        with pytest.raises(WriteError):
            export_selection(st, ATOMS, tmp_path / "no" / "such" / "dir.csv")

    def test_kind_without_data_is_schema_error(self):
        coll = atoms_collection(a=[1.0])
        st = initial_state(coll)
        with pytest.raises(SchemaError):
            export_selection(st, VOXELS, "/tmp/unused.csv")
