"""HTTP surface: tiles, plots, selection flow, sessions, push channel."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from featurescope.analytics import AxisSpec, correlation_matrix, histogram2d
from featurescope.fixtures import tail_threshold
from featurescope.ingest import load_manifest
from featurescope.model import ATOMS, VOXELS
from featurescope.server.app import ApiSession, create_app
from featurescope.server.wire import decode_tile, runs_to_mask


@pytest.fixture(scope="module")
def coll(case_manifest):
    return load_manifest(case_manifest)


@pytest.fixture()
def client(case_manifest, coll):
    app = create_app(manifest_path=case_manifest, collection=coll)
    with TestClient(app) as c:
        yield c


def apply_tail_brush(client, **extra):
    body = {
        "op": "apply",
        "brush": {
            "brush_id": "tail",
            "plot_id": "p1",
            "x_column": "error",
            "y_column": "density",
            "x_range": [tail_threshold("error"), 2.0],
            "y_range": [-1e9, 1e9],
            **extra,
        },
    }
    r = client.post("/api/selection/brush", json=body)
    assert r.status_code == 200, r.text
    return r.json()


class TestSchema:
    def test_systems_and_pooled_kinds(self, client, coll):
        doc = client.get("/api/schema").json()
        assert [s["system_id"] for s in doc["systems"]] == ["co2", "n2o", "hcooh"]
        assert doc["kinds"][VOXELS]["n_points"] == coll.n_points(VOXELS)
        names = [c["name"] for c in doc["kinds"][VOXELS]["columns"]]
        assert len(names) == 48 and names[0] == "density"
        assert doc["kinds"][ATOMS]["columns"][0]["name"] == "error"
        assert doc["selection_version"] == 0
        assert doc["data_version"] == 1

    def test_grid_shapes_reported(self, client):
        doc = client.get("/api/schema").json()
        assert all(s["grid_shape"] == [16, 16, 16] for s in doc["systems"])
        assert doc["systems"][0]["n_atoms"] == 3


class TestTiles:
    def test_atoms_tile_decodes(self, client):
        raw = client.get("/api/systems/co2/atoms")
        assert raw.headers["content-type"].startswith("application/octet-stream")
        tile = decode_tile(raw.content)
        assert tile["positions"].shape == (3, 3)
        assert tile["positions"].dtype == np.dtype("<f4")
        assert tile["atomic_numbers"].tolist() == [6, 8, 8]
        assert sorted(map(tuple, tile["bonds"].tolist())) == [(0, 1), (0, 2)]

    def test_cloud_tile_is_seed_deterministic(self, client):
        a = client.get("/api/systems/co2/cloud", params={"count": 2000, "seed": 5})
        b = client.get("/api/systems/co2/cloud", params={"count": 2000, "seed": 5})
        assert a.content == b.content
        tile = decode_tile(a.content)
        assert tile["positions"].shape == (2000, 3)
        assert tile["source_voxel"].dtype == np.dtype("<u4")
        c = client.get("/api/systems/co2/cloud", params={"count": 2000, "seed": 6})
        assert c.content != a.content

    def test_column_tile_pooled_and_per_system(self, client, coll):
        pooled = decode_tile(
            client.get(f"/api/columns/{VOXELS}/error").content
        )["values"]
        assert pooled.shape[0] == coll.n_points(VOXELS)
        assert np.array_equal(pooled, coll.column(VOXELS, "error").astype("<f4"))
        one = decode_tile(
            client.get(
                f"/api/columns/{VOXELS}/error", params={"system": "n2o"}
            ).content
        )["values"]
        lo, hi = coll.system_slice(VOXELS, "n2o")
        assert np.array_equal(one, pooled[lo:hi])

    def test_unknown_system_is_404(self, client):
        r = client.get("/api/systems/ghost/atoms")
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "range_error"

    def test_unknown_column_is_400(self, client):
        r = client.get(f"/api/columns/{VOXELS}/nope")
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "schema_error"


class TestPlots:
    def test_histogram_matches_direct_computation(self, client, coll):
        r = client.get(
            "/api/plot/histogram",
            params={"kind": VOXELS, "x": "error", "y": "density", "bins": "32"},
        )
        doc = r.json()
        direct = histogram2d(coll, VOXELS, "error", "density", bins=32)
        assert doc["bins"] == [32, 32]
        assert doc["counts"] == [int(v) for v in direct.counts.ravel()]
        assert doc["x_edges"] == [float(v) for v in direct.x_edges]
        assert doc["n_dropped"] == direct.n_dropped

    def test_histogram_missing_params_is_400(self, client):
        r = client.get("/api/plot/histogram", params={"kind": VOXELS})
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "parse_error"

    def test_histogram_transform_chain(self, client, coll):
        r = client.get(
            "/api/plot/histogram",
            params={
                "kind": VOXELS, "x": "density", "y": "error",
                "x_transform": "log10", "bins": "16",
            },
        )
        direct = histogram2d(
            coll, VOXELS, AxisSpec("density", ("log10",)), "error", bins=16
        )
        assert r.json()["counts"] == [int(v) for v in direct.counts.ravel()]

    def test_correlation_matches_direct(self, client, coll):
        r = client.get(
            "/api/plot/correlation",
            params={"kind": VOXELS, "columns": "error,derivative,density"},
        )
        doc = r.json()
        direct = correlation_matrix(coll, VOXELS, ("error", "derivative", "density"))
        assert doc["columns"] == ["error", "derivative", "density"]
        got = np.array(
            [[np.nan if v is None else v for v in row] for row in doc["r"]]
        )
        assert np.allclose(got, direct.r, atol=1e-12, equal_nan=True)

    def test_pca_plot_reports_model_and_bins(self, client, coll):
        r = client.get(
            "/api/plot/pca",
            params={
                "kind": VOXELS,
                "columns": "error,derivative,aux00",
                "k": "2",
                "bins": "16",
            },
        )
        doc = r.json()
        assert len(doc["fingerprint"]) == 10
        assert doc["output_columns"][0] == f"pca:{doc['fingerprint']}:0"
        assert len(doc["explained_variance"]) == 2
        assert doc["bins"] == [16, 16]
        assert sum(doc["counts"]) + doc["n_dropped"] == coll.n_points(VOXELS)

    def test_pca_get_is_pure(self, client):
        before = client.get("/api/schema").json()
        client.get(
            "/api/plot/pca",
            params={"kind": VOXELS, "columns": "error,derivative", "k": "2"},
        )
        after = client.get("/api/schema").json()
        assert after["data_version"] == before["data_version"]
        assert after["selection_version"] == before["selection_version"]

    def test_pca_bad_k_is_400(self, client):
        r = client.get(
            "/api/plot/pca", params={"kind": ATOMS, "columns": "error", "k": "3"}
        )
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "dimension_error"


class TestSelectionFlow:
    def test_brush_apply_bumps_version_and_counts(self, client, coll):
        doc = apply_tail_brush(client)
        assert doc["selection_version"] == 1
        assert doc["brushes"] == ["tail"]
        err = coll.column(VOXELS, "error")
        expected = int((err >= tail_threshold("error")).sum())
        assert doc["selected"][VOXELS] == expected
        # no atom brush, so the atom kind stays fully selected
        assert doc["selected"][ATOMS] == coll.n_points(ATOMS)

    def test_mask_runs_reconstruct_selection(self, client, coll):
        apply_tail_brush(client)
        doc = client.get(
            "/api/selection/mask", params={"kind": VOXELS, "system": "n2o"}
        ).json()
        mask = runs_to_mask(doc["runs"], doc["n"])
        err = coll.system("n2o").grid.features.column("error")
        assert np.array_equal(mask, err >= tail_threshold("error"))

    def test_selected_histogram_is_the_projection(self, client, coll):
        apply_tail_brush(client)
        base = client.get(
            "/api/plot/histogram",
            params={"kind": VOXELS, "x": "derivative", "y": "density", "bins": "24"},
        ).json()
        sel = client.get(
            "/api/plot/histogram",
            params={
                "kind": VOXELS, "x": "derivative", "y": "density",
                "bins": "24", "selected": "true",
            },
        ).json()
        assert sel["x_edges"] == base["x_edges"]
        mask = coll.column(VOXELS, "error") >= tail_threshold("error")
        x = coll.column(VOXELS, "derivative")[mask]
        y = coll.column(VOXELS, "density")[mask]
        expect, _, _ = np.histogram2d(
            x, y, bins=[np.array(base["x_edges"]), np.array(base["y_edges"])]
        )
        assert sel["counts"] == [int(v) for v in expect.ravel()]

    def test_remove_and_clear(self, client):
        apply_tail_brush(client)
        doc = client.post(
            "/api/selection/brush", json={"op": "remove", "brush_id": "tail"}
        ).json()
        assert doc["brushes"] == []
        apply_tail_brush(client)
        doc = client.post("/api/selection/brush", json={"op": "clear"}).json()
        assert doc["brushes"] == []

    def test_combine_mode_switch(self, client):
        doc = client.post(
            "/api/selection/brush", json={"op": "combine_mode", "mode": "union"}
        ).json()
        assert doc["combine_mode"] == "union"
        r = client.post(
            "/api/selection/brush", json={"op": "combine_mode", "mode": "sideways"}
        )
        assert r.status_code == 400

    def test_malformed_brush_is_400(self, client):
        r = client.post(
            "/api/selection/brush", json={"op": "apply", "brush": {"brush_id": "x"}}
        )
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "parse_error"

    def test_unknown_op_is_400(self, client):
        r = client.post("/api/selection/brush", json={"op": "invert"})
        assert r.status_code == 400

    def test_brush_on_pca_axes_materializes_columns(self, client):
        doc = client.get(
            "/api/plot/pca",
            params={"kind": VOXELS, "columns": "error,derivative", "k": "2"},
        ).json()
        n0, n1 = doc["output_columns"]
        before = client.get("/api/schema").json()["data_version"]
        r = client.post(
            "/api/selection/brush",
            json={
                "op": "apply",
                "brush": {
                    "brush_id": "pcab",
                    "x_column": n0,
                    "y_column": n1,
                    "x_range": [0.0, 99.0],
                    "y_range": [-99.0, 99.0],
                },
            },
        )
        assert r.status_code == 200, r.text
        after = client.get("/api/schema").json()
        assert after["data_version"] == before + 1
        assert n0 in after["kinds"][VOXELS]["derived"]
        assert 0 < r.json()["selected"][VOXELS] < after["kinds"][VOXELS]["n_points"]

    def test_brush_on_unfitted_pca_axes_is_400(self, client):
        r = client.post(
            "/api/selection/brush",
            json={
                "op": "apply",
                "brush": {
                    "brush_id": "x",
                    "x_column": "pca:deadbeef00:0",
                    "y_column": "pca:deadbeef00:1",
                    "x_range": [0, 1],
                    "y_range": [0, 1],
                },
            },
        )
        assert r.status_code == 400
        assert "fitted" in r.json()["error"]["message"]


class TestExport:
    def test_export_writes_selected_rows(self, client, coll, tmp_path):
        apply_tail_brush(client)
        dest = tmp_path / "out.csv"
        r = client.post("/api/export", json={"kind": VOXELS, "path": str(dest)})
        assert r.status_code == 200
        doc = r.json()
        err = coll.column(VOXELS, "error")
        assert doc["rows"] == int((err >= tail_threshold("error")).sum())
        assert len(dest.read_text().splitlines()) == doc["rows"] + 1

    def test_export_needs_valid_kind(self, client):
        r = client.post("/api/export", json={"kind": "plasma", "path": "/tmp/x"})
        assert r.status_code == 400


class TestSessionEndpoints:
    def test_get_put_round_trip_preserves_selection(self, client, coll):
        apply_tail_brush(client)
        snap = client.get("/api/session").content
        client.post("/api/selection/brush", json={"op": "clear"})
        cleared = client.get("/api/selection/mask", params={"kind": VOXELS}).json()
        assert runs_to_mask(cleared["runs"], cleared["n"]).all()

        r = client.put("/api/session", content=snap)
        assert r.status_code == 200, r.text
        doc = client.get("/api/selection/mask", params={"kind": VOXELS}).json()
        mask = runs_to_mask(doc["runs"], doc["n"])
        err = coll.column(VOXELS, "error")
        assert np.array_equal(mask, err >= tail_threshold("error"))

    def test_put_session_with_pca_brush_round_trips(self, client):
        pca = client.get(
            "/api/plot/pca",
            params={"kind": VOXELS, "columns": "error,derivative", "k": "2"},
        ).json()
        n0, n1 = pca["output_columns"]
        client.post(
            "/api/selection/brush",
            json={
                "op": "apply",
                "brush": {
                    "brush_id": "pcab",
                    "x_column": n0,
                    "y_column": n1,
                    "x_range": [0.0, 99.0],
                    "y_range": [-99.0, 99.0],
                },
            },
        )
        before = client.get("/api/selection/mask", params={"kind": VOXELS}).json()
        snap = client.get("/api/session").content
        # the capture must define the brushed projection itself
        assert any(p["type"] == "pca" for p in json.loads(snap)["plots"])

        client.post("/api/selection/brush", json={"op": "clear"})
        r = client.put("/api/session", content=snap)
        assert r.status_code == 200, r.text
        after = client.get("/api/selection/mask", params={"kind": VOXELS}).json()
        assert runs_to_mask(after["runs"], after["n"]).tolist() == runs_to_mask(
            before["runs"], before["n"]
        ).tolist()

    def test_restore_never_regresses_the_selection_version(self, client):
        # push consumers treat versions as monotonic; a restore must
        # keep counting forward even though it rebuilds the state
        apply_tail_brush(client)
        snap = client.get("/api/session").content
        client.post("/api/selection/brush", json={"op": "clear"})
        apply_tail_brush(client)
        before = client.get("/api/selection").json()["selection_version"]

        r = client.put("/api/session", content=snap)
        assert r.status_code == 200, r.text
        assert r.json()["selection_version"] == before + 1

    def test_put_newer_session_version_is_409(self, client):
        snap = json.loads(client.get("/api/session").content)
        snap["session_version"] = 99
        r = client.put("/api/session", content=json.dumps(snap).encode())
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "unsupported_version_error"

    def test_put_incompatible_session_is_409(self, client):
        apply_tail_brush(client)
        snap = json.loads(client.get("/api/session").content)
        snap["selection"]["brushes"][0]["x_column"] = "never_measured"
        r = client.put("/api/session", content=json.dumps(snap).encode())
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "compatibility_error"

    def test_put_garbage_is_400(self, client):
        r = client.put("/api/session", content=b"{not json")
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "parse_error"


class TestPush:
    def test_websocket_reports_version_changes(self, client):
        with client.websocket_connect("/api/events") as ws:
            hello = ws.receive_json()
            assert hello["type"] == "versions"
            v0 = hello["selection_version"]
            apply_tail_brush(client)
            note = ws.receive_json()
            assert note["selection_version"] == v0 + 1

    def test_slow_subscriber_dropped_not_blocking(self, coll, case_manifest):
        api = ApiSession(case_manifest, coll)
        sub = api.subscribe()
        for _ in range(200):  # overflow the bounded queue
            api.broadcast()
        assert sub.dropped
        assert sub not in api._subscribers
        assert sub.queue.qsize() <= 32
