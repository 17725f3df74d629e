import warnings

import numpy as np
import pytest

from patternforge import bodies, drape
from patternforge.drape import BodyModel, GarmentMesh, SimConfig, count_self_intersections
from patternforge.model import Edge, EdgeRef, Panel, PatternSpec, Stitch, Vertex2D


def square_panel(name="cloth", half=30.0, translation=(0, 25.9, 0), rotation=(-90, 0, 0)):
    return Panel(
        name,
        tuple(Vertex2D(x, y) for x, y in [(-half, -half), (half, -half), (half, half), (-half, half)]),
        (Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 0)),
        translation,
        rotation,
    )


def rect_panel(name, z, w=20.0, h=25.0, translation_y=100.0):
    return Panel(
        name,
        tuple(Vertex2D(x, y) for x, y in [(-w, -h), (w, -h), (w, h), (-w, h)]),
        (Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 0)),
        (0, translation_y, z),
    )


def mesh_area(v, t):
    p = v[t]
    return float(np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1).sum() / 2)


@pytest.fixture(scope="module")
def sphere_body():
    sv, sf = bodies.make_sphere((0, 0, 0), 25.0, n_lat=256, n_lon=512)
    return BodyModel(sv, sf)


@pytest.fixture(scope="module")
def arm_body():
    # capped cylinder lying along the x axis, centered at height 100
    cv, cf = bodies.make_capped_cylinder((0, 0, 0), 15.0, 80.0, n_around=384, n_height=96, n_cap_rings=18)
    world = np.stack([cv[:, 1] - 40.0, 100.0 - cv[:, 0], cv[:, 2]], axis=1)
    return BodyModel(world, cf)


def arm_signed_distance(points):
    back = np.stack([100.0 - points[:, 1], points[:, 0] + 40.0, points[:, 2]], axis=1)
    return bodies.capped_cylinder_signed_distance(back, (0, 0, 0), 15.0, 80.0)


class TestAssemble:
    def test_single_flat_panel(self):
        panel = square_panel(half=10, translation=(1, 2, 3), rotation=(0, 0, 0))
        garment, pairs = drape.assemble_garment(PatternSpec((panel,)), 4.0)
        assert len(pairs) == 0
        assert set(garment.labels) == {"cloth"}
        assert np.allclose(garment.vertices[:, 2], 3.0)
        assert garment.vertices[:, 0].min() == pytest.approx(-9.0, abs=0.2)

    def test_equal_edges_pair_by_arc_length(self):
        pattern = PatternSpec(
            (rect_panel("front", 5.0), rect_panel("back", -5.0)),
            (Stitch((EdgeRef("front", 1), EdgeRef("back", 1))),),
        )
        garment, pairs = drape.assemble_garment(pattern, 5.0)
        # right edges are 50 long: 10 segments, 11 paired samples
        assert len(pairs) == 11
        a = garment.vertices[pairs[:, 0]]
        b = garment.vertices[pairs[:, 1]]
        assert np.allclose(a[:, 1], b[:, 1], atol=1e-6)  # matched arc positions
        stitched = [l for l in garment.labels if l == drape.STITCH_LABEL]
        assert len(stitched) == 22

    def test_two_panel_bounding_box(self):
        pattern = PatternSpec((rect_panel("front", 10.0), rect_panel("back", -10.0)))
        garment, _ = drape.assemble_garment(pattern, 5.0)
        assert garment.vertices[:, 2].min() == pytest.approx(-10.0)
        assert garment.vertices[:, 2].max() == pytest.approx(10.0)

    def test_length_mismatch_warns(self):
        short = Panel(
            "short",
            tuple(Vertex2D(x, y) for x, y in [(-5, -5), (5, -5), (5, 5), (-5, 5)]),
            (Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 0)),
            (0, 0, 5),
        )
        long_ = Panel(
            "long",
            tuple(Vertex2D(x, y) for x, y in [(-5, -9), (5, -9), (5, 9), (-5, 9)]),
            (Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 0)),
            (0, 0, -5),
        )
        pattern = PatternSpec((short, long_), (Stitch((EdgeRef("short", 1), EdgeRef("long", 1))),))
        with pytest.warns(UserWarning, match="20%"):
            drape.assemble_garment(pattern, 3.0)

    def test_rotated_panels_pair_nearest_corners(self, template_dir):
        from patternforge import parse_template
        from patternforge.canonical import canonicalize_template

        t = canonicalize_template(parse_template((template_dir / "skirt_4panel.json").read_text()))
        garment, pairs = drape.assemble_garment(t.pattern, 4.0)
        gaps = np.linalg.norm(garment.vertices[pairs[:, 0]] - garment.vertices[pairs[:, 1]], axis=1)
        # matched ends are adjacent panel corners, never opposite corners
        assert gaps.max() < 15.0


class TestSimulate:
    def test_zero_gravity_stationary(self):
        panel = square_panel(half=10, translation=(3, 4, 5), rotation=(10, 20, 30))
        garment, pairs = drape.assemble_garment(PatternSpec((panel,)), 2.0)
        cfg = SimConfig(gravity=(0.0, 0.0, 0.0), max_frames=10)
        out, report = drape.simulate(garment, pairs, None, cfg)
        assert np.array_equal(out.vertices, garment.vertices)
        assert report.converged and report.frames_run == 1
        assert not report.failed

    def test_square_over_sphere(self, sphere_body):
        garment, pairs = drape.assemble_garment(PatternSpec((square_panel(),)), 2.5)
        cfg = SimConfig()
        out, report = drape.simulate(garment, pairs, sphere_body, cfg)
        assert report.converged
        assert not report.failed
        sd = bodies.sphere_signed_distance(out.vertices, (0, 0, 0), 25.0)
        assert float(np.mean(sd >= cfg.collision_offset - 1e-3)) >= 0.995
        # rotational symmetry: detrended radial height profile on the
        # inscribed disk deviates < 2% of the cloth side
        rest = garment.vertices
        r = np.linalg.norm(rest[:, [0, 2]], axis=1)
        inside = r <= 30.0
        y = out.vertices[inside, 1]
        rr = r[inside]
        bins = np.floor(rr / 2.5).astype(int)
        dev = np.zeros(len(y))
        for b in np.unique(bins):
            m = bins == b
            if m.sum() >= 4:
                coef = np.polyfit(rr[m], y[m], 1)
                dev[m] = y[m] - np.polyval(coef, rr[m])
            else:
                dev[m] = y[m] - y[m].mean()
        assert np.sqrt((dev**2).mean()) / 60.0 <= 0.02

    def test_tube_sleeve_on_cylinder(self, arm_body):
        resolution = 3.0
        pattern = PatternSpec(
            (rect_panel("front", 17.0), rect_panel("back", -17.0)),
            (
                Stitch((EdgeRef("front", 2), EdgeRef("back", 2))),
                Stitch((EdgeRef("front", 0), EdgeRef("back", 0))),
            ),
        )
        garment, pairs = drape.assemble_garment(pattern, resolution)
        cfg = SimConfig()
        out, report = drape.simulate(garment, pairs, arm_body, cfg)
        assert report.converged and not report.failed
        gaps = np.linalg.norm(out.vertices[pairs[:, 0]] - out.vertices[pairs[:, 1]], axis=1)
        assert gaps.max() <= 2.0 * resolution
        ratio = mesh_area(out.vertices, out.triangles) / mesh_area(garment.vertices, garment.triangles)
        assert abs(ratio - 1.0) <= 0.15
        sd = arm_signed_distance(out.vertices)
        assert float(np.mean(sd >= cfg.collision_offset - 1e-3)) >= 0.995

    def test_label_conservation(self, sphere_body):
        garment, pairs = drape.assemble_garment(PatternSpec((square_panel(),)), 4.0)
        out, _ = drape.simulate(garment, pairs, sphere_body, SimConfig(max_frames=30))
        assert sorted(out.labels) == sorted(garment.labels)

    def test_bitwise_determinism(self, sphere_body):
        garment, pairs = drape.assemble_garment(PatternSpec((square_panel(),)), 4.0)
        cfg = SimConfig(max_frames=40)
        out1, rep1 = drape.simulate(garment, pairs, sphere_body, cfg)
        out2, rep2 = drape.simulate(garment, pairs, sphere_body, cfg)
        assert np.array_equal(out1.vertices, out2.vertices)
        assert rep1 == rep2

    def test_energy_decays_without_gravity(self):
        # stretched warm start relaxes back; kinetic energy decays after the
        # initial elastic release
        panel = square_panel(half=10, translation=(0, 0, 0), rotation=(0, 0, 0))
        garment, pairs = drape.assemble_garment(PatternSpec((panel,)), 2.5)
        start = garment.vertices * np.array([1.15, 1.0, 1.0])
        prev = start
        energies = []
        for k in range(1, 13):
            cfg = SimConfig(gravity=(0.0, 0.0, 0.0), max_frames=k, rest_threshold=0.0)
            out, _ = drape.simulate(garment, pairs, None, cfg, initial_positions=start)
            vel = (out.vertices - prev) / cfg.time_step
            energies.append(0.5 * float(np.sum(vel**2)))
            prev = out.vertices
        assert max(energies) > 0.0
        peak = int(np.argmax(energies))
        for a, b in zip(energies[peak:], energies[peak + 1 :]):
            assert b <= a + 1e-12
        assert energies[-1] < 0.2 * max(energies)

    def test_mirror_symmetry(self):
        sv, sf = bodies.make_sphere((0, 3, 1), 25.0, n_lat=128, n_lon=256)
        body = BodyModel(sv, sf)

        def mirror(v):
            w = v.copy()
            w[:, 0] = -w[:, 0]
            return w

        body_m = BodyModel(mirror(sv), sf[:, [0, 2, 1]])
        panel = square_panel(translation=(4, 28.9, 1))
        garment, pairs = drape.assemble_garment(PatternSpec((panel,)), 2.5)
        cfg = SimConfig(max_frames=150)
        out, _ = drape.simulate(garment, pairs, body, cfg)
        garment_m = GarmentMesh(mirror(garment.vertices), garment.triangles[:, [0, 2, 1]], list(garment.labels))
        out_m, _ = drape.simulate(garment_m, pairs, body_m, cfg)
        assert float(np.abs(mirror(out_m.vertices) - out.vertices).max()) <= 1e-6


class TestQualityCheck:
    def test_clean_garment_outside_sphere(self, sphere_body):
        garment, pairs = drape.assemble_garment(
            PatternSpec((square_panel(half=10, translation=(0, 40, 0)),)), 4.0
        )
        pen, selfx = drape.quality_check(garment, sphere_body, 0.4)
        assert (pen, selfx) == (0, 0)

    def test_garment_at_body_center_fully_flagged(self, sphere_body):
        garment, _ = drape.assemble_garment(
            PatternSpec((square_panel(half=5, translation=(0, 0, 0)),)), 3.0
        )
        pen, selfx = drape.quality_check(garment, sphere_body, 0.4)
        assert pen == len(garment.vertices)

    def test_coplanar_offset_sheets_not_crossing(self):
        v = np.array([[0, 0, 0], [4, 0, 0], [0, 4, 0], [1, 1, 0], [5, 1, 0], [1, 5, 0]], float)
        t = np.array([[0, 1, 2], [3, 4, 5]])
        assert count_self_intersections(v, t) == 0

    def test_crossing_sheets_detected(self):
        # vertical triangle stabbing through a horizontal one
        v = np.array(
            [[0, 0, 0], [6, 0, 0], [3, 6, 0], [2, 2, -3], [4, 2, -3], [3, 2, 3]],
            float,
        )
        t = np.array([[0, 1, 2], [3, 4, 5]])
        assert count_self_intersections(v, t) == 1

    def test_touching_sheets_not_crossing(self):
        # sheets meeting exactly along a line: contact, not interpenetration
        v = np.array([[0, 0, 0], [4, 0, 0], [2, 3, 0], [0, 0, 0], [4, 0, 0], [2, -3, 1]], float)
        t = np.array([[0, 1, 2], [3, 4, 5]])
        assert count_self_intersections(v, t) == 0

    def test_diverged_sim_flagged(self):
        panel = square_panel(half=10, translation=(0, 0, 0), rotation=(0, 0, 0))
        garment, pairs = drape.assemble_garment(PatternSpec((panel,)), 3.0)
        bad = garment.copy_with(garment.vertices * np.array([1e160, 1.0, 1e160]))
        cfg = SimConfig(max_frames=12, damping=0.0, strain_limit=0.0, max_speed=0.0)
        out, report = drape.simulate(bad, pairs, None, cfg)
        assert report.failed and report.diverged


class TestBodyModel:
    def test_nearest_on_sphere(self, sphere_body):
        pts = np.array([[0.0, 30.0, 0.0], [0.0, 20.0, 0.0]])
        closest, direction, signed = sphere_body.nearest(pts)
        assert signed[0] == pytest.approx(5.0, abs=0.01)
        assert signed[1] == pytest.approx(-5.0, abs=0.01)
        assert direction[0] @ np.array([0, 1, 0]) > 0.99

    def test_obj_round_trip(self, tmp_path):
        sv, sf = bodies.make_sphere((0, 0, 0), 5.0, n_lat=8, n_lon=12)
        from patternforge import meshio

        meshio.write_obj(tmp_path / "s.obj", sv, sf)
        body = BodyModel.load_obj(tmp_path / "s.obj")
        assert np.allclose(body.vertices, sv)
        assert np.array_equal(body.triangles, sf)

    def test_open_mesh_warns(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
        t = np.array([[0, 1, 2]])
        with pytest.warns(UserWarning, match="watertight"):
            BodyModel(v, t)

    def test_mannequin_watertight(self):
        mv, mf = bodies.make_mannequin(grid=2.5)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            BodyModel(mv, mf)
