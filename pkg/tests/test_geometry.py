import math

import numpy as np
import pytest

from nbnnplace import (
    InsufficientDataError,
    LocalizationTask,
    TaskParams,
    ValidationError,
    Viewpoint,
    load_tasks,
    sample_task,
    save_tasks,
    select_relevant,
    triangles_overlap,
    viewing_triangle,
    with_overlap,
)
from nbnnplace.geometry import (
    DEFAULT_APEX_ANGLE,
    DEFAULT_LEG,
    DEFAULT_T_THETA,
    destructor_eligible,
)
from nbnnplace.scene import heading_difference

shapely = pytest.importorskip("shapely")
from shapely.geometry import Polygon  # noqa: E402


def tri_polygon(tri):
    return Polygon([tuple(v) for v in tri.vertices()])


def random_viewpoint(rng, span=200.0):
    return Viewpoint(
        x=float(rng.uniform(0, span)),
        y=float(rng.uniform(0, span)),
        heading=float(rng.uniform(-math.pi, math.pi)),
    )


# ---------------------------------------------------------------- triangle shape


def test_triangle_vertices_geometry():
    vp = Viewpoint(10.0, 20.0, 0.5)
    tri = viewing_triangle(vp)
    verts = tri.vertices()
    assert verts.shape == (3, 2)
    np.testing.assert_allclose(verts[0], [10.0, 20.0])
    for v in verts[1:]:
        assert np.hypot(*(v - verts[0])) == pytest.approx(DEFAULT_LEG)
    # angle between the two legs equals the apex angle
    a = verts[1] - verts[0]
    b = verts[2] - verts[0]
    cosang = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    assert math.acos(np.clip(cosang, -1, 1)) == pytest.approx(DEFAULT_APEX_ANGLE)


def test_triangle_is_symmetric_about_heading():
    vp = Viewpoint(0.0, 0.0, 1.1)
    verts = viewing_triangle(vp).vertices()
    mid = 0.5 * (verts[1] + verts[2])
    bearing = math.atan2(mid[1], mid[0])
    assert bearing == pytest.approx(1.1, abs=1e-9)


def test_viewing_triangle_rejects_bad_params():
    vp = Viewpoint(0.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        viewing_triangle(vp, apex_angle=0.0)
    with pytest.raises(ValidationError):
        viewing_triangle(vp, apex_angle=math.pi)
    with pytest.raises(ValidationError):
        viewing_triangle(vp, leg=-1.0)


# ---------------------------------------------------------------- overlap predicate


def test_overlap_agrees_with_polygon_oracle():
    """Separating-axis test against an independent polygon intersection."""
    rng = np.random.default_rng(7)
    disagreements = 0
    for _ in range(500):
        a = viewing_triangle(random_viewpoint(rng, span=120.0))
        b = viewing_triangle(random_viewpoint(rng, span=120.0))
        ours = triangles_overlap(a, b)
        inter = tri_polygon(a).intersection(tri_polygon(b))
        oracle = inter.area > 1e-9
        if ours != oracle:
            disagreements += 1
    assert disagreements == 0


def test_touching_triangles_do_not_overlap():
    # mirror-image triangles sharing only the apex point
    a = viewing_triangle(Viewpoint(0.0, 0.0, 0.0))
    b = viewing_triangle(Viewpoint(0.0, 0.0, math.pi))
    assert triangles_overlap(a, b) is False
    oracle = tri_polygon(a).intersection(tri_polygon(b))
    assert oracle.area == pytest.approx(0.0, abs=1e-12)


def test_identical_triangles_overlap():
    t = viewing_triangle(Viewpoint(3.0, 4.0, 0.7))
    assert triangles_overlap(t, t) is True


def test_far_apart_triangles_do_not_overlap():
    a = viewing_triangle(Viewpoint(0.0, 0.0, 0.0))
    b = viewing_triangle(Viewpoint(1000.0, 1000.0, 0.0))
    assert triangles_overlap(a, b) is False


def test_overlap_invariant_under_rigid_motion():
    rng = np.random.default_rng(3)
    for _ in range(100):
        va = random_viewpoint(rng, span=80.0)
        vb = random_viewpoint(rng, span=80.0)
        base = triangles_overlap(viewing_triangle(va), viewing_triangle(vb))
        dx, dy = rng.uniform(-500, 500, size=2)
        rot = float(rng.uniform(-math.pi, math.pi))
        c, s = math.cos(rot), math.sin(rot)

        def moved(vp):
            x = c * vp.x - s * vp.y + dx
            y = s * vp.x + c * vp.y + dy
            return Viewpoint(x, y, vp.heading + rot)

        assert triangles_overlap(viewing_triangle(moved(va)), viewing_triangle(moved(vb))) == base


# ---------------------------------------------------------------- relevant selection


def test_select_relevant_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(30):
        database = [(f"v{i}", random_viewpoint(rng, span=60.0)) for i in range(40)]
        query = random_viewpoint(rng, span=60.0)
        got = select_relevant(query, database)
        best = min(
            (
                math.hypot(vp.x - query.x, vp.y - query.y),
                heading_difference(vp.heading, query.heading),
                image_id,
            )
            for image_id, vp in database
        )
        assert got == best[2]


def test_select_relevant_tie_breaks_by_id():
    q = Viewpoint(0.0, 0.0, 0.0)
    same = Viewpoint(1.0, 0.0, 0.0)
    assert select_relevant(q, [("zz", same), ("aa", same)]) == "aa"


def test_select_relevant_requires_candidates():
    with pytest.raises(ValidationError):
        select_relevant(Viewpoint(0, 0, 0), [])


# ---------------------------------------------------------------- task sampling


def build_pose_list(rng, n=80, span=300.0):
    return [(f"p{i:03d}", random_viewpoint(rng, span=span)) for i in range(n)]


def test_destructor_eligibility_rules():
    params = TaskParams()
    q = Viewpoint(0.0, 0.0, 0.0)
    near_same = Viewpoint(5.0, 0.0, 0.05)
    assert destructor_eligible(q, near_same, params) is False  # shared view, same heading
    turned = Viewpoint(5.0, 0.0, DEFAULT_T_THETA + 0.1)
    assert destructor_eligible(q, turned, params) is True  # heading difference alone
    far = Viewpoint(500.0, 0.0, 0.0)
    assert destructor_eligible(q, far, params) is True  # disjoint views


def test_sample_task_is_deterministic(rng):
    database = build_pose_list(rng)
    params = TaskParams(n_d=20)
    t1 = sample_task("p000", database, rng_seed=42, params=params)
    t2 = sample_task("p000", database, rng_seed=42, params=params)
    assert t1 == t2


def test_sample_task_contents(rng):
    database = build_pose_list(rng)
    params = TaskParams(n_d=20)
    task = sample_task("p001", database, rng_seed=7, params=params)
    by_id = dict(database)
    assert task.query_id == "p001"
    others = [(i, vp) for i, vp in database if i != "p001"]
    assert task.relevant_id == select_relevant(by_id["p001"], others)
    assert len(task.destructor_ids) == params.n_d - 1
    assert len(set(task.database_ids)) == params.n_d
    assert task.query_id not in task.database_ids
    for d in task.destructor_ids:
        assert destructor_eligible(by_id["p001"], by_id[d], params)


def test_sample_task_insufficient_pool():
    # tight cluster, all facing the same way: nothing qualifies as a destructor
    database = [(f"c{i}", Viewpoint(float(i) * 0.1, 0.0, 0.0)) for i in range(10)]
    with pytest.raises(InsufficientDataError) as err:
        sample_task("c0", database, rng_seed=0, params=TaskParams(n_d=5))
    assert err.value.eligible == 0


def test_sample_task_unknown_query(rng):
    database = build_pose_list(rng, n=10)
    with pytest.raises(ValidationError):
        sample_task("missing", database, rng_seed=0, params=TaskParams(n_d=3))


def test_task_validation_rejects_duplicates():
    with pytest.raises(ValidationError):
        LocalizationTask("q", "r", ("r", "d2"))
    with pytest.raises(ValidationError):
        LocalizationTask("q", "q", ("d1",))


def test_database_ids_order():
    t = LocalizationTask("q", "r", ("d1", "d2"))
    assert t.database_ids == ("r", "d1", "d2")


# ---------------------------------------------------------------- task file round trip


def test_task_file_round_trip(tmp_path, rng):
    database = build_pose_list(rng)
    params = TaskParams(n_d=10)
    tasks = [
        sample_task(f"p{i:03d}", database, rng_seed=i, params=params)
        for i in range(6)
    ]
    tasks[0] = with_overlap(tasks[0], 17, 1.0 / 17.0)
    tasks[1] = with_overlap(tasks[1], 0, math.inf)  # hardest class survives the trip
    path = tmp_path / "tasks.jsonl"
    save_tasks(tasks, path)
    loaded = load_tasks(path)
    assert loaded == tasks
    assert loaded[0].ldi == pytest.approx(1.0 / 17.0)
    assert loaded[1].ldi == math.inf
