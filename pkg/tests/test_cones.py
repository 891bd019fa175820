import math

import numpy as np
import pytest

from lyapcert.cones import (ConeGeometryError, PolyhedralCone, Simplex,
                            SimplicialPartition, barycentric,
                            bisect_longest_edge, cone_orthant_sections,
                            dump_partition_lines, face_sections,
                            partition_diameter)

WEDGE = PolyhedralCone([[-0.25, 1.0], [1.0, -0.25]])


def vertex_set(simplex, digits=9):
    return {tuple(round(v, digits) for v in vert) for vert in simplex.vertices}


# -- orthant sections ------------------------------------------------------------

def test_positive_orthant_single_section():
    secs = cone_orthant_sections(PolyhedralCone(np.eye(2)))
    assert len(secs) == 1
    oid, simplex = secs[0]
    assert vertex_set(simplex) == {(1.0, 0.0), (0.0, 1.0)}


def test_wedge_cone_section_from_extreme_rays():
    secs = cone_orthant_sections(WEDGE)
    assert len(secs) == 1
    _, simplex = secs[0]
    assert vertex_set(simplex) == {(0.8, 0.2), (0.2, 0.8)}


def test_full_plane_four_sections():
    cone = PolyhedralCone(np.zeros((0, 2)), dimension=2)
    secs = cone_orthant_sections(cone)
    assert len(secs) == 4
    for _, simplex in secs:
        V = simplex.vertex_array()
        assert np.allclose(np.abs(V).sum(axis=1), 1.0)


def test_degenerate_cone_reports_empty():
    hyperplane = PolyhedralCone([[1.0, 0.0], [-1.0, 0.0]])
    assert cone_orthant_sections(hyperplane) == []


def test_square_based_cone_sections_are_triangulated():
    # four extreme rays per orthant piece: each quadrilateral section must
    # arrive as two plain simplices
    cone = PolyhedralCone([[-1, 0, 1], [1, 0, 1], [0, -1, 1], [0, 1, 1]])
    secs = cone_orthant_sections(cone)
    per_orthant: dict[int, int] = {}
    for oid, simplex in secs:
        per_orthant[oid] = per_orthant.get(oid, 0) + 1
        assert simplex.num_vertices == 3
        V = simplex.vertex_array()
        assert np.linalg.matrix_rank(V[1:] - V[0]) == 2
        for v in simplex.vertices:
            assert cone.contains(np.array(v), tol=1e-9)
    assert all(count == 2 for count in per_orthant.values())
    assert len(per_orthant) == 4


def test_section_vertices_feasible_and_normalized():
    for cone in (WEDGE, PolyhedralCone(np.eye(3)),
                 PolyhedralCone([[1.0, 1.0, 0.2], [0.3, 1.0, 1.0]])):
        for _, simplex in cone_orthant_sections(cone):
            for v in simplex.vertices:
                v = np.array(v)
                assert cone.contains(v, tol=1e-9)
                assert abs(np.abs(v).sum() - 1.0) <= 1e-12


def test_extreme_ray_active_sets_scale_invariant():
    for _, simplex in cone_orthant_sections(WEDGE):
        for v in simplex.vertices:
            v = np.array(v)
            base = np.abs(WEDGE.C @ v) <= 1e-9
            for t in (0.3, 2.0, 17.5):
                scaled = np.abs(WEDGE.C @ (t * v)) <= 1e-9 * t
                assert (base == scaled).all()


# -- face sections -----------------------------------------------------------------

def test_wedge_face_is_singleton_ray():
    secs = face_sections(WEDGE, 1)
    assert len(secs) == 1
    assert vertex_set(secs[0]) == {(0.8, 0.2)}
    secs2 = face_sections(WEDGE, 2)
    assert vertex_set(secs2[0]) == {(0.2, 0.8)}


def test_orthant_face_singleton():
    secs = face_sections(PolyhedralCone(np.eye(2)), 1)
    assert len(secs) == 1
    assert vertex_set(secs[0]) == {(0.0, 1.0)}


def test_three_dimensional_face_segment():
    secs = face_sections(PolyhedralCone(np.eye(3)), 1)
    assert len(secs) == 1
    assert vertex_set(secs[0]) == {(0.0, 1.0, 0.0), (0.0, 0.0, 1.0)}


def test_face_index_out_of_range():
    with pytest.raises(ConeGeometryError):
        face_sections(WEDGE, 3)


# -- barycentric coordinates --------------------------------------------------------

def test_barycentric_midpoint():
    s = Simplex.from_rows([[1, 0], [0, 1]])
    lam = barycentric([0.5, 0.5], s)
    assert np.allclose(lam, [0.5, 0.5])


def test_barycentric_vertex_identity():
    s = Simplex.from_rows([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    lam = barycentric([1, 0, 0], s)
    assert np.allclose(lam, [1.0, 0.0, 0.0], atol=1e-12)


def test_barycentric_reconstruction_oracle():
    rng = np.random.default_rng(11)
    s = Simplex.from_rows([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    V = s.vertex_array()
    for _ in range(100):
        lam = rng.dirichlet([1.0, 1.0, 1.0])
        x = lam @ V
        back = barycentric(x, s)
        assert np.linalg.norm(back @ V - x) <= 1e-10
        assert back.min() >= -1e-9


def test_barycentric_outside_affine_hull():
    s = Simplex.from_rows([[1, 0, 0], [0, 1, 0]])
    with pytest.raises(ConeGeometryError):
        barycentric([0.3, 0.3, 0.4], s)


# -- refinement --------------------------------------------------------------------

def test_bisect_standard_segment():
    s = Simplex.from_rows([[1, 0], [0, 1]])
    a, b = bisect_longest_edge(s)
    assert vertex_set(a) == {(1.0, 0.0), (0.5, 0.5)}
    assert vertex_set(b) == {(0.5, 0.5), (0.0, 1.0)}


def test_bisect_singleton_errors():
    with pytest.raises(ConeGeometryError):
        bisect_longest_edge(Simplex.from_rows([[0.8, 0.2]]))


def test_midpoints_stay_on_l1_sphere():
    part = SimplicialPartition(Simplex.from_rows(np.eye(3)))
    for _ in range(4):
        part = part.refine_all()
    for cell in part.cells:
        for v in cell.vertices:
            assert abs(np.abs(np.array(v)).sum() - 1.0) <= 1e-12


def test_uniform_sweeps_halve_diameter():
    part = SimplicialPartition(Simplex.from_rows(np.eye(3)))
    d0 = part.diameter()
    assert abs(d0 - math.sqrt(2)) <= 1e-15
    for k in range(1, 4):
        part = part.halve_diameter()
        assert part.diameter() <= d0 / 2 ** k + 1e-12


# -- partitions ---------------------------------------------------------------------

def test_partition_diameter_values():
    one = SimplicialPartition(Simplex.from_rows([[1, 0], [0, 1]]))
    assert abs(partition_diameter(one) - math.sqrt(2)) <= 1e-15
    refined = one.refine_all()
    assert abs(partition_diameter(refined) - math.sqrt(0.5)) <= 1e-12
    singleton = SimplicialPartition(Simplex.from_rows([[0.8, 0.2]]))
    assert partition_diameter(singleton) == 0.0


def test_partition_diameter_brute_force_oracle():
    rng = np.random.default_rng(12)
    part = SimplicialPartition(Simplex.from_rows(np.eye(3)))
    for _ in range(3):
        part = part.refine_cells(rng.choice(len(part.cells),
                                            size=max(1, len(part.cells) // 2),
                                            replace=False))
    best = 0.0
    for cell in part.cells:
        V = cell.vertex_array()
        for i in range(len(V)):
            for j in range(len(V)):
                best = max(best, float(np.linalg.norm(V[i] - V[j])))
    assert abs(partition_diameter(part) - best) <= 1e-15


def test_cover_property_after_refinement():
    rng = np.random.default_rng(13)
    parent = Simplex.from_rows(np.eye(3))
    part = SimplicialPartition(parent)
    for _ in range(5):
        part = part.refine_cells(
            rng.choice(len(part.cells), size=max(1, len(part.cells) // 3),
                       replace=False))
    V = parent.vertex_array()
    for _ in range(1000):
        x = rng.dirichlet([1.0, 1.0, 1.0]) @ V
        assert part.locate(x) is not None


def test_interiors_disjoint_by_sampling():
    rng = np.random.default_rng(14)
    part = SimplicialPartition(Simplex.from_rows(np.eye(2 + 1))).refine_all()
    part = part.refine_all()
    V = part.parent.vertex_array()
    for _ in range(300):
        x = rng.dirichlet([1.0] * 3) @ V
        hits = 0
        for cell in part.cells:
            try:
                lam = barycentric(x, cell)
            except ConeGeometryError:
                continue
            if lam.min() > 1e-7:  # strictly interior
                hits += 1
        assert hits <= 1


def test_dump_partition_lines_shape():
    part = SimplicialPartition(Simplex.from_rows([[1, 0], [0, 1]])).refine_all()
    lines = dump_partition_lines([part])
    assert len(lines) == 2
    assert lines[0] == "1.0,0.0;0.5,0.5"
