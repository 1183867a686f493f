//! Output files read back by a minimal parser written only for these tests.

use rheo_afem::constitutive::{GraphModel, LawField, RegularizationKind, RegularizedLaw};
use rheo_afem::estimator::assemble_indicators;
use rheo_afem::fespace::{FunctionSpacePair, PairKind};
use rheo_afem::forcing::Forcing;
use rheo_afem::io::{meshfile, vtk};
use rheo_afem::mesh::Mesh;
use rheo_afem::constitutive::make_exponents;
use rheo_afem::solver::{solve_discrete, Problem, SolverOptions};

#[derive(Default)]
struct Parsed {
    points: Vec<[f64; 3]>,
    cells: Vec<Vec<usize>>,
    types: Vec<u8>,
    vectors: Vec<(String, Vec<[f64; 3]>)>,
    scalars: Vec<(String, Vec<f64>)>,
}

fn parse_vtk(text: &str) -> Parsed {
    let mut out = Parsed::default();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# vtk DataFile"));
    lines.next();
    assert_eq!(lines.next(), Some("ASCII"));
    assert_eq!(lines.next(), Some("DATASET UNSTRUCTURED_GRID"));
    let mut block_len = 0;
    while let Some(line) = lines.next() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.first().copied() {
            Some("POINTS") => {
                let n: usize = words[1].parse().unwrap();
                for _ in 0..n {
                    let v: Vec<f64> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
                    out.points.push([v[0], v[1], v[2]]);
                }
            }
            Some("CELLS") => {
                let n: usize = words[1].parse().unwrap();
                for _ in 0..n {
                    let v: Vec<usize> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
                    assert_eq!(v[0], v.len() - 1);
                    out.cells.push(v[1..].to_vec());
                }
            }
            Some("CELL_TYPES") => {
                let n: usize = words[1].parse().unwrap();
                for _ in 0..n {
                    out.types.push(lines.next().unwrap().trim().parse().unwrap());
                }
            }
            Some("POINT_DATA") | Some("CELL_DATA") => block_len = words[1].parse().unwrap(),
            Some("VECTORS") => {
                let v = (0..block_len)
                    .map(|_| {
                        let x: Vec<f64> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
                        [x[0], x[1], x[2]]
                    })
                    .collect();
                out.vectors.push((words[1].to_string(), v));
            }
            Some("SCALARS") => {
                assert_eq!(lines.next(), Some("LOOKUP_TABLE default"));
                let v = (0..block_len).map(|_| lines.next().unwrap().trim().parse().unwrap()).collect();
                out.scalars.push((words[1].to_string(), v));
            }
            None => {}
            Some(other) => panic!("unexpected section {other}"),
        }
    }
    out
}

#[test]
fn fields_round_trip() {
    let space = FunctionSpacePair::new(Mesh::l_shape().refine_uniform_times(2), PairKind::TaylorHood);
    let law = RegularizedLaw::new(GraphModel::newtonian(1.0), RegularizationKind::SimpleTau, 1, 1.0).unwrap();
    let laws = LawField::uniform(law);
    let forcing = Forcing::Rotational { amplitude: 1.0 / 3.0, center: [0.1, 0.2] };
    let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: true, quad_degree: 6 };
    let (state, _) = solve_discrete(&problem, None, &SolverOptions::default()).unwrap();
    let ind = assemble_indicators(problem, &state, make_exponents(2.0, 2, None).unwrap());
    let text = vtk::fields_vtk(&space, &state, Some(&ind)).unwrap();
    let parsed = parse_vtk(&text);
    let coords = space.node_coordinates();
    assert_eq!(parsed.points.len(), coords.len());
    for (p, c) in parsed.points.iter().zip(&coords) {
        assert!((p[0] - c[0]).abs() <= 1e-12 && (p[1] - c[1]).abs() <= 1e-12 && p[2] == 0.0);
    }
    assert_eq!(parsed.cells.len(), space.mesh.num_triangles());
    assert!(parsed.types.iter().all(|&t| t == 22));
    // VTK midpoint nodes sit halfway along the corresponding corners.
    for cell in &parsed.cells {
        for (mid, (a, b)) in [(3, (0, 1)), (4, (1, 2)), (5, (2, 0))] {
            let (pa, pb, pm) = (parsed.points[cell[a]], parsed.points[cell[b]], parsed.points[cell[mid]]);
            assert!((0.5 * (pa[0] + pb[0]) - pm[0]).abs() < 1e-12 && (0.5 * (pa[1] + pb[1]) - pm[1]).abs() < 1e-12);
        }
    }
    let (name, vel) = &parsed.vectors[0];
    assert_eq!(name, "velocity");
    for (i, v) in vel.iter().enumerate() {
        assert_eq!(v[0], state.velocity[2 * i]);
        assert_eq!(v[1], state.velocity[2 * i + 1]);
    }
    let names: Vec<&str> = parsed.scalars.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["pressure", "eta_pde", "eta_ic", "eta_graph", "eta_osc"]);
    assert_eq!(parsed.scalars[1].1, ind.pde);
}

#[test]
fn mesh_vtk_and_mesh_file_round_trip() {
    let mesh = Mesh::l_shape().refine_uniform_times(3);
    let parsed = parse_vtk(&vtk::mesh_vtk(&mesh));
    assert_eq!(parsed.points.len(), mesh.num_vertices());
    for (p, v) in parsed.points.iter().zip(mesh.vertices()) {
        assert!((p[0] - v[0]).abs() <= 1e-12 && (p[1] - v[1]).abs() <= 1e-12);
    }
    let tris: Vec<Vec<usize>> = mesh.triangles().iter().map(|t| t.to_vec()).collect();
    assert_eq!(parsed.cells, tris);
    assert!(parsed.types.iter().all(|&t| t == 5));

    let again = meshfile::parse(&meshfile::format(&mesh)).unwrap();
    assert_eq!(again.vertices(), mesh.vertices());
    assert_eq!(again.triangles(), mesh.triangles());
    assert_eq!(again.refinement_edges(), mesh.refinement_edges());
    assert_eq!(again.boundary(), mesh.boundary());
}
