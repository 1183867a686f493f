//! Randomized invariants.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rheo_afem::afem::{afem_run, mark, RefinementKind};
use rheo_afem::config::parse_config;
use rheo_afem::constitutive::{make_exponents, FlowCurve, GraphKind, GraphModel, RegularizationKind, RegularizedLaw};
use rheo_afem::mesh::Mesh;
use rheo_afem::tensor::Sym;

fn graphs() -> impl Strategy<Value = (GraphModel, f64)> {
    prop_oneof![
        (0.1..3.0f64).prop_map(|nu| (GraphModel::newtonian(nu), 2.0)),
        (0.1..3.0f64, 0.0..2.0f64).prop_map(|(nu, s)| (GraphModel::bingham(nu, s), 2.0)),
        (0.2..2.0f64, 1.4..2.8f64).prop_map(|(c, q)| {
            let flow = FlowCurve { c, kappa: 0.0, q };
            (GraphModel::new(GraphKind::PowerLaw { flow }).unwrap(), q)
        }),
        (0.1..1.5f64, 0.2..2.0f64, 1.4..2.8f64).prop_map(|(s, c, q)| {
            let flow = FlowCurve { c, kappa: 0.5, q };
            (GraphModel::new(GraphKind::HerschelBulkley { yield_stress: s, flow }).unwrap(), q)
        }),
        (0.5..2.0f64).prop_map(|level| {
            let lower = FlowCurve { c: 2.0, kappa: 0.0, q: 2.0 };
            let upper = FlowCurve { c: 0.5, kappa: 0.0, q: 2.0 };
            (GraphModel::new(GraphKind::Plateau { lower, upper, level }).unwrap(), 2.0)
        }),
    ]
}

fn regularization(g: &GraphModel, pick: bool) -> RegularizationKind {
    match g.kind {
        GraphKind::Plateau { .. } | GraphKind::PlateauWithJump { .. } if pick => RegularizationKind::PlateauInterp,
        GraphKind::Plateau { .. } | GraphKind::PlateauWithJump { .. } => RegularizationKind::Mollified,
        _ if pick => RegularizationKind::Mollified,
        _ => RegularizationKind::SimpleTau,
    }
}

fn sym() -> impl Strategy<Value = Sym> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| Sym::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_nonnegative_and_vanishes_on_the_graph(
        (g, r) in graphs(), x in 0.0..4.0f64, y in 0.0..8.0f64, d in sym(),
    ) {
        let e = make_exponents(r, 2, None).unwrap();
        let dist = g.scalar_distance(&e, x, y);
        prop_assert!(dist >= 0.0 && dist.is_finite());
        let s = g.selection_scalar(x);
        prop_assert!(g.scalar_distance(&e, x, s) <= 1e-9 * (1.0 + s), "{}", g.scalar_distance(&e, x, s));
        let sd = g.selection(d);
        prop_assert!(g.distance(&e, d, sd) <= 1e-9 * (1.0 + sd.norm()));
    }

    #[test]
    fn regularized_stress_is_monotone(
        (g, _) in graphs(), pick in any::<bool>(), n in 1u32..20, a in sym(), b in sym(),
    ) {
        let law = RegularizedLaw::new(g, regularization(&g, pick), n, 1.0).unwrap();
        let diff = a - b;
        let v = (law.stress(a) - law.stress(b)).ddot(diff);
        prop_assert!(v >= -1e-12 * (1.0 + diff.norm()), "{v}");
        let (_, tangent) = law.stress_and_tangent(a);
        prop_assert!(tangent.apply(diff).ddot(diff) >= -1e-12 * diff.norm().powi(2));
    }

    #[test]
    fn maximum_marking_selects_dominant_elements(
        eta in prop::collection::vec(0.0..10.0f64, 1..60), theta in 0.01..=1.0f64,
    ) {
        let marked = mark(&eta, theta);
        let max = eta.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            prop_assert!(marked.is_empty());
        } else {
            prop_assert!(!marked.is_empty());
            for (i, &v) in eta.iter().enumerate() {
                prop_assert_eq!(marked.contains(&i), v >= theta * max);
            }
        }
    }

    #[test]
    fn random_refinement_stays_conforming(
        lshape in any::<bool>(), rounds in prop::collection::vec(prop::collection::vec(any::<u32>(), 1..6), 1..6),
    ) {
        let mut mesh = if lshape { Mesh::l_shape() } else { Mesh::unit_square() };
        let area = mesh.total_area();
        let base_angle = mesh.refine_uniform_times(2).mesh_min_angle();
        for picks in rounds {
            let nt = mesh.num_triangles();
            let marked: BTreeSet<usize> = picks.iter().map(|&p| p as usize % nt).collect();
            let r = mesh.refine_with_parents(&marked).unwrap();
            prop_assert!(r.mesh.validate().is_empty(), "{:?}", r.mesh.validate().violations);
            prop_assert!(r.mesh.num_triangles() >= nt + marked.len());
            prop_assert_eq!(r.parent.len(), r.mesh.num_triangles());
            for (c, &p) in r.parent.iter().enumerate() {
                let x = r.mesh.centroid(c);
                let l = mesh.barycentric(p, x);
                prop_assert!(l.iter().all(|&v| v >= -1e-12));
            }
            mesh = r.mesh;
            prop_assert!((mesh.total_area() - area).abs() < 1e-12);
            prop_assert!(mesh.mesh_min_angle() >= base_angle - 1e-12);
        }
    }

    #[test]
    fn config_parser_never_panics(lines in prop::collection::vec(
        prop_oneof![
            Just("[law]".to_string()),
            Just("[afem]".to_string()),
            Just("[domain]".to_string()),
            Just("[forcing".to_string()),
            Just("graph = bingham".to_string()),
            Just("graph = power_law".to_string()),
            Just("nu = 1".to_string()),
            Just("yield_stress = -1".to_string()),
            Just("theta = nan".to_string()),
            Just("refinements = 99999999999999999999".to_string()),
            Just("kind = rotational".to_string()),
            "[a-z_.=\\[\\] #0-9-]{0,24}",
        ],
        0..12,
    )) {
        let text = lines.join("\n");
        let _ = parse_config(&text);
    }

    #[test]
    fn trace_invariants_on_small_runs(
        bingham in any::<bool>(), nu in 0.5..2.0f64, theta in 0.2..=1.0f64, amplitude in 0.5..10.0f64, iters in 1usize..5,
    ) {
        let law = if bingham {
            format!("graph = bingham\nnu = {nu}\nyield_stress = 0.5\ntau0 = 1")
        } else {
            format!("graph = newtonian\nnu = {nu}")
        };
        let text = format!(
            "[domain]\nrefinements = 0\n[law]\n{law}\n[forcing]\nkind = rotational\namplitude = {amplitude}\n\
             [afem]\ntheta = {theta}\nmax_iterations = {iters}\ntarget_total = 1e-14\n"
        );
        let config = parse_config(&text).unwrap();
        let out = afem_run(&config.afem_config().unwrap(), config.initial_mesh().unwrap(), &mut |_| {}).unwrap();
        let rows = &out.trace.rows;
        prop_assert_eq!(rows.len(), iters);
        prop_assert!(out.trace.truncated);
        prop_assert_eq!(rows.last().unwrap().kind, RefinementKind::Stop);
        for (k, r) in rows.iter().enumerate() {
            prop_assert_eq!(r.k, k);
            prop_assert_eq!(r.seconds, 0.0);
            for v in [r.e_pde, r.e_ic, r.e_total, r.e_a] {
                prop_assert!(v.is_finite() && v >= 0.0);
            }
            prop_assert!((r.e_total - r.e_pde - r.e_ic).abs() <= 1e-12 * r.e_total);
            prop_assert_eq!(r.kind == RefinementKind::Mesh, r.kind != RefinementKind::Stop && r.e_total >= r.e_a);
            if !bingham {
                // Only rounding separates the discrete stress from the graph.
                prop_assert!(r.e_a <= 1e-20, "{}", r.e_a);
            }
        }
        for w in rows.windows(2) {
            match w[0].kind {
                RefinementKind::Mesh => {
                    prop_assert!(w[1].elements > w[0].elements);
                    prop_assert_eq!(w[1].n, w[0].n);
                }
                RefinementKind::Graph => {
                    prop_assert_eq!(w[1].elements, w[0].elements);
                    prop_assert_eq!(w[1].n, w[0].n + 1);
                }
                RefinementKind::Stop => prop_assert!(false, "stop before the last row"),
            }
        }
    }
}
