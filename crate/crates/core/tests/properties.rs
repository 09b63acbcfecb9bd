use proptest::prelude::*;

use graphnls::exec::Execution;
use graphnls::functionals::{gn_quotient, EnergyParts, ProblemParams};
use graphnls::graph::{EdgeKind, GraphType};
use graphnls::mesh::{build_mesh, project_mass, GraphFunction, MeshParams};
use graphnls::solver::{minimize, SolverConfig};
use graphnls::rearrange::{rearrange, RearrangeConfig, RearrangeTarget};
use graphnls::{MetricGraph, VertexId};

#[derive(Debug, Clone)]
struct Shape {
    edges: Vec<(usize, usize, f64)>,
    halves: Vec<usize>,
}

fn build(s: &Shape) -> Option<MetricGraph> {
    let mut b = MetricGraph::builder();
    for &(a, c, l) in &s.edges {
        b.add_edge(&format!("v{a}"), &format!("v{c}"), l);
    }
    for &h in &s.halves {
        b.add_half_line(&format!("v{h}"));
    }
    b.build().ok()
}

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec((0..n, 0..n, 0.5f64..3.0), 0..=6),
            prop::collection::vec(0..n, 1..=3),
        )
            .prop_map(|(edges, halves)| Shape { edges, halves })
    })
}

/// Splits bounded edge `k` (or, past the bounded edges, a half-line) with a new vertex.
fn subdivide(s: &Shape, k: usize, t: f64) -> Shape {
    let fresh = 100;
    let mut out = s.clone();
    if k < s.edges.len() {
        let (a, c, l) = s.edges[k];
        out.edges[k] = (a, fresh, t * l);
        out.edges.push((fresh, c, (1.0 - t) * l));
    } else {
        let j = (k - s.edges.len()) % s.halves.len();
        out.edges.push((s.halves[j], fresh, 1.0 + t));
        out.halves[j] = fresh;
    }
    out
}

/// Every bounded edge lies on a loop or on a path between two distinct half-lines.
fn brute_cycle_covering(g: &MetricGraph) -> bool {
    let halves: Vec<VertexId> = g.half_lines().map(|e| e.endpoints().0).collect();
    if halves.len() < 2 {
        return false;
    }
    let bounded: Vec<(usize, usize, usize)> = g
        .edges()
        .iter()
        .filter_map(|e| match e.kind {
            EdgeKind::Bounded { tail, head, .. } => Some((e.id.0, tail.0, head.0)),
            EdgeKind::HalfLine { .. } => None,
        })
        .collect();
    let n = g.num_vertices();
    // simple paths from `from` to any vertex accepted by `goal`, avoiding `banned` vertices and edge `skip`
    fn reach(
        at: usize,
        goal: &dyn Fn(usize) -> bool,
        banned: &mut Vec<bool>,
        skip: usize,
        edges: &[(usize, usize, usize)],
    ) -> bool {
        if goal(at) {
            return true;
        }
        banned[at] = true;
        for &(id, a, b) in edges {
            if id == skip {
                continue;
            }
            let next = if a == at { b } else if b == at { a } else { continue };
            if !banned[next] && reach(next, goal, banned, skip, edges) {
                banned[at] = false;
                return true;
            }
        }
        banned[at] = false;
        false
    }
    bounded.iter().all(|&(id, a, b)| {
        if a == b {
            return true;
        }
        // bounded cycle: back from b to a without the edge
        if reach(b, &|v| v == a, &mut vec![false; n], id, &bounded) {
            return true;
        }
        // two distinct half-lines hanging off vertex-disjoint paths from a and b
        let count_at = |v: usize| halves.iter().filter(|h| h.0 == v).count();
        for (i, ha) in halves.iter().enumerate() {
            for (j, hb) in halves.iter().enumerate() {
                if i == j {
                    continue;
                }
                if ha.0 == hb.0 && count_at(ha.0) < 2 {
                    continue;
                }
                let mut banned = vec![false; n];
                if path_pair(a, ha.0, b, hb.0, &mut banned, id, &bounded) {
                    return true;
                }
            }
        }
        false
    })
}

/// Vertex-disjoint simple paths a→x and b→y (not using edge `skip`).
fn path_pair(
    a: usize,
    x: usize,
    b: usize,
    y: usize,
    banned: &mut Vec<bool>,
    skip: usize,
    edges: &[(usize, usize, usize)],
) -> bool {
    // enumerate all simple paths from a to x, then search b→y in what remains
    fn walk(
        at: usize,
        x: usize,
        b: usize,
        y: usize,
        banned: &mut Vec<bool>,
        skip: usize,
        edges: &[(usize, usize, usize)],
    ) -> bool {
        if at == b {
            return false;
        }
        banned[at] = true;
        let found = if at == x {
            second(b, y, banned, skip, edges)
        } else {
            edges.iter().filter(|e| e.0 != skip).any(|&(_, p, q)| {
                let next = if p == at { q } else if q == at { p } else { return false };
                !banned[next] && walk(next, x, b, y, banned, skip, edges)
            })
        };
        banned[at] = false;
        found
    }
    fn second(at: usize, y: usize, banned: &mut Vec<bool>, skip: usize, edges: &[(usize, usize, usize)]) -> bool {
        if banned[at] {
            return false;
        }
        if at == y {
            return true;
        }
        banned[at] = true;
        let found = edges.iter().filter(|e| e.0 != skip).any(|&(_, p, q)| {
            let next = if p == at { q } else if q == at { p } else { return false };
            !banned[next] && second(next, y, banned, skip, edges)
        });
        banned[at] = false;
        found
    }
    walk(a, x, b, y, banned, skip, edges)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn classification_survives_subdivision(s in shape(), k in 0usize..12, t in 0.1f64..0.9) {
        let g = build(&s);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        let h = build(&subdivide(&s, k % (s.edges.len() + s.halves.len()), t)).expect("subdivision keeps validity");
        let (a, b) = (g.classify(), h.classify());
        prop_assert_eq!(a.type_label, b.type_label);
        prop_assert_eq!(a.has_terminal_point, b.has_terminal_point);
        prop_assert_eq!(a.has_cycle_covering, b.has_cycle_covering);
        prop_assert_eq!(a.num_half_lines, b.num_half_lines);
    }

    #[test]
    fn cycle_covering_matches_path_search(s in shape()) {
        let g = build(&s);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        let c = g.classify();
        let expected = !c.has_terminal_point && brute_cycle_covering(&g);
        prop_assert_eq!(c.has_cycle_covering, expected, "{}", g.to_text());
        if c.has_terminal_point {
            prop_assert_eq!(c.type_label, GraphType::Type1);
        } else if c.has_cycle_covering {
            prop_assert_eq!(c.type_label, GraphType::Type2);
        }
    }

    #[test]
    fn gn_quotient_is_amplitude_invariant(a in 0.2f64..2.0, w in 0.3f64..3.0, c in 0.01f64..100.0, q in 2.5f64..8.0) {
        let dg = build_mesh(&MetricGraph::star(3), &MeshParams::new(0.05, 15.0)).unwrap();
        let u = GraphFunction::from_fn(&dg, |e, x| a * (-(x / w).powi(2)).exp() * (1.0 + 0.3 * e.0 as f64));
        let (q1, q2) = (gn_quotient(&u, q).unwrap(), gn_quotient(&u.scaled(c), q).unwrap());
        prop_assert!((q1 / q2 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn mass_projection_hits_target(a in -2.0f64..2.0, w in 0.3f64..3.0, mu in 0.01f64..10.0) {
        prop_assume!(a.abs() > 1e-3);
        let dg = build_mesh(&MetricGraph::tadpole(1.5).unwrap(), &MeshParams::new(0.05, 15.0)).unwrap();
        let u = GraphFunction::from_fn(&dg, |_, x| a * (-x / w).exp());
        let v = project_mass(&u, mu).unwrap();
        prop_assert!((v.mass() / mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dilation_slope_is_the_pohozaev_combination(k in 0.1f64..5.0, s in 0.1f64..5.0, pw in 0.1f64..5.0, p in 2.2f64..5.8, alpha in -3.0f64..3.0) {
        let parts = EnergyParts { kinetic: k, sextic: s, power: pw };
        let t = 1e-5;
        let fd = (parts.dilated_energy(p, alpha, 1.0 + t) - parts.dilated_energy(p, alpha, 1.0 - t)) / (2.0 * t);
        let exact = parts.pohozaev_combination(p, alpha);
        prop_assert!((fd - exact).abs() < 1e-7 * (1.0 + exact.abs()));
    }

    #[test]
    fn rearrangement_is_equimeasurable(c1 in 1.0f64..8.0, c2 in 1.0f64..8.0, w in 0.3f64..1.5, b in 0.0f64..1.0) {
        let dg = build_mesh(&MetricGraph::star(3), &MeshParams::new(0.02, 12.0)).unwrap();
        let u = GraphFunction::from_fn(&dg, |e, x| match e.0 {
            0 => (-((x - c1) / w).powi(2)).exp(),
            1 => b * (-((x - c2) / w).powi(2)).exp(),
            _ => 0.0,
        });
        let cfg = RearrangeConfig::default();
        // resampling the exact profile on a uniform grid is second order
        let tol = 0.1 * (0.02 / cfg.refine / w).powi(2);
        for target in [RearrangeTarget::HalfLineDecreasing, RearrangeTarget::LineSymmetric] {
            let r = rearrange(&u, target, &cfg).unwrap();
            prop_assert!((r.mass() / u.mass() - 1.0).abs() < tol, "{target:?}");
            prop_assert!(r.kinetic() <= u.kinetic() * (1.0 + 1e-6));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn execution_mode_does_not_change_results(mu in 0.3f64..2.0, alpha in -1.0f64..1.0, p in 3.0f64..5.0, seed in 0u64..1000) {
        let dg = build_mesh(&MetricGraph::tadpole(2.0).unwrap(), &MeshParams::new(0.1, 20.0)).unwrap();
        let params = ProblemParams::new(p, alpha, mu).unwrap();
        let run = |execution| {
            let cfg = SolverConfig { restarts: 2, seed, max_iters: 1500, execution, ..SolverConfig::default() };
            minimize(&dg, &params, &cfg)
        };
        match (run(Execution::Sequential), run(Execution::Parallel)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.verdict, b.verdict);
                prop_assert_eq!(a.energy.to_bits(), b.energy.to_bits());
                prop_assert_eq!(a.lambda.map(f64::to_bits), b.lambda.map(f64::to_bits));
                prop_assert_eq!(a.profile().map(|u| u.values().to_vec()), b.profile().map(|u| u.values().to_vec()));
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "modes disagree: {:?} vs {:?}", a.map(|o| o.verdict), b.map(|o| o.verdict)),
        }
    }
}
