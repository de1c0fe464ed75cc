//! Property tests for structural invariants of the discretisation.

use std::collections::HashMap;
use std::sync::Arc;

use graphflow::experiment::to_sorted_json;
use graphflow::expr::FieldExpr;
use graphflow::flow::{Flow, FlowParams};
use graphflow::functionals::{
    area, set_perimeter, subgraph_perimeter, vertical_rearrangement, ColumnSet, DiscreteSet, Window,
};
use graphflow::grid::{GridDomain, GridField, RegionSpec};
use graphflow::manifold::MetricChart;
use proptest::prelude::*;

fn square(h: f64) -> Arc<GridDomain> {
    GridDomain::build(
        MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
        RegionSpec::whole_box(),
        h,
    )
    .unwrap()
}

fn indicator(len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_stays_within_data_range(
        a in -1.0f64..1.0, b in -1.0f64..1.0,
        amp in 0.0f64..1.0, f1 in 1.0f64..8.0, f2 in 1.0f64..8.0,
        eps in 0.0f64..0.2,
    ) {
        let d = square(0.125);
        let phi = FieldExpr::Linear { coeffs: vec![a, b], offset: 0.0 }.sample(&d).unwrap();
        let u0 = FieldExpr::Wave { amplitude: amp, freq: vec![f1, f2], phase: 0.0 }.sample(&d).unwrap();
        let lo = phi.min().min(u0.min());
        let hi = phi.max().max(u0.max());
        let params = FlowParams { eps, t_end: 1e6, ..Default::default() };
        let mut flow = Flow::new(params, &phi, &u0).unwrap();
        let mut state = flow.initial_state();
        for _ in 0..40 {
            flow.step(&mut state).unwrap();
        }
        prop_assert!(state.u.min() >= lo - 1e-12 && state.u.max() <= hi + 1e-12);
    }

    #[test]
    fn complement_has_equal_perimeter(bits in indicator(81)) {
        let d = square(0.125);
        let e = DiscreteSet::from_indicator(&d, bits).unwrap();
        let w = Window::full(&d);
        let p = set_perimeter(&e, &w).unwrap();
        prop_assert_eq!(p, set_perimeter(&e.complement(), &w).unwrap());
    }

    #[test]
    fn perimeter_is_submodular(a in indicator(81), b in indicator(81)) {
        let d = square(0.125);
        let (a, b) = (
            DiscreteSet::from_indicator(&d, a).unwrap(),
            DiscreteSet::from_indicator(&d, b).unwrap(),
        );
        let w = Window::full(&d);
        let per = |s: &DiscreteSet| set_perimeter(s, &w).unwrap();
        prop_assert!(per(&a.union(&b)) + per(&a.intersection(&b)) <= per(&a) + per(&b) + 1e-12);
    }

    #[test]
    fn rearranged_subgraph_rounds_up_to_the_lattice(
        values in prop::collection::vec(-1.5f64..1.5, 81),
        k_t in 2u32..6,
    ) {
        let d = square(0.125);
        let u = GridField::from_values(&d, values).unwrap();
        let h_t = 1.0 / f64::from(1 << k_t);
        let w = vertical_rearrangement(&ColumnSet::subgraph(&u, 2.0, h_t).unwrap()).unwrap();
        for p in 0..d.len() {
            let gap = w.get(p) - u.get(p);
            prop_assert!((-1e-12..h_t + 1e-12).contains(&gap), "gap {gap} at node {p}");
        }
    }

    #[test]
    fn subgraph_perimeter_of_a_plane_equals_its_area(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        // The lattice subgraph never undercuts the graph area and stays close.
        let d = square(0.0625);
        let u = FieldExpr::Linear { coeffs: vec![a, b], offset: 0.0 }.sample(&d).unwrap();
        let exact = area(&u).value;
        let p = subgraph_perimeter(&u, 4.0, 0.0625).unwrap();
        prop_assert!(p >= exact * (1.0 - 1e-9));
        prop_assert!((p - exact) / exact < 0.15, "{p} vs {exact}");
    }

    #[test]
    fn sorted_json_orders_keys(map in prop::collection::hash_map("[a-z]{1,4}", any::<i32>(), 0..12)) {
        let nested: HashMap<String, HashMap<String, i32>> =
            [("outer".to_string(), map.clone())].into_iter().collect();
        let text = to_sorted_json(&nested).unwrap();
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        let positions: Vec<usize> =
            keys.iter().map(|k| text.find(&format!("\"{k}\":")).unwrap()).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(text.ends_with('\n'));
    }
}
