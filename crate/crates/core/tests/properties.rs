use proptest::prelude::*;

use rmt_core::cf::{EcfAccumulator, TGrid};
use rmt_core::ensembles::{read_samples_csv, write_samples_csv, SampleSet};
use rmt_core::par::CHUNK;
use rmt_core::symcore::{
    conjugate, packed_index, packed_len, rotate2_closed_form, rotation_embed, trace_pairing,
    Rot2State, SymMatrix,
};

fn sym(d: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-10.0f64..10.0, packed_len(d))
        .prop_map(move |v| SymMatrix::from_packed(d, v).unwrap())
}

fn sym_pair() -> impl Strategy<Value = (SymMatrix, SymMatrix)> {
    (1usize..=6).prop_flat_map(|d| (sym(d), sym(d)))
}

fn direct_trace(a: &SymMatrix, b: &SymMatrix) -> f64 {
    let d = a.dim();
    let (fa, fb) = (a.to_full(), b.to_full());
    let mut tr = 0.0;
    for i in 0..d {
        for k in 0..d {
            tr += fa[k * d + i] * fb[k * d + i];
        }
    }
    tr
}

proptest! {
    #[test]
    fn trace_pairing_is_symmetric_and_matches_full_product((a, b) in sym_pair()) {
        let ab = trace_pairing(&a, &b).unwrap();
        prop_assert_eq!(ab, trace_pairing(&b, &a).unwrap());
        let scale = 1.0 + direct_trace(&a, &b).abs();
        prop_assert!((ab - direct_trace(&a, &b)).abs() <= 1e-12 * scale.max(100.0));
    }

    #[test]
    fn packed_index_is_a_bijection(d in 1usize..=8) {
        let mut seen = vec![false; packed_len(d)];
        for j in 0..d {
            for k in j..d {
                let i = packed_index(d, j, k);
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn rotation_preserves_trace_and_determinant(
        a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0, theta in -7.0f64..7.0,
    ) {
        let (ra, rb, rd) = rotate2_closed_form(Rot2State::new(a, b, d, theta));
        prop_assert!(((ra + rd) - (a + d)).abs() <= 1e-12 * 10.0);
        prop_assert!(((ra * rd - rb * rb) - (a * d - b * b)).abs() <= 1e-12 * 100.0);
    }

    #[test]
    fn rotations_compose(
        a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0,
        t1 in -3.2f64..3.2, t2 in -3.2f64..3.2,
    ) {
        let (a1, b1, d1) = rotate2_closed_form(Rot2State::new(a, b, d, t1));
        let two_step = rotate2_closed_form(Rot2State::new(a1, b1, d1, t2));
        let one_step = rotate2_closed_form(Rot2State::new(a, b, d, t1 + t2));
        prop_assert!((two_step.0 - one_step.0).abs() <= 1e-12 * 10.0);
        prop_assert!((two_step.1 - one_step.1).abs() <= 1e-12 * 10.0);
        prop_assert!((two_step.2 - one_step.2).abs() <= 1e-12 * 10.0);
    }

    #[test]
    fn conjugation_preserves_trace_pairing(
        (x, m) in (2usize..=6).prop_flat_map(|d| (sym(d), sym(d))),
        theta in -3.2f64..3.2,
    ) {
        let o = rotation_embed(theta, x.dim()).unwrap();
        let cx = conjugate(&o, &x).unwrap();
        let cm = conjugate(&o, &m).unwrap();
        let lhs = trace_pairing(&cx, &cm).unwrap();
        let rhs = trace_pairing(&x, &m).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn ecf_is_bounded_and_hermitian(xs in prop::collection::vec(-50.0f64..50.0, 2..600)) {
        let grid = TGrid::default();
        let mut acc = EcfAccumulator::new(&grid);
        acc.extend(&xs);
        let e = acc.finish(0.01).unwrap();
        let g = grid.len();
        for i in 0..g {
            prop_assert!(e.modulus(i) <= 1.0 + 1e-14);
            prop_assert_eq!(e.re()[i], e.re()[g - 1 - i]);
            prop_assert_eq!(e.im()[i], -e.im()[g - 1 - i]);
        }
        prop_assert_eq!(e.value(grid.zero_index()).re, 1.0);
    }

    #[test]
    fn split_accumulation_is_bitwise_stable(
        xs in prop::collection::vec(-5.0f64..5.0, 1..(3 * CHUNK)),
        split_blocks in 0usize..3,
    ) {
        let grid = TGrid::uniform(2.0, 9).unwrap();
        let mut whole = EcfAccumulator::new(&grid);
        whole.extend(&xs);
        let cut = (split_blocks * CHUNK).min(xs.len());
        let mut left = EcfAccumulator::new(&grid);
        left.extend(&xs[..cut]);
        let mut right = EcfAccumulator::new(&grid);
        right.extend_par(&xs[cut..]);
        prop_assume!(cut > 0 && cut < xs.len());
        let merged = left.merge(right).unwrap().finish(0.01).unwrap();
        let direct = whole.finish(0.01).unwrap();
        prop_assert_eq!(merged, direct);
    }

    #[test]
    fn csv_round_trip_is_exact(d in 1usize..=4, rows in prop::collection::vec(any::<f64>(), 1..40)) {
        let width = packed_len(d);
        let mut data: Vec<f64> = rows.into_iter().filter(|v| v.is_finite()).collect();
        data.truncate(data.len() / width * width);
        prop_assume!(!data.is_empty());
        let samples = SampleSet::from_packed(d, data).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let back = read_samples_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.packed_data().len(), samples.packed_data().len());
        for (a, b) in back.packed_data().iter().zip(samples.packed_data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
