mod common;

use ksgn::encoders::{pointnet_encode, PointNetConfig};
use ksgn::numeric::{softmax_rows, ParamStore, Tape, Tensor};
use ksgn::scene::{contextual_vector, Segment};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-30.0f64..30.0, rows * cols).prop_map(move |v| Tensor::new(vec![rows, cols], v).unwrap())
}

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..max)
}

fn encoder() -> (PointNetConfig, ParamStore) {
    let cfg = PointNetConfig { widths: [3, 8, 8, 6] };
    let mut store = ParamStore::new();
    cfg.init(&mut store, &mut ChaCha8Rng::seed_from_u64(4));
    (cfg, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(x in (1usize..6, 1usize..9).prop_flat_map(|(r, c)| matrix(r, c))) {
        let s = softmax_rows(&x);
        for i in 0..s.rows() {
            let sum: f64 = s.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(s.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn tape_chain_matches_plain_arithmetic(a in matrix(3, 4), b in matrix(4, 2), ops in prop::collection::vec(0u8..4, 1..6)) {
        let mut tape = Tape::new();
        let va = tape.constant(a.clone());
        let vb = tape.constant(b.clone());
        let mut v = tape.matmul(va, vb).unwrap();
        let mut expect = a.matmul(&b).unwrap();
        for op in ops {
            let (nv, f): (_, fn(f64) -> f64) = match op {
                0 => (tape.relu(v), |x| x.max(0.0)),
                1 => (tape.tanh(v), f64::tanh),
                2 => (tape.sigmoid(v), |x| 1.0 / (1.0 + (-x).exp())),
                _ => (tape.scale(v, 0.5), |x| 0.5 * x),
            };
            v = nv;
            expect = expect.map(f);
        }
        for (x, y) in tape.value(v).values().iter().zip(expect.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn context_vector_matches_oracle_and_translates(pts in points(40), shift in prop::array::uniform3(-3.0f64..3.0)) {
        let seg = Segment::new(0, pts.clone(), None).unwrap();
        let got = contextual_vector(&seg).unwrap().to_array();
        let want = common::context_oracle(&pts);
        for k in 0..11 {
            prop_assert!((got[k] - want[k]).abs() < 1e-9, "entry {k}: {} vs {}", got[k], want[k]);
        }
        let moved: Vec<[f64; 3]> = pts.iter().map(|p| [0, 1, 2].map(|a| p[a] + shift[a])).collect();
        let m = contextual_vector(&Segment::new(0, moved, None).unwrap()).unwrap().to_array();
        for a in 0..3 {
            prop_assert!((m[a] - got[a] - shift[a]).abs() < 1e-9);
        }
        for k in 3..11 {
            prop_assert!((m[k] - got[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn pointnet_ignores_point_order(pts in points(30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let (cfg, store) = encoder();
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(pointnet_encode(&pts, &cfg, &store).unwrap(), pointnet_encode(&shuffled, &cfg, &store).unwrap());
    }
}
