use proptest::prelude::*;

use preludenet::dataio::{decode_pfm, decode_ppm, encode_pfm, encode_ppm};
use preludenet::metrics::{depth_metrics, raw_depth_metrics, ssim, DepthEvalOptions};
use preludenet::pcnet::error_unit;
use preludenet::selftest::delta_oracle;
use preludenet::tensor::{Graph, Tensor};

fn tensor(shape: &[usize], lo: f32, hi: f32) -> impl Strategy<Value = Tensor<f32>> {
    let shape = shape.to_vec();
    let n = shape.iter().product::<usize>();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(&shape, d).unwrap())
}

fn errors(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let mut g = Graph::new();
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let e = error_unit(&mut g, va, vb).unwrap();
    g.value(e).clone()
}

proptest! {
    #[test]
    fn error_unit_swap_halves(a in tensor(&[2, 3, 4, 5], -2.0, 2.0), b in tensor(&[2, 3, 4, 5], -2.0, 2.0)) {
        let ab = errors(&a, &b);
        let ba = errors(&b, &a);
        prop_assert!(ab.data().iter().all(|v| *v >= 0.0));
        prop_assert_eq!(ab.channels(0, 3).unwrap(), ba.channels(3, 3).unwrap());
        prop_assert_eq!(ab.channels(3, 3).unwrap(), ba.channels(0, 3).unwrap());
        prop_assert!(errors(&a, &a).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn error_halves_recover_difference(a in tensor(&[1, 2, 3, 3], -1.0, 1.0), b in tensor(&[1, 2, 3, 3], -1.0, 1.0)) {
        // pos - neg = a - b, and at most one half is non-zero per element.
        let e = errors(&a, &b);
        let (pos, neg) = (e.channels(0, 2).unwrap(), e.channels(2, 2).unwrap());
        for i in 0..a.numel() {
            let (p, n) = (pos.data()[i], neg.data()[i]);
            prop_assert!(p == 0.0 || n == 0.0);
            prop_assert!((p - n - (a.data()[i] - b.data()[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn ssim_symmetric_and_bounded(a in tensor(&[1, 3, 9, 11], 0.0, 1.0), b in tensor(&[1, 3, 9, 11], 0.0, 1.0)) {
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn median_scaling_ignores_global_scale(
        p in tensor(&[1, 1, 4, 6], 0.5, 60.0),
        g in tensor(&[1, 1, 4, 6], 0.5, 60.0),
        k in 0.05f32..20.0,
    ) {
        let opts = DepthEvalOptions::default();
        let base = depth_metrics(&p, &g, None, &opts).unwrap();
        let scaled = depth_metrics(&p.map(|v| v * k), &g, None, &opts).unwrap();
        for (x, y) in base.values().iter().zip(scaled.values()) {
            prop_assert!((x - y).abs() <= 1e-4 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn deltas_match_integer_oracle(pairs in prop::collection::vec((1u64..500, 1u64..500), 1..200)) {
        let (p, g): (Vec<u64>, Vec<u64>) = pairs.into_iter().unzip();
        let m = raw_depth_metrics(
            &p.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            &g.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        );
        prop_assert_eq!([m.delta1, m.delta2, m.delta3], delta_oracle(&p, &g));
        prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
    }

    #[test]
    fn ppm_round_trip_on_grid_values(bytes in prop::collection::vec(any::<u8>(), 3 * 5 * 7)) {
        let t = Tensor::new(&[1, 3, 5, 7], bytes.iter().map(|&b| b as f32 / 255.0).collect()).unwrap();
        let enc = encode_ppm(&t).unwrap();
        prop_assert_eq!(&enc[enc.len() - bytes.len()..], &{
            // interleaved RGB
            let mut v = Vec::new();
            for p in 0..35 { for c in 0..3 { v.push(bytes[c * 35 + p]); } }
            v
        }[..]);
        prop_assert_eq!(decode_ppm(&enc).unwrap(), t);
    }

    #[test]
    fn pfm_round_trip_bitwise(d in tensor(&[1, 1, 3, 8], 0.0, 80.0)) {
        let back = decode_pfm(&encode_pfm(&d).unwrap()).unwrap();
        prop_assert!(back.data().iter().zip(d.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn perfect_depth_prediction_scores_zero() {
    let g = Tensor::new(&[1, 1, 2, 3], vec![1.0, 2.0, 5.0, 10.0, 20.0, 79.0]).unwrap();
    let m = depth_metrics(&g, &g, None, &DepthEvalOptions::default()).unwrap();
    assert_eq!(m.values(), [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
}
