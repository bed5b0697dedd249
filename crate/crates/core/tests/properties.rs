//! Property tests over the numeric core.

use fibinetpp_core::bilinear::{bilinear_hadamard, bilinear_inner};
use fibinetpp_core::data::{serialize_instance, IngestReader};
use fibinetpp_core::embedding::{encode_batch, minmax_scale, EmbeddingTable, RawInstance};
use fibinetpp_core::model::{Architecture, GraphProbe, HyperParams, ModelGraph};
use fibinetpp_core::norm::{layer_norm, LayerNormState};
use fibinetpp_core::senet::squeeze;
use fibinetpp_core::tensor::Tensor;
use fibinetpp_core::train::auc;
use fibinetpp_core::{rng, BilinearFieldType, FeatureSchema, Layer, Vocabulary};
use proptest::prelude::*;

fn finite_vec(len: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-bound..bound, len)
}

proptest! {
    #[test]
    fn matmul_identity_left_and_right(data in finite_vec(9, 10.0)) {
        let a = Tensor::new(3, 3, data);
        let i: Tensor<f64> = Tensor::identity(3);
        prop_assert_eq!(i.matmul(&a).unwrap(), a.clone());
        prop_assert_eq!(a.matmul(&i).unwrap(), a);
    }

    #[test]
    fn inner_equals_summed_hadamard(
        vi in finite_vec(4, 3.0),
        vj in finite_vec(4, 3.0),
        w in finite_vec(16, 3.0),
    ) {
        let vi = Tensor::row(&vi);
        let vj = Tensor::row(&vj);
        let w = Tensor::new(4, 4, w);
        let scalar = bilinear_inner(&vi, &vj, &w).unwrap();
        let summed = bilinear_hadamard(&vi, &vj, &w).unwrap().sum();
        let rel = (scalar - summed).abs() / f64::max(1e-12, scalar.abs() + summed.abs());
        prop_assert!(rel <= 1e-12);
    }

    #[test]
    fn minmax_scale_monotone(a in -100.0..100.0f64, b in -100.0..100.0f64) {
        let (lo, hi) = (2.0, 6.0);
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(minmax_scale(x, lo, hi).unwrap() <= minmax_scale(y, lo, hi).unwrap());
    }

    #[test]
    fn auc_invariant_under_increasing_transform(
        raw_scores in finite_vec(30, 1.0),
        labels in proptest::collection::vec(0u8..2, 30),
    ) {
        prop_assume!(labels.iter().any(|&y| y == 0) && labels.iter().any(|&y| y == 1));
        // Snap scores to a grid so ties stay ties under the transforms
        // (values a hair apart could otherwise collide after rounding).
        let scores: Vec<f64> = raw_scores.iter().map(|s| (s * 32.0).round() / 32.0).collect();
        let base = auc(&labels, &scores).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 2.5 * s + 7.0).collect();
        prop_assert!((auc(&labels, &exp).unwrap() - base).abs() < 1e-12);
        prop_assert!((auc(&labels, &affine).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn squeeze_shape_and_group_order_invariance(values in finite_vec(8, 5.0), swap in 0usize..4) {
        // f=1, d=8, g=2: swapping two slots inside a group leaves the max
        // untouched and the mean equal up to summation-order rounding.
        let v = Tensor::row(&values);
        let z = squeeze(&v, 1, 8, 2).unwrap();
        prop_assert_eq!(z.len(), 4);
        prop_assert!(z.data()[0] >= z.data()[1]);
        prop_assert!(z.data()[2] >= z.data()[3]);

        let mut permuted = values.clone();
        let a = swap % 3;
        permuted.swap(a, a + 1); // stays within the first group of 4
        let zp = squeeze(&Tensor::row(&permuted), 1, 8, 2).unwrap();
        prop_assert_eq!(z.data()[0], zp.data()[0]);
        prop_assert_eq!(z.data()[2], zp.data()[2]);
        prop_assert!((z.data()[1] - zp.data()[1]).abs() <= 1e-12);
        prop_assert!((z.data()[3] - zp.data()[3]).abs() <= 1e-12);
    }

    #[test]
    fn layer_norm_shift_invariance(values in finite_vec(6, 5.0), shift in -50.0..50.0f64) {
        let state: LayerNormState = LayerNormState::new("ln", 6);
        let a = layer_norm(&Tensor::row(&values), &state).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let b = layer_norm(&Tensor::row(&shifted), &state).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn layer_norm_moments(values in finite_vec(8, 10.0)) {
        // The output variance is var/(var + 1e-5); landing within 1e-6 of 1
        // needs the input variance far above epsilon (>= 10).
        let mean_in: f64 = values.iter().sum::<f64>() / 8.0;
        let var_in: f64 = values.iter().map(|v| (v - mean_in).powi(2)).sum::<f64>() / 8.0;
        prop_assume!(var_in >= 12.0);
        let state: LayerNormState = LayerNormState::new("ln", 8);
        let out = layer_norm(&Tensor::row(&values), &state).unwrap();
        let mean: f64 = out.data().iter().sum::<f64>() / 8.0;
        let var: f64 = out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((1.0 - 1e-6..=1.0).contains(&var));
    }

    #[test]
    fn tsv_round_trip_is_lossless(
        labels in proptest::collection::vec(0u8..2, 1..20),
        tokens in proptest::collection::vec("[a-z]{0,6}", 1..20),
    ) {
        let schema = FeatureSchema::with_layout(1, 1);
        let rows: Vec<RawInstance> = labels
            .iter()
            .zip(&tokens)
            .map(|(&y, t)| {
                let num = if t.len() % 3 == 0 { None } else { Some(format!("{}.5", t.len())) };
                let cat = if t.is_empty() { None } else { Some(t.clone()) };
                RawInstance::new(y, vec![num, cat])
            })
            .collect();
        let text: String = rows.iter().map(|r| serialize_instance(r) + "\n").collect();
        let reader = IngestReader::new(std::io::BufReader::new(text.as_bytes()), &schema, 0.001);
        let back: Vec<RawInstance> = reader.map(|r| r.unwrap()).collect();
        prop_assert_eq!(back, rows);
    }
}

#[test]
fn embedding_width_is_fields_times_dim() {
    let mut schema = FeatureSchema::with_layout(2, 3);
    let vocab = Vocabulary::synthetic(&mut schema, 5);
    for d in [1usize, 3, 8] {
        let mut rng = rng::seeded(d as u64);
        let table: EmbeddingTable<f64> = EmbeddingTable::new(&schema, d, &mut rng);
        let rows = vec![RawInstance::new(
            1,
            vec![
                Some("0.25".into()),
                None,
                Some("t1".into()),
                Some("t4".into()),
                None,
            ],
        )];
        let batch = encode_batch(&rows, &schema, &vocab).unwrap();
        assert_eq!(table.embed_instance(&batch[0]).unwrap().len(), 5 * d);
    }
}

#[test]
fn forward_is_pure() {
    let mut schema = FeatureSchema::with_layout(2, 2);
    let vocab = Vocabulary::synthetic(&mut schema, 4);
    let hyper = HyperParams {
        embedding_dim: 4,
        mlp_widths: vec![8],
        compression_size: 3,
        groups: 2,
        reduction: 3,
        bilinear_type: BilinearFieldType::FieldInteraction,
    };
    let graph = ModelGraph::<f64>::build(
        Architecture::FiBiNetPlusPlus,
        schema.clone(),
        vocab,
        hyper,
        3,
    )
    .unwrap();
    let batch = fibinetpp_core::embedding::random_batch(&schema, 6, &mut rng::seeded(8));
    let mut probe = GraphProbe::new(graph, batch);
    let a = probe.forward(&Tensor::zeros(1, 1)).unwrap();
    let b = probe.forward(&Tensor::zeros(1, 1)).unwrap();
    assert_eq!(a, b);
}
