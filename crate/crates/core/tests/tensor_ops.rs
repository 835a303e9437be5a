mod common;

use common::{naive_conv2d, naive_transpose, random_tensor, rng};
use drunet_core::ops::{
    argmax_channels, batch_norm, batch_stats, concat_channels, conv2d, conv2d_backward,
    conv2d_transpose, dropout_mask, relu, softmax_channels, BatchNormParams, Padding,
};
use drunet_core::{Mode, Shape4, Tape, Tensor4};
use proptest::prelude::*;

fn max_diff(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn random_3x3_conv_matches_direct_summation() {
    let mut r = rng(1);
    let x = random_tensor([1, 2, 5, 5], &mut r);
    let w = random_tensor([3, 2, 3, 3], &mut r);
    let b = vec![0.1, -0.2, 0.3];
    let fast = conv2d(&x, &w, &b, 1, Padding::SameCeil).unwrap();
    assert!(max_diff(&fast, &naive_conv2d(&x, &w, &b, 1, true)) < 1e-5);
}

#[test]
fn f32_conv_matches_direct_summation() {
    let mut r = rng(2);
    let x: Tensor4<f64> = random_tensor([2, 3, 5, 5], &mut r);
    let w: Tensor4<f64> = random_tensor([4, 3, 3, 3], &mut r);
    let b = vec![0.0; 4];
    let fast = conv2d(
        &x.cast::<f32>(),
        &w.cast::<f32>(),
        &[0.0f32; 4],
        2,
        Padding::SameCeil,
    )
    .unwrap();
    assert!(max_diff(&fast.cast(), &naive_conv2d(&x, &w, &b, 2, true)) < 1e-5);
}

#[test]
fn stride_two_halves_240_with_ceiling() {
    let mut extent = 240;
    let mut trace = vec![extent];
    for _ in 0..5 {
        let x = Tensor4::<f32>::zeros([1, 1, extent, extent]);
        let w = Tensor4::<f32>::zeros([1, 1, 3, 3]);
        extent = conv2d(&x, &w, &[0.0], 2, Padding::SameCeil)
            .unwrap()
            .shape()
            .h;
        trace.push(extent);
    }
    assert_eq!(trace, vec![240, 120, 60, 30, 15, 8]);
}

#[test]
fn channel_mismatch_names_both_shapes() {
    let x = Tensor4::<f32>::zeros([1, 4, 8, 8]);
    let w = Tensor4::<f32>::zeros([2, 3, 3, 3]);
    let msg = conv2d(&x, &w, &[0.0; 2], 1, Padding::SameCeil)
        .unwrap_err()
        .to_string();
    assert!(
        msg.contains("(1, 4, 8, 8)") && msg.contains("(2, 3, 3, 3)"),
        "{msg}"
    );
}

#[test]
fn transpose_upsamples_8_to_cropped_15() {
    let x = Tensor4::<f32>::zeros([1, 512, 8, 8]);
    let w = Tensor4::<f32>::zeros([512, 512, 2, 2]);
    let y = conv2d_transpose(&x, &w, &vec![0.0; 512], 2, (15, 15)).unwrap();
    assert_eq!(y.shape(), Shape4::new(1, 512, 15, 15));
    assert!(conv2d_transpose(&x, &w, &vec![0.0; 512], 2, (17, 17)).is_err());
}

#[test]
fn transpose_matches_scatter_oracle() {
    let mut r = rng(3);
    let x = random_tensor([2, 3, 4, 4], &mut r);
    let w = random_tensor([3, 2, 2, 2], &mut r);
    let b = vec![0.5, -0.5];
    for target in [(8, 8), (7, 7), (7, 8)] {
        let fast = conv2d_transpose(&x, &w, &b, 2, target).unwrap();
        assert!(max_diff(&fast, &naive_transpose(&x, &w, &b, target)) < 1e-12);
    }
}

#[test]
fn transpose_equals_conv_input_gradient() {
    // A stride-2 2x2 "valid" conv from (2h, 2w) to (h, w) has the
    // transposed convolution as its input adjoint.
    let mut r = rng(4);
    let g = random_tensor([1, 3, 4, 4], &mut r);
    let w_conv: Tensor4<f64> = random_tensor([3, 2, 2, 2], &mut r);
    let x = Tensor4::<f64>::zeros([1, 2, 8, 8]);
    let grads = conv2d_backward(&x, &w_conv, 2, Padding::Valid, &g).unwrap();
    // conv weight (out=3, in=2) is the transpose weight (in=3, out=2).
    let up = conv2d_transpose(&g, &w_conv, &[0.0, 0.0], 2, (8, 8)).unwrap();
    assert!(max_diff(&up, &grads.input) < 1e-12);
}

#[test]
fn batch_norm_train_normalizes_each_channel() {
    let mut r = rng(5);
    let x: Tensor4<f64> = Tensor4::from_fn([4, 3, 6, 6], |[_, c, _, _]| {
        use rand::Rng;
        3.0 * c as f64 + (c + 1) as f64 * r.random_range(-1.0..1.0)
    });
    let mut p = BatchNormParams::<f64>::new(3);
    let y = batch_norm(&x, &mut p, Mode::Train).unwrap();
    let s = batch_stats(&x);
    // normalized variance is var / (var + eps) with eps = 1e-3
    for c in 0..3 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|n| (0..36).map(move |i| (n, i)))
            .map(|(n, i)| y.get(n, c, i / 6, i % 6))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-5, "channel {c} mean {mean}");
        let expected = s.var[c] / (s.var[c] + 1e-3);
        assert!(
            (var - expected).abs() < 1e-9,
            "channel {c} variance {var} vs {expected}"
        );
    }
    for c in 0..3 {
        assert!((p.running_mean[c] - 0.01 * s.mean[c]).abs() < 1e-12);
        assert!((p.running_var[c] - (0.99 + 0.01 * s.var[c])).abs() < 1e-12);
    }
}

#[test]
fn constant_channel_normalizes_to_beta() {
    let x = Tensor4::<f64>::full([2, 1, 3, 3], 4.0);
    let mut p = BatchNormParams::<f64>::new(1);
    p.beta = vec![0.25];
    let y = batch_norm(&x, &mut p, Mode::Train).unwrap();
    assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
}

#[test]
fn dropout_is_deterministic_and_inert_when_disabled() {
    let shape = Shape4::new(2, 3, 4, 4);
    let a: Tensor4<f32> = dropout_mask(shape, 0.2, &mut rng(9)).unwrap();
    let b: Tensor4<f32> = dropout_mask(shape, 0.2, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    let x = random_tensor::<f32>([2, 3, 4, 4], &mut rng(1));
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let y = tape.dropout(v, 0.0, &mut rng(1)).unwrap();
    assert_eq!(tape.value(y), &x);
    assert!(dropout_mask::<f32, _>(shape, 1.0, &mut rng(0)).is_err());
}

#[test]
fn dropout_keeps_the_expected_fraction_and_scales() {
    let m: Tensor4<f64> = dropout_mask(Shape4::new(1, 1, 200, 200), 0.2, &mut rng(3)).unwrap();
    let kept = m.data().iter().filter(|&&v| v != 0.0).count() as f64 / m.len() as f64;
    assert!((kept - 0.8).abs() < 0.01, "{kept}");
    assert!(m
        .data()
        .iter()
        .all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
}

#[test]
fn argmax_breaks_ties_toward_the_lowest_class() {
    let x = Tensor4::<f32>::zeros([1, 4, 2, 2]);
    assert!(argmax_channels(&x).data.iter().all(|&c| c == 0));
}

fn small_shape() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..=2, 1usize..=3, 1usize..=5, 1usize..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_oracle_up_to_2x3x5x5(
        (n, c, h, w) in small_shape(),
        oc in 1usize..=3,
        k in prop::sample::select(vec![1usize, 2, 3]),
        stride in 1usize..=2,
        same in any::<bool>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(same || (h >= k && w >= k));
        let mut r = rng(seed);
        let x = random_tensor([n, c, h, w], &mut r);
        let wt = random_tensor([oc, c, k, k], &mut r);
        let b: Vec<f64> = (0..oc).map(|i| i as f64 * 0.1).collect();
        let padding = if same { Padding::SameCeil } else { Padding::Valid };
        let fast = conv2d(&x, &wt, &b, stride, padding).unwrap();
        let slow = naive_conv2d(&x, &wt, &b, stride, same);
        prop_assert!(max_diff(&fast, &slow) < 1e-5);
        if same {
            prop_assert_eq!((fast.shape().h, fast.shape().w), (h.div_ceil(stride), w.div_ceil(stride)));
        }
    }

    #[test]
    fn softmax_is_a_distribution((n, c, h, w) in small_shape(), seed in any::<u64>(), scale in 0.1f64..50.0) {
        let x = random_tensor::<f64>([n, c, h, w], &mut rng(seed)).map(|v| v * scale);
        let p = softmax_channels(&x);
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let s: f64 = (0..c).map(|k| p.get(b, k, y, xx)).sum();
                    prop_assert!((s - 1.0).abs() < 1e-6);
                    prop_assert!((0..c).all(|k| p.get(b, k, y, xx) >= 0.0));
                }
            }
        }
    }

    #[test]
    fn concat_and_relu_shapes((n, c, h, w) in small_shape(), c2 in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_tensor::<f32>([n, c, h, w], &mut r);
        let b = random_tensor::<f32>([n, c2, h, w], &mut r);
        let cat = concat_channels(&a, &b).unwrap();
        prop_assert_eq!(cat.shape(), Shape4::new(n, c + c2, h, w));
        prop_assert_eq!(cat.get(n - 1, c, h - 1, w - 1), b.get(n - 1, 0, h - 1, w - 1));
        let y = relu(&a);
        prop_assert!(y.data().iter().zip(a.data()).all(|(&o, &i)| o == i.max(0.0)));
    }

    #[test]
    fn transpose_output_is_the_target((h, w) in (1usize..=5, 1usize..=5), seed in any::<u64>(), crop_h in any::<bool>(), crop_w in any::<bool>()) {
        let mut r = rng(seed);
        let x = random_tensor::<f64>([1, 2, h, w], &mut r);
        let wt = random_tensor::<f64>([2, 3, 2, 2], &mut r);
        let target = (2 * h - usize::from(crop_h && h > 1), 2 * w - usize::from(crop_w && w > 1));
        let y = conv2d_transpose(&x, &wt, &[0.0; 3], 2, target).unwrap();
        prop_assert_eq!((y.shape().h, y.shape().w), target);
        prop_assert!(max_diff(&y, &naive_transpose(&x, &wt, &[0.0; 3], target)) < 1e-12);
    }
}
