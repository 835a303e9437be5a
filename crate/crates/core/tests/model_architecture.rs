mod common;

use drunet_core::model::{Checkpoint, DrUnet104, ModelConfig};
use drunet_core::{Error, Shape4, Tensor4};

/// (blocks, reduce width, decoder width) per encoder level, then the bridge.
const TABLE: [(usize, usize, usize); 6] = [
    (2, 16, 32),
    (3, 32, 64),
    (3, 64, 128),
    (5, 128, 256),
    (14, 256, 512),
    (4, 512, 0),
];

fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cin * cout * k * k + cout
}

fn norm(c: usize) -> usize {
    2 * c
}

/// Trainable scalars counted straight from the block recipe.
fn closed_form_parameters(in_channels: usize, n_class: usize, divisor: usize) -> usize {
    let mut total = 0;
    let mut cin = in_channels;
    let mut expands = Vec::new();
    for (level, &(blocks, reduce, _)) in TABLE.iter().enumerate() {
        let r = reduce / divisor;
        let e = 4 * r;
        for b in 0..blocks {
            let strided = level > 0 && b == 0;
            total +=
                norm(cin) + conv(cin, r, 1) + norm(r) + conv(r, r, 3) + norm(r) + conv(r, e, 1);
            if cin != e || strided {
                total += conv(cin, e, 1);
            }
            cin = e;
        }
        expands.push(e);
    }
    for level in (0..5).rev() {
        let w = TABLE[level].2 / divisor;
        total += cin * w * 4 + w;
        let joined = w + expands[level];
        total += norm(joined) + conv(joined, w, 3) + norm(w) + conv(w, w, 3) + conv(joined, w, 1);
        cin = w;
    }
    total + conv(cin, n_class, 1)
}

fn small(seed: u64) -> DrUnet104<f32> {
    DrUnet104::new(ModelConfig {
        width_divisor: 8,
        seed,
        ..ModelConfig::default()
    })
    .unwrap()
}

#[test]
fn published_ledger() {
    let m = DrUnet104::<f32>::build(4, 4, 0.2, 0).unwrap();
    let ledger = m.layer_ledger();
    assert_eq!(
        (ledger.encoder_bridge, ledger.decoder, ledger.head),
        (93, 10, 1)
    );
    assert_eq!(m.count_conv_layers(), 104);
    assert_eq!(m.dropout_sites(), 10);
    assert_eq!(m.skip_connections(), 5);
    let counts: Vec<_> = m.encoder().iter().map(|l| l.blocks.len()).collect();
    assert_eq!(counts, [2, 3, 3, 5, 14]);
    assert_eq!(m.bridge().len(), 4);
    let widths: Vec<_> = m
        .encoder()
        .iter()
        .map(|l| l.blocks.last().unwrap().out_channels())
        .chain([m.bridge().last().unwrap().out_channels()])
        .collect();
    assert_eq!(widths, [64, 128, 256, 512, 1024, 2048]);
    assert_eq!(m.parameter_count(), closed_form_parameters(4, 4, 1));
}

#[test]
fn parameter_counts_match_the_block_recipe() {
    for divisor in [1, 2, 4, 8, 16] {
        let m = DrUnet104::<f32>::new(ModelConfig {
            width_divisor: divisor,
            ..ModelConfig::default()
        })
        .unwrap();
        assert_eq!(
            m.parameter_count(),
            closed_form_parameters(4, 4, divisor),
            "divisor {divisor}"
        );
        assert_eq!(m.count_conv_layers(), 104);
    }
    // frozen after agreeing with the recipe above
    assert_eq!(closed_form_parameters(4, 4, 1), 55_819_660);
    assert_eq!(closed_form_parameters(4, 4, 4), 3_513_292);
}

#[test]
fn class_count_only_changes_the_head() {
    let a = small(0);
    let b = DrUnet104::<f32>::new(ModelConfig {
        n_class: 7,
        ..a.config().clone()
    })
    .unwrap();
    assert_eq!(b.parameter_count() - a.parameter_count(), 3 * (4 + 1));
    assert_eq!(a.layer_ledger(), b.layer_ledger());
    let (out, _) = b.trace_shapes(Shape4::new(2, 4, 64, 64)).unwrap();
    assert_eq!(out, Shape4::new(2, 7, 64, 64));
}

fn spatial_trace(extent: usize) -> Vec<(String, usize)> {
    let m = DrUnet104::<f32>::build(4, 4, 0.2, 0).unwrap();
    let (out, trace) = m.trace_shapes(Shape4::new(1, 4, extent, extent)).unwrap();
    assert_eq!(out, Shape4::new(1, 4, extent, extent));
    trace
        .into_iter()
        .map(|(k, s)| {
            assert_eq!(s.h, s.w);
            (k, s.h)
        })
        .collect()
}

#[test]
fn skip_extents_for_several_input_sizes() {
    for (extent, expected) in [
        (64, [64, 32, 16, 8, 4, 2]),
        (96, [96, 48, 24, 12, 6, 3]),
        (240, [240, 120, 60, 30, 15, 8]),
    ] {
        let trace = spatial_trace(extent);
        let encoder: Vec<_> = trace.iter().take(6).map(|(_, e)| *e).collect();
        assert_eq!(encoder, expected, "input {extent}");
        assert_eq!(trace[5].0, "bridge");
        // every decoder level returns to its skip's extent
        let decoders: Vec<_> = trace
            .iter()
            .filter(|(k, _)| k.starts_with("decoder"))
            .map(|(_, e)| *e)
            .collect();
        let mut skips = expected[..5].to_vec();
        skips.reverse();
        assert_eq!(decoders, skips);
    }
}

#[test]
fn concat_channels_along_the_decoder() {
    let m = DrUnet104::<f32>::build(4, 4, 0.2, 0).unwrap();
    let (_, trace) = m.trace_shapes(Shape4::new(1, 4, 240, 240)).unwrap();
    let concat: Vec<_> = trace
        .iter()
        .filter(|(k, _)| k.starts_with("concat"))
        .map(|(k, s)| (k.as_str(), s.c))
        .collect();
    assert_eq!(
        concat,
        [
            ("concat 5", 512 + 1024),
            ("concat 4", 256 + 512),
            ("concat 3", 128 + 256),
            ("concat 2", 64 + 128),
            ("concat 1", 32 + 64)
        ]
    );
}

#[test]
fn rejects_bad_inputs() {
    let m = small(0);
    assert!(matches!(
        m.forward_infer(&Tensor4::zeros([1, 3, 64, 64])),
        Err(Error::Shape(_))
    ));
    assert!(matches!(
        m.forward_infer(&Tensor4::zeros([1, 4, 16, 16])),
        Err(Error::Shape(_))
    ));
}

#[test]
fn he_init_spread() {
    let m = DrUnet104::<f32>::build(4, 4, 0.2, 1).unwrap();
    for name in [
        "enc5.block3.spatial.weight",
        "bridge.block1.reduce.weight",
        "dec1.block.conv_in.weight",
    ] {
        let id = m.params().id(name).unwrap_or_else(|| panic!("{name}"));
        let w = m.params().get(id);
        let [_, cin, k, _] = w.shape().dims();
        let n = w.len() as f64;
        let mean = w.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let sd = (w
            .data()
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let expected = (2.0 / (cin * k * k) as f64).sqrt();
        assert!(
            (sd / expected - 1.0).abs() < 0.05,
            "{name}: sd {sd}, expected {expected}"
        );
    }
    let bias = m.params().get(m.params().id("head.bias").unwrap());
    assert!(bias.data().iter().all(|&v| v == 0.0));
}

#[test]
fn initialization_is_seeded() {
    let a = small(3);
    let b = small(3);
    let c = small(4);
    let same = a
        .params()
        .iter()
        .zip(b.params().iter())
        .all(|(x, y)| x.2 == y.2);
    assert!(same);
    let differs = a
        .params()
        .iter()
        .zip(c.params().iter())
        .any(|(x, y)| x.2 != y.2);
    assert!(differs);
}

#[test]
fn inference_is_deterministic() {
    let m = small(2);
    let x = common::random_tensor::<f32>([2, 4, 48, 48], &mut common::rng(8));
    let a = m.forward_infer(&x).unwrap();
    let b = m.forward_infer(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), Shape4::new(2, 4, 48, 48));
    // batch items are independent at inference
    let first = Tensor4::from_vec([1, 4, 48, 48], x.item(0).to_vec()).unwrap();
    let single = m.forward_infer(&first).unwrap();
    assert_eq!(single.data(), a.item(0));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut m = small(5);
    // move running statistics away from their defaults
    let x = common::random_tensor::<f32>([2, 4, 32, 32], &mut common::rng(1));
    m.forward(&x, drunet_core::Mode::Train, &mut common::rng(2))
        .unwrap();
    let mut bytes = Vec::new();
    Checkpoint::from_model(&m, None)
        .write_to(&mut bytes)
        .unwrap();
    let ck = Checkpoint::read_from(&mut bytes.as_slice(), "mem".as_ref()).unwrap();
    let (restored, opt) = ck.restore::<f32>().unwrap();
    assert!(opt.is_none());
    assert_eq!(restored.config().width_divisor, 8);
    for ((_, na, a), (_, nb, b)) in m.params().iter().zip(restored.params().iter()) {
        assert_eq!(na, nb);
        assert_eq!(a, b);
    }
    assert_eq!(m.running_stats(), restored.running_stats());
    assert_eq!(
        m.forward_infer(&x).unwrap(),
        restored.forward_infer(&x).unwrap()
    );
    let mut again = Vec::new();
    ck.write_to(&mut again).unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn checkpoint_rejects_foreign_or_truncated_files() {
    let mut bytes = Vec::new();
    Checkpoint::from_model(&small(0), None)
        .write_to(&mut bytes)
        .unwrap();
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    let err = Checkpoint::read_from(&mut wrong.as_slice(), "x.ckpt".as_ref()).unwrap_err();
    assert!(err.to_string().contains("magic"), "{err}");
    let cut = &bytes[..bytes.len() / 2];
    assert!(Checkpoint::read_from(&mut &cut[..], "x.ckpt".as_ref()).is_err());
}

#[test]
fn dropout_rate_does_not_change_the_architecture() {
    let models: Vec<_> = [0.0, 0.2, 0.5]
        .iter()
        .map(|&rate| DrUnet104::<f32>::build(4, 4, rate, 0).unwrap())
        .collect();
    for m in &models[1..] {
        assert_eq!(m.parameter_count(), models[0].parameter_count());
        assert_eq!(m.layer_ledger(), models[0].layer_ledger());
        assert_eq!(m.dropout_sites(), models[0].dropout_sites());
    }
}
