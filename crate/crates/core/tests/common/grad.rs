//! Central finite-difference checks of tape gradients.

use drunet_core::ops::{dropout_mask, ClassMap, Padding};
use drunet_core::{Real, Result, Tape, Tensor4, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::rng;

pub type Build<T> = Box<dyn Fn(&mut Tape<T>, &[Var]) -> Result<Var>>;

/// A primitive under test: its inputs and how to turn them into a scalar.
pub struct Case<T: Real> {
    pub name: &'static str,
    pub inputs: Vec<Tensor4<T>>,
    pub build: Build<T>,
}

/// Step and tolerance for the precision `T`.
pub fn settings<T: Real>() -> (f64, f64) {
    if std::mem::size_of::<T>() == 4 {
        (1e-2, 1e-2)
    } else {
        (1e-6, 1e-5)
    }
}

fn eval<T: Real>(case: &Case<T>, inputs: &[Tensor4<T>]) -> (f64, Vec<Tensor4<T>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = (case.build)(&mut tape, &vars).expect("case builds");
    let value = tape.value(loss).to_scalar().unwrap().to_f64_lossy();
    let grads = tape.backward(loss).unwrap();
    let g = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .wrt(v)
                .cloned()
                .unwrap_or_else(|| Tensor4::zeros(t.shape()))
        })
        .collect();
    (value, g)
}

/// Largest per-input relative error `|g - fd| / max(|g|, |fd|)` in the
/// Euclidean norm, over all inputs of `case`.
pub fn max_relative_error<T: Real>(case: &Case<T>) -> f64 {
    let (h, _) = settings::<T>();
    let (_, analytic) = eval(case, &case.inputs);
    let mut worst: f64 = 0.0;
    for (i, input) in case.inputs.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for k in 0..input.len() {
            let mut plus = case.inputs.clone();
            let mut minus = case.inputs.clone();
            let x = input.data()[k].to_f64_lossy();
            plus[i].data_mut()[k] = T::from_f64_lossy(x + h);
            minus[i].data_mut()[k] = T::from_f64_lossy(x - h);
            let fp = eval(case, &plus).0;
            let fm = eval(case, &minus).0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i].data()[k].to_f64_lossy();
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        if scale > 1e-12 {
            worst = worst.max(diff2.sqrt() / scale);
        }
    }
    worst
}

fn uniform<T: Real>(shape: [usize; 4], r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor4<T> {
    Tensor4::from_fn(shape, |_| T::from_f64_lossy(r.random_range(lo..hi)))
}

/// Values in `[-1, 1]` kept at least `gap` away from zero.
fn away_from_zero<T: Real>(shape: [usize; 4], r: &mut ChaCha8Rng, gap: f64) -> Tensor4<T> {
    Tensor4::from_fn(shape, |_| {
        let m = r.random_range(gap..1.0);
        T::from_f64_lossy(if r.random_bool(0.5) { m } else { -m })
    })
}

/// Projects an output onto fixed random weights so every output element
/// contributes a distinct amount to the scalar.
fn project<T: Real>(tape: &mut Tape<T>, v: Var, seed: u64) -> Result<Var> {
    let mut r = rng(seed);
    let w = uniform::<T>(tape.shape(v).dims(), &mut r, -1.0, 1.0);
    tape.weighted_sum(v, w)
}

/// Every primitive the network differentiates through, on inputs no
/// larger than (2, 3, 6, 6).
pub fn primitive_cases<T: Real>() -> Vec<Case<T>> {
    let mut r = rng(11);
    let mut cases = Vec::new();

    for (stride, k, hw) in [(1usize, 3usize, 6usize), (2, 3, 5), (2, 1, 6), (1, 1, 4)] {
        cases.push(Case {
            name: match (stride, k) {
                (1, 3) => "conv2d 3x3 stride 1",
                (2, 3) => "conv2d 3x3 stride 2",
                (2, 1) => "conv2d 1x1 stride 2",
                _ => "conv2d 1x1 stride 1",
            },
            inputs: vec![
                uniform([2, 3, hw, hw], &mut r, -1.0, 1.0),
                uniform([2, 3, k, k], &mut r, -0.5, 0.5),
                uniform([1, 2, 1, 1], &mut r, -0.5, 0.5),
            ],
            build: Box::new(move |t, v| {
                let y = t.conv2d(v[0], v[1], v[2], stride, Padding::SameCeil)?;
                project(t, y, 1)
            }),
        });
    }
    for (hw, target) in [(3usize, 6usize), (3, 5)] {
        cases.push(Case {
            name: if target == 2 * hw {
                "conv2d_transpose exact"
            } else {
                "conv2d_transpose cropped"
            },
            inputs: vec![
                uniform([2, 3, hw, hw], &mut r, -1.0, 1.0),
                uniform([3, 2, 2, 2], &mut r, -0.5, 0.5),
                uniform([1, 2, 1, 1], &mut r, -0.5, 0.5),
            ],
            build: Box::new(move |t, v| {
                let y = t.conv2d_transpose(v[0], v[1], v[2], 2, (target, target))?;
                project(t, y, 2)
            }),
        });
    }
    cases.push(Case {
        name: "batch_norm train",
        inputs: vec![
            uniform([2, 3, 4, 4], &mut r, -1.0, 1.0),
            uniform([1, 3, 1, 1], &mut r, 0.5, 1.5),
            uniform([1, 3, 1, 1], &mut r, -0.5, 0.5),
        ],
        build: Box::new(|t, v| {
            let (y, _) = t.batch_norm(v[0], v[1], v[2], T::from_f64_lossy(1e-3))?;
            project(t, y, 3)
        }),
    });
    cases.push(Case {
        name: "relu",
        inputs: vec![away_from_zero([2, 3, 4, 4], &mut r, 0.05)],
        build: Box::new(|t, v| {
            let y = t.relu(v[0]);
            project(t, y, 4)
        }),
    });
    let mask: Tensor4<T> = dropout_mask([2, 3, 4, 4].into(), 0.3, &mut rng(99)).unwrap();
    cases.push(Case {
        name: "dropout fixed mask",
        inputs: vec![uniform([2, 3, 4, 4], &mut r, -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.dropout_with_mask(v[0], mask.clone())?;
            project(t, y, 5)
        }),
    });
    cases.push(Case {
        name: "concat",
        inputs: vec![
            uniform([2, 1, 4, 4], &mut r, -1.0, 1.0),
            uniform([2, 2, 4, 4], &mut r, -1.0, 1.0),
        ],
        build: Box::new(|t, v| {
            let y = t.concat(v[0], v[1])?;
            project(t, y, 6)
        }),
    });
    cases.push(Case {
        name: "add",
        inputs: vec![
            uniform([2, 3, 4, 4], &mut r, -1.0, 1.0),
            uniform([2, 3, 4, 4], &mut r, -1.0, 1.0),
        ],
        build: Box::new(|t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, 7)
        }),
    });
    cases.push(Case {
        name: "softmax",
        inputs: vec![uniform([2, 3, 3, 3], &mut r, -2.0, 2.0)],
        build: Box::new(|t, v| {
            let y = t.softmax(v[0]);
            project(t, y, 8)
        }),
    });
    let labels: Vec<usize> = (0..2 * 3 * 3).map(|_| r.random_range(0..4)).collect();
    cases.push(Case {
        name: "softmax + cross entropy",
        inputs: vec![uniform([2, 4, 3, 3], &mut r, -2.0, 2.0)],
        build: Box::new(move |t, v| {
            let map = ClassMap::new(2, 3, 3, labels.clone())?;
            t.sparse_ce(v[0], &map)
        }),
    });
    cases
}
