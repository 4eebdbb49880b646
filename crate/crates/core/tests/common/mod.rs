//! Oracles shared by the integration tests: a nested-loop convolution and
//! central finite-difference gradient checks.
#![allow(dead_code)]

use cseg::tensor::{
    conv2d_backward, conv2d_forward, leaky_relu_backward, leaky_relu_forward, resize_bilinear,
    resize_bilinear_backward, sigmoid, sigmoid_backward, KernelBank, Shape, Tensor,
};
use cseg::training::{boosted_ce, BoostedCEConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;
pub const INSTANCES: usize = 20;

/// Straight five-loop convolution with zero padding.
pub fn conv_reference(input: &Tensor<f64>, k: &KernelBank<f64>) -> Tensor<f64> {
    let (h, w) = (input.height() as isize, input.width() as isize);
    let (ph, pw) = ((k.kernel_h() / 2) as isize, (k.kernel_w() / 2) as isize);
    let shape = Shape::new(k.out_channels(), input.height(), input.width()).unwrap();
    Tensor::from_fn(shape, |o, y, x| {
        let mut acc = k.bias[o];
        for c in 0..k.in_channels() {
            for dy in 0..k.kernel_h() {
                for dx in 0..k.kernel_w() {
                    let (sy, sx) = (y as isize + dy as isize - ph, x as isize + dx as isize - pw);
                    if sy >= 0 && sy < h && sx >= 0 && sx < w {
                        acc += input.get(c, sy as usize, sx as usize) * k.weight(o, c, dy, dx);
                    }
                }
            }
        }
        acc
    })
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _| rng.gen_range(lo..hi))
}

pub fn random_bank(rng: &mut ChaCha8Rng, o: usize, c: usize, kh: usize, kw: usize) -> KernelBank<f64> {
    let weights = (0..o * c * kh * kw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bias = (0..o).map(|_| rng.gen_range(-1.0..1.0)).collect();
    KernelBank::new(o, c, kh, kw, weights, bias).unwrap()
}

pub fn odd(rng: &mut ChaCha8Rng, max: usize) -> usize {
    2 * rng.gen_range(0..=max / 2) + 1
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between `analytic` and central differences of `f`
/// with respect to every entry of `x`.
pub fn check_gradient(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn with_data(t: &Tensor<f64>, d: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), d.to_vec()).unwrap()
}

/// Worst relative error per op over `INSTANCES` random instances each.
pub fn conv_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let (c, o) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let (kh, kw) = (odd(&mut rng, 5), odd(&mut rng, 5));
        let x = random_tensor(&mut rng, Shape::new(c, h, w).unwrap(), -1.0, 1.0);
        let k = random_bank(&mut rng, o, c, kh, kw);
        let r = random_tensor(&mut rng, Shape::new(o, h, w).unwrap(), -1.0, 1.0);
        let g = conv2d_backward(&x, &k, &r).unwrap();
        let loss_x = |d: &[f64]| dot(&r, &conv2d_forward(&with_data(&x, d), &k).unwrap());
        worst = worst.max(check_gradient(x.data(), g.input.as_ref().unwrap().data(), loss_x));
        let loss_w = |d: &[f64]| {
            let kk = KernelBank::new(o, c, kh, kw, d.to_vec(), k.bias.clone()).unwrap();
            dot(&r, &conv2d_forward(&x, &kk).unwrap())
        };
        worst = worst.max(check_gradient(&k.weights, &g.weights, loss_w));
        let loss_b = |d: &[f64]| {
            let kk = KernelBank::new(o, c, kh, kw, k.weights.clone(), d.to_vec()).unwrap();
            dot(&r, &conv2d_forward(&x, &kk).unwrap())
        };
        worst = worst.max(check_gradient(&k.bias, &g.bias, loss_b));
    }
    worst
}

fn small_shape(rng: &mut ChaCha8Rng) -> Shape {
    Shape::new(rng.gen_range(1..=3), rng.gen_range(1..=6), rng.gen_range(1..=6)).unwrap()
}

pub fn leaky_relu_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let s = small_shape(&mut rng);
        let slope = rng.gen_range(0.01..0.5);
        // keep every entry well away from the kink at 0
        let x = Tensor::from_fn(s, |_, _, _| {
            let m = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        });
        let r = random_tensor(&mut rng, s, -1.0, 1.0);
        let g = leaky_relu_backward(&x, slope, &r).unwrap();
        worst = worst.max(check_gradient(x.data(), g.data(), |d| {
            dot(&r, &leaky_relu_forward(&with_data(&x, d), slope).unwrap())
        }));
    }
    worst
}

pub fn sigmoid_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let s = small_shape(&mut rng);
        let x = random_tensor(&mut rng, s, -6.0, 6.0);
        let r = random_tensor(&mut rng, s, -1.0, 1.0);
        let g = sigmoid_backward(&sigmoid(&x), &r).unwrap();
        worst = worst.max(check_gradient(x.data(), g.data(), |d| dot(&r, &sigmoid(&with_data(&x, d)))));
    }
    worst
}

pub fn resize_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let s = small_shape(&mut rng);
        let (oh, ow) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let x = random_tensor(&mut rng, s, -1.0, 1.0);
        let r = random_tensor(&mut rng, Shape::new(s.channels, oh, ow).unwrap(), -1.0, 1.0);
        let g = resize_bilinear_backward(&r, s.height, s.width).unwrap();
        worst = worst.max(check_gradient(x.data(), g.data(), |d| {
            dot(&r, &resize_bilinear(&with_data(&x, d), oh, ow).unwrap())
        }));
    }
    worst
}

pub fn boosted_ce_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let s = Shape::new(1, rng.gen_range(1..=6), rng.gen_range(1..=6)).unwrap();
        let z = random_tensor(&mut rng, s, -4.0, 4.0);
        let t = Tensor::from_fn(s, |_, _, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        let cfg = BoostedCEConfig { alpha: rng.gen_range(0.0..3.0), ..Default::default() };
        let (_, g) = boosted_ce(&sigmoid(&z), &t, &cfg).unwrap();
        worst = worst.max(check_gradient(z.data(), g.data(), |d| {
            boosted_ce(&sigmoid(&with_data(&z, d)), &t, &cfg).unwrap().0
        }));
    }
    worst
}

/// Worst elementwise relative deviation from the nested-loop oracle over
/// `cases` random convolutions with every dimension ≤ 8, except up to 16
/// output channels so both the narrow and the GEMM paths run.
pub fn conv_oracle_error(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (c, o) = (rng.gen_range(1..=8), rng.gen_range(1..=16));
        let (h, w) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let (kh, kw) = (odd(&mut rng, 7), odd(&mut rng, 7));
        let x = random_tensor(&mut rng, Shape::new(c, h, w).unwrap(), -1.0, 1.0);
        let k = random_bank(&mut rng, o, c, kh, kw);
        let got = conv2d_forward(&x, &k).unwrap();
        let want = conv_reference(&x, &k);
        for (a, b) in got.data().iter().zip(want.data()) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-9));
        }
    }
    worst
}
