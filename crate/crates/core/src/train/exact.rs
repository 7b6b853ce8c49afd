//! Double-double (≈106-bit) re-evaluation of the training loss.
//!
//! Central differences of an `f64` loss lose about `ε_mach·L/h` to cancellation, which
//! swamps small gradient entries. Evaluating the perturbed losses here keeps that error
//! near `1e-30·L/h`, so the difference quotient is limited by truncation alone.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::model::{Activation, FactorizedInr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
const HALF_PI: Dd = Dd {
    hi: 1.570_796_326_794_896_6,
    lo: 6.123_233_995_736_766e-17,
};
const TWO_PI: Dd = Dd {
    hi: 6.283_185_307_179_586,
    lo: 2.449_293_598_294_706_4e-16,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub(crate) fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn from_pair((hi, lo): (f64, f64)) -> Self {
        Self { hi, lo }
    }

    pub(crate) fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn div_f64(self, d: f64) -> Self {
        let q1 = self.hi / d;
        let p = q1 * d;
        let perr = q1.mul_add(d, -p);
        let r = self - Dd { hi: p, lo: perr };
        let q2 = r.hi / d;
        Dd::from_pair(quick_two_sum(q1, q2))
    }

    fn relu(self) -> Self {
        if self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0) {
            self
        } else {
            ZERO
        }
    }

    /// Taylor series after reduction by multiples of π/2.
    pub(crate) fn sin_cos(self) -> (Dd, Dd) {
        let k = (self.hi / HALF_PI.hi).round();
        let r = self - HALF_PI * Dd::new(k);
        let r2 = r * r;
        let mut s = r;
        let mut c = Dd::new(1.0);
        let mut ts = r;
        let mut tc = Dd::new(1.0);
        for n in 1..40 {
            let n = n as f64;
            ts = -(ts * r2).div_f64((2.0 * n) * (2.0 * n + 1.0));
            tc = -(tc * r2).div_f64((2.0 * n - 1.0) * (2.0 * n));
            s = s + ts;
            c = c + tc;
            if ts.hi.abs() < 1e-40 && tc.hi.abs() < 1e-40 {
                break;
            }
        }
        match (k as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::from_pair(quick_two_sum(s, e + f))
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        Dd::from_pair(quick_two_sum(p, e))
    }
}

/// One parameter entry replaced by an extended-precision value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Perturbation {
    pub array: usize,
    pub index: usize,
    pub value: Dd,
}

struct Params {
    perturb: Option<Perturbation>,
}

impl Params {
    fn get(&self, array: usize, index: usize, raw: f64) -> Dd {
        match self.perturb {
            Some(p) if p.array == array && p.index == index => p.value,
            _ => Dd::new(raw),
        }
    }
}

fn dense(
    p: &Params,
    array: usize,
    weight: &crate::linalg::DenseMatrix,
    bias: &[f64],
    x: &[Dd],
) -> Vec<Dd> {
    let (rows, cols) = weight.shape();
    (0..rows)
        .map(|r| {
            let mut acc = ZERO;
            for c in 0..cols {
                acc = acc + p.get(array, r * cols + c, weight[(r, c)]) * x[c];
            }
            acc + p.get(array + 1, r, bias[r])
        })
        .collect()
}

/// Axis network `k` at one input vector; `base` is the index of its first parameter array.
fn axis_forward(
    model: &FactorizedInr,
    p: &Params,
    k: usize,
    base: usize,
    input: &[f64],
) -> Vec<Dd> {
    let net = &model.axes()[k].net;
    let fourier = net.fourier();
    let encoded: Vec<Dd> = if fourier.config().num_maps() == 0 {
        input.iter().map(|&x| Dd::new(x)).collect()
    } else {
        let rows = fourier.config().rows_per_map;
        let mut out = vec![ZERO; fourier.output_dim()];
        for (m, b) in fourier.bases().iter().enumerate() {
            for i in 0..rows {
                let mut dot = ZERO;
                for (j, &v) in input.iter().enumerate() {
                    dot = dot + Dd::new(b[(i, j)]) * Dd::new(v);
                }
                let (s, c) = (TWO_PI * dot).sin_cos();
                out[2 * rows * m + i] = s;
                out[2 * rows * m + rows + i] = c;
            }
        }
        out
    };
    let input_layer = net.input_layer();
    let mut h: Vec<Dd> = dense(p, base, &input_layer.weight, &input_layer.bias, &encoded)
        .into_iter()
        .map(Dd::relu)
        .collect();
    let mut array = base + 2;
    for layer in net.hidden_layers() {
        let (rows, cols) = layer.weight.shape();
        let omega = Dd::new(layer.omega0);
        h = (0..rows)
            .map(|r| {
                let mut acc = ZERO;
                for c in 0..cols {
                    acc = acc + p.get(array, r * cols + c, layer.weight[(r, c)]) * h[c];
                }
                let z = omega * acc + p.get(array + 1, r, layer.bias[r]);
                match net.activation() {
                    Activation::Sine => z.sin_cos().0,
                    Activation::Relu => z.relu(),
                }
            })
            .collect();
        array += 2;
    }
    let head = net.head();
    dense(p, array, &head.weight, &head.bias, &h)
}

/// A batch with every sample's axis factors precomputed in extended precision, so a
/// perturbed loss only re-evaluates the axis that owns the perturbed parameter.
pub(crate) struct ExactBatch<'a> {
    model: &'a FactorizedInr,
    inputs: Vec<Vec<Vec<f64>>>,
    factors: Vec<Vec<Vec<Dd>>>,
    targets: &'a [f64],
    /// First parameter array of each axis, then the core's array index.
    bases: Vec<usize>,
}

impl<'a> ExactBatch<'a> {
    pub(crate) fn new(
        model: &'a FactorizedInr,
        coords: &[f64],
        targets: &'a [f64],
    ) -> Result<Self> {
        let c = model.arity();
        let ch = model.out_channels();
        if coords.is_empty() || coords.len() % c != 0 || targets.len() != coords.len() / c * ch {
            return Err(Error::dims("batch coordinates and targets do not line up"));
        }
        let mut bases = Vec::with_capacity(c + 1);
        let mut next = 0;
        for axis in model.axes() {
            bases.push(next);
            next += 2 * (axis.net.depth() + 2);
        }
        bases.push(next);
        let plain = Params { perturb: None };
        let m = coords.len() / c;
        let mut inputs = Vec::with_capacity(m);
        let mut factors = Vec::with_capacity(m);
        for s in 0..m {
            let x = (0..c)
                .map(|k| model.axes()[k].domain.input_for(coords[s * c + k]))
                .collect::<Result<Vec<_>>>()?;
            factors.push(
                (0..c)
                    .map(|k| axis_forward(model, &plain, k, bases[k], &x[k]))
                    .collect(),
            );
            inputs.push(x);
        }
        Ok(Self {
            model,
            inputs,
            factors,
            targets,
            bases,
        })
    }

    /// Mean squared residual with at most one parameter replaced.
    pub(crate) fn loss(&self, perturb: Option<Perturbation>) -> Dd {
        let model = self.model;
        let c = model.arity();
        let ch = model.out_channels();
        let p = Params { perturb };
        let owner = perturb.and_then(|q| {
            (0..c).find(|&k| q.array >= self.bases[k] && q.array < self.bases[k + 1])
        });
        let core = model.core();
        let core_array = self.bases[c];
        let shape = core.shape();
        let mut total = ZERO;
        for (s, cached) in self.factors.iter().enumerate() {
            let fresh =
                owner.map(|k| axis_forward(model, &p, k, self.bases[k], &self.inputs[s][k]));
            let factor = |k: usize| match (&fresh, owner) {
                (Some(f), Some(o)) if o == k => f,
                _ => &cached[k],
            };
            // Full contraction: every core entry times the matching factor entries.
            let mut pred = vec![ZERO; ch];
            for (flat, &raw) in core.as_slice().iter().enumerate() {
                let idx = core.unravel(flat);
                let mut term = p.get(core_array, flat, raw);
                for k in 0..c {
                    term = term * factor(k)[idx[k]];
                }
                let channel = if shape.len() > c { idx[c] } else { 0 };
                pred[channel] = pred[channel] + term;
            }
            for (j, y) in pred.into_iter().enumerate() {
                let r = y - Dd::new(self.targets[s * ch + j]);
                total = total + r * r;
            }
        }
        total.div_f64(self.factors.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::factorized::tests::random_model;
    use crate::rng::SplitMix64;
    use crate::train::batch_loss;

    #[test]
    fn sin_cos_matches_libm() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..500 {
            let x = rng.uniform(-200.0, 200.0);
            let (s, c) = Dd::new(x).sin_cos();
            assert!((s.to_f64() - x.sin()).abs() <= 1e-15);
            assert!((c.to_f64() - x.cos()).abs() <= 1e-15);
            // sin² + cos² = 1 far beyond f64 precision.
            let one = s * s + c * c - Dd::new(1.0);
            assert!(one.to_f64().abs() < 1e-28);
        }
    }

    #[test]
    fn arithmetic_carries_low_words() {
        let a = Dd::new(1.0) + Dd::new(1e-20);
        assert_eq!(a.hi, 1.0);
        assert_eq!(a.lo, 1e-20);
        let third = Dd::new(1.0).div_f64(3.0);
        let back = third * Dd::new(3.0) - Dd::new(1.0);
        assert!(back.to_f64().abs() < 1e-31);
    }

    #[test]
    fn agrees_with_f64_loss() {
        for (dims, ch) in [(vec![3, 4], 1), (vec![2, 3, 2], 1), (vec![3, 2], 2)] {
            let m = random_model(&dims, ch, 8);
            let mut rng = SplitMix64::new(9);
            let coords: Vec<f64> = (0..5 * dims.len())
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect();
            let targets: Vec<f64> = (0..5 * ch).map(|_| rng.normal()).collect();
            let exact = ExactBatch::new(&m, &coords, &targets)
                .unwrap()
                .loss(None)
                .to_f64();
            let fast = batch_loss(&m, &coords, &targets).unwrap();
            assert!(
                (exact - fast).abs() <= 1e-12 * fast.abs().max(1.0),
                "{exact} {fast}"
            );
        }
    }
}
