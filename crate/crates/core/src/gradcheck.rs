//! Central finite-difference check of [`QNetwork::backward`].

use rand::Rng;

use crate::error::Result;
use crate::qnet::QNetwork;
use crate::rng::rng_stream;

pub const FD_EPS: f64 = 1e-5;

/// Draws whose hidden pre-activations come this close to zero are redrawn:
/// a perturbation of `FD_EPS` could cross a rectifier kink there, where the
/// gradient is undefined.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
}

/// Relative error with a floor on the denominator so that entries that are
/// both essentially zero compare by absolute difference.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Double-double number `hi + lo`, used to evaluate the finite-difference
/// side far below f64 rounding so that tiny gradient entries stay checkable.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (o.hi - bb);
        let lo = err + self.lo + o.lo;
        let hi = s + lo;
        Dd { hi, lo: lo - (hi - s) }
    }

    fn scale(self, w: f64) -> Dd {
        let p = w * self.hi;
        let err = w.mul_add(self.hi, -p);
        let lo = err + w * self.lo;
        let hi = p + lo;
        Dd { hi, lo: lo - (hi - p) }
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

/// Forward pass in double-double arithmetic. Returns output `action` and the
/// smallest |pre-activation| seen in any hidden layer.
fn forward_dd(net: &QNetwork, x: &[f64], action: usize) -> (Dd, f64) {
    let mut a: Vec<Dd> = x.iter().map(|&v| Dd::from_f64(v)).collect();
    let mut min = f64::INFINITY;
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let z: Vec<Dd> = (0..layer.outputs)
            .map(|o| {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter()
                    .zip(&a)
                    .fold(Dd::from_f64(layer.biases[o]), |acc, (&w, v)| acc.add(v.scale(w)))
            })
            .collect();
        if l == last {
            return (z[action], min);
        }
        min = z.iter().fold(min, |m, v| m.min(v.hi.abs()));
        a = z
            .into_iter()
            .map(|v| if v.hi > 0.0 { v } else { Dd::default() })
            .collect();
    }
    unreachable!("network has an output layer")
}

/// Compares every backprop gradient entry against central differences of the
/// squared TD loss on `trials` random (network, input, action, target) draws.
pub fn run_gradcheck(dims: &[usize], trials: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = rng_stream(seed, "gradcheck");
    let mut max_rel_error = 0.0f64;
    let mut params_checked = 0;
    for _ in 0..trials {
        let (mut net, x) = loop {
            let mut net = QNetwork::new(dims, &mut rng)?;
            // non-zero biases so every parameter class is exercised
            for layer in net.layers_mut() {
                layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            if forward_dd(&net, &x, 0).1 >= KINK_MARGIN {
                break (net, x);
            }
        };
        let action = rng.random_range(0..*dims.last().expect("dims non-empty"));
        let target: f64 = rng.random_range(-2.0..2.0);

        let td = net.forward(&x)?[action] - target;
        let grad = net.backward(&x, action, td)?;

        let q = |n: &QNetwork| forward_dd(n, &x, action).0;
        for l in 0..net.layers().len() {
            let n_w = net.layers()[l].weights.len();
            let n_b = net.layers()[l].biases.len();
            for i in 0..n_w + n_b {
                let read = |n: &QNetwork| {
                    let layer = &n.layers()[l];
                    if i < n_w {
                        layer.weights[i]
                    } else {
                        layer.biases[i - n_w]
                    }
                };
                let write = |n: &mut QNetwork, v: f64| {
                    let layer = &mut n.layers_mut()[l];
                    if i < n_w {
                        layer.weights[i] = v;
                    } else {
                        layer.biases[i - n_w] = v;
                    }
                };
                let orig = read(&net);
                write(&mut net, orig + FD_EPS);
                let up = q(&net);
                write(&mut net, orig - FD_EPS);
                let down = q(&net);
                write(&mut net, orig);
                // L(up) - L(down) for L = (Q - target)^2 / 2, factored to avoid
                // cancelling two squares
                let dq = up.add(down.neg()).hi;
                let mid = up.add(down).add(Dd::from_f64(-2.0 * target)).hi;
                let step = (orig + FD_EPS) - (orig - FD_EPS);
                let numeric = 0.5 * dq * mid / step;
                let g = &grad.layers[l];
                let analytic = if i < n_w { g.weights[i] } else { g.biases[i - n_w] };
                max_rel_error = max_rel_error.max(rel_error(analytic, numeric));
                params_checked += 1;
            }
        }
    }
    Ok(GradcheckReport {
        trials,
        params_checked,
        max_rel_error,
    })
}
